//! Forward rasterizer: EWA projection of 3D Gaussians and front-to-back
//! alpha compositing, emitting color, depth, transmittance, contributor
//! counts, and the per-pixel confidence measure.

pub mod backward;

use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::image::{RenderOutput, ScalarMap};
use crate::metrics::percentile;
use crate::scene::{sigmoid, GaussianCloud, GaussianSplat};

/// Additive diagonal term on the projected covariance: keeps every splat at
/// least ~half a pixel wide and the conic invertible.
pub const LOW_PASS: f64 = 0.3;
/// Depth is reported only where at least this much alpha mass accumulated.
pub const DEPTH_ALPHA_MIN: f64 = 1e-6;
/// Alpha values are clamped here so transmittance never reaches zero.
pub const ALPHA_CLAMP: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterMode {
    /// 16×16-tile binning with per-tile pixel loops.
    Tiled,
    /// Every pixel folds over every projected Gaussian; the correctness oracle.
    Naive,
}

#[derive(Debug, Clone)]
pub struct RasterConfig {
    /// ε in the confidence measure −log(T + ε)·n_contrib.
    pub epsilon: f64,
    /// Alphas below this neither composite nor count as contributors.
    pub alpha_min: f64,
    /// Stop compositing once transmittance falls below this; 0 disables.
    pub t_terminate: f64,
    pub background: Vector3<f64>,
    /// Splats at camera-frame z at or below this are culled.
    pub near_plane: f64,
    pub tile_size: usize,
    pub mode: RasterMode,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            alpha_min: 1.0 / 255.0,
            t_terminate: 1e-4,
            background: Vector3::zeros(),
            near_plane: 0.2,
            tile_size: 16,
            mode: RasterMode::Tiled,
        }
    }
}

impl RasterConfig {
    // Negated comparisons so NaN fails every bound check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Usage("raster epsilon must be positive".into()));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min < 1.0) {
            return Err(Error::Usage("alpha_min must lie in (0,1)".into()));
        }
        if !(self.t_terminate >= 0.0 && self.t_terminate < 1.0) {
            return Err(Error::Usage("t_terminate must lie in [0,1)".into()));
        }
        if self.tile_size == 0 {
            return Err(Error::Usage("tile size must be positive".into()));
        }
        Ok(())
    }

    /// Copy configured for oracle-exact evaluation: naive path, no early
    /// termination.
    pub fn as_naive_exhaustive(&self) -> Self {
        Self { mode: RasterMode::Naive, t_terminate: 0.0, ..self.clone() }
    }
}

/// A splat after projection into one camera.
#[derive(Debug, Clone)]
pub struct ProjectedGaussian {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    /// Inverse of cov2d.
    pub conic: Matrix2<f64>,
    /// Camera-frame z.
    pub depth: f64,
    pub color: Vector3<f64>,
    pub alpha_peak: f64,
    /// Pixel radius beyond which alpha is guaranteed below alpha_min.
    pub radius: f64,
    /// Index into the source cloud.
    pub splat_index: usize,
}

/// EWA-project one splat; None when culled (behind the near plane, footprint
/// off screen, alpha never reaching the contribution threshold, or a
/// degenerate projected covariance).
pub fn project_gaussian(
    splat: &GaussianSplat,
    index: usize,
    cam: &CameraView,
    cfg: &RasterConfig,
) -> Option<ProjectedGaussian> {
    let p_cam = cam.to_camera(splat.position);
    if p_cam.z <= cfg.near_plane {
        return None;
    }
    let mean2d = cam.project_camera_point(p_cam);

    let jac = perspective_jacobian(cam, p_cam);
    let u = jac * cam.rotation; // 2×3
    let cov3 = splat.covariance();
    let mut cov2d = u * cov3 * u.transpose();
    cov2d[(0, 0)] += LOW_PASS;
    cov2d[(1, 1)] += LOW_PASS;
    let det = cov2d.determinant();
    if det <= 1e-12 {
        return None;
    }

    let alpha_peak = sigmoid(splat.logit_opacity).min(ALPHA_CLAMP);
    if alpha_peak <= cfg.alpha_min {
        return None;
    }
    // Largest eigenvalue bounds the Mahalanobis ellipse that can still reach
    // alpha_min; one pixel of padding covers pixel-center offsets.
    let half_trace = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
    let lambda_max = half_trace + (half_trace * half_trace - det).max(0.0).sqrt();
    let radius = (2.0 * (alpha_peak / cfg.alpha_min).ln() * lambda_max).sqrt() + 1.0;

    let (w, h) = (cam.width as f64, cam.height as f64);
    if mean2d.x + radius < 0.0
        || mean2d.x - radius > w
        || mean2d.y + radius < 0.0
        || mean2d.y - radius > h
    {
        return None;
    }

    let conic = cov2d.try_inverse()?;
    let color = splat_view_color(splat, cam);
    Some(ProjectedGaussian {
        mean2d,
        cov2d,
        conic,
        depth: p_cam.z,
        color,
        alpha_peak,
        radius,
        splat_index: index,
    })
}

/// Jacobian of the pinhole projection at a camera-frame point.
pub fn perspective_jacobian(cam: &CameraView, p_cam: Vector3<f64>) -> nalgebra::Matrix2x3<f64> {
    let z = p_cam.z;
    nalgebra::Matrix2x3::new(
        cam.fx / z,
        0.0,
        -cam.fx * p_cam.x / (z * z),
        0.0,
        cam.fy / z,
        -cam.fy * p_cam.y / (z * z),
    )
}

/// View-dependent splat color as seen from a camera.
pub fn splat_view_color(splat: &GaussianSplat, cam: &CameraView) -> Vector3<f64> {
    let to_splat = splat.position - cam.center();
    let n = to_splat.norm();
    let dir = if n > 1e-12 { to_splat / n } else { cam.forward() };
    splat.color(dir)
}

/// Project every splat and sort front to back (ties broken by cloud order).
pub fn project_and_sort(
    cloud: &GaussianCloud,
    cam: &CameraView,
    cfg: &RasterConfig,
) -> Vec<ProjectedGaussian> {
    let mut projected: Vec<ProjectedGaussian> = cloud
        .splats()
        .par_iter()
        .enumerate()
        .filter_map(|(i, s)| project_gaussian(s, i, cam, cfg))
        .collect();
    projected.sort_unstable_by(|a, b| {
        a.depth
            .total_cmp(&b.depth)
            .then(a.splat_index.cmp(&b.splat_index))
    });
    projected
}

struct PixelState {
    rgb: Vector3<f64>,
    depth_acc: f64,
    accum: f64,
    transmittance: f64,
    n_contrib: u32,
}

#[inline]
fn composite_pixel<'a>(
    px: f64,
    py: f64,
    gaussians: impl Iterator<Item = &'a ProjectedGaussian>,
    cfg: &RasterConfig,
) -> PixelState {
    let mut st = PixelState {
        rgb: Vector3::zeros(),
        depth_acc: 0.0,
        accum: 0.0,
        transmittance: 1.0,
        n_contrib: 0,
    };
    for g in gaussians {
        let d = Vector2::new(px - g.mean2d.x, py - g.mean2d.y);
        let q = g.conic[(0, 0)] * d.x * d.x
            + 2.0 * g.conic[(0, 1)] * d.x * d.y
            + g.conic[(1, 1)] * d.y * d.y;
        let alpha = (g.alpha_peak * (-0.5 * q).exp()).min(ALPHA_CLAMP);
        if alpha < cfg.alpha_min {
            continue;
        }
        let w = alpha * st.transmittance;
        st.rgb += w * g.color;
        st.depth_acc += w * g.depth;
        st.accum += w;
        st.n_contrib += 1;
        st.transmittance *= 1.0 - alpha;
        if st.transmittance < cfg.t_terminate {
            break;
        }
    }
    st
}

fn store_pixel(out: &mut RenderOutput, idx: usize, st: &PixelState, cfg: &RasterConfig) {
    let rgb = st.rgb + st.transmittance * cfg.background;
    out.rgb[idx * 3] = rgb.x;
    out.rgb[idx * 3 + 1] = rgb.y;
    out.rgb[idx * 3 + 2] = rgb.z;
    out.depth[idx] = if st.accum > DEPTH_ALPHA_MIN { st.depth_acc / st.accum } else { 0.0 };
    out.transmittance[idx] = st.transmittance;
    out.n_contrib[idx] = st.n_contrib;
    out.accum_alpha[idx] = st.accum;
    out.confidence[idx] = confidence_value(st.transmittance, st.n_contrib, cfg.epsilon);
}

/// Render a cloud into a camera.
pub fn rasterize(cloud: &GaussianCloud, cam: &CameraView, cfg: &RasterConfig) -> RenderOutput {
    debug_assert!(cfg.validate().is_ok());
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut out = RenderOutput::new(w, h);
    let projected = project_and_sort(cloud, cam, cfg);
    match cfg.mode {
        RasterMode::Naive => {
            let rows: Vec<Vec<PixelState>> = (0..h)
                .into_par_iter()
                .map(|row| {
                    (0..w)
                        .map(|col| {
                            composite_pixel(
                                col as f64 + 0.5,
                                row as f64 + 0.5,
                                projected.iter(),
                                cfg,
                            )
                        })
                        .collect()
                })
                .collect();
            for (row, states) in rows.iter().enumerate() {
                for (col, st) in states.iter().enumerate() {
                    store_pixel(&mut out, row * w + col, st, cfg);
                }
            }
        }
        RasterMode::Tiled => {
            let ts = cfg.tile_size;
            let tiles_x = w.div_ceil(ts);
            let tiles_y = h.div_ceil(ts);
            let mut tile_lists: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
            // Iterating in sorted order keeps each tile list depth-sorted.
            for (gi, g) in projected.iter().enumerate() {
                let x0 = (((g.mean2d.x - g.radius) / ts as f64).floor().max(0.0)) as usize;
                let y0 = (((g.mean2d.y - g.radius) / ts as f64).floor().max(0.0)) as usize;
                let x1 = ((g.mean2d.x + g.radius) / ts as f64).floor() as isize;
                let y1 = ((g.mean2d.y + g.radius) / ts as f64).floor() as isize;
                let x1 = (x1.max(0) as usize).min(tiles_x - 1);
                let y1 = (y1.max(0) as usize).min(tiles_y - 1);
                if x0 >= tiles_x || y0 >= tiles_y {
                    continue;
                }
                for ty in y0..=y1 {
                    for tx in x0..=x1 {
                        tile_lists[ty * tiles_x + tx].push(gi as u32);
                    }
                }
            }
            let tile_states: Vec<(usize, Vec<PixelState>)> = tile_lists
                .par_iter()
                .enumerate()
                .map(|(tile, list)| {
                    let (tx, ty) = (tile % tiles_x, tile / tiles_x);
                    let (px0, py0) = (tx * ts, ty * ts);
                    let (tw, th) = ((w - px0).min(ts), (h - py0).min(ts));
                    let mut states = Vec::with_capacity(tw * th);
                    for row in py0..py0 + th {
                        for col in px0..px0 + tw {
                            states.push(composite_pixel(
                                col as f64 + 0.5,
                                row as f64 + 0.5,
                                list.iter().map(|&gi| &projected[gi as usize]),
                                cfg,
                            ));
                        }
                    }
                    (tile, states)
                })
                .collect();
            for (tile, states) in &tile_states {
                let (tx, ty) = (tile % tiles_x, tile / tiles_x);
                let (px0, py0) = (tx * ts, ty * ts);
                let tw = (w - px0).min(ts);
                for (k, st) in states.iter().enumerate() {
                    let (row, col) = (py0 + k / tw, px0 + k % tw);
                    store_pixel(&mut out, row * w + col, st, cfg);
                }
            }
        }
    }
    out
}

/// The per-pixel confidence measure: −log(T + ε) × n_contrib.
pub fn confidence_value(transmittance: f64, n_contrib: u32, epsilon: f64) -> f64 {
    if n_contrib == 0 {
        return 0.0;
    }
    -(transmittance + epsilon).ln() * n_contrib as f64
}

/// Recompute the confidence map from a render's transmittance and contributor
/// counts, storing it back into the output.
pub fn confidence_map(render: &mut RenderOutput, cfg: &RasterConfig) -> ScalarMap {
    for i in 0..render.transmittance.len() {
        render.confidence[i] =
            confidence_value(render.transmittance[i], render.n_contrib[i], cfg.epsilon);
    }
    render.confidence_map()
}

/// Footprint-based confidence heuristic: alpha-weighted inverse projected
/// area of the contributing Gaussians, normalized by accumulated alpha.
/// Small contributing splats score high; empty pixels score 0.
pub fn enhancer_confidence(
    render: &RenderOutput,
    cloud: &GaussianCloud,
    cam: &CameraView,
    cfg: &RasterConfig,
) -> ScalarMap {
    assert_eq!((render.width, render.height), (cam.width as usize, cam.height as usize));
    let (w, h) = (render.width, render.height);
    let projected = project_and_sort(cloud, cam, cfg);
    let areas: Vec<f64> = projected
        .iter()
        .map(|g| std::f64::consts::PI * g.cov2d.determinant().sqrt())
        .collect();
    let data: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|row| {
            let projected = &projected;
            let areas = &areas;
            (0..w).map(move |col| {
                let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);
                let mut t = 1.0;
                let mut score = 0.0;
                let mut accum = 0.0;
                for (g, area) in projected.iter().zip(areas) {
                    let d = Vector2::new(px - g.mean2d.x, py - g.mean2d.y);
                    let q = g.conic[(0, 0)] * d.x * d.x
                        + 2.0 * g.conic[(0, 1)] * d.x * d.y
                        + g.conic[(1, 1)] * d.y * d.y;
                    let alpha = (g.alpha_peak * (-0.5 * q).exp()).min(ALPHA_CLAMP);
                    if alpha < cfg.alpha_min {
                        continue;
                    }
                    let wgt = alpha * t;
                    score += wgt / area;
                    accum += wgt;
                    t *= 1.0 - alpha;
                    if t < cfg.t_terminate {
                        break;
                    }
                }
                if accum > 0.0 {
                    score / accum
                } else {
                    0.0
                }
            })
        })
        .collect();
    ScalarMap { width: w, height: h, data }
}

/// Scale a confidence map by its 99th percentile and clamp to [0,1].
pub fn normalize_confidence_for_display(conf: &ScalarMap) -> ScalarMap {
    let p99 = percentile(&conf.data, 0.99);
    let scale = if p99 > 0.0 { p99 } else { 1.0 };
    ScalarMap {
        width: conf.width,
        height: conf.height,
        data: conf.data.iter().map(|v| (v / scale).clamp(0.0, 1.0)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::logit;
    use crate::sh;
    use nalgebra::Matrix3;
    use crate::synth::{orbit_camera, random_cloud};
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector4;

    fn centered_camera() -> CameraView {
        CameraView::new(
            3,
            3,
            100.0,
            100.0,
            1.5,
            1.5,
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap()
    }

    fn red_splat(z: f64, opacity: f64, sigma: f64) -> GaussianSplat {
        GaussianSplat::new(
            Vector3::new(0.0, 0.0, z),
            Vector4::new(1.0, 0.0, 0.0, 0.0),
            Vector3::repeat(sigma.ln()),
            logit(opacity),
            vec![Vector3::new(0.5 / sh::SH_C0, -0.5 / sh::SH_C0, -0.5 / sh::SH_C0)],
        )
        .unwrap()
    }

    #[test]
    fn empty_cloud_renders_background() {
        let cfg = RasterConfig {
            background: Vector3::new(0.2, 0.4, 0.6),
            ..RasterConfig::default()
        };
        let out = rasterize(&GaussianCloud::empty(0), &centered_camera(), &cfg);
        for i in 0..9 {
            assert_eq!(out.pixel_rgb(i / 3, i % 3), [0.2, 0.4, 0.6]);
            assert_eq!(out.transmittance[i], 1.0);
            assert_eq!(out.n_contrib[i], 0);
            assert_eq!(out.depth[i], 0.0);
            assert_eq!(out.confidence[i], 0.0);
        }
    }

    #[test]
    fn on_axis_projection_lands_on_principal_point_with_unit_footprint() {
        let cam = centered_camera();
        let splat = red_splat(1.0, 0.5, 0.01);
        let g = project_gaussian(&splat, 0, &cam, &RasterConfig::default()).unwrap();
        assert_abs_diff_eq!(g.mean2d.x, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g.mean2d.y, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g.cov2d[(0, 0)], 1.0 + LOW_PASS, epsilon = 1e-9);
        assert_abs_diff_eq!(g.cov2d[(1, 1)], 1.0 + LOW_PASS, epsilon = 1e-9);
        assert_abs_diff_eq!(g.cov2d[(0, 1)], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn splat_behind_camera_is_culled() {
        let cam = centered_camera();
        let splat = red_splat(-1.0, 0.5, 0.01);
        assert!(project_gaussian(&splat, 0, &cam, &RasterConfig::default()).is_none());
    }

    #[test]
    fn doubling_fx_doubles_the_projected_offset() {
        let mut splat = red_splat(1.0, 0.5, 0.01);
        splat.position.x = 0.003;
        let cam = centered_camera();
        let mut cam2 = cam.clone();
        cam2.fx *= 2.0;
        let cfg = RasterConfig::default();
        let a = project_gaussian(&splat, 0, &cam, &cfg).unwrap();
        let b = project_gaussian(&splat, 0, &cam2, &cfg).unwrap();
        assert_abs_diff_eq!(2.0 * (a.mean2d.x - cam.cx), b.mean2d.x - cam2.cx, epsilon = 1e-12);
    }

    #[test]
    fn single_center_gaussian_composits_as_one_term() {
        let cloud = GaussianCloud::new(vec![red_splat(1.0, 0.5, 0.01)], 0).unwrap();
        let out = rasterize(&cloud, &centered_camera(), &RasterConfig::default());
        let c = out.pixel_rgb(1, 1);
        assert_abs_diff_eq!(c[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(c[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(out.transmittance[4], 0.5, epsilon = 1e-9);
        assert_eq!(out.n_contrib[4], 1);
        assert_abs_diff_eq!(out.depth[4], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn two_stacked_gaussians_follow_front_to_back_compositing() {
        let cloud =
            GaussianCloud::new(vec![red_splat(1.0, 0.5, 0.01), red_splat(2.0, 0.5, 0.02)], 0)
                .unwrap();
        let out = rasterize(&cloud, &centered_camera(), &RasterConfig::default());
        let c = out.pixel_rgb(1, 1);
        assert_abs_diff_eq!(c[0], 0.75, epsilon = 1e-6);
        assert_abs_diff_eq!(out.transmittance[4], 0.25, epsilon = 1e-6);
        assert_eq!(out.n_contrib[4], 2);
        assert_abs_diff_eq!(out.depth[4], 4.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn depth_of_single_gaussian_scene_equals_its_camera_z() {
        let cam = orbit_camera(0.3, 2.0, 0.4, 32, 32);
        let mut splat = red_splat(0.0, 0.8, 0.05);
        splat.position = Vector3::new(0.1, -0.05, 0.0);
        let z = cam.to_camera(splat.position).z;
        let cloud = GaussianCloud::new(vec![splat], 0).unwrap();
        let out = rasterize(&cloud, &cam, &RasterConfig::default());
        for i in 0..out.depth.len() {
            if out.accum_alpha[i] > DEPTH_ALPHA_MIN {
                assert_abs_diff_eq!(out.depth[i], z, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn accumulated_alpha_and_transmittance_sum_to_one() {
        for seed in 0..5 {
            let cloud = random_cloud(150, 0, seed);
            let cam = orbit_camera(0.5 + seed as f64, 2.5, 0.5, 64, 64);
            let out = rasterize(&cloud, &cam, &RasterConfig::default());
            for i in 0..out.transmittance.len() {
                assert!(
                    (out.accum_alpha[i] + out.transmittance[i] - 1.0).abs() < 1e-6,
                    "pixel {i}: accum {} + T {}",
                    out.accum_alpha[i],
                    out.transmittance[i]
                );
            }
        }
    }

    #[test]
    fn adding_a_gaussian_never_increases_transmittance() {
        let cloud = random_cloud(40, 0, 9);
        let cam = orbit_camera(1.1, 2.5, 0.3, 48, 48);
        let cfg = RasterConfig { t_terminate: 0.0, ..RasterConfig::default() };
        let base = rasterize(&cloud, &cam, &cfg);
        let mut bigger = cloud.clone();
        bigger
            .push(
                GaussianSplat::new(
                    Vector3::new(0.05, 0.0, 0.1),
                    Vector4::new(1.0, 0.0, 0.0, 0.0),
                    Vector3::repeat(-1.5f64),
                    logit(0.7),
                    vec![Vector3::zeros()],
                )
                .unwrap(),
            )
            .unwrap();
        let more = rasterize(&bigger, &cam, &cfg);
        for i in 0..base.transmittance.len() {
            assert!(more.transmittance[i] <= base.transmittance[i] + 1e-12);
        }
    }

    #[test]
    fn tiled_and_naive_paths_agree_bitwise_without_early_termination() {
        for seed in [3u64, 17, 99] {
            let cloud = random_cloud(60, 0, seed);
            let cam = orbit_camera(0.2 + seed as f64 * 0.7, 2.2, 0.6, 50, 38);
            let tiled = RasterConfig { t_terminate: 0.0, ..RasterConfig::default() };
            let naive = tiled.as_naive_exhaustive();
            let a = rasterize(&cloud, &cam, &tiled);
            let b = rasterize(&cloud, &cam, &naive);
            assert_eq!(a.rgb, b.rgb);
            assert_eq!(a.depth, b.depth);
            assert_eq!(a.transmittance, b.transmittance);
            assert_eq!(a.n_contrib, b.n_contrib);
            assert_eq!(a.accum_alpha, b.accum_alpha);
        }
    }

    #[test]
    fn confidence_spot_values() {
        assert_eq!(confidence_value(1.0, 0, 1e-6), 0.0);
        assert_abs_diff_eq!(confidence_value(0.5, 1, 1e-6), 0.693_145, epsilon = 1e-5);
        assert_abs_diff_eq!(confidence_value(0.25, 2, 1e-6), 2.772_581, epsilon = 1e-5);
    }

    #[test]
    fn confidence_is_monotone_in_its_inputs() {
        let c = |t: f64, n: u32| confidence_value(t, n, 1e-6);
        assert!(c(0.5, 2) >= c(0.5, 1));
        assert!(c(0.25, 1) >= c(0.5, 1));
        assert!(c(0.5, 1) > 0.0);
    }

    #[test]
    fn enhancer_prefers_small_footprints_and_scales_inversely_with_area() {
        let cam = CameraView::new(
            65,
            65,
            100.0,
            100.0,
            32.5,
            32.5,
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap();
        let cfg = RasterConfig::default();
        let small = GaussianCloud::new(vec![red_splat(1.0, 0.5, 0.5)], 0).unwrap();
        let large = GaussianCloud::new(vec![red_splat(1.0, 0.5, 1.0)], 0).unwrap();
        let rs = rasterize(&small, &cam, &cfg);
        let rl = rasterize(&large, &cam, &cfg);
        let es = enhancer_confidence(&rs, &small, &cam, &cfg);
        let el = enhancer_confidence(&rl, &large, &cam, &cfg);
        let center = 32 * 65 + 32;
        assert!(es.data[center] > el.data[center]);
        // Doubling sigma quadruples the footprint area: score drops 4×
        // (up to the fixed low-pass widening).
        let ratio = es.data[center] / el.data[center];
        assert!((ratio / 4.0 - 1.0).abs() < 0.02, "ratio {ratio}");
        let empty = enhancer_confidence(
            &rasterize(&GaussianCloud::empty(0), &cam, &cfg),
            &GaussianCloud::empty(0),
            &cam,
            &cfg,
        );
        assert!(empty.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn display_normalization_uses_the_99th_percentile() {
        let zero = ScalarMap::zeros(4, 4);
        assert!(normalize_confidence_for_display(&zero).data.iter().all(|&v| v == 0.0));

        let constant = ScalarMap::from_data(4, 4, vec![5.0; 16]).unwrap();
        assert!(normalize_confidence_for_display(&constant)
            .data
            .iter()
            .all(|&v| v == 1.0));

        let ramp = ScalarMap::from_data(101, 1, (0..=100).map(f64::from).collect()).unwrap();
        let norm = normalize_confidence_for_display(&ramp);
        assert_abs_diff_eq!(norm.data[99], 1.0, epsilon = 1e-12);
        assert_eq!(norm.data[100], 1.0);
        assert!(norm.data[50] < 1.0);
    }

    #[test]
    fn confidence_zero_iff_no_contributors() {
        let cloud = random_cloud(80, 0, 21);
        let cam = orbit_camera(2.0, 2.4, 0.2, 64, 64);
        let out = rasterize(&cloud, &cam, &RasterConfig::default());
        for i in 0..out.confidence.len() {
            assert_eq!(out.confidence[i] == 0.0, out.n_contrib[i] == 0, "pixel {i}");
        }
    }
}
