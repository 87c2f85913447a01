//! Reverse-mode gradients of the rasterizer: image-space loss gradients are
//! pulled back through compositing and the EWA projection onto Gaussian
//! attributes, and onto a 6-DoF camera-pose tangent.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3, Vector4};
use rayon::prelude::*;

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::losses::PixelGradients;
use crate::render::{
    project_and_sort, rasterize, ProjectedGaussian, RasterConfig, ALPHA_CLAMP, DEPTH_ALPHA_MIN,
};
use crate::scene::{quat_to_matrix_grad, GaussianCloud};
use crate::sh;

/// Per-splat gradients mirroring the cloud layout.
#[derive(Debug, Clone)]
pub struct CloudGradients {
    pub position: Vec<Vector3<f64>>,
    pub log_scale: Vec<Vector3<f64>>,
    pub rotation: Vec<Vector4<f64>>,
    pub logit_opacity: Vec<f64>,
    pub sh_coeffs: Vec<Vec<Vector3<f64>>>,
    /// Norm of the accumulated screen-space position gradient, per splat;
    /// drives densification.
    pub grad2d_norm: Vec<f64>,
}

impl CloudGradients {
    pub fn zeros_like(cloud: &GaussianCloud) -> Self {
        let n = cloud.len();
        let b = sh::basis_len(cloud.sh_degree());
        Self {
            position: vec![Vector3::zeros(); n],
            log_scale: vec![Vector3::zeros(); n],
            rotation: vec![Vector4::zeros(); n],
            logit_opacity: vec![0.0; n],
            sh_coeffs: vec![vec![Vector3::zeros(); b]; n],
            grad2d_norm: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }
}

/// Loss gradient w.r.t. a left-multiplicative camera perturbation:
/// axis-angle rotation and translation in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseGradient {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl PoseGradient {
    pub fn zero() -> Self {
        Self { rotation: Vector3::zeros(), translation: Vector3::zeros() }
    }

    pub fn norm(&self) -> f64 {
        (self.rotation.norm_squared() + self.translation.norm_squared()).sqrt()
    }
}

/// Screen-space gradient accumulators for one projected splat.
#[derive(Debug, Clone, Copy)]
struct ScreenGrad {
    mean2d: Vector2<f64>,
    cov2d: Matrix2<f64>,
    color: Vector3<f64>,
    z: f64,
    logit_opacity: f64,
}

impl Default for ScreenGrad {
    fn default() -> Self {
        Self {
            mean2d: Vector2::zeros(),
            cov2d: Matrix2::zeros(),
            color: Vector3::zeros(),
            z: 0.0,
            logit_opacity: 0.0,
        }
    }
}

fn check_upstream(cam: &CameraView, grads: &PixelGradients) -> Result<()> {
    let npix = cam.width as usize * cam.height as usize;
    if grads.d_rgb.len() != npix * 3 || grads.d_depth.len() != npix {
        return Err(Error::Shape(format!(
            "pixel gradients sized {}+{} do not match a {}x{} camera",
            grads.d_rgb.len(),
            grads.d_depth.len(),
            cam.width,
            cam.height
        )));
    }
    if grads.d_rgb.iter().chain(&grads.d_depth).any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite upstream pixel gradient".into()));
    }
    Ok(())
}

/// Pull per-pixel loss gradients back onto the screen-space quantities of
/// every projected splat. Rows are processed in fixed chunks and merged in
/// order, so the result is independent of thread count.
fn accumulate_screen_grads(
    projected: &[ProjectedGaussian],
    cam: &CameraView,
    cfg: &RasterConfig,
    grads: &PixelGradients,
) -> Vec<ScreenGrad> {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let rows: Vec<usize> = (0..h).collect();
    let chunks: Vec<Vec<ScreenGrad>> = rows
        .par_chunks(16)
        .map(|chunk| {
            let mut acc = vec![ScreenGrad::default(); projected.len()];
            let mut contribs: Vec<(usize, f64, f64)> = Vec::new();
            for &row in chunk {
                for col in 0..w {
                    let pix = row * w + col;
                    let g_rgb = Vector3::new(
                        grads.d_rgb[pix * 3],
                        grads.d_rgb[pix * 3 + 1],
                        grads.d_rgb[pix * 3 + 2],
                    );
                    let g_depth = grads.d_depth[pix];
                    if g_rgb == Vector3::zeros() && g_depth == 0.0 {
                        continue;
                    }
                    let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);

                    // Replay the forward composite exactly.
                    contribs.clear();
                    let mut t = 1.0;
                    let mut accum = 0.0;
                    let mut depth_num = 0.0;
                    for (gi, g) in projected.iter().enumerate() {
                        let d = Vector2::new(px - g.mean2d.x, py - g.mean2d.y);
                        let q = g.conic[(0, 0)] * d.x * d.x
                            + 2.0 * g.conic[(0, 1)] * d.x * d.y
                            + g.conic[(1, 1)] * d.y * d.y;
                        let alpha = (g.alpha_peak * (-0.5 * q).exp()).min(ALPHA_CLAMP);
                        if alpha < cfg.alpha_min {
                            continue;
                        }
                        contribs.push((gi, alpha, t));
                        let wgt = alpha * t;
                        accum += wgt;
                        depth_num += wgt * g.depth;
                        t *= 1.0 - alpha;
                        if t < cfg.t_terminate {
                            break;
                        }
                    }
                    let depth_defined = accum > DEPTH_ALPHA_MIN;
                    let depth = if depth_defined { depth_num / accum } else { 0.0 };

                    // Reverse sweep: suffix carries the sensitivity of all
                    // later weights and the final transmittance to 1−alpha_i.
                    let mut suffix = g_rgb.dot(&cfg.background) * t;
                    for &(gi, alpha, t_before) in contribs.iter().rev() {
                        let g = &projected[gi];
                        let wgt = alpha * t_before;
                        let mut dl_dw = g_rgb.dot(&g.color);
                        if depth_defined {
                            dl_dw += g_depth * (g.depth - depth) / accum;
                            acc[gi].z += g_depth * wgt / accum;
                        }
                        acc[gi].color += wgt * g_rgb;
                        let g_alpha = dl_dw * t_before - suffix / (1.0 - alpha);
                        suffix += dl_dw * wgt;

                        let d = Vector2::new(px - g.mean2d.x, py - g.mean2d.y);
                        let u = g.conic * d;
                        let g_q = -0.5 * alpha * g_alpha;
                        acc[gi].mean2d += -2.0 * g_q * u;
                        acc[gi].cov2d += -g_q * (u * u.transpose());
                        acc[gi].logit_opacity += g_alpha * opacity_gate(g.alpha_peak, alpha);
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = vec![ScreenGrad::default(); projected.len()];
    for chunk in chunks {
        for (dst, src) in total.iter_mut().zip(chunk) {
            dst.mean2d += src.mean2d;
            dst.cov2d += src.cov2d;
            dst.color += src.color;
            dst.z += src.z;
            dst.logit_opacity += src.logit_opacity;
        }
    }
    total
}

/// d alpha / d logit_opacity; zero once the activated opacity is clamped.
fn opacity_gate(alpha_peak: f64, alpha: f64) -> f64 {
    if alpha_peak >= ALPHA_CLAMP {
        0.0
    } else {
        alpha * (1.0 - alpha_peak)
    }
}

/// Exact gradients of the forward compositing w.r.t. every Gaussian
/// attribute, given d Loss / d rgb and d Loss / d depth per pixel.
pub fn backward_cloud(
    cloud: &GaussianCloud,
    cam: &CameraView,
    cfg: &RasterConfig,
    grads: &PixelGradients,
) -> Result<CloudGradients> {
    check_upstream(cam, grads)?;
    let mut out = CloudGradients::zeros_like(cloud);
    let projected = project_and_sort(cloud, cam, cfg);
    let screen = accumulate_screen_grads(&projected, cam, cfg, grads);
    let degree = cloud.sh_degree();
    let n_basis = sh::basis_len(degree);

    for (g, sg) in projected.iter().zip(&screen) {
        let i = g.splat_index;
        let splat = &cloud.splats()[i];
        let p_cam = cam.to_camera(splat.position);
        let (x, y, z) = (p_cam.x, p_cam.y, p_cam.z);
        let jac = crate::render::perspective_jacobian(cam, p_cam);
        let rot_w = cam.rotation;
        let u_mat = jac * rot_w;

        // Paths into the camera-frame point.
        let mut g_pc = jac.transpose() * sg.mean2d;
        g_pc.z += sg.z;

        // Covariance chain: Σ2D = U Σ3 Uᵀ + const.
        let sigma3 = splat.covariance();
        let g2 = sg.cov2d;
        let dl_du = 2.0 * g2 * u_mat * sigma3;
        let dl_dj: Matrix2x3<f64> = dl_du * rot_w.transpose();
        let (fx, fy) = (cam.fx, cam.fy);
        let z2 = z * z;
        let z3 = z2 * z;
        g_pc.x += dl_dj[(0, 2)] * (-fx / z2);
        g_pc.y += dl_dj[(1, 2)] * (-fy / z2);
        g_pc.z += dl_dj[(0, 0)] * (-fx / z2)
            + dl_dj[(1, 1)] * (-fy / z2)
            + dl_dj[(0, 2)] * (2.0 * fx * x / z3)
            + dl_dj[(1, 2)] * (2.0 * fy * y / z3);

        out.position[i] += rot_w.transpose() * g_pc;

        // Attribute chains through the 3D covariance factor M = R·diag(s).
        let g_sigma3 = u_mat.transpose() * g2 * u_mat;
        let rot_s = splat.rotation_matrix();
        let scale = splat.scale();
        let factor = splat.covariance_factor();
        let g_m = 2.0 * g_sigma3 * factor;
        let rt_gm = rot_s.transpose() * g_m;
        for k in 0..3 {
            out.log_scale[i][k] += scale[k] * rt_gm[(k, k)];
        }
        let mut g_rot = g_m;
        for k in 0..3 {
            let mut col = g_rot.column_mut(k);
            col *= scale[k];
        }
        let q_raw = splat.rotation;
        let norm = q_raw.norm();
        let q_n = q_raw / norm;
        let dr = quat_to_matrix_grad(q_n);
        let mut g_qn = Vector4::zeros();
        for k in 0..4 {
            g_qn[k] = g_rot.dot(&dr[k]);
        }
        out.rotation[i] += (g_qn - q_n * q_n.dot(&g_qn)) / norm;

        out.logit_opacity[i] += sg.logit_opacity;

        // Color chain: clamp-gated spherical-harmonic coefficients, plus the
        // view-direction dependence for degree 3.
        let to_splat = splat.position - cam.center();
        let rho = to_splat.norm();
        let dir = if rho > 1e-12 { to_splat / rho } else { cam.forward() };
        let mut basis = [0.0; 16];
        sh::eval_basis(dir, n_basis, &mut basis);
        let mut c_raw = Vector3::repeat(0.5);
        for (b, coeff) in splat.sh_coeffs.iter().enumerate() {
            c_raw += basis[b] * coeff;
        }
        let gate = Vector3::new(
            clamp_gate(c_raw.x),
            clamp_gate(c_raw.y),
            clamp_gate(c_raw.z),
        );
        let gated = gate.component_mul(&sg.color);
        for (out_coeff, &bv) in out.sh_coeffs[i].iter_mut().zip(&basis) {
            *out_coeff += bv * gated;
        }
        if degree > 0 && rho > 1e-12 {
            let mut basis_grad = [[0.0; 3]; 16];
            sh::eval_basis_grad(dir, n_basis, &mut basis_grad);
            let mut g_dir = Vector3::zeros();
            for (bg, coeff) in basis_grad.iter().zip(&splat.sh_coeffs) {
                let m = gated.dot(coeff);
                g_dir += m * Vector3::new(bg[0], bg[1], bg[2]);
            }
            let proj = (Matrix3::identity() - dir * dir.transpose()) / rho;
            out.position[i] += proj * g_dir;
        }

        out.grad2d_norm[i] = sg.mean2d.norm();
    }
    Ok(out)
}

fn clamp_gate(c_raw: f64) -> f64 {
    if (0.0..=1.0).contains(&c_raw) {
        1.0
    } else {
        0.0
    }
}

fn cross_matrix(v: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Gradient of the loss w.r.t. a left-multiplicative se(3) perturbation of
/// the camera extrinsics; Gaussian attributes held fixed.
pub fn backward_pose(
    cloud: &GaussianCloud,
    cam: &CameraView,
    cfg: &RasterConfig,
    grads: &PixelGradients,
) -> Result<PoseGradient> {
    check_upstream(cam, grads)?;
    let projected = project_and_sort(cloud, cam, cfg);
    let screen = accumulate_screen_grads(&projected, cam, cfg, grads);
    let degree = cloud.sh_degree();
    let n_basis = sh::basis_len(degree);
    let mut pose = PoseGradient::zero();
    let basis_axes = [Vector3::x(), Vector3::y(), Vector3::z()];

    for (g, sg) in projected.iter().zip(&screen) {
        let splat = &cloud.splats()[g.splat_index];
        let p_cam = cam.to_camera(splat.position);
        let (x, y, z) = (p_cam.x, p_cam.y, p_cam.z);
        let jac = crate::render::perspective_jacobian(cam, p_cam);
        let rot_w = cam.rotation;
        let u_mat = jac * rot_w;

        let mut g_pc = jac.transpose() * sg.mean2d;
        g_pc.z += sg.z;

        let sigma3 = splat.covariance();
        let dl_du = 2.0 * sg.cov2d * u_mat * sigma3;
        let dl_dj: Matrix2x3<f64> = dl_du * rot_w.transpose();
        let (fx, fy) = (cam.fx, cam.fy);
        let z2 = z * z;
        let z3 = z2 * z;
        g_pc.x += dl_dj[(0, 2)] * (-fx / z2);
        g_pc.y += dl_dj[(1, 2)] * (-fy / z2);
        g_pc.z += dl_dj[(0, 0)] * (-fx / z2)
            + dl_dj[(1, 1)] * (-fy / z2)
            + dl_dj[(0, 2)] * (2.0 * fx * x / z3)
            + dl_dj[(1, 2)] * (2.0 * fy * y / z3);

        // W appears in U = J·W beyond its role in p_cam.
        let dl_dw_mat: Matrix3<f64> = jac.transpose() * dl_du;
        for (r, axis) in pose.rotation.iter_mut().zip(&basis_axes) {
            *r += g_pc.dot(&axis.cross(&p_cam));
            *r += dl_dw_mat.dot(&(cross_matrix(*axis) * rot_w));
        }
        pose.translation += g_pc;

        // View-direction color dependence: the camera center moves with τ
        // (but, to first order, not with ω).
        let to_splat = splat.position - cam.center();
        let rho = to_splat.norm();
        if degree > 0 && rho > 1e-12 {
            let dir = to_splat / rho;
            let mut c_raw = Vector3::repeat(0.5);
            let mut basis = [0.0; 16];
            sh::eval_basis(dir, n_basis, &mut basis);
            for (b, coeff) in splat.sh_coeffs.iter().enumerate() {
                c_raw += basis[b] * coeff;
            }
            let gate = Vector3::new(
                clamp_gate(c_raw.x),
                clamp_gate(c_raw.y),
                clamp_gate(c_raw.z),
            );
            let gated = gate.component_mul(&sg.color);
            let mut basis_grad = [[0.0; 3]; 16];
            sh::eval_basis_grad(dir, n_basis, &mut basis_grad);
            let mut g_dir = Vector3::zeros();
            for (bg, coeff) in basis_grad.iter().zip(&splat.sh_coeffs) {
                let m = gated.dot(coeff);
                g_dir += m * Vector3::new(bg[0], bg[1], bg[2]);
            }
            let proj = (Matrix3::identity() - dir * dir.transpose()) / rho;
            // d dir/d o = −proj and d o/d τ = −Rᵀ cancel signs.
            pose.translation += rot_w * (proj * g_dir);
        }
    }
    Ok(pose)
}

/// Maximum relative gradient error for one parameter group.
#[derive(Debug, Clone)]
pub struct GroupError {
    pub name: String,
    pub max_rel_error: f64,
}

/// Finite-difference audit of both backward passes.
#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub groups: Vec<GroupError>,
}

impl GradcheckReport {
    pub fn all_within(&self, tol: f64) -> bool {
        self.groups.iter().all(|g| g.max_rel_error < tol)
    }

    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

/// Relative error with an absolute floor: discrepancies below 1e-6 count as
/// exact agreement.
fn rel_error(analytic: f64, fd: f64) -> f64 {
    let diff = (analytic - fd).abs();
    if diff <= 1e-6 {
        0.0
    } else {
        diff / analytic.abs().max(fd.abs())
    }
}

/// Configuration under which the objective is smooth everywhere: exhaustive
/// compositing with a vanishing contribution threshold.
fn smooth_config(cfg: &RasterConfig) -> RasterConfig {
    RasterConfig { alpha_min: 1e-9, ..cfg.as_naive_exhaustive() }
}

/// Audit both backward passes against central finite differences on a
/// randomly weighted objective; returns the max relative error per group.
pub fn gradcheck(
    cloud: &GaussianCloud,
    cam: &CameraView,
    cfg: &RasterConfig,
    seed: u64,
) -> GradcheckReport {
    let cfg = smooth_config(cfg);
    let mut rng = crate::rng::stream(seed, "gradcheck");
    use rand::Rng;

    let base = rasterize(cloud, cam, &cfg);
    let npix = base.width * base.height;
    let mut upstream = PixelGradients {
        d_rgb: (0..npix * 3).map(|_| rng.random_range(-1.0..1.0)).collect(),
        d_depth: (0..npix).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    // Depth gradients only where the mask cannot flip under the probe step.
    for i in 0..npix {
        if base.accum_alpha[i] <= 1e-3 {
            upstream.d_depth[i] = 0.0;
        }
    }

    let objective = |cl: &GaussianCloud, cm: &CameraView| -> f64 {
        let r = rasterize(cl, cm, &cfg);
        let mut acc = 0.0;
        for i in 0..npix * 3 {
            acc += upstream.d_rgb[i] * r.rgb[i];
        }
        for i in 0..npix {
            acc += upstream.d_depth[i] * r.depth[i];
        }
        acc
    };

    let analytic = backward_cloud(cloud, cam, &cfg, &upstream).expect("finite upstream");
    let pose_analytic = backward_pose(cloud, cam, &cfg, &upstream).expect("finite upstream");

    let h = 1e-4;
    let mut errs: std::collections::BTreeMap<&str, f64> = Default::default();
    let mut record = |group: &'static str, a: f64, fd: f64| {
        let e = rel_error(a, fd);
        let slot = errs.entry(group).or_insert(0.0);
        *slot = slot.max(e);
    };

    for i in 0..cloud.len() {
        let probe = |mutate: &dyn Fn(&mut GaussianCloud, f64)| -> f64 {
            let mut plus = cloud.clone();
            mutate(&mut plus, h);
            let mut minus = cloud.clone();
            mutate(&mut minus, -h);
            (objective(&plus, cam) - objective(&minus, cam)) / (2.0 * h)
        };
        for k in 0..3 {
            let fd = probe(&|cl, d| cl.splats_mut()[i].position[k] += d);
            record("position", analytic.position[i][k], fd);
        }
        for k in 0..3 {
            let fd = probe(&|cl, d| cl.splats_mut()[i].log_scale[k] += d);
            record("log_scale", analytic.log_scale[i][k], fd);
        }
        for k in 0..4 {
            let fd = probe(&|cl, d| cl.splats_mut()[i].rotation[k] += d);
            record("rotation", analytic.rotation[i][k], fd);
        }
        let fd = probe(&|cl, d| cl.splats_mut()[i].logit_opacity += d);
        record("logit_opacity", analytic.logit_opacity[i], fd);
        for b in 0..sh::basis_len(cloud.sh_degree()) {
            for k in 0..3 {
                let fd = probe(&|cl, d| cl.splats_mut()[i].sh_coeffs[b][k] += d);
                record("sh", analytic.sh_coeffs[i][b][k], fd);
            }
        }
    }

    let hp = 1e-5;
    for k in 0..3 {
        let mut omega = Vector3::zeros();
        omega[k] = hp;
        let fd = (objective(cloud, &cam.perturbed_left(omega, Vector3::zeros()))
            - objective(cloud, &cam.perturbed_left(-omega, Vector3::zeros())))
            / (2.0 * hp);
        record("pose_rotation", pose_analytic.rotation[k], fd);
        let mut tau = Vector3::zeros();
        tau[k] = hp;
        let fd = (objective(cloud, &cam.perturbed_left(Vector3::zeros(), tau))
            - objective(cloud, &cam.perturbed_left(Vector3::zeros(), -tau)))
            / (2.0 * hp);
        record("pose_translation", pose_analytic.translation[k], fd);
    }

    GradcheckReport {
        groups: errs
            .into_iter()
            .map(|(name, max_rel_error)| GroupError { name: name.into(), max_rel_error })
            .collect(),
    }
}
