//! Scene optimization: point-cloud initialization, joint splat/pose fitting
//! on input views, refinement-in-the-loop reconstruction over a novel-view
//! trajectory, and test-time pose alignment.

pub mod adam;
pub mod densify;

pub use adam::{CloudOptimizer, LearningRates, PoseOptimizer};
pub use densify::{
    adaptive_density_control, reset_opacity, AdcOutcome, DensifyAccumulator, DensifyConfig,
};

use nalgebra::{Vector3, Vector4};
use rayon::prelude::*;

use crate::camera::{rig_extent, CameraView};
use crate::error::{Error, Result};
use crate::image::RgbdImage;
use crate::io::ColoredPointCloud;
use crate::losses::{gaussian_loss, photometric_l1, sample_loss, LossWeights};
use crate::refine::{Refiner, RefinerRequest, RequestImages, CONTEXT_DIM};
use crate::render::backward::{backward_cloud, backward_pose};
use crate::render::{rasterize, RasterConfig};
use crate::rng::stream;
use crate::scene::{logit, GaussianCloud, GaussianSplat};
use crate::sh;
use crate::trajectory::{sample_pose, uniform_angles, EllipseTrajectory};

/// Number of novel poses sampled round-robin along the trajectory.
pub const TRAJECTORY_SAMPLES: usize = 60;

/// Every knob of the optimization loops.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Joint splat/pose iterations on the input views before refinement.
    pub init_iters: u32,
    /// Refinement-in-the-loop iterations.
    pub main_iters: u32,
    /// Every k-th main iteration samples a novel view and runs density
    /// control.
    pub densify_interval: u32,
    pub lr: LearningRates,
    pub densify: DensifyConfig,
    pub opacity_reset_interval: u32,
    /// Activated-opacity ceiling applied at each reset.
    pub opacity_reset_ceiling: f64,
    pub pose_lr: f64,
    pub pose_align_iters: u32,
    /// Basis order for clouds created from point clouds.
    pub sh_degree: u8,
    pub raster: RasterConfig,
    pub weights: LossWeights,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            init_iters: 1000,
            main_iters: 10_000,
            densify_interval: 100,
            lr: LearningRates::default(),
            densify: DensifyConfig::default(),
            opacity_reset_interval: 3000,
            opacity_reset_ceiling: 0.01,
            pose_lr: 1e-3,
            pose_align_iters: 500,
            sh_degree: 0,
            raster: RasterConfig::default(),
            weights: LossWeights::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.densify_interval == 0 {
            return Err(Error::Usage("densify interval must be at least 1".into()));
        }
        if self.opacity_reset_interval == 0 {
            return Err(Error::Usage("opacity reset interval must be at least 1".into()));
        }
        if !(self.pose_lr.is_finite() && self.pose_lr >= 0.0) {
            return Err(Error::Usage(format!(
                "pose learning rate {} must be finite and non-negative",
                self.pose_lr
            )));
        }
        if !(0.0..1.0).contains(&self.opacity_reset_ceiling)
            || self.opacity_reset_ceiling <= 0.0
        {
            return Err(Error::Usage(format!(
                "opacity reset ceiling {} must lie in (0, 1)",
                self.opacity_reset_ceiling
            )));
        }
        self.raster.validate()
    }
}

/// One training view: a camera, its target image, and whether the image came
/// from a refiner rather than from input data.
#[derive(Debug, Clone)]
pub struct StackEntry {
    pub camera: CameraView,
    pub image: RgbdImage,
    pub novel: bool,
}

/// The pool of supervision views. Input views are installed at construction
/// and never replaced; refined novel views only accumulate.
#[derive(Debug, Clone)]
pub struct TrainingStack {
    entries: Vec<StackEntry>,
    inputs: usize,
}

impl TrainingStack {
    pub fn from_inputs(views: Vec<(CameraView, RgbdImage)>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Usage("training stack needs at least one input view".into()));
        }
        for (cam, img) in &views {
            if img.width != cam.width as usize || img.height != cam.height as usize {
                return Err(Error::Shape(format!(
                    "input image {}x{} does not match camera {}x{}",
                    img.width, img.height, cam.width, cam.height
                )));
            }
        }
        let inputs = views.len();
        let entries = views
            .into_iter()
            .map(|(camera, image)| StackEntry { camera, image, novel: false })
            .collect();
        Ok(Self { entries, inputs })
    }

    pub fn push_novel(&mut self, camera: CameraView, image: RgbdImage) {
        self.entries.push(StackEntry { camera, image, novel: true });
    }

    pub fn entries(&self) -> &[StackEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn input_count(&self) -> usize {
        self.inputs
    }

    pub fn novel_count(&self) -> usize {
        self.entries.len() - self.inputs
    }

    pub fn input_cameras(&self) -> Vec<CameraView> {
        self.entries[..self.inputs].iter().map(|e| e.camera.clone()).collect()
    }

    /// Replace the camera of input view `i` (pose refinement during fitting).
    fn set_input_camera(&mut self, i: usize, cam: CameraView) {
        assert!(i < self.inputs);
        self.entries[i].camera = cam;
    }
}

/// One isotropic splat per point: color becomes the constant basis
/// coefficient, scale the mean distance to the three nearest neighbors, and
/// opacity starts at 0.1.
pub fn init_cloud(points: &ColoredPointCloud, sh_degree: u8) -> Result<GaussianCloud> {
    if points.positions.is_empty() {
        return Err(Error::Usage("cannot initialize from an empty point cloud".into()));
    }
    if points.positions.len() != points.colors.len() {
        return Err(Error::Shape(format!(
            "{} positions vs {} colors",
            points.positions.len(),
            points.colors.len()
        )));
    }
    let scales = neighbor_scales(&points.positions);
    let n_basis = sh::basis_len(sh_degree);
    let mut splats = Vec::with_capacity(points.positions.len());
    for (i, (&p, &c)) in points.positions.iter().zip(&points.colors).enumerate() {
        let mut coeffs = vec![Vector3::zeros(); n_basis];
        coeffs[0] = (c - Vector3::repeat(0.5)) / sh::SH_C0;
        splats.push(GaussianSplat::new(
            p,
            Vector4::new(1.0, 0.0, 0.0, 0.0),
            Vector3::repeat(scales[i].ln()),
            logit(0.1),
            coeffs,
        )?);
    }
    GaussianCloud::new(splats, sh_degree)
}

/// Mean distance to the three nearest neighbors, floored at 1e-7; isolated
/// points fall back to a tenth of the cloud's spread.
fn neighbor_scales(positions: &[Vector3<f64>]) -> Vec<f64> {
    let n = positions.len();
    if n == 1 {
        return vec![0.1];
    }
    let spread = {
        let centroid: Vector3<f64> = positions.iter().sum::<Vector3<f64>>() / n as f64;
        positions.iter().map(|p| (p - centroid).norm()).fold(0.0f64, f64::max).max(1.0)
    };
    positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = [f64::INFINITY; 3];
            for (j, q) in positions.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = (p - q).norm();
                if d < best[2] {
                    best[2] = d;
                    if best[2] < best[1] {
                        best.swap(1, 2);
                    }
                    if best[1] < best[0] {
                        best.swap(0, 1);
                    }
                }
            }
            let finite: Vec<f64> = best.into_iter().filter(|d| d.is_finite()).collect();
            if finite.is_empty() {
                0.1 * spread
            } else {
                (finite.iter().sum::<f64>() / finite.len() as f64).max(1e-7)
            }
        })
        .collect()
}

/// Fitted scene plus the refined input cameras.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub cloud: GaussianCloud,
    pub cameras: Vec<CameraView>,
    pub final_loss: f64,
}

/// Initialize a cloud from points and jointly optimize splat attributes and
/// camera poses against the input views.
pub fn fit_scene(
    points: &ColoredPointCloud,
    cams: &[CameraView],
    images: &[RgbdImage],
    cfg: &OptimizerConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    if cams.is_empty() || cams.len() != images.len() {
        return Err(Error::Usage(format!(
            "{} cameras vs {} images",
            cams.len(),
            images.len()
        )));
    }
    let mut stack = TrainingStack::from_inputs(
        cams.iter().cloned().zip(images.iter().cloned()).collect(),
    )?;
    let mut cloud = init_cloud(points, cfg.sh_degree)?;
    let extent = cloud.extent().max(rig_extent(cams));
    let mut optimizer = CloudOptimizer::new(&cloud, cfg.lr.clone(), extent);
    let mut pose_opts: Vec<PoseOptimizer> =
        cams.iter().map(|_| PoseOptimizer::new(cfg.pose_lr)).collect();
    let mut final_loss = f64::NAN;

    for t in 0..cfg.init_iters {
        let v = (t as usize) % cams.len();
        let entry = &stack.entries()[v];
        let cam = entry.camera.clone();
        let render = rasterize(&cloud, &cam, &cfg.raster);
        let (loss, grads) = gaussian_loss(&render, &entry.image)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "fit loss became {loss} at iteration {t}"
            )));
        }
        final_loss = loss;
        let cloud_grads = backward_cloud(&cloud, &cam, &cfg.raster, &grads)?;
        optimizer.step(&mut cloud, &cloud_grads);
        if cfg.pose_lr > 0.0 {
            let pose_grad = backward_pose(&cloud, &cam, &cfg.raster, &grads)?;
            stack.set_input_camera(v, pose_opts[v].step(&cam, &pose_grad, 1.0));
        }
    }

    Ok(FitResult { cloud, cameras: stack.input_cameras(), final_loss })
}

/// What happened during a reconstruction run.
#[derive(Debug, Clone)]
pub struct ReconstructReport {
    pub cloud: GaussianCloud,
    pub refiner_calls: usize,
    pub refiner_failures: usize,
    pub adc: AdcOutcome,
    pub final_loss: f64,
}

/// Refinement-in-the-loop optimization: every k-th iteration renders a novel
/// trajectory pose, sends it through the refiner, and appends the corrected
/// view to the training stack; every iteration fits a uniformly sampled
/// stack entry; density control runs on the same k schedule. Input poses
/// stay frozen.
pub fn reconstruct(
    cloud: GaussianCloud,
    stack: &mut TrainingStack,
    traj: &EllipseTrajectory,
    refiner: &mut dyn Refiner,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<ReconstructReport> {
    cfg.validate()?;
    let mut cloud = cloud;
    let input_cams = stack.input_cameras();
    let extent = cloud.extent().max(rig_extent(&input_cams));
    let mut optimizer = CloudOptimizer::new(&cloud, cfg.lr.clone(), extent);
    let mut acc = DensifyAccumulator::new(cloud.len());
    let mut rng_stack = stream(seed, "stack-sample");
    let mut rng_split = stream(seed, "densify-split");
    let angles = uniform_angles(TRAJECTORY_SAMPLES);
    let mut angle_idx = 0usize;
    let context = vec![0.0f32; stack.input_count() * CONTEXT_DIM];
    let mut report = ReconstructReport {
        cloud: GaussianCloud::empty(cloud.sh_degree()),
        refiner_calls: 0,
        refiner_failures: 0,
        adc: AdcOutcome::default(),
        final_loss: f64::NAN,
    };

    for t in 1..=cfg.main_iters {
        if t % cfg.densify_interval == 0 {
            let theta = angles[angle_idx % angles.len()];
            angle_idx += 1;
            match refine_novel_view(
                &cloud, stack, traj, theta, refiner, cfg, &context, seed,
            ) {
                Ok((cam, image)) => {
                    report.refiner_calls += 1;
                    stack.push_novel(cam, image);
                }
                Err(e) => {
                    report.refiner_calls += 1;
                    report.refiner_failures += 1;
                    eprintln!("warning: refiner failed at iteration {t}: {e}");
                }
            }
        }

        let pick = rand::Rng::random_range(&mut rng_stack, 0..stack.len());
        let entry = &stack.entries()[pick];
        let render = rasterize(&cloud, &entry.camera, &cfg.raster);
        let (loss, grads) = if entry.novel {
            sample_loss(&render, &entry.image, &cfg.weights, t)?
        } else {
            gaussian_loss(&render, &entry.image)?
        };
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "reconstruction loss became {loss} at iteration {t}"
            )));
        }
        report.final_loss = loss;
        let cloud_grads = backward_cloud(&cloud, &entry.camera, &cfg.raster, &grads)?;
        acc.add(&cloud_grads.grad2d_norm);
        optimizer.step(&mut cloud, &cloud_grads);

        // Density surgery and opacity resets exist to set up later steps;
        // on the last iteration they would only leave unoptimized splats in
        // the returned cloud.
        if t % cfg.densify_interval == 0 && t < cfg.main_iters {
            let avg = acc.average();
            let out = adaptive_density_control(
                &mut cloud,
                &avg,
                extent,
                &cfg.densify,
                &mut optimizer,
                &mut rng_split,
            );
            report.adc.cloned += out.cloned;
            report.adc.split += out.split;
            report.adc.pruned += out.pruned;
            acc.reset(cloud.len());
        }
        if t % cfg.opacity_reset_interval == 0 && t < cfg.main_iters {
            reset_opacity(&mut cloud, cfg.opacity_reset_ceiling, &mut optimizer);
        }
    }

    report.cloud = cloud;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn refine_novel_view(
    cloud: &GaussianCloud,
    stack: &TrainingStack,
    traj: &EllipseTrajectory,
    theta: f64,
    refiner: &mut dyn Refiner,
    cfg: &OptimizerConfig,
    context: &[f32],
    seed: u64,
) -> Result<(CameraView, RgbdImage)> {
    let reference = &stack.entries()[0].camera;
    let cam = sample_pose(traj, theta, reference)?;
    let RequestImages { render, confidence, confidence_latent } =
        crate::refine::render_for_request(cloud, &cam, &cfg.raster);
    let mut geo_cams = stack.input_cameras();
    geo_cams.push(cam.clone());
    let geo = crate::embed::embedding_tensor(&geo_cams)?;
    let request = RefinerRequest {
        camera: &cam,
        render: &render,
        confidence: &confidence,
        confidence_latent: &confidence_latent,
        context,
        geo: &geo,
        m: stack.input_count(),
        seed,
    };
    let response = refiner.refine(&request)?;
    if response.image.width != render.width || response.image.height != render.height {
        return Err(Error::Refiner(format!(
            "refined image is {}x{}, expected {}x{}",
            response.image.width, response.image.height, render.width, render.height
        )));
    }
    Ok((cam, response.image))
}

/// Adjust a camera pose so the scene's render matches `image`, by Adam on the
/// 6-DoF tangent with an exponentially decayed step. The cloud is frozen.
/// Returns the refined pose and the photometric loss it achieves.
pub fn align_test_pose(
    cloud: &GaussianCloud,
    image: &RgbdImage,
    init: &CameraView,
    cfg: &OptimizerConfig,
) -> Result<(CameraView, f64)> {
    cfg.validate()?;
    if image.width != init.width as usize || image.height != init.height as usize {
        return Err(Error::Shape(format!(
            "target image {}x{} does not match camera {}x{}",
            image.width, image.height, init.width, init.height
        )));
    }
    let mut cam = init.clone();
    let mut opt = PoseOptimizer::new(cfg.pose_lr);
    let iters = cfg.pose_align_iters;
    for t in 0..iters {
        let render = rasterize(cloud, &cam, &cfg.raster);
        let (loss, grads) = photometric_l1(&render, image)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "alignment loss became {loss} at iteration {t}"
            )));
        }
        let pose_grad = backward_pose(cloud, &cam, &cfg.raster, &grads)?;
        let lr_scale = 0.01f64.powf(t as f64 / iters as f64);
        cam = opt.step(&cam, &pose_grad, lr_scale);
    }
    let render = rasterize(cloud, &cam, &cfg.raster);
    let (final_loss, _) = photometric_l1(&render, image)?;
    Ok((cam, final_loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;
    use crate::refine::{IdentityRefiner, OracleRefiner};
    use crate::render::RasterMode;
    use crate::synth::{cluster_scene, orbit_camera};
    use crate::trajectory::fit_trajectory;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;

    fn tiny_config(init: u32, main: u32) -> OptimizerConfig {
        OptimizerConfig {
            init_iters: init,
            main_iters: main,
            densify_interval: 25,
            opacity_reset_interval: 10_000,
            pose_align_iters: 120,
            ..OptimizerConfig::default()
        }
    }

    fn scene_views(
        scene: &GaussianCloud,
        thetas: &[f64],
        size: u32,
    ) -> Vec<(CameraView, RgbdImage)> {
        thetas
            .iter()
            .map(|&th| {
                let cam = orbit_camera(th, 2.4, 0.6, size, size);
                let img = rasterize(scene, &cam, &RasterConfig::default()).to_rgbd();
                (cam, img)
            })
            .collect()
    }

    #[test]
    fn init_cloud_reproduces_colors_and_neighbor_scales() {
        let points = ColoredPointCloud {
            positions: vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
                Vector3::new(0.0, 0.0, 1.0),
            ],
            colors: vec![Vector3::new(0.8, 0.4, 0.2); 4],
        };
        let cloud = init_cloud(&points, 0).unwrap();
        assert_eq!(cloud.len(), 4);
        let s = &cloud.splats()[0];
        let color = s.color(Vector3::new(0.0, 0.0, 1.0));
        assert_abs_diff_eq!(color.x, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(color.y, 0.4, epsilon = 1e-12);
        // Point 0 sits distance 1 from its three neighbors.
        assert_abs_diff_eq!(s.scale().x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.opacity(), 0.1, epsilon = 1e-12);
        assert!(init_cloud(
            &ColoredPointCloud { positions: vec![], colors: vec![] },
            0
        )
        .is_err());
    }

    #[test]
    fn stack_keeps_inputs_first_and_counts_novel_views() {
        let scene = cluster_scene(20, 5);
        let views = scene_views(&scene, &[0.0, 2.0], 16);
        let mut stack = TrainingStack::from_inputs(views).unwrap();
        assert_eq!((stack.input_count(), stack.novel_count()), (2, 0));
        let cam = orbit_camera(1.0, 2.4, 0.6, 16, 16);
        let img = RgbdImage::constant(16, 16, [0.5, 0.5, 0.5]);
        stack.push_novel(cam, img);
        assert_eq!((stack.input_count(), stack.novel_count()), (2, 1));
        assert!(!stack.entries()[0].novel);
        assert!(stack.entries()[2].novel);
    }

    #[test]
    fn fitting_improves_photometric_quality() {
        let scene = cluster_scene(30, 17);
        let views = scene_views(&scene, &[0.0, 2.1, 4.2], 24);
        let points = ColoredPointCloud {
            positions: scene.splats().iter().map(|s| s.position).collect(),
            colors: scene
                .splats()
                .iter()
                .map(|s| s.color(Vector3::new(0.0, 0.0, 1.0)))
                .collect(),
        };
        let cams: Vec<CameraView> = views.iter().map(|(c, _)| c.clone()).collect();
        let images: Vec<RgbdImage> = views.iter().map(|(_, i)| i.clone()).collect();
        let cfg = tiny_config(60, 0);
        let before = {
            let cloud = init_cloud(&points, 0).unwrap();
            let render = rasterize(&cloud, &cams[0], &cfg.raster);
            psnr(&render.rgb, &images[0].rgb).unwrap()
        };
        let fit = fit_scene(&points, &cams, &images, &cfg).unwrap();
        let render = rasterize(&fit.cloud, &fit.cameras[0], &cfg.raster);
        let after = psnr(&render.rgb, &images[0].rgb).unwrap();
        assert!(
            after > before,
            "fitting should not hurt: {before:.2} dB -> {after:.2} dB"
        );
        assert!(fit.final_loss.is_finite());
        assert_eq!(fit.cameras.len(), 3);
    }

    #[test]
    fn reconstruct_appends_refined_views_and_reports_calls() {
        let scene = cluster_scene(25, 23);
        let views = scene_views(&scene, &[0.0, 2.1, 4.2], 16);
        let cams: Vec<CameraView> = views.iter().map(|(c, _)| c.clone()).collect();
        let mut stack = TrainingStack::from_inputs(views).unwrap();
        let traj = fit_trajectory(&cams, Some(Vector3::zeros())).unwrap();
        let cfg = tiny_config(0, 50);
        let mut refiner = IdentityRefiner;
        let report = reconstruct(
            scene.clone(),
            &mut stack,
            &traj,
            &mut refiner,
            &cfg,
            77,
        )
        .unwrap();
        assert_eq!(report.refiner_calls, 2);
        assert_eq!(report.refiner_failures, 0);
        assert_eq!(stack.novel_count(), 2);
        assert_eq!(stack.input_count(), 3);
        assert!(report.final_loss.is_finite());
        assert!(!report.cloud.is_empty());
    }

    #[test]
    fn reconstruct_is_deterministic_for_a_fixed_seed() {
        let scene = cluster_scene(18, 31);
        let views = scene_views(&scene, &[0.3, 2.4, 4.5], 16);
        let cams: Vec<CameraView> = views.iter().map(|(c, _)| c.clone()).collect();
        let traj = fit_trajectory(&cams, Some(Vector3::zeros())).unwrap();
        let mut cfg = tiny_config(0, 40);
        cfg.raster.mode = RasterMode::Naive;
        let run = |seed: u64| {
            let mut stack = TrainingStack::from_inputs(views.clone()).unwrap();
            let mut refiner = OracleRefiner::new(scene.clone(), cfg.raster.clone());
            reconstruct(scene.clone(), &mut stack, &traj, &mut refiner, &cfg, seed)
                .unwrap()
        };
        let a = run(5);
        let b = run(5);
        assert_eq!(a.cloud.len(), b.cloud.len());
        for (x, y) in a.cloud.splats().iter().zip(b.cloud.splats()) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.log_scale, y.log_scale);
            assert_eq!(x.logit_opacity, y.logit_opacity);
        }
        let c = run(6);
        let moved = a
            .cloud
            .splats()
            .iter()
            .zip(c.cloud.splats())
            .any(|(x, y)| x.position != y.position);
        assert!(moved || a.cloud.len() != c.cloud.len());
    }

    #[test]
    fn refiner_failures_skip_the_view_but_training_continues() {
        struct Failing;
        impl Refiner for Failing {
            fn refine(&mut self, _request: &RefinerRequest) -> Result<crate::refine::RefinerResponse> {
                Err(Error::Refiner("always down".into()))
            }
            fn name(&self) -> &str {
                "failing"
            }
        }
        let scene = cluster_scene(15, 41);
        let views = scene_views(&scene, &[0.0, 2.1, 4.2], 16);
        let cams: Vec<CameraView> = views.iter().map(|(c, _)| c.clone()).collect();
        let mut stack = TrainingStack::from_inputs(views).unwrap();
        let traj = fit_trajectory(&cams, Some(Vector3::zeros())).unwrap();
        let cfg = tiny_config(0, 50);
        let report =
            reconstruct(scene, &mut stack, &traj, &mut Failing, &cfg, 3).unwrap();
        assert_eq!(report.refiner_calls, 2);
        assert_eq!(report.refiner_failures, 2);
        assert_eq!(stack.novel_count(), 0);
    }

    #[test]
    fn zero_alignment_iterations_return_the_initial_pose() {
        let scene = cluster_scene(12, 51);
        let cam = orbit_camera(0.7, 2.4, 0.6, 16, 16);
        let img = rasterize(&scene, &cam, &RasterConfig::default()).to_rgbd();
        let mut cfg = tiny_config(0, 0);
        cfg.pose_align_iters = 0;
        let (pose, loss) = align_test_pose(&scene, &img, &cam, &cfg).unwrap();
        assert_eq!(pose.rotation, cam.rotation);
        assert_eq!(pose.translation, cam.translation);
        assert_abs_diff_eq!(loss, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn alignment_recovers_a_small_pose_offset() {
        let scene = cluster_scene(40, 61);
        let cam = orbit_camera(1.1, 2.4, 0.6, 32, 32);
        let img = rasterize(&scene, &cam, &RasterConfig::default()).to_rgbd();
        let off = cam.perturbed_left(
            Vector3::new(0.004, -0.003, 0.002),
            Vector3::new(0.004, 0.002, -0.003),
        );
        let mut cfg = tiny_config(0, 0);
        cfg.pose_align_iters = 150;
        let before_angle = off.rotation_angle_to(&cam);
        let before_center = (off.center() - cam.center()).norm();
        let (pose, _) = align_test_pose(&scene, &img, &off, &cfg).unwrap();
        let after_angle = pose.rotation_angle_to(&cam);
        let after_center = (pose.center() - cam.center()).norm();
        assert!(
            after_angle < 0.5 * before_angle,
            "rotation {before_angle:.2e} -> {after_angle:.2e}"
        );
        assert!(
            after_center < 0.5 * before_center,
            "center {before_center:.2e} -> {after_center:.2e}"
        );
    }

    #[test]
    fn config_validation_rejects_degenerate_intervals() {
        let cfg = OptimizerConfig { densify_interval: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = OptimizerConfig { opacity_reset_ceiling: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = OptimizerConfig { pose_lr: f64::NAN, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
