//! Adam optimizers for Gaussian attributes (with state surgery mirroring
//! densification) and for 6-DoF camera-pose tangents.

use nalgebra::Vector3;

use crate::camera::CameraView;
use crate::render::backward::{CloudGradients, PoseGradient};
use crate::scene::GaussianCloud;
use crate::sh;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-15;

/// Per-group learning rates; the position rate is scaled by scene extent and
/// decays exponentially over its horizon.
#[derive(Debug, Clone)]
pub struct LearningRates {
    pub position_start: f64,
    pub position_end: f64,
    pub position_horizon: u32,
    pub sh_dc: f64,
    pub sh_rest: f64,
    pub logit_opacity: f64,
    pub log_scale: f64,
    pub rotation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position_start: 1.6e-4,
            position_end: 1.6e-6,
            position_horizon: 10_000,
            sh_dc: 2.5e-3,
            sh_rest: 2.5e-3 / 20.0,
            logit_opacity: 0.05,
            log_scale: 5e-3,
            rotation: 1e-3,
        }
    }
}

impl LearningRates {
    /// Exponential interpolation from start to end over the horizon.
    pub fn position_at(&self, iter: u64, extent: f64) -> f64 {
        let t = (iter as f64 / self.position_horizon.max(1) as f64).min(1.0);
        extent * self.position_start * (self.position_end / self.position_start).powf(t)
    }
}

/// First/second-moment buffers for one flat parameter block.
#[derive(Debug, Clone, Default)]
struct AdamBuf {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamBuf {
    fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len] }
    }

    /// One Adam update of `param` given gradient `g`; moments always decay,
    /// so parameters with zero gradient still shed stale momentum.
    #[allow(clippy::too_many_arguments)]
    fn update(&mut self, i: usize, param: &mut f64, g: f64, lr: f64, bias1: f64, bias2: f64) {
        self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
        self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = self.m[i] / bias1;
        let v_hat = self.v[i] / bias2;
        *param -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }

    fn retain(&mut self, mask: &[bool], stride: usize) {
        let filter = |buf: &mut Vec<f64>| {
            let mut keep = Vec::with_capacity(buf.len());
            for (i, chunk) in buf.chunks(stride).enumerate() {
                if mask[i] {
                    keep.extend_from_slice(chunk);
                }
            }
            *buf = keep;
        };
        filter(&mut self.m);
        filter(&mut self.v);
    }

    fn append(&mut self, count: usize, stride: usize) {
        self.m.extend(std::iter::repeat_n(0.0, count * stride));
        self.v.extend(std::iter::repeat_n(0.0, count * stride));
    }

    fn zero(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Adam over every Gaussian attribute group of a cloud.
#[derive(Debug, Clone)]
pub struct CloudOptimizer {
    pub lr: LearningRates,
    extent: f64,
    t: u64,
    n_basis: usize,
    position: AdamBuf,
    log_scale: AdamBuf,
    rotation: AdamBuf,
    opacity: AdamBuf,
    sh: AdamBuf,
}

impl CloudOptimizer {
    pub fn new(cloud: &GaussianCloud, lr: LearningRates, extent: f64) -> Self {
        let n = cloud.len();
        let n_basis = sh::basis_len(cloud.sh_degree());
        Self {
            lr,
            extent: extent.max(1e-6),
            t: 0,
            n_basis,
            position: AdamBuf::new(3 * n),
            log_scale: AdamBuf::new(3 * n),
            rotation: AdamBuf::new(4 * n),
            opacity: AdamBuf::new(n),
            sh: AdamBuf::new(3 * n_basis * n),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Apply one Adam step to every attribute of every splat.
    pub fn step(&mut self, cloud: &mut GaussianCloud, grads: &CloudGradients) {
        assert_eq!(cloud.len(), grads.len());
        self.t += 1;
        let bias1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bias2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let lr_pos = self.lr.position_at(self.t, self.extent);
        let n_basis = self.n_basis;
        for (i, splat) in cloud.splats_mut().iter_mut().enumerate() {
            for k in 0..3 {
                self.position.update(
                    3 * i + k,
                    &mut splat.position[k],
                    grads.position[i][k],
                    lr_pos,
                    bias1,
                    bias2,
                );
                self.log_scale.update(
                    3 * i + k,
                    &mut splat.log_scale[k],
                    grads.log_scale[i][k],
                    self.lr.log_scale,
                    bias1,
                    bias2,
                );
            }
            for k in 0..4 {
                self.rotation.update(
                    4 * i + k,
                    &mut splat.rotation[k],
                    grads.rotation[i][k],
                    self.lr.rotation,
                    bias1,
                    bias2,
                );
            }
            self.opacity.update(
                i,
                &mut splat.logit_opacity,
                grads.logit_opacity[i],
                self.lr.logit_opacity,
                bias1,
                bias2,
            );
            for b in 0..n_basis {
                let lr = if b == 0 { self.lr.sh_dc } else { self.lr.sh_rest };
                for k in 0..3 {
                    self.sh.update(
                        (i * n_basis + b) * 3 + k,
                        &mut splat.sh_coeffs[b][k],
                        grads.sh_coeffs[i][b][k],
                        lr,
                        bias1,
                        bias2,
                    );
                }
            }
        }
    }

    /// Drop optimizer state for splats removed from the cloud.
    pub fn retain(&mut self, mask: &[bool]) {
        self.position.retain(mask, 3);
        self.log_scale.retain(mask, 3);
        self.rotation.retain(mask, 4);
        self.opacity.retain(mask, 1);
        self.sh.retain(mask, 3 * self.n_basis);
    }

    /// Extend state with zeroed moments for freshly appended splats.
    pub fn append(&mut self, count: usize) {
        self.position.append(count, 3);
        self.log_scale.append(count, 3);
        self.rotation.append(count, 4);
        self.opacity.append(count, 1);
        self.sh.append(count, 3 * self.n_basis);
    }

    /// Forget opacity momentum (used when opacities are reset).
    pub fn reset_opacity_state(&mut self) {
        self.opacity.zero();
    }

    pub fn tracked_splats(&self) -> usize {
        self.opacity.m.len()
    }
}

/// Adam over a camera's 6-DoF tangent, re-centered at the current pose each
/// step.
#[derive(Debug, Clone)]
pub struct PoseOptimizer {
    pub lr: f64,
    t: u64,
    m: [f64; 6],
    v: [f64; 6],
}

impl PoseOptimizer {
    pub fn new(lr: f64) -> Self {
        Self { lr, t: 0, m: [0.0; 6], v: [0.0; 6] }
    }

    /// One Adam step; returns the camera moved by the resulting tangent
    /// increment.
    pub fn step(&mut self, cam: &CameraView, grad: &PoseGradient, lr_scale: f64) -> CameraView {
        self.t += 1;
        let bias1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bias2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let g = [
            grad.rotation.x,
            grad.rotation.y,
            grad.rotation.z,
            grad.translation.x,
            grad.translation.y,
            grad.translation.z,
        ];
        let mut delta = [0.0; 6];
        for k in 0..6 {
            self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * g[k];
            self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
            delta[k] = -self.lr * lr_scale * (self.m[k] / bias1)
                / ((self.v[k] / bias2).sqrt() + ADAM_EPS);
        }
        cam.perturbed_left(
            Vector3::new(delta[0], delta[1], delta[2]),
            Vector3::new(delta[3], delta[4], delta[5]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_cloud;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector4;

    #[test]
    fn position_rate_decays_exponentially_between_endpoints() {
        let lr = LearningRates::default();
        assert_abs_diff_eq!(lr.position_at(0, 2.0), 2.0 * 1.6e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(lr.position_at(10_000, 2.0), 2.0 * 1.6e-6, epsilon = 1e-15);
        let mid = lr.position_at(5_000, 2.0);
        assert_abs_diff_eq!(mid, 2.0 * (1.6e-4f64 * 1.6e-6).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(lr.position_at(20_000, 2.0), 2.0 * 1.6e-6, epsilon = 1e-15);
    }

    #[test]
    fn step_moves_against_the_gradient() {
        let mut cloud = random_cloud(4, 0, 1);
        let before = cloud.splats()[2].position;
        let mut opt = CloudOptimizer::new(&cloud, LearningRates::default(), 1.0);
        let mut grads = CloudGradients::zeros_like(&cloud);
        grads.position[2] = nalgebra::Vector3::new(1.0, 0.0, -1.0);
        for _ in 0..3 {
            opt.step(&mut cloud, &grads);
        }
        let after = cloud.splats()[2].position;
        assert!(after.x < before.x);
        assert!(after.z > before.z);
        assert_abs_diff_eq!(after.y, before.y, epsilon = 1e-12);
    }

    #[test]
    fn retain_and_append_keep_state_aligned() {
        let mut cloud = random_cloud(5, 0, 2);
        let mut opt = CloudOptimizer::new(&cloud, LearningRates::default(), 1.0);
        let mut grads = CloudGradients::zeros_like(&cloud);
        for i in 0..5 {
            grads.logit_opacity[i] = (i + 1) as f64;
        }
        opt.step(&mut cloud, &grads);
        let mask = [true, false, true, true, false];
        opt.retain(&mask);
        assert_eq!(opt.tracked_splats(), 3);
        assert_abs_diff_eq!(opt.opacity.m[1], 0.1 * 3.0, epsilon = 1e-12);
        opt.append(2);
        assert_eq!(opt.tracked_splats(), 5);
        assert_eq!(opt.opacity.m[4], 0.0);
        assert_eq!(opt.sh.m.len(), 5 * 3);
    }

    #[test]
    fn pose_step_reduces_a_quadratic_objective() {
        // Gradient of 0.5·‖τ‖² at the current pose pulls translation to zero.
        let cam = crate::synth::orbit_camera(0.3, 2.0, 0.4, 16, 16);
        let target = cam.clone();
        let mut moved = cam.perturbed_left(
            Vector3::zeros(),
            Vector3::new(0.05, -0.02, 0.01),
        );
        let mut opt = PoseOptimizer::new(5e-3);
        for _ in 0..400 {
            let delta = moved.center() - target.center();
            // Moving the center by τ moves it by +Rᵀ… use the finite
            // difference of the objective as the gradient probe instead.
            let h = 1e-6;
            let mut g = PoseGradient::zero();
            for k in 0..3 {
                let mut tau = Vector3::zeros();
                tau[k] = h;
                let plus = (moved.perturbed_left(Vector3::zeros(), tau).center()
                    - target.center())
                .norm_squared();
                let minus = (moved.perturbed_left(Vector3::zeros(), -tau).center()
                    - target.center())
                .norm_squared();
                g.translation[k] = 0.5 * (plus - minus) / (2.0 * h);
            }
            let _ = delta;
            moved = opt.step(&moved, &g, 1.0);
        }
        assert!((moved.center() - target.center()).norm() < 1e-3);
    }

    #[test]
    fn rotation_update_touches_all_four_components() {
        let mut cloud = random_cloud(1, 0, 3);
        let before: Vector4<f64> = cloud.splats()[0].rotation;
        let mut opt = CloudOptimizer::new(&cloud, LearningRates::default(), 1.0);
        let mut grads = CloudGradients::zeros_like(&cloud);
        grads.rotation[0] = Vector4::new(0.1, -0.1, 0.2, -0.2);
        opt.step(&mut cloud, &grads);
        let after = cloud.splats()[0].rotation;
        for k in 0..4 {
            assert!((after[k] - before[k]).abs() > 0.0);
        }
    }
}
