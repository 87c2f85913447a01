//! Procedural scenes and camera rigs: seeded generators used by the
//! gradient checker, the test suites, and desk-scale experiments.

use nalgebra::{Matrix3, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::camera::CameraView;
use crate::rng::stream;
use crate::scene::{logit, GaussianCloud, GaussianSplat};
use crate::sh;

/// Random cloud spread through the cube [-1,1]³ around the origin.
///
/// Colors stay away from the [0,1] clamp boundaries and opacities away from
/// saturation so the scene is smooth for finite-difference probing.
pub fn random_cloud(n: usize, sh_degree: u8, seed: u64) -> GaussianCloud {
    let mut rng = stream(seed, "synth/cloud");
    let n_coeffs = sh::basis_len(sh_degree);
    let splats = (0..n)
        .map(|_| {
            let position = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let rotation = random_unit_quaternion(&mut rng);
            let log_scale = Vector3::new(
                rng.random_range(-3.2..-1.8),
                rng.random_range(-3.2..-1.8),
                rng.random_range(-3.2..-1.8),
            );
            let logit_opacity = rng.random_range(-1.5..1.5);
            let mut sh_coeffs = vec![Vector3::zeros(); n_coeffs];
            sh_coeffs[0] = Vector3::new(
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
            );
            for c in sh_coeffs.iter_mut().skip(1) {
                *c = Vector3::new(
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.08..0.08),
                );
            }
            GaussianSplat::new(position, rotation, log_scale, logit_opacity, sh_coeffs)
                .expect("generated attributes are valid")
        })
        .collect();
    GaussianCloud::new(splats, sh_degree).expect("consistent degree")
}

pub fn random_unit_quaternion(rng: &mut impl Rng) -> Vector4<f64> {
    loop {
        let q = Vector4::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = q.norm();
        if n > 1e-6 {
            return q / n;
        }
    }
}

/// Camera on a circle of `radius` in the z = `height` plane, looking at the
/// origin, with world +z as up.
pub fn orbit_camera(theta: f64, radius: f64, height: f64, width: u32, height_px: u32) -> CameraView {
    let eye = Vector3::new(radius * theta.cos(), radius * theta.sin(), height);
    let focal = 0.9 * width.max(height_px) as f64;
    let reference = CameraView::new(
        width,
        height_px,
        focal,
        focal,
        width as f64 / 2.0,
        height_px as f64 / 2.0,
        Matrix3::identity(),
        Vector3::zeros(),
    )
    .expect("valid intrinsics");
    CameraView::look_at(eye, Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0), &reference)
        .expect("orbit eye never hits the origin")
}

/// Evenly spaced orbit rig of `n` cameras.
pub fn orbit_rig(n: usize, radius: f64, height: f64, width: u32, height_px: u32) -> Vec<CameraView> {
    (0..n)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            orbit_camera(theta, radius, height, width, height_px)
        })
        .collect()
}

/// Dense structured scene: opaque-ish Gaussian blobs arranged on a few
/// clusters, suitable as a reconstruction target.
pub fn cluster_scene(n: usize, seed: u64) -> GaussianCloud {
    let mut rng = stream(seed, "synth/clusters");
    let n_clusters = 6;
    let centers: Vec<Vector3<f64>> = (0..n_clusters)
        .map(|_| {
            Vector3::new(
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.5..0.5),
            )
        })
        .collect();
    let palette: Vec<Vector3<f64>> = (0..n_clusters)
        .map(|_| {
            Vector3::new(
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
            )
        })
        .collect();
    let splats = (0..n)
        .map(|i| {
            let k = i % n_clusters;
            let offset = Vector3::new(
                rng.sample::<f64, _>(StandardNormal) * 0.18,
                rng.sample::<f64, _>(StandardNormal) * 0.18,
                rng.sample::<f64, _>(StandardNormal) * 0.18,
            );
            let jitter = Vector3::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
            );
            GaussianSplat::new(
                centers[k] + offset,
                random_unit_quaternion(&mut rng),
                Vector3::repeat(rng.random_range(-3.4..-2.6)),
                logit(rng.random_range(0.55..0.9)),
                vec![palette[k] + jitter],
            )
            .expect("generated attributes are valid")
        })
        .collect();
    GaussianCloud::new(splats, 0).expect("degree 0")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_per_seed() {
        assert_eq!(random_cloud(10, 0, 5), random_cloud(10, 0, 5));
        assert_ne!(random_cloud(10, 0, 5), random_cloud(10, 0, 6));
    }

    #[test]
    fn orbit_cameras_look_at_origin() {
        for cam in orbit_rig(8, 3.0, 1.0, 64, 64) {
            let to_origin = -cam.center().normalize();
            assert!((cam.forward().dot(&to_origin) - 1.0).abs() < 1e-9);
        }
    }
}
