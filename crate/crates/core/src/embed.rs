//! Per-camera geometric conditioning: the camera's central viewing ray in
//! Plücker coordinates, lifted through a Fourier feature map.

use nalgebra::Vector3;

use crate::camera::CameraView;
use crate::error::{Error, Result};

pub const FOURIER_BANDS: usize = 6;
/// 6 ray components × (identity + sin/cos per band).
pub const EMBEDDING_LEN: usize = 6 * (1 + 2 * FOURIER_BANDS);

/// A ray as (direction, moment): invariant to sliding the origin along the ray.
#[derive(Debug, Clone, PartialEq)]
pub struct PluckerRay {
    /// Unit direction d.
    pub direction: Vector3<f64>,
    /// Moment m = o × d.
    pub moment: Vector3<f64>,
}

impl PluckerRay {
    pub fn from_origin_direction(origin: Vector3<f64>, direction: Vector3<f64>) -> Result<Self> {
        let n = direction.norm();
        if n < 1e-12 {
            return Err(Error::Numerical("ray direction is degenerate".into()));
        }
        let d = direction / n;
        Ok(Self { direction: d, moment: origin.cross(&d) })
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.direction.x,
            self.direction.y,
            self.direction.z,
            self.moment.x,
            self.moment.y,
            self.moment.z,
        ]
    }
}

/// Central viewing ray of a camera: origin at the camera center, direction
/// along the camera's forward axis.
pub fn plucker_from_camera(cam: &CameraView) -> Result<PluckerRay> {
    PluckerRay::from_origin_direction(cam.center(), cam.forward())
}

/// Fourier-encode a 6-vector: [r, sin(f₁πr), cos(f₁πr), …, sin(f_Kπr), cos(f_Kπr)]
/// with integer frequencies f_k = k. Output length 6·(1+2K).
pub fn fourier_encode(r: &[f64; 6], bands: usize) -> Vec<f64> {
    assert!(bands >= 1, "need at least one Fourier band");
    let mut out = Vec::with_capacity(6 * (1 + 2 * bands));
    out.extend_from_slice(r);
    for k in 1..=bands {
        let f = k as f64;
        for v in r {
            out.push((f * std::f64::consts::PI * v).sin());
        }
        for v in r {
            out.push((f * std::f64::consts::PI * v).cos());
        }
    }
    out
}

/// 78-dimensional per-camera embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraEmbedding {
    pub values: Vec<f64>,
}

pub fn embed_camera(cam: &CameraView) -> Result<CameraEmbedding> {
    let ray = plucker_from_camera(cam)?;
    let values = fourier_encode(&ray.to_array(), FOURIER_BANDS);
    debug_assert_eq!(values.len(), EMBEDDING_LEN);
    Ok(CameraEmbedding { values })
}

/// Stack embeddings into a row-major (n_cams × 78) float32 tensor.
pub fn embedding_tensor(cams: &[CameraView]) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(cams.len() * EMBEDDING_LEN);
    for cam in cams {
        out.extend(embed_camera(cam)?.values.iter().map(|v| *v as f32));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::orbit_rig;
    use nalgebra::Matrix3;

    #[test]
    fn origin_camera_ray_is_pure_direction() {
        let cam = CameraView::new(
            64,
            64,
            50.0,
            50.0,
            32.0,
            32.0,
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap();
        let ray = plucker_from_camera(&cam).unwrap();
        assert!((ray.direction - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert!(ray.moment.norm() < 1e-12);
    }

    #[test]
    fn moment_matches_hand_cross_product() {
        let ray = PluckerRay::from_origin_direction(
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        assert!((ray.moment - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ray_is_invariant_under_sliding_the_origin() {
        let o = Vector3::new(0.3, -1.2, 2.0);
        let d = Vector3::new(0.5, 0.1, -0.8);
        let a = PluckerRay::from_origin_direction(o, d).unwrap();
        let b = PluckerRay::from_origin_direction(o + 3.7 * (d / d.norm()), d).unwrap();
        assert!((a.direction - b.direction).norm() < 1e-9);
        assert!((a.moment - b.moment).norm() < 1e-9);
    }

    #[test]
    fn direction_and_moment_stay_orthogonal() {
        for cam in orbit_rig(12, 2.0, 0.8, 64, 64) {
            let ray = plucker_from_camera(&cam).unwrap();
            assert!(ray.direction.dot(&ray.moment).abs() < 1e-9);
            assert!((ray.direction.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn encoding_length_is_six_times_one_plus_two_k() {
        for k in 1..=8 {
            assert_eq!(fourier_encode(&[0.0; 6], k).len(), 6 * (1 + 2 * k));
        }
        assert_eq!(EMBEDDING_LEN, 78);
    }

    #[test]
    fn zero_ray_encodes_to_zeros_and_ones() {
        let enc = fourier_encode(&[0.0; 6], FOURIER_BANDS);
        assert!(enc[..6].iter().all(|&v| v == 0.0));
        for k in 0..FOURIER_BANDS {
            let base = 6 + k * 12;
            assert!(enc[base..base + 6].iter().all(|&v| v == 0.0), "sin block of band {k}");
            assert!(
                enc[base + 6..base + 12].iter().all(|&v| v == 1.0),
                "cos block of band {k}"
            );
        }
    }

    #[test]
    fn unit_component_hits_sin_pi_and_cos_pi() {
        let mut r = [0.0; 6];
        r[2] = 1.0;
        let enc = fourier_encode(&r, 1);
        assert!(enc[6 + 2].abs() < 1e-12, "sin(π) ≈ 0");
        assert!((enc[6 + 6 + 2] + 1.0).abs() < 1e-12, "cos(π) = −1");
    }
}
