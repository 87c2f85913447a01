//! In-memory scene representation: anisotropic 3D Gaussians with
//! quaternion orientation, log-scales, logit-opacity, and SH color.

use nalgebra::{Matrix3, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::sh;

/// One Gaussian primitive. Scale and opacity are stored pre-activation
/// (log / logit) so checkpoints round-trip losslessly.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSplat {
    pub position: Vector3<f64>,
    /// Unit quaternion (w, x, y, z).
    pub rotation: Vector4<f64>,
    /// Log of the per-axis standard deviation, world units.
    pub log_scale: Vector3<f64>,
    pub logit_opacity: f64,
    /// One RGB coefficient triple per SH basis function; length 1 or 16.
    pub sh_coeffs: Vec<Vector3<f64>>,
}

impl GaussianSplat {
    /// Build a splat, normalizing the rotation. Rejects non-finite fields and
    /// degenerate (near-zero) quaternions.
    pub fn new(
        position: Vector3<f64>,
        rotation: Vector4<f64>,
        log_scale: Vector3<f64>,
        logit_opacity: f64,
        sh_coeffs: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        let mut splat = Self::from_raw(position, rotation, log_scale, logit_opacity, sh_coeffs)?;
        splat.rotation /= splat.rotation.norm();
        Ok(splat)
    }

    /// Build a splat keeping the rotation exactly as given (checkpoint
    /// ingestion path; normalization happens at evaluation time instead).
    pub fn from_raw(
        position: Vector3<f64>,
        rotation: Vector4<f64>,
        log_scale: Vector3<f64>,
        logit_opacity: f64,
        sh_coeffs: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        let finite = position.iter().all(|v| v.is_finite())
            && rotation.iter().all(|v| v.is_finite())
            && log_scale.iter().all(|v| v.is_finite())
            && logit_opacity.is_finite()
            && sh_coeffs.iter().all(|c| c.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Usage("splat attributes must be finite".into()));
        }
        if rotation.norm() < 1e-12 {
            return Err(Error::Usage("splat rotation quaternion is near zero".into()));
        }
        if !matches!(sh_coeffs.len(), 1 | 16) {
            return Err(Error::Usage(format!(
                "splat needs 1 or 16 SH coefficient triples, got {}",
                sh_coeffs.len()
            )));
        }
        Ok(Self { position, rotation, log_scale, logit_opacity, sh_coeffs })
    }

    pub fn scale(&self) -> Vector3<f64> {
        self.log_scale.map(f64::exp)
    }

    pub fn opacity(&self) -> f64 {
        activate_opacity(self.logit_opacity)
    }

    /// Rotation matrix of the (normalized) quaternion.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(self.rotation / self.rotation.norm())
    }

    /// Factor M = R · diag(scale); the 3D covariance is M Mᵀ.
    pub fn covariance_factor(&self) -> Matrix3<f64> {
        let s = self.scale();
        let mut m = self.rotation_matrix();
        for c in 0..3 {
            let mut col = m.column_mut(c);
            col *= s[c];
        }
        m
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        let m = self.covariance_factor();
        m * m.transpose()
    }

    /// View-dependent color at a unit viewing direction, clamped to [0,1].
    pub fn color(&self, view_dir: Vector3<f64>) -> Vector3<f64> {
        sh_to_rgb(&self.sh_coeffs, view_dir)
    }
}

/// Opacity activation: logistic sigmoid.
pub fn activate_opacity(logit: f64) -> f64 {
    sigmoid(logit)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of `sigmoid`.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Evaluate SH color: 0.5 + Σ_b basis_b(dir) · coeffs_b, clamped to [0,1].
pub fn sh_to_rgb(sh_coeffs: &[Vector3<f64>], view_dir: Vector3<f64>) -> Vector3<f64> {
    assert!(
        matches!(sh_coeffs.len(), 1 | 16),
        "sh_to_rgb needs 1 or 16 coefficient triples"
    );
    let mut basis = [0.0; 16];
    sh::eval_basis(view_dir, sh_coeffs.len(), &mut basis);
    let mut rgb = Vector3::repeat(0.5);
    for (b, coeff) in sh_coeffs.iter().enumerate() {
        rgb += basis[b] * coeff;
    }
    rgb.map(|v| v.clamp(0.0, 1.0))
}

/// Rotation matrix of a unit quaternion (w, x, y, z).
pub fn quat_to_matrix(q: Vector4<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Partial derivatives of `quat_to_matrix` w.r.t. each quaternion component,
/// evaluated at a unit quaternion.
pub fn quat_to_matrix_grad(q: Vector4<f64>) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        2.0 * Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0),
        2.0 * Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x),
        2.0 * Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y),
        2.0 * Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0),
    ]
}

/// The full scene: an ordered splat list plus the SH degree they share.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    splats: Vec<GaussianSplat>,
    sh_degree: u8,
}

impl GaussianCloud {
    pub fn new(splats: Vec<GaussianSplat>, sh_degree: u8) -> Result<Self> {
        if !matches!(sh_degree, 0 | 3) {
            return Err(Error::Usage(format!("unsupported SH degree {sh_degree}")));
        }
        let want = sh::basis_len(sh_degree);
        for (i, s) in splats.iter().enumerate() {
            if s.sh_coeffs.len() != want {
                return Err(Error::Usage(format!(
                    "splat {i} has {} SH coefficient triples, degree {sh_degree} needs {want}",
                    s.sh_coeffs.len()
                )));
            }
        }
        Ok(Self { splats, sh_degree })
    }

    pub fn empty(sh_degree: u8) -> Self {
        Self::new(Vec::new(), sh_degree).expect("valid degree")
    }

    pub fn sh_degree(&self) -> u8 {
        self.sh_degree
    }

    pub fn splats(&self) -> &[GaussianSplat] {
        &self.splats
    }

    pub fn splats_mut(&mut self) -> &mut [GaussianSplat] {
        &mut self.splats
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    /// Append a splat with the cloud's coefficient count.
    pub fn push(&mut self, splat: GaussianSplat) -> Result<()> {
        if splat.sh_coeffs.len() != sh::basis_len(self.sh_degree) {
            return Err(Error::Usage("splat SH size does not match cloud degree".into()));
        }
        self.splats.push(splat);
        Ok(())
    }

    /// Keep only the splats whose mask entry is true.
    pub fn retain_mask(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.splats.len());
        let mut it = keep.iter();
        self.splats.retain(|_| *it.next().unwrap());
    }

    /// Centroid of splat positions; zero for an empty cloud.
    pub fn centroid(&self) -> Vector3<f64> {
        if self.splats.is_empty() {
            return Vector3::zeros();
        }
        self.splats.iter().map(|s| s.position).sum::<Vector3<f64>>() / self.splats.len() as f64
    }

    /// Scene extent: largest distance of any splat from the centroid.
    pub fn extent(&self) -> f64 {
        let c = self.centroid();
        self.splats
            .iter()
            .map(|s| (s.position - c).norm())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_splat(sh: Vec<Vector3<f64>>) -> GaussianSplat {
        GaussianSplat::new(
            Vector3::zeros(),
            Vector4::new(1.0, 0.0, 0.0, 0.0),
            Vector3::zeros(),
            0.0,
            sh,
        )
        .unwrap()
    }

    #[test]
    fn opacity_activation_matches_reference_points() {
        assert_abs_diff_eq!(activate_opacity(0.0), 0.5);
        assert_abs_diff_eq!(activate_opacity(10.0), 0.999_954_6, epsilon = 1e-7);
        assert_abs_diff_eq!(activate_opacity(-10.0), 0.000_045_4, epsilon = 1e-7);
    }

    #[test]
    fn opacity_activation_is_strictly_increasing_and_bounded() {
        let mut prev = 0.0;
        for i in 0..1000 {
            let x = -20.0 + 40.0 * i as f64 / 999.0;
            let y = activate_opacity(x);
            assert!(y > 0.0 && y < 1.0);
            if i > 0 {
                assert!(y > prev, "not increasing at {x}");
            }
            prev = y;
        }
    }

    #[test]
    fn logit_inverts_sigmoid() {
        for p in [0.005, 0.1, 0.5, 0.99] {
            assert_abs_diff_eq!(sigmoid(logit(p)), p, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_sh_gives_mid_gray() {
        let c = unit_splat(vec![Vector3::zeros()]).color(Vector3::new(0.0, 0.0, 1.0));
        assert_abs_diff_eq!(c, Vector3::repeat(0.5), epsilon = 1e-12);
    }

    #[test]
    fn dc_coefficient_solves_for_full_red() {
        let dc = Vector3::new(0.5 / sh::SH_C0, 0.0, 0.0);
        let c = unit_splat(vec![dc]).color(Vector3::new(0.0, 0.0, 1.0));
        assert_abs_diff_eq!(c.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.y, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn degree_three_with_only_dc_matches_degree_zero() {
        let dc = Vector3::new(0.2, -0.1, 0.05);
        let mut coeffs = vec![Vector3::zeros(); 16];
        coeffs[0] = dc;
        for dir in [
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.6, -0.8, 0.0),
            Vector3::new(-0.267_261_241_912_424_4, 0.534_522_483_824_848_8, 0.801_783_725_737_273_2),
        ] {
            let full = sh_to_rgb(&coeffs, dir);
            let dc_only = sh_to_rgb(&[dc], dir);
            assert_abs_diff_eq!(full, dc_only, epsilon = 1e-12);
        }
    }

    #[test]
    fn cloud_rejects_mismatched_coefficient_counts() {
        let bad = GaussianCloud::new(vec![unit_splat(vec![Vector3::zeros()])], 3);
        assert!(bad.is_err());
    }

    proptest! {
        #[test]
        fn quaternion_rotations_are_orthonormal(
            w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0
        ) {
            let q = Vector4::new(w, x, y, z);
            prop_assume!(q.norm() > 1e-3);
            let r = quat_to_matrix(q / q.norm());
            let err = (r.transpose() * r - Matrix3::identity()).abs().max();
            prop_assert!(err < 1e-6, "orthonormality error {err}");
            prop_assert!((r.determinant() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn quaternion_gradient_matches_finite_differences() {
        let q = Vector4::new(0.8, -0.3, 0.4, 0.33).normalize();
        let grads = quat_to_matrix_grad(q);
        let h = 1e-7;
        for k in 0..4 {
            let mut lo = q;
            let mut hi = q;
            lo[k] -= h;
            hi[k] += h;
            let fd = (quat_to_matrix(hi) - quat_to_matrix(lo)) / (2.0 * h);
            assert!((fd - grads[k]).abs().max() < 1e-6, "component {k}");
        }
    }
}
