//! Pinhole camera with world-to-camera extrinsics. Convention: camera x right,
//! y down, z forward (the rotation's third row is the viewing direction).

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation, orthonormal with determinant +1.
    pub rotation: Matrix3<f64>,
    /// Translation in the camera frame: p_cam = R p_world + t.
    pub translation: Vector3<f64>,
}

impl CameraView {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Usage("camera dimensions must be positive".into()));
        }
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Usage(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(Error::Usage(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        let ortho_err = orthonormality_error(&rotation);
        if ortho_err > 1e-6 {
            return Err(Error::Usage(format!(
                "camera rotation is not orthonormal (error {ortho_err:.2e})"
            )));
        }
        if (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::Usage("camera rotation must have determinant +1".into()));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Usage("camera translation must be finite".into()));
        }
        Ok(Self { width, height, fx, fy, cx, cy, rotation, translation })
    }

    /// Camera center in world coordinates: −Rᵀ t.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Unit viewing direction in world coordinates (third rotation row).
    pub fn forward(&self) -> Vector3<f64> {
        let d = self.rotation.row(2).transpose();
        d / d.norm()
    }

    /// World-space up direction of the image (negated second rotation row,
    /// since camera y points down the image).
    pub fn up(&self) -> Vector3<f64> {
        -self.rotation.row(1).transpose()
    }

    /// Transform a world point into the camera frame.
    pub fn to_camera(&self, p_world: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p_world + self.translation
    }

    /// Pinhole projection of a camera-frame point (needs z > 0).
    pub fn project_camera_point(&self, p_cam: Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        )
    }

    /// Camera at `eye` looking at `target`, with the image up axis aligned as
    /// closely as possible with `up_world`. Intrinsics copied from `reference`.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up_world: Vector3<f64>,
        reference: &CameraView,
    ) -> Result<Self> {
        let f = target - eye;
        if f.norm() < 1e-12 {
            return Err(Error::Numerical("look-at eye coincides with target".into()));
        }
        let z = f / f.norm();
        // Camera basis is right-handed with y down: x = (−up) × z, y = z × x.
        let x = (-up_world).cross(&z);
        if x.norm() < 1e-9 {
            return Err(Error::Numerical("look-at direction is parallel to up".into()));
        }
        let x = x / x.norm();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        Ok(Self {
            rotation,
            translation,
            ..*reference
        })
    }

    /// Apply a left perturbation of the extrinsics:
    /// R ← exp([ω]×) R, t ← exp([ω]×) t + τ.
    pub fn perturbed_left(&self, omega: Vector3<f64>, tau: Vector3<f64>) -> Self {
        let e = Rotation3::new(omega).into_inner();
        Self {
            rotation: e * self.rotation,
            translation: e * self.translation + tau,
            ..*self
        }
    }

    /// Geodesic rotation distance to another camera, radians.
    pub fn rotation_angle_to(&self, other: &CameraView) -> f64 {
        let rel = other.rotation * self.rotation.transpose();
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }
}

/// Largest absolute entry of RᵀR − I.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Nearest rotation matrix (polar factor); None when the input is singular or
/// reflects (determinant would be −1).
pub fn orthonormalize(r: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let fixed = u * vt;
    if (fixed.determinant() - 1.0).abs() > 1e-6 {
        return None;
    }
    Some(fixed)
}

/// Spatial scale of a camera rig: largest center distance from the centroid,
/// padded by 10%; falls back to 1 for degenerate rigs.
pub fn rig_extent(cams: &[CameraView]) -> f64 {
    if cams.is_empty() {
        return 1.0;
    }
    let centroid =
        cams.iter().map(|c| c.center()).sum::<Vector3<f64>>() / cams.len() as f64;
    let r = cams
        .iter()
        .map(|c| (c.center() - centroid).norm())
        .fold(0.0, f64::max);
    if r < 1e-9 {
        1.0
    } else {
        1.1 * r
    }
}
