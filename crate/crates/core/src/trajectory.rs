//! Smooth elliptical camera path fitted to a set of training views, plus
//! pose synthesis along it for novel-view sampling.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::CameraView;
use crate::error::{Error, Result};

/// An ellipse in a 3D plane, with the point sampled cameras look at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseTrajectory {
    pub center: Vector3<f64>,
    /// Unit major-axis direction.
    pub basis_u: Vector3<f64>,
    /// Unit minor-axis direction, orthogonal to `basis_u`.
    pub basis_v: Vector3<f64>,
    pub semi_a: f64,
    pub semi_b: f64,
    /// Unit normal, oriented so basis_u × basis_v = plane_normal.
    pub plane_normal: Vector3<f64>,
    pub look_target: Vector3<f64>,
}

impl EllipseTrajectory {
    /// Point on the ellipse at parameter angle theta.
    pub fn point_at(&self, theta: f64) -> Vector3<f64> {
        self.center
            + self.semi_a * theta.cos() * self.basis_u
            + self.semi_b * theta.sin() * self.basis_v
    }

    /// Parameter angle whose ellipse point is nearest to `p` in the
    /// normalized in-plane coordinates.
    pub fn theta_of(&self, p: Vector3<f64>) -> f64 {
        let rel = p - self.center;
        let u = rel.dot(&self.basis_u) / self.semi_a;
        let v = rel.dot(&self.basis_v) / self.semi_b;
        v.atan2(u)
    }
}

/// Fit the trajectory to ≥ 3 camera positions. `target` overrides the look
/// point; otherwise the point mutually closest to all viewing rays is used
/// (falling back to the center-centroid pushed along the mean view direction
/// when the rays are near parallel).
pub fn fit_trajectory(cams: &[CameraView], target: Option<Vector3<f64>>) -> Result<EllipseTrajectory> {
    if cams.len() < 3 {
        return Err(Error::Usage(format!(
            "trajectory fit needs at least 3 cameras, got {}",
            cams.len()
        )));
    }
    let centers: Vec<Vector3<f64>> = cams.iter().map(|c| c.center()).collect();
    let centroid = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;

    // Principal axes of the center distribution; the weakest axis is the
    // plane normal.
    let mut cov = Matrix3::zeros();
    for o in &centers {
        let d = o - centroid;
        cov += d * d.transpose();
    }
    cov /= centers.len() as f64;
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let spread = eig.eigenvalues[order[0]].max(1e-24);
    if eig.eigenvalues[order[1]] <= 1e-12 * spread {
        return Err(Error::Numerical("camera centers are collinear".into()));
    }
    let e_u: Vector3<f64> = eig.eigenvectors.column(order[0]).into();
    let e_v: Vector3<f64> = eig.eigenvectors.column(order[1]).into();

    let pts: Vec<Vector2<f64>> = centers
        .iter()
        .map(|o| Vector2::new((o - centroid).dot(&e_u), (o - centroid).dot(&e_v)))
        .collect();

    // A conic has five degrees of freedom; with fewer points the direct fit
    // is underdetermined, so go straight to the circle.
    let fitted = if pts.len() >= 5 { fit_ellipse_conic(&pts) } else { None };
    let (center2, axis_dirs, semi) = match fitted {
        Some(f) => f,
        None => {
            let (c, r) = fit_circle(&pts)?;
            (c, [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)], [r, r])
        }
    };

    let to_world = |p: Vector2<f64>| p.x * e_u + p.y * e_v;
    // Order axes major-first and keep the frame right-handed.
    let (major, minor) = if semi[0] >= semi[1] { (0, 1) } else { (1, 0) };
    let basis_u = to_world(axis_dirs[major]).normalize();
    let mut basis_v = to_world(axis_dirs[minor]).normalize();
    basis_v = (basis_v - basis_u * basis_u.dot(&basis_v)).normalize();
    let plane_normal = basis_u.cross(&basis_v).normalize();

    let look_target = match target {
        Some(t) => t,
        None => auto_look_target(cams, centroid),
    };

    Ok(EllipseTrajectory {
        center: centroid + to_world(center2),
        basis_u,
        basis_v,
        semi_a: semi[major],
        semi_b: semi[minor],
        plane_normal,
        look_target,
    })
}

/// Pose on the trajectory at angle theta: look-at toward the trajectory's
/// target with the plane normal as up (sign matched to the reference
/// camera's up hemisphere), intrinsics copied from the reference.
pub fn sample_pose(
    traj: &EllipseTrajectory,
    theta: f64,
    reference: &CameraView,
) -> Result<CameraView> {
    let eye = traj.point_at(theta);
    let mut up = traj.plane_normal;
    if up.dot(&reference.up()) < 0.0 {
        up = -up;
    }
    CameraView::look_at(eye, traj.look_target, up, reference)
}

/// Evenly spaced parameter angles covering the full ellipse.
pub fn uniform_angles(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 2.0 * std::f64::consts::PI * i as f64 / n.max(1) as f64)
        .collect()
}

/// Center, axis directions, and semi-axis lengths of a fitted ellipse.
type EllipseFit = (Vector2<f64>, [Vector2<f64>; 2], [f64; 2]);

/// Direct least-squares conic fit constrained to an ellipse.
/// Returns None when the solution is not a real ellipse.
fn fit_ellipse_conic(pts: &[Vector2<f64>]) -> Option<EllipseFit> {
    let n = pts.len() as f64;
    // Normalize coordinates for conditioning.
    let scale = (pts.iter().map(|p| p.norm_squared()).sum::<f64>() / n).sqrt().max(1e-12);
    let sp: Vec<Vector2<f64>> = pts.iter().map(|p| p / scale).collect();

    let (mut s1, mut s2, mut s3) = (Matrix3::zeros(), Matrix3::zeros(), Matrix3::zeros());
    for p in &sp {
        let q = Vector3::new(p.x * p.x, p.x * p.y, p.y * p.y);
        let l = Vector3::new(p.x, p.y, 1.0);
        s1 += q * q.transpose();
        s2 += q * l.transpose();
        s3 += l * l.transpose();
    }
    let s3_inv = s3.try_inverse()?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // Apply the inverse constraint matrix: rows become (m3/2, −m2, m1/2).
    let reduced = Matrix3::from_rows(&[m.row(2) / 2.0, -m.row(1), m.row(0) / 2.0]);

    let quad = eigenvector_with_ellipse_constraint(&reduced)?;
    let linear = t * quad;
    // Conic a u² + b uv + c v² + d u + e v + f = 0 in scaled coordinates.
    let (a, b, c) = (quad[0], quad[1], quad[2]);
    let (d, e, f) = (linear[0], linear[1], linear[2]);

    let sys = Matrix2::new(2.0 * a, b, b, 2.0 * c);
    let cc = sys.try_inverse()? * Vector2::new(-d, -e);
    let f_center = a * cc.x * cc.x + b * cc.x * cc.y + c * cc.y * cc.y + d * cc.x + e * cc.y + f;
    let q = Matrix2::new(a, b / 2.0, b / 2.0, c);
    let eig = q.symmetric_eigen();
    let mut dirs = [Vector2::zeros(); 2];
    let mut semi = [0.0f64; 2];
    for i in 0..2 {
        let lambda = eig.eigenvalues[i];
        let len2 = -f_center / lambda;
        if !(len2.is_finite() && len2 > 0.0) {
            return None;
        }
        dirs[i] = eig.eigenvectors.column(i).into();
        semi[i] = len2.sqrt() * scale;
    }
    Some((cc * scale, dirs, semi))
}

/// Eigenvector of the reduced 3×3 system satisfying 4ac − b² > 0.
fn eigenvector_with_ellipse_constraint(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let norm = m.abs().max().max(1e-300);
    let ms = m / norm;
    // Characteristic polynomial λ³ − c2 λ² + c1 λ − c0.
    let c2 = ms.trace();
    let c1 = ms[(0, 0)] * ms[(1, 1)] - ms[(0, 1)] * ms[(1, 0)]
        + ms[(0, 0)] * ms[(2, 2)] - ms[(0, 2)] * ms[(2, 0)]
        + ms[(1, 1)] * ms[(2, 2)] - ms[(1, 2)] * ms[(2, 1)];
    let c0 = ms.determinant();
    for lambda in real_cubic_roots(-c2, c1, -c0) {
        let b = ms - Matrix3::identity() * lambda;
        let rows = [
            Vector3::from(b.row(0).transpose()),
            Vector3::from(b.row(1).transpose()),
            Vector3::from(b.row(2).transpose()),
        ];
        let mut best: Option<Vector3<f64>> = None;
        let mut best_norm = 1e-10;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let v = rows[i].cross(&rows[j]);
            if v.norm() > best_norm {
                best_norm = v.norm();
                best = Some(v / v.norm());
            }
        }
        if let Some(v) = best {
            if 4.0 * v[0] * v[2] - v[1] * v[1] > 0.0 {
                return Some(v);
            }
        }
    }
    None
}

/// Real roots of λ³ + a λ² + b λ + c.
fn real_cubic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let shift = -a / 3.0;
    let eps = 1e-14;
    if p.abs() < eps && q.abs() < eps {
        return vec![shift];
    }
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
    if disc > eps {
        let s = disc.sqrt();
        let t = (-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt();
        vec![t + shift]
    } else if p.abs() < eps {
        vec![(-q).cbrt() + shift]
    } else {
        let r = (-p / 3.0).sqrt();
        let phi = (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0).acos();
        (0..3)
            .map(|k| 2.0 * r * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift)
            .collect()
    }
}

/// Least-squares circle through in-plane points.
fn fit_circle(pts: &[Vector2<f64>]) -> Result<(Vector2<f64>, f64)> {
    let mut a = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for p in pts {
        let row = Vector3::new(2.0 * p.x, 2.0 * p.y, 1.0);
        a += row * row.transpose();
        rhs += row * p.norm_squared();
    }
    let sol = a
        .try_inverse()
        .ok_or_else(|| Error::Numerical("circle fit is singular".into()))?
        * rhs;
    let center = Vector2::new(sol[0], sol[1]);
    let r2 = sol[2] + center.norm_squared();
    if !(r2.is_finite() && r2 > 0.0) {
        return Err(Error::Numerical("circle fit produced a non-positive radius".into()));
    }
    Ok((center, r2.sqrt()))
}

/// Point with least squared distance to all camera viewing rays.
fn auto_look_target(cams: &[CameraView], centroid: Vector3<f64>) -> Vector3<f64> {
    let mut a = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    let mut mean_dir = Vector3::zeros();
    for cam in cams {
        let d = cam.forward();
        let proj = Matrix3::identity() - d * d.transpose();
        a += proj;
        rhs += proj * cam.center();
        mean_dir += d;
    }
    let eig = a.symmetric_eigen();
    let max_e = eig.eigenvalues.max();
    let min_e = eig.eigenvalues.min();
    if min_e > 1e-9 * max_e.max(1e-12) {
        if let Some(inv) = a.try_inverse() {
            return inv * rhs;
        }
    }
    // Near-parallel rays: push the centroid along the mean view direction by
    // the rig's spread.
    let spread = cams
        .iter()
        .map(|c| (c.center() - centroid).norm())
        .fold(0.0, f64::max)
        .max(1.0);
    if mean_dir.norm() > 1e-9 {
        centroid + mean_dir.normalize() * spread
    } else {
        centroid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{orbit_camera, orbit_rig};
    use approx::assert_abs_diff_eq;

    fn ellipse_rig(a: f64, b: f64, n: usize) -> Vec<CameraView> {
        (0..n)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let eye = Vector3::new(a * th.cos(), b * th.sin(), 0.0);
                let reference = orbit_camera(0.0, 2.0, 0.0, 64, 64);
                CameraView::look_at(eye, Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0), &reference)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn circle_rig_recovers_radius_and_normal() {
        let cams = orbit_rig(8, 2.0, 0.0, 64, 64);
        let traj = fit_trajectory(&cams, Some(Vector3::zeros())).unwrap();
        assert_abs_diff_eq!(traj.semi_a, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(traj.semi_b, 2.0, epsilon = 1e-6);
        assert!(traj.plane_normal.z.abs() > 1.0 - 1e-9);
        assert!(traj.center.norm() < 1e-9);
    }

    #[test]
    fn axis_aligned_ellipse_is_recovered() {
        let cams = ellipse_rig(3.0, 1.0, 12);
        let traj = fit_trajectory(&cams, Some(Vector3::zeros())).unwrap();
        assert_abs_diff_eq!(traj.semi_a, 3.0, epsilon = 1e-4);
        assert_abs_diff_eq!(traj.semi_b, 1.0, epsilon = 1e-4);
        assert!(traj.basis_u.x.abs() > 1.0 - 1e-6);
    }

    #[test]
    fn two_cameras_are_rejected() {
        let cams = orbit_rig(2, 2.0, 0.0, 64, 64);
        assert!(fit_trajectory(&cams, None).is_err());
    }

    #[test]
    fn collinear_centers_are_rejected() {
        let reference = orbit_camera(0.0, 2.0, 0.0, 64, 64);
        let cams: Vec<CameraView> = (0..5)
            .map(|i| {
                CameraView::look_at(
                    Vector3::new(i as f64, 0.0, 1.0),
                    Vector3::new(0.0, 5.0, 0.0),
                    Vector3::new(0.0, 0.0, 1.0),
                    &reference,
                )
                .unwrap()
            })
            .collect();
        assert!(fit_trajectory(&cams, None).is_err());
    }

    #[test]
    fn sampling_reproduces_rig_cameras_at_their_angles() {
        let cams = orbit_rig(8, 2.0, 0.0, 64, 64);
        let traj = fit_trajectory(&cams, Some(Vector3::zeros())).unwrap();
        for cam in &cams {
            let theta = traj.theta_of(cam.center());
            let sampled = sample_pose(&traj, theta, &cams[0]).unwrap();
            assert!((sampled.center() - cam.center()).norm() < 1e-6);
        }
    }

    #[test]
    fn sampled_pose_is_periodic_and_aims_at_target() {
        let cams = ellipse_rig(3.0, 1.5, 10);
        let traj = fit_trajectory(&cams, Some(Vector3::zeros())).unwrap();
        let a = sample_pose(&traj, 0.7, &cams[0]).unwrap();
        let b = sample_pose(&traj, 0.7 + 2.0 * std::f64::consts::PI, &cams[0]).unwrap();
        assert!((a.rotation - b.rotation).abs().max() < 1e-9);
        assert!((a.translation - b.translation).norm() < 1e-9);
        let to_target = (traj.look_target - a.center()).normalize();
        assert_abs_diff_eq!(a.forward().dot(&to_target), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn auto_target_finds_the_common_look_point() {
        let cams = orbit_rig(9, 2.0, 0.8, 64, 64);
        let traj = fit_trajectory(&cams, None).unwrap();
        assert!(traj.look_target.norm() < 1e-6, "rig looks at the origin");
    }

    #[test]
    fn three_cameras_fall_back_to_a_circle() {
        let cams = orbit_rig(3, 2.0, 0.0, 64, 64);
        let traj = fit_trajectory(&cams, None).unwrap();
        assert_abs_diff_eq!(traj.semi_a, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(traj.semi_b, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn trajectory_serializes_and_restores() {
        let cams = ellipse_rig(3.0, 1.0, 12);
        let traj = fit_trajectory(&cams, Some(Vector3::new(0.1, 0.2, 0.0))).unwrap();
        let text = serde_json::to_string(&traj).unwrap();
        let back: EllipseTrajectory = serde_json::from_str(&text).unwrap();
        assert_eq!(traj, back);
    }
}
