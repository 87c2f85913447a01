//! Real spherical-harmonic basis up to degree 3, in the band ordering used by
//! community splat checkpoints (DC term first, then 3 + 5 + 7 higher-band terms).

use nalgebra::Vector3;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Basis-function count for an SH degree.
pub fn basis_len(degree: u8) -> usize {
    match degree {
        0 => 1,
        3 => 16,
        _ => panic!("unsupported SH degree {degree}"),
    }
}

/// Evaluate the first `n` basis functions at a unit direction.
pub fn eval_basis(dir: Vector3<f64>, n: usize, out: &mut [f64; 16]) {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    out[0] = SH_C0;
    if n == 1 {
        return;
    }
    out[1] = -SH_C1 * y;
    out[2] = SH_C1 * z;
    out[3] = -SH_C1 * x;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = SH_C2[0] * xy;
    out[5] = SH_C2[1] * yz;
    out[6] = SH_C2[2] * (2.0 * zz - xx - yy);
    out[7] = SH_C2[3] * xz;
    out[8] = SH_C2[4] * (xx - yy);
    out[9] = SH_C3[0] * y * (3.0 * xx - yy);
    out[10] = SH_C3[1] * xy * z;
    out[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = SH_C3[5] * z * (xx - yy);
    out[15] = SH_C3[6] * x * (xx - 3.0 * yy);
}

/// Jacobian of each basis function w.r.t. the (unnormalized) direction
/// components; row b holds d basis_b / d (x, y, z).
pub fn eval_basis_grad(dir: Vector3<f64>, n: usize, out: &mut [[f64; 3]; 16]) {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    out[0] = [0.0, 0.0, 0.0];
    if n == 1 {
        return;
    }
    out[1] = [0.0, -SH_C1, 0.0];
    out[2] = [0.0, 0.0, SH_C1];
    out[3] = [-SH_C1, 0.0, 0.0];
    let (xx, yy, zz) = (x * x, y * y, z * z);
    out[4] = [SH_C2[0] * y, SH_C2[0] * x, 0.0];
    out[5] = [0.0, SH_C2[1] * z, SH_C2[1] * y];
    out[6] = [-2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * y, 4.0 * SH_C2[2] * z];
    out[7] = [SH_C2[3] * z, 0.0, SH_C2[3] * x];
    out[8] = [2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * y, 0.0];
    out[9] = [6.0 * SH_C3[0] * x * y, SH_C3[0] * (3.0 * xx - 3.0 * yy), 0.0];
    out[10] = [SH_C3[1] * y * z, SH_C3[1] * x * z, SH_C3[1] * x * y];
    out[11] = [
        -2.0 * SH_C3[2] * x * y,
        SH_C3[2] * (4.0 * zz - xx - 3.0 * yy),
        8.0 * SH_C3[2] * y * z,
    ];
    out[12] = [
        -6.0 * SH_C3[3] * x * z,
        -6.0 * SH_C3[3] * y * z,
        SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
    ];
    out[13] = [
        SH_C3[4] * (4.0 * zz - 3.0 * xx - yy),
        -2.0 * SH_C3[4] * x * y,
        8.0 * SH_C3[4] * x * z,
    ];
    out[14] = [2.0 * SH_C3[5] * x * z, -2.0 * SH_C3[5] * y * z, SH_C3[5] * (xx - yy)];
    out[15] = [SH_C3[6] * (3.0 * xx - 3.0 * yy), -6.0 * SH_C3[6] * x * y, 0.0];
}
