//! Image metrics and scalar statistics: PSNR, windowed SSIM (with pixel
//! gradients), Pearson depth correlation, total variation, percentiles.

use crate::error::{Error, Result};
use crate::image::ScalarMap;

/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// Linear-interpolation percentile of a sample; q in [0,1]. Empty input → 0.
pub fn percentile(data: &[f64], q: f64) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let mut sorted = data.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Peak signal-to-noise ratio in dB for values in [0,1], capped at 99.
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "psnr inputs must be equal-length and non-empty, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mse =
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Pearson correlation of two equal-length samples; None when either variance
/// vanishes.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut s_ab = 0.0;
    let mut s_aa = 0.0;
    let mut s_bb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        s_ab += da * db;
        s_aa += da * da;
        s_bb += db * db;
    }
    if s_aa <= 1e-12 || s_bb <= 1e-12 {
        return None;
    }
    Some(s_ab / (s_aa * s_bb).sqrt())
}

/// 1 − Pearson correlation over masked pixels; range [0,2].
pub fn pcc_loss(a: &[f64], b: &[f64], mask: &[bool]) -> Result<f64> {
    pcc_loss_with_grad(a, b, mask).map(|(v, _)| v)
}

/// As `pcc_loss`, also returning d loss / d a (zero off-mask).
pub fn pcc_loss_with_grad(a: &[f64], b: &[f64], mask: &[bool]) -> Result<(f64, Vec<f64>)> {
    if a.len() != b.len() || a.len() != mask.len() {
        return Err(Error::Shape("correlation inputs must share a shape".into()));
    }
    let idx: Vec<usize> = (0..a.len()).filter(|&i| mask[i]).collect();
    if idx.len() < 2 {
        return Err(Error::Usage(format!(
            "correlation needs at least 2 masked pixels, got {}",
            idx.len()
        )));
    }
    let n = idx.len() as f64;
    let ma = idx.iter().map(|&i| a[i]).sum::<f64>() / n;
    let mb = idx.iter().map(|&i| b[i]).sum::<f64>() / n;
    let mut s_ab = 0.0;
    let mut s_aa = 0.0;
    let mut s_bb = 0.0;
    for &i in &idx {
        let (da, db) = (a[i] - ma, b[i] - mb);
        s_ab += da * db;
        s_aa += da * da;
        s_bb += db * db;
    }
    if s_aa <= 1e-12 || s_bb <= 1e-12 {
        return Err(Error::Numerical(
            "depth correlation undefined: zero variance under the mask".into(),
        ));
    }
    let denom = (s_aa * s_bb).sqrt();
    let r = s_ab / denom;
    let mut grad = vec![0.0; a.len()];
    for &i in &idx {
        let (da, db) = (a[i] - ma, b[i] - mb);
        grad[i] = -(db - (s_ab / s_aa) * da) / denom;
    }
    Ok((1.0 - r, grad))
}

fn gauss_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c) * (i as f64 - c)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable same-size convolution with zero padding.
fn conv_same(src: &[f64], w: usize, h: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = SSIM_WINDOW / 2;
    let mut tmp = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let x = col as isize + k as isize - half as isize;
                if x >= 0 && (x as usize) < w {
                    acc += kv * src[row * w + x as usize];
                }
            }
            tmp[row * w + col] = acc;
        }
    }
    let mut dst = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let y = row as isize + k as isize - half as isize;
                if y >= 0 && (y as usize) < h {
                    acc += kv * tmp[y as usize * w + col];
                }
            }
            dst[row * w + col] = acc;
        }
    }
    dst
}

fn deinterleave(rgb: &[f64], channel: usize) -> Vec<f64> {
    rgb.iter().skip(channel).step_by(3).copied().collect()
}

/// Mean SSIM over the three channels of interleaved H×W×3 images in [0,1].
pub fn ssim_rgb(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<f64> {
    ssim_rgb_with_grad(a, b, width, height).map(|(v, _)| v)
}

/// As `ssim_rgb`, also returning d(mean SSIM)/d a, interleaved like `a`.
pub fn ssim_rgb_with_grad(
    a: &[f64],
    b: &[f64],
    width: usize,
    height: usize,
) -> Result<(f64, Vec<f64>)> {
    let n = width * height * 3;
    if a.len() != n || b.len() != n || width == 0 || height == 0 {
        return Err(Error::Shape(format!(
            "ssim expects {}x{}x3 images, got {} and {} values",
            width,
            height,
            a.len(),
            b.len()
        )));
    }
    let kernel = gauss_kernel();
    let npix = width * height;
    let upstream = 1.0 / (npix * 3) as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; n];
    for ch in 0..3 {
        let x = deinterleave(a, ch);
        let y = deinterleave(b, ch);
        let mu_x = conv_same(&x, width, height, &kernel);
        let mu_y = conv_same(&y, width, height, &kernel);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();
        let e_xx = conv_same(&xx, width, height, &kernel);
        let e_yy = conv_same(&yy, width, height, &kernel);
        let e_xy = conv_same(&xy, width, height, &kernel);

        let mut g_mu = vec![0.0; npix];
        let mut g_sxx = vec![0.0; npix];
        let mut g_sxy = vec![0.0; npix];
        for p in 0..npix {
            let (mx, my) = (mu_x[p], mu_y[p]);
            let sxx = e_xx[p] - mx * mx;
            let syy = e_yy[p] - my * my;
            let sxy = e_xy[p] - mx * my;
            let n1 = 2.0 * mx * my + SSIM_C1;
            let d1 = mx * mx + my * my + SSIM_C1;
            let n2 = 2.0 * sxy + SSIM_C2;
            let d2 = sxx + syy + SSIM_C2;
            let s = n1 * n2 / (d1 * d2);
            total += s;
            g_mu[p] = upstream * (2.0 * my * n2 / (d1 * d2) - s * 2.0 * mx / d1);
            g_sxx[p] = upstream * (-s / d2);
            g_sxy[p] = upstream * (2.0 * n1 / (d1 * d2));
        }
        // Adjoint of the windowed statistics: the kernel is symmetric, so the
        // transpose of each convolution is the convolution itself.
        let mut inner = vec![0.0; npix];
        for p in 0..npix {
            inner[p] = g_mu[p] - 2.0 * mu_x[p] * g_sxx[p] - mu_y[p] * g_sxy[p];
        }
        let back_inner = conv_same(&inner, width, height, &kernel);
        let back_sxx = conv_same(&g_sxx, width, height, &kernel);
        let back_sxy = conv_same(&g_sxy, width, height, &kernel);
        for p in 0..npix {
            grad[p * 3 + ch] = back_inner[p] + 2.0 * x[p] * back_sxx[p] + y[p] * back_sxy[p];
        }
    }
    Ok((total / (npix * 3) as f64, grad))
}

/// Mean absolute forward difference of a depth map along both axes.
pub fn tv_depth(depth: &ScalarMap) -> f64 {
    let (w, h) = (depth.width, depth.height);
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in 0..h {
        for col in 0..w {
            if col + 1 < w {
                sum += (depth.at(row, col + 1) - depth.at(row, col)).abs();
                count += 1;
            }
            if row + 1 < h {
                sum += (depth.at(row + 1, col) - depth.at(row, col)).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
