//! Training losses with pixel-space gradients: the scheduled photometric
//! loss on refined views (L1 + masked depth correlation) and the L1+SSIM
//! objective used on observed views.

use crate::error::{Error, Result};
use crate::image::{RenderOutput, RgbdImage};
use crate::metrics::{pcc_loss_with_grad, ssim_rgb_with_grad};

/// Pixels with at least this much accumulated alpha carry a defined depth.
pub const DEPTH_MASK_MIN_ALPHA: f64 = 1e-6;

/// Linearly interpolated weight over an iteration horizon, clamped at the end
/// value afterwards.
#[derive(Debug, Clone, Copy)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u32,
}

impl LinearSchedule {
    pub fn new(start: f64, end: f64, horizon: u32) -> Result<Self> {
        if start < 0.0 || end < 0.0 || !start.is_finite() || !end.is_finite() {
            return Err(Error::Usage("schedule weights must be finite and ≥ 0".into()));
        }
        if horizon == 0 {
            return Err(Error::Usage("schedule horizon must be positive".into()));
        }
        Ok(Self { start, end, horizon })
    }

    pub fn at(&self, iter: u32) -> f64 {
        if iter >= self.horizon {
            return self.end;
        }
        let t = iter as f64 / self.horizon as f64;
        self.start + (self.end - self.start) * t
    }
}

/// Weight schedules for the refined-view loss.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub w_sample: LinearSchedule,
    pub w_d: LinearSchedule,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_sample: LinearSchedule { start: 1.0, end: 0.1, horizon: 10_000 },
            w_d: LinearSchedule { start: 1.0, end: 0.01, horizon: 10_000 },
        }
    }
}

/// Gradients of a scalar loss with respect to the rendered image.
#[derive(Debug, Clone)]
pub struct PixelGradients {
    /// d loss / d rgb, interleaved H×W×3.
    pub d_rgb: Vec<f64>,
    /// d loss / d depth, H×W.
    pub d_depth: Vec<f64>,
}

impl PixelGradients {
    fn zeros(width: usize, height: usize) -> Self {
        Self { d_rgb: vec![0.0; width * height * 3], d_depth: vec![0.0; width * height] }
    }
}

fn check_shapes(render: &RenderOutput, target_w: usize, target_h: usize) -> Result<()> {
    if render.width != target_w || render.height != target_h {
        return Err(Error::Shape(format!(
            "render is {}x{} but target is {}x{}",
            render.width, render.height, target_w, target_h
        )));
    }
    Ok(())
}

/// Subgradient of |x| that is 0 at 0 (f64::signum(0.0) is 1).
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute error plus its gradient scaled by `weight`.
fn l1_with_grad(a: &[f64], b: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
    let n = a.len() as f64;
    let mut sum = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        sum += d.abs();
        grad[i] += weight * sign(d) / n;
    }
    sum / n
}

/// Loss on a refined novel view: scheduled L1 on color plus scheduled
/// correlation loss on depth, masked to pixels with defined rendered depth.
/// Depth falls back to masked L1 when the correlation is degenerate.
pub fn sample_loss(
    render: &RenderOutput,
    refined: &RgbdImage,
    weights: &LossWeights,
    iter: u32,
) -> Result<(f64, PixelGradients)> {
    check_shapes(render, refined.width, refined.height)?;
    let w_rgb = weights.w_sample.at(iter);
    let w_d = weights.w_d.at(iter);
    let mut grads = PixelGradients::zeros(render.width, render.height);

    let l1 = l1_with_grad(&render.rgb, &refined.rgb, w_rgb, &mut grads.d_rgb);
    let mut total = w_rgb * l1;

    // Depth 0 is the undefined sentinel on both sides; correlating it as
    // real geometry would supervise against nothing.
    let mask: Vec<bool> = render
        .accum_alpha
        .iter()
        .zip(&refined.depth)
        .map(|(&a, &d)| a > DEPTH_MASK_MIN_ALPHA && d > 0.0)
        .collect();
    match pcc_loss_with_grad(&render.depth, &refined.depth, &mask) {
        Ok((value, grad)) => {
            total += w_d * value;
            for (g, v) in grads.d_depth.iter_mut().zip(&grad) {
                *g += w_d * v;
            }
        }
        Err(_) => {
            let count = mask.iter().filter(|&&m| m).count();
            if count > 0 {
                let mut sum = 0.0;
                for (i, &m) in mask.iter().enumerate() {
                    if m {
                        let d = render.depth[i] - refined.depth[i];
                        sum += d.abs();
                        grads.d_depth[i] += w_d * sign(d) / count as f64;
                    }
                }
                total += w_d * sum / count as f64;
            }
        }
    }
    Ok((total, grads))
}

/// Fraction of the observed-view objective carried by the SSIM term.
pub const SSIM_LAMBDA: f64 = 0.2;

/// Observed-view objective: 0.8·L1 + 0.2·(1 − SSIM) on color.
pub fn gaussian_loss(render: &RenderOutput, target: &RgbdImage) -> Result<(f64, PixelGradients)> {
    check_shapes(render, target.width, target.height)?;
    let mut grads = PixelGradients::zeros(render.width, render.height);
    let l1 = l1_with_grad(&render.rgb, &target.rgb, 1.0 - SSIM_LAMBDA, &mut grads.d_rgb);
    let (ssim, ssim_grad) =
        ssim_rgb_with_grad(&render.rgb, &target.rgb, render.width, render.height)?;
    for (g, s) in grads.d_rgb.iter_mut().zip(&ssim_grad) {
        *g -= SSIM_LAMBDA * s;
    }
    Ok(((1.0 - SSIM_LAMBDA) * l1 + SSIM_LAMBDA * (1.0 - ssim), grads))
}

/// Plain L1 on color, the objective for test-time pose alignment.
pub fn photometric_l1(render: &RenderOutput, target: &RgbdImage) -> Result<(f64, PixelGradients)> {
    check_shapes(render, target.width, target.height)?;
    let mut grads = PixelGradients::zeros(render.width, render.height);
    let value = l1_with_grad(&render.rgb, &target.rgb, 1.0, &mut grads.d_rgb);
    Ok((value, grads))
}
