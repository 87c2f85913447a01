//! Dense per-pixel buffers: RGBD images, scalar maps, and the full rasterizer
//! output bundle.

use crate::error::{Error, Result};

/// Row-major H×W scalar map (depth, confidence, masks-as-floats).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ScalarMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "scalar map {}x{} needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.data[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Average pooling over factor×factor blocks with edge replication, so
    /// output dimensions are the ceilings of the input dimensions / factor.
    pub fn block_mean_pool(&self, factor: usize) -> ScalarMap {
        assert!(factor > 0);
        if self.data.is_empty() {
            return ScalarMap::zeros(0, 0);
        }
        let ow = self.width.div_ceil(factor);
        let oh = self.height.div_ceil(factor);
        let mut out = ScalarMap::zeros(ow, oh);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut sum = 0.0;
                for dy in 0..factor {
                    let y = (oy * factor + dy).min(self.height - 1);
                    for dx in 0..factor {
                        let x = (ox * factor + dx).min(self.width - 1);
                        sum += self.at(y, x);
                    }
                }
                *out.at_mut(oy, ox) = sum / (factor * factor) as f64;
            }
        }
        out
    }
}

/// RGB (interleaved, row-major, values in [0,1]) plus a depth channel
/// (world units, 0 = undefined).
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdImage {
    pub width: usize,
    pub height: usize,
    /// H×W×3 interleaved.
    pub rgb: Vec<f64>,
    /// H×W.
    pub depth: Vec<f64>,
}

impl RgbdImage {
    pub fn new(width: usize, height: usize, rgb: Vec<f64>, depth: Vec<f64>) -> Result<Self> {
        if rgb.len() != width * height * 3 || depth.len() != width * height {
            return Err(Error::Shape(format!(
                "rgbd buffers do not match {width}x{height}"
            )));
        }
        let rgb = rgb.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let depth = depth.into_iter().map(|v| v.max(0.0)).collect();
        Ok(Self { width, height, rgb, depth })
    }

    pub fn constant(width: usize, height: usize, color: [f64; 3]) -> Self {
        let mut rgb = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            rgb.extend_from_slice(&color);
        }
        Self::new(width, height, rgb, vec![0.0; width * height]).expect("consistent shape")
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn depth_map(&self) -> ScalarMap {
        ScalarMap { width: self.width, height: self.height, data: self.depth.clone() }
    }
}

/// Everything the rasterizer produces for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    /// H×W×3 interleaved; includes the background contribution.
    pub rgb: Vec<f64>,
    /// Alpha-normalized expected depth; 0 where undefined.
    pub depth: Vec<f64>,
    /// Final transmittance T per pixel, in (0, 1].
    pub transmittance: Vec<f64>,
    /// Number of Gaussians whose alpha reached the contribution threshold.
    pub n_contrib: Vec<u32>,
    /// −log(T + ε) · n_contrib.
    pub confidence: Vec<f64>,
    /// Accumulated alpha mass Σ αᵢ Tᵢ, in [0, 1).
    pub accum_alpha: Vec<f64>,
}

impl RenderOutput {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            rgb: vec![0.0; n * 3],
            depth: vec![0.0; n],
            transmittance: vec![1.0; n],
            n_contrib: vec![0; n],
            confidence: vec![0.0; n],
            accum_alpha: vec![0.0; n],
        }
    }

    pub fn pixel_rgb(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Clamp to an RGBD image (colors into [0,1]).
    pub fn to_rgbd(&self) -> RgbdImage {
        RgbdImage::new(self.width, self.height, self.rgb.clone(), self.depth.clone())
            .expect("render buffers are consistent")
    }

    pub fn confidence_map(&self) -> ScalarMap {
        ScalarMap { width: self.width, height: self.height, data: self.confidence.clone() }
    }

    pub fn depth_scalar_map(&self) -> ScalarMap {
        ScalarMap { width: self.width, height: self.height, data: self.depth.clone() }
    }
}
