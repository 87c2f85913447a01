//! 8-bit RGB PNG for rendered and refined color images.

use std::path::Path;

use image::{ImageBuffer, Rgb};

use crate::error::{Error, Result};

/// Quantize one [0,1] channel value to 8 bits, rounding to nearest.
pub fn quantize_channel(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Snap a [0,1] value to the nearest 8-bit representable level.
pub fn quantize_unit(v: f64) -> f64 {
    quantize_channel(v) as f64 / 255.0
}

pub fn write_rgb_png(path: &Path, width: usize, height: usize, rgb: &[f64]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::Shape(format!(
            "rgb buffer does not match {width}x{height} for {}",
            path.display()
        )));
    }
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_fn(width as u32, height as u32, |x, y| {
        let i = (y as usize * width + x as usize) * 3;
        Rgb([
            quantize_channel(rgb[i]),
            quantize_channel(rgb[i + 1]),
            quantize_channel(rgb[i + 2]),
        ])
    });
    buf.save(path)
        .map_err(|e| Error::format(path, format!("png encode: {e}")))
}

/// Load as H×W×3 floats in [0,1].
pub fn read_rgb_png(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::open(path)
        .map_err(|e| Error::format(path, format!("png decode: {e}")))?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut rgb = Vec::with_capacity(w * h * 3);
    for px in img.pixels() {
        rgb.extend(px.0.iter().map(|&c| c as f64 / 255.0));
    }
    Ok((w, h, rgb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn round_trip_preserves_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut rng = crate::rng::stream(9, "png-test");
        let rgb: Vec<f64> = (0..6 * 4 * 3).map(|_| rng.random::<f64>()).collect();
        write_rgb_png(&path, 6, 4, &rgb).unwrap();
        let (w, h, back) = read_rgb_png(&path).unwrap();
        assert_eq!((w, h), (6, 4));
        for (a, b) in rgb.iter().zip(&back) {
            assert_eq!(quantize_channel(*a), quantize_channel(*b));
            assert!((quantize_unit(*a) - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quantization_rounds_to_nearest() {
        assert_eq!(quantize_channel(0.0), 0);
        assert_eq!(quantize_channel(1.0), 255);
        assert_eq!(quantize_channel(0.5), 128);
        assert_eq!(quantize_channel(1.9), 255);
        assert_eq!(quantize_channel(-0.3), 0);
    }
}
