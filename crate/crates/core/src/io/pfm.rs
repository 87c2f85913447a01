//! Grayscale PFM: lossless float32 container for depth and confidence maps.
//!
//! Layout written here: `Pf\n{width} {height}\n-1.0\n` followed by
//! width×height little-endian float32 samples in bottom-up row order.
//! A 1×1 map is exactly 12 header bytes + 4 payload bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ScalarMap;

pub fn write_pfm(path: &Path, map: &ScalarMap) -> Result<()> {
    if map.width == 0 || map.height == 0 {
        return Err(Error::Shape("cannot write empty PFM".into()));
    }
    if map.data.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical(format!("NaN in PFM payload for {}", path.display())));
    }
    let mut bytes = format!("Pf\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    bytes.reserve(map.width * map.height * 4);
    // PFM stores the bottom image row first.
    for row in (0..map.height).rev() {
        for col in 0..map.width {
            bytes.extend_from_slice(&(map.at(row, col) as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<ScalarMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |detail: String| Error::format(path, detail);

    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, format!("truncated header at offset {start}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::format(path, format!("non-ascii header at offset {start}")))?;
        // Consume the single whitespace byte terminating the token.
        pos += 1;
        Ok(text.to_owned())
    };

    let magic = token(&bytes)?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(fail("color PFM (magic \"PF\") not supported, need grayscale \"Pf\"".into())),
        other => return Err(fail(format!("bad magic {other:?}, expected \"Pf\""))),
    }
    let width: usize = token(&bytes)?
        .parse()
        .map_err(|_| fail("invalid width".into()))?;
    let height: usize = token(&bytes)?
        .parse()
        .map_err(|_| fail("invalid height".into()))?;
    let scale: f64 = token(&bytes)?
        .parse()
        .map_err(|_| fail("invalid scale".into()))?;
    if scale >= 0.0 {
        return Err(fail(format!("big-endian PFM (scale {scale}) not supported")));
    }
    if width == 0 || height == 0 {
        return Err(fail(format!("degenerate dimensions {width}x{height}")));
    }

    let payload = &bytes[pos..];
    let expect = width * height * 4;
    if payload.len() != expect {
        return Err(fail(format!(
            "payload is {} bytes at offset {pos}, expected {expect}",
            payload.len()
        )));
    }
    let mut data = vec![0.0f64; width * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        let row = height - 1 - i / width;
        let col = i % width;
        data[row * width + col] = v;
    }
    ScalarMap::from_data(width, height, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tmp(name: &str) -> tempfile::TempDir {
        tempfile::Builder::new().prefix(name).tempdir().unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tmp("pfm");
        let path = dir.path().join("m.pfm");
        let mut rng = crate::rng::stream(11, "pfm-test");
        let data: Vec<f64> = (0..7 * 5)
            .map(|_| (rng.random::<f32>() * 100.0 - 50.0) as f64)
            .collect();
        let map = ScalarMap::from_data(7, 5, data).unwrap();
        write_pfm(&path, &map).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(back.width, 7);
        assert_eq!(back.height, 5);
        for (a, b) in map.data.iter().zip(&back.data) {
            assert_eq!((*a as f32).to_bits(), (*b as f32).to_bits());
        }
        // Re-writing the read map must reproduce the file byte for byte.
        let path2 = dir.path().join("m2.pfm");
        write_pfm(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn one_by_one_layout_is_twelve_plus_four_bytes() {
        let dir = tmp("pfm1x1");
        let path = dir.path().join("one.pfm");
        write_pfm(&path, &ScalarMap::from_data(1, 1, vec![0.25]).unwrap()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..12], b"Pf\n1 1\n-1.0\n");
        assert_eq!(bytes.len(), 16);
        assert_eq!(read_pfm(&path).unwrap().data, vec![0.25]);
    }

    #[test]
    fn color_magic_is_rejected() {
        let dir = tmp("pfmcolor");
        let path = dir.path().join("c.pfm");
        std::fs::write(&path, b"PF\n1 1\n-1.0\n\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
        let err = read_pfm(&path).unwrap_err();
        assert!(err.to_string().contains("grayscale"), "{err}");
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let dir = tmp("pfmtrunc");
        let path = dir.path().join("t.pfm");
        std::fs::write(&path, b"Pf\n2 2\n-1.0\n\0\0\0\0").unwrap();
        let err = read_pfm(&path).unwrap_err();
        assert!(err.to_string().contains("expected 16"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn nan_payload_is_rejected_on_write() {
        let dir = tmp("pfmnan");
        let map = ScalarMap::from_data(1, 1, vec![f64::NAN]).unwrap();
        assert!(write_pfm(&dir.path().join("n.pfm"), &map).is_err());
    }

    #[test]
    fn bottom_up_row_order() {
        let dir = tmp("pfmrows");
        let path = dir.path().join("r.pfm");
        // 1×2 map: top row 1.0, bottom row 2.0.
        let map = ScalarMap::from_data(1, 2, vec![1.0, 2.0]).unwrap();
        write_pfm(&path, &map).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let first = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
        assert_eq!(first, 2.0, "bottom row must be stored first");
    }
}
