//! Raw `.f32` tensors: row-major little-endian float32, no header.
//! Shapes travel separately (in `meta.json` or the call site).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn write_f32(path: &Path, data: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f32(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(
            path,
            format!("length {} is not a multiple of 4", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Read a tensor whose element count is known from its declared shape.
pub fn read_f32_expected(path: &Path, expected_len: usize) -> Result<Vec<f32>> {
    let data = read_f32(path)?;
    if data.len() != expected_len {
        return Err(Error::Shape(format!(
            "{}: holds {} floats, expected {expected_len}",
            path.display(),
            data.len()
        )));
    }
    Ok(data)
}
