//! Camera list JSON. Schema per camera: pixel dimensions, pinhole intrinsics,
//! row-major world-to-camera rotation, translation, and a `convention` tag
//! declaring which local axis the camera looks along ("forward_+z" native,
//! "forward_-z" converted on load).

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{orthonormality_error, orthonormalize, CameraView};
use crate::error::{Error, Result};

pub const CONVENTION_FORWARD_POS_Z: &str = "forward_+z";
pub const CONVENTION_FORWARD_NEG_Z: &str = "forward_-z";

#[derive(Debug, Serialize, Deserialize)]
struct CameraRecord {
    width: u32,
    height: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    /// Row-major 3×3.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    convention: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraDocument {
    cameras: Vec<CameraRecord>,
}

/// The camera-list document as a JSON string.
pub fn cameras_json(cams: &[CameraView]) -> Result<String> {
    let doc = CameraDocument {
        cameras: cams
            .iter()
            .map(|c| CameraRecord {
                width: c.width,
                height: c.height,
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                rotation: std::array::from_fn(|r| std::array::from_fn(|col| c.rotation[(r, col)])),
                translation: [c.translation.x, c.translation.y, c.translation.z],
                convention: CONVENTION_FORWARD_POS_Z.to_string(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Usage(format!("serialize cameras: {e}")))
}

pub fn write_cameras(path: &Path, cams: &[CameraView]) -> Result<()> {
    let text = cameras_json(cams)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_cameras(path: &Path) -> Result<Vec<CameraView>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: CameraDocument =
        serde_json::from_str(&text).map_err(|e| Error::format(path, format!("{e}")))?;
    doc.cameras
        .iter()
        .enumerate()
        .map(|(i, rec)| camera_from_record(path, i, rec))
        .collect()
}

fn camera_from_record(path: &Path, index: usize, rec: &CameraRecord) -> Result<CameraView> {
    let fail = |d: String| Error::format(path, format!("camera {index}: {d}"));
    let mut rotation = Matrix3::from_fn(|r, c| rec.rotation[r][c]);
    let mut translation = Vector3::from_column_slice(&rec.translation);

    match rec.convention.as_str() {
        CONVENTION_FORWARD_POS_Z => {}
        CONVENTION_FORWARD_NEG_Z => {
            // Rotate the camera frame 180° about its x axis: y and z rows flip,
            // turning a look-along-−z camera into the native look-along-+z form.
            let flip = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
            rotation = flip * rotation;
            translation = flip * translation;
        }
        other => return Err(fail(format!("unknown convention tag {other:?}"))),
    }

    if rotation.determinant() < 0.0 {
        return Err(fail(format!(
            "rotation has determinant {:.6} (reflection)",
            rotation.determinant()
        )));
    }
    let err = orthonormality_error(&rotation);
    if err > 1e-3 {
        return Err(fail(format!("rotation orthonormality error {err:.2e} exceeds 1e-3")));
    }
    if err > 1e-9 {
        rotation = orthonormalize(&rotation)
            .ok_or_else(|| fail("rotation is not correctable to orthonormal".into()))?;
    }
    CameraView::new(
        rec.width, rec.height, rec.fx, rec.fy, rec.cx, rec.cy, rotation, translation,
    )
    .map_err(|e| fail(e.to_string()))
}
