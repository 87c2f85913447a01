//! C ABI over the toolkit: opaque scene handles, plain-struct cameras,
//! status codes mirroring the CLI exit contract, and caller-allocated
//! render buffers. `include/splatkit.h` is generated from this file.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use splatkit::camera::{orthonormality_error, orthonormalize, CameraView};
use splatkit::error::Error;
use splatkit::render::{confidence_map, rasterize, RasterConfig};
use splatkit::scene::GaussianCloud;
use splatkit::synth::random_cloud;

/// Outcome of every fallible call. Nonzero values match the CLI exit codes
/// where one exists.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkStatus {
    SkOk = 0,
    /// A required pointer argument was null.
    SkNullArg = 1,
    /// Bad arguments or violated preconditions.
    SkUsage = 2,
    /// File or refiner I/O failed.
    SkIo = 3,
    /// Non-finite values or degenerate geometry.
    SkNumerical = 4,
}

/// Opaque scene handle; create with `sk_scene_load` or `sk_scene_random`,
/// release with `sk_scene_free`.
pub struct SkScene {
    cloud: GaussianCloud,
}

/// Pinhole camera, world-to-camera. `rotation` is row-major.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SkCamera {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let cstring = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn fail(err: &Error) -> SkStatus {
    set_error(err.to_string());
    match err.exit_code() {
        2 => SkStatus::SkUsage,
        3 => SkStatus::SkIo,
        _ => SkStatus::SkNumerical,
    }
}

fn guarded(body: impl FnOnce() -> SkStatus) -> SkStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            SkStatus::SkNumerical
        }
    }
}

/// Message for the most recent failure on this thread, or null when no call
/// has failed yet. The pointer stays valid until the next failing call on
/// the same thread.
#[no_mangle]
pub extern "C" fn sk_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow().as_ref().map_or(std::ptr::null(), |msg| msg.as_ptr())
    })
}

/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn sk_scene_load(
    path: *const c_char,
    out: *mut *mut SkScene,
) -> SkStatus {
    if path.is_null() || out.is_null() {
        set_error("null argument".into());
        return SkStatus::SkNullArg;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8".into());
            return SkStatus::SkUsage;
        }
    };
    guarded(|| match splatkit::io::read_ply(Path::new(path)) {
        Ok(cloud) => {
            *out = Box::into_raw(Box::new(SkScene { cloud }));
            SkStatus::SkOk
        }
        Err(e) => fail(&e),
    })
}

/// # Safety
/// `scene` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sk_scene_save(
    scene: *const SkScene,
    path: *const c_char,
) -> SkStatus {
    if scene.is_null() || path.is_null() {
        set_error("null argument".into());
        return SkStatus::SkNullArg;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8".into());
            return SkStatus::SkUsage;
        }
    };
    let scene = &*scene;
    guarded(|| match splatkit::io::write_ply(Path::new(path), &scene.cloud) {
        Ok(()) => SkStatus::SkOk,
        Err(e) => fail(&e),
    })
}

/// Synthesize a random scene (deterministic per seed); mainly for smoke
/// tests of embedding code.
///
/// # Safety
/// `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn sk_scene_random(
    splats: usize,
    sh_degree: u32,
    seed: u64,
    out: *mut *mut SkScene,
) -> SkStatus {
    if out.is_null() {
        set_error("null argument".into());
        return SkStatus::SkNullArg;
    }
    if sh_degree != 0 && sh_degree != 3 {
        set_error(format!("basis degree {sh_degree} unsupported (0 or 3)"));
        return SkStatus::SkUsage;
    }
    guarded(|| {
        let cloud = random_cloud(splats, sh_degree as u8, seed);
        *out = Box::into_raw(Box::new(SkScene { cloud }));
        SkStatus::SkOk
    })
}

/// Release a handle; null is a no-op.
///
/// # Safety
/// `scene` must be a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn sk_scene_free(scene: *mut SkScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of splats; 0 for null.
///
/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sk_scene_len(scene: *const SkScene) -> usize {
    if scene.is_null() {
        0
    } else {
        (*scene).cloud.len()
    }
}

/// Basis degree (0 or 3); -1 for null.
///
/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sk_scene_sh_degree(scene: *const SkScene) -> i32 {
    if scene.is_null() {
        -1
    } else {
        (*scene).cloud.sh_degree() as i32
    }
}

fn camera_view(cam: &SkCamera) -> Result<CameraView, Error> {
    if cam.width == 0 || cam.height == 0 {
        return Err(Error::Usage("camera dimensions must be positive".into()));
    }
    let rotation = Matrix3::from_row_slice(&cam.rotation);
    let err = orthonormality_error(&rotation);
    if err > 1e-3 {
        return Err(Error::Usage(format!(
            "rotation is {err:.2e} from orthonormal (limit 1e-3)"
        )));
    }
    let rotation = orthonormalize(&rotation)
        .ok_or_else(|| Error::Usage("rotation matrix is singular".into()))?;
    Ok(CameraView {
        width: cam.width,
        height: cam.height,
        fx: cam.fx,
        fy: cam.fy,
        cx: cam.cx,
        cy: cam.cy,
        rotation,
        translation: Vector3::new(
            cam.translation[0],
            cam.translation[1],
            cam.translation[2],
        ),
    })
}

/// Render a scene into caller-allocated buffers. `rgb` holds
/// width·height·3 floats (interleaved, row-major). `depth`, `transmittance`,
/// and `confidence` each hold width·height floats and may be null when not
/// wanted.
///
/// # Safety
/// `scene` and `cam` must be live; every non-null buffer must hold the
/// stated number of floats.
#[no_mangle]
pub unsafe extern "C" fn sk_render(
    scene: *const SkScene,
    cam: *const SkCamera,
    rgb: *mut f32,
    depth: *mut f32,
    transmittance: *mut f32,
    confidence: *mut f32,
) -> SkStatus {
    if scene.is_null() || cam.is_null() || rgb.is_null() {
        set_error("null argument".into());
        return SkStatus::SkNullArg;
    }
    let scene = &*scene;
    let cam = &*cam;
    let view = match camera_view(cam) {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    let npix = cam.width as usize * cam.height as usize;
    let rgb = std::slice::from_raw_parts_mut(rgb, npix * 3);
    let depth = (!depth.is_null()).then(|| std::slice::from_raw_parts_mut(depth, npix));
    let transmittance =
        (!transmittance.is_null()).then(|| std::slice::from_raw_parts_mut(transmittance, npix));
    let confidence =
        (!confidence.is_null()).then(|| std::slice::from_raw_parts_mut(confidence, npix));
    guarded(move || {
        let cfg = RasterConfig::default();
        let mut out = rasterize(&scene.cloud, &view, &cfg);
        confidence_map(&mut out, &cfg);
        for (dst, src) in rgb.iter_mut().zip(&out.rgb) {
            *dst = *src as f32;
        }
        if let Some(buf) = depth {
            for (dst, src) in buf.iter_mut().zip(&out.depth) {
                *dst = *src as f32;
            }
        }
        if let Some(buf) = transmittance {
            for (dst, src) in buf.iter_mut().zip(&out.transmittance) {
                *dst = *src as f32;
            }
        }
        if let Some(buf) = confidence {
            for (dst, src) in buf.iter_mut().zip(&out.confidence) {
                *dst = *src as f32;
            }
        }
        SkStatus::SkOk
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn c_path(dir: &tempfile::TempDir, name: &str) -> CString {
        CString::new(dir.path().join(name).to_str().unwrap()).unwrap()
    }

    #[test]
    fn load_save_roundtrip_through_the_c_surface() {
        let dir = tempfile::tempdir().unwrap();
        let mut scene: *mut SkScene = std::ptr::null_mut();
        unsafe {
            assert_eq!(sk_scene_random(20, 3, 7, &mut scene), SkStatus::SkOk);
            assert_eq!(sk_scene_len(scene), 20);
            assert_eq!(sk_scene_sh_degree(scene), 3);

            let path = c_path(&dir, "scene.ply");
            assert_eq!(sk_scene_save(scene, path.as_ptr()), SkStatus::SkOk);

            let mut reloaded: *mut SkScene = std::ptr::null_mut();
            assert_eq!(sk_scene_load(path.as_ptr(), &mut reloaded), SkStatus::SkOk);
            assert_eq!(sk_scene_len(reloaded), 20);
            assert_eq!(sk_scene_sh_degree(reloaded), 3);
            sk_scene_free(scene);
            sk_scene_free(reloaded);
        }
    }

    #[test]
    fn missing_file_reports_io_and_a_message() {
        let mut scene: *mut SkScene = std::ptr::null_mut();
        let path = CString::new("/no/such/scene.ply").unwrap();
        unsafe {
            assert_eq!(sk_scene_load(path.as_ptr(), &mut scene), SkStatus::SkIo);
            let msg = CStr::from_ptr(sk_last_error()).to_string_lossy().into_owned();
            assert!(msg.contains("scene.ply"), "{msg}");
        }
    }

    #[test]
    fn null_arguments_are_rejected_not_dereferenced() {
        unsafe {
            assert_eq!(
                sk_scene_load(std::ptr::null(), std::ptr::null_mut()),
                SkStatus::SkNullArg
            );
            assert_eq!(sk_scene_len(std::ptr::null()), 0);
            assert_eq!(sk_scene_sh_degree(std::ptr::null()), -1);
            sk_scene_free(std::ptr::null_mut());
            let cam = SkCamera {
                width: 4,
                height: 4,
                fx: 4.0,
                fy: 4.0,
                cx: 2.0,
                cy: 2.0,
                rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                translation: [0.0; 3],
            };
            let mut rgb = vec![0f32; 4 * 4 * 3];
            assert_eq!(
                sk_render(
                    std::ptr::null(),
                    &cam,
                    rgb.as_mut_ptr(),
                    std::ptr::null_mut(),
                    std::ptr::null_mut(),
                    std::ptr::null_mut()
                ),
                SkStatus::SkNullArg
            );
        }
    }

    #[test]
    fn render_fills_buffers_and_respects_transmittance_identity() {
        let mut scene: *mut SkScene = std::ptr::null_mut();
        unsafe {
            assert_eq!(sk_scene_random(15, 0, 3, &mut scene), SkStatus::SkOk);
            let cam = SkCamera {
                width: 16,
                height: 12,
                fx: 14.0,
                fy: 14.0,
                cx: 8.0,
                cy: 6.0,
                rotation: [1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0],
                translation: [0.0, 0.0, 3.0],
            };
            let npix = 16 * 12;
            let mut rgb = vec![-1f32; npix * 3];
            let mut depth = vec![-1f32; npix];
            let mut trans = vec![-1f32; npix];
            let mut conf = vec![-1f32; npix];
            assert_eq!(
                sk_render(
                    scene,
                    &cam,
                    rgb.as_mut_ptr(),
                    depth.as_mut_ptr(),
                    trans.as_mut_ptr(),
                    conf.as_mut_ptr()
                ),
                SkStatus::SkOk
            );
            assert!(rgb.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(trans.iter().all(|&t| (0.0..=1.0).contains(&t)));
            assert!(depth.iter().all(|&d| d >= 0.0));
            assert!(conf.iter().all(|&c| c >= 0.0));
            sk_scene_free(scene);
        }
    }

    #[test]
    fn skewed_rotation_is_a_usage_error() {
        let mut scene: *mut SkScene = std::ptr::null_mut();
        unsafe {
            assert_eq!(sk_scene_random(5, 0, 1, &mut scene), SkStatus::SkOk);
            let cam = SkCamera {
                width: 8,
                height: 8,
                fx: 8.0,
                fy: 8.0,
                cx: 4.0,
                cy: 4.0,
                rotation: [1.0, 0.9, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                translation: [0.0, 0.0, 2.0],
            };
            let mut rgb = vec![0f32; 8 * 8 * 3];
            assert_eq!(
                sk_render(
                    scene,
                    &cam,
                    rgb.as_mut_ptr(),
                    std::ptr::null_mut(),
                    std::ptr::null_mut(),
                    std::ptr::null_mut()
                ),
                SkStatus::SkUsage
            );
            sk_scene_free(scene);
        }
    }
}
