//! Refiner plug-ins: novel-view renders plus confidence go in, corrected
//! RGBD images come back. Ships an identity passthrough, an oracle that
//! re-renders a reference scene, and a subprocess protocol speaking files
//! in a per-request directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::image::{RenderOutput, RgbdImage, ScalarMap};
use crate::io;
use crate::render::{confidence_map, rasterize, RasterConfig};
use crate::scene::GaussianCloud;

/// Per-view latent width expected by learned refiners.
pub const CONTEXT_DIM: usize = 768;
/// Camera embedding width per view.
pub const GEO_DIM: usize = 78;
/// Downsampling factor between the confidence map and its latent copy.
pub const CONFIDENCE_POOL: usize = 8;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

/// Everything a refiner may condition on for one novel view.
pub struct RefinerRequest<'a> {
    pub camera: &'a CameraView,
    pub render: &'a RenderOutput,
    pub confidence: &'a ScalarMap,
    pub confidence_latent: &'a ScalarMap,
    /// Row-major m×768 context latents for the input views (zeros when no
    /// upstream encoder ran).
    pub context: &'a [f32],
    /// Row-major (m+1)×78 ray embeddings: inputs then the target view.
    pub geo: &'a [f32],
    pub m: usize,
    pub seed: u64,
}

impl RefinerRequest<'_> {
    fn validate(&self) -> Result<()> {
        let (w, h) = (self.render.width, self.render.height);
        if self.confidence.width != w || self.confidence.height != h {
            return Err(Error::Shape(format!(
                "confidence {}x{} does not match render {}x{}",
                self.confidence.width, self.confidence.height, w, h
            )));
        }
        let (lw, lh) = (w.div_ceil(CONFIDENCE_POOL), h.div_ceil(CONFIDENCE_POOL));
        if self.confidence_latent.width != lw || self.confidence_latent.height != lh {
            return Err(Error::Shape(format!(
                "confidence latent {}x{} should be {}x{}",
                self.confidence_latent.width, self.confidence_latent.height, lw, lh
            )));
        }
        if self.context.len() != self.m * CONTEXT_DIM {
            return Err(Error::Shape(format!(
                "context holds {} floats, expected {}x{}",
                self.context.len(),
                self.m,
                CONTEXT_DIM
            )));
        }
        if self.geo.len() != (self.m + 1) * GEO_DIM {
            return Err(Error::Shape(format!(
                "geo holds {} floats, expected {}x{}",
                self.geo.len(),
                self.m + 1,
                GEO_DIM
            )));
        }
        Ok(())
    }
}

/// A corrected view; dimensions always match the request render.
#[derive(Debug, Clone)]
pub struct RefinerResponse {
    pub image: RgbdImage,
}

pub trait Refiner {
    fn refine(&mut self, request: &RefinerRequest) -> Result<RefinerResponse>;
    fn name(&self) -> &str;
}

/// Round-trip color through 8-bit and depth through f32, the precision a
/// response that traveled through PNG/PFM files would have. In-process
/// refiners apply it so their output is indistinguishable from the
/// subprocess path.
pub fn response_precision(rgb: &[f64], depth: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let q_rgb = rgb.iter().map(|&v| io::png::quantize_unit(v)).collect();
    let q_depth = depth.iter().map(|&v| v as f32 as f64).collect();
    (q_rgb, q_depth)
}

/// Returns the rendered view unchanged (modulo response precision).
#[derive(Debug, Default)]
pub struct IdentityRefiner;

impl Refiner for IdentityRefiner {
    fn refine(&mut self, request: &RefinerRequest) -> Result<RefinerResponse> {
        request.validate()?;
        let (rgb, depth) = response_precision(&request.render.rgb, &request.render.depth);
        let image = RgbdImage::new(request.render.width, request.render.height, rgb, depth)?;
        Ok(RefinerResponse { image })
    }

    fn name(&self) -> &str {
        "identity"
    }
}

/// Renders a reference scene at the requested pose — the ceiling on what any
/// real refiner could return.
pub struct OracleRefiner {
    reference: GaussianCloud,
    raster: RasterConfig,
}

impl OracleRefiner {
    pub fn new(reference: GaussianCloud, raster: RasterConfig) -> Self {
        Self { reference, raster }
    }

    pub fn from_ply(path: &Path, raster: RasterConfig) -> Result<Self> {
        Ok(Self::new(io::read_ply(path)?, raster))
    }
}

impl Refiner for OracleRefiner {
    fn refine(&mut self, request: &RefinerRequest) -> Result<RefinerResponse> {
        request.validate()?;
        let mut cam = request.camera.clone();
        cam.width = request.render.width as u32;
        cam.height = request.render.height as u32;
        let out = rasterize(&self.reference, &cam, &self.raster);
        let (rgb, depth) = response_precision(&out.rgb, &out.depth);
        let image = RgbdImage::new(out.width, out.height, rgb, depth)?;
        Ok(RefinerResponse { image })
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RequestMeta {
    width: usize,
    height: usize,
    m: usize,
    seed: u64,
}

/// File names spoken by the subprocess protocol, relative to the request
/// directory.
pub mod protocol {
    pub const RENDER: &str = "render.png";
    pub const DEPTH: &str = "depth.pfm";
    pub const CONFIDENCE: &str = "conf.pfm";
    pub const CONFIDENCE_LATENT: &str = "conf_latent.pfm";
    pub const CONTEXT: &str = "context.f32";
    pub const GEO: &str = "geo.f32";
    pub const META: &str = "meta.json";
    pub const CAMERA: &str = "camera.json";
    pub const REFINED: &str = "refined.png";
    pub const REFINED_DEPTH: &str = "refined_depth.pfm";
}

/// Materialize one request as the protocol file set inside `dir`.
pub fn write_request(dir: &Path, request: &RefinerRequest) -> Result<()> {
    request.validate()?;
    let (w, h) = (request.render.width, request.render.height);
    io::write_rgb_png(&dir.join(protocol::RENDER), w, h, &request.render.rgb)?;
    io::write_pfm(&dir.join(protocol::DEPTH), &request.render.depth_scalar_map())?;
    io::write_pfm(&dir.join(protocol::CONFIDENCE), request.confidence)?;
    io::write_pfm(&dir.join(protocol::CONFIDENCE_LATENT), request.confidence_latent)?;
    io::write_f32(&dir.join(protocol::CONTEXT), request.context)?;
    io::write_f32(&dir.join(protocol::GEO), request.geo)?;
    io::write_cameras(&dir.join(protocol::CAMERA), std::slice::from_ref(request.camera))?;
    let meta = RequestMeta { width: w, height: h, m: request.m, seed: request.seed };
    let meta_path = dir.join(protocol::META);
    let text = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::format(&meta_path, format!("serialize: {e}")))?;
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
}

/// Read a response from `dir`, insisting its dimensions match the request.
pub fn read_response(dir: &Path, width: usize, height: usize) -> Result<RefinerResponse> {
    let (w, h, rgb) = io::read_rgb_png(&dir.join(protocol::REFINED))?;
    if (w, h) != (width, height) {
        return Err(Error::Refiner(format!(
            "response image is {w}x{h}, request was {width}x{height}"
        )));
    }
    let depth = io::read_pfm(&dir.join(protocol::REFINED_DEPTH))?;
    if (depth.width, depth.height) != (width, height) {
        return Err(Error::Refiner(format!(
            "response depth is {}x{}, request was {width}x{height}",
            depth.width, depth.height
        )));
    }
    let image = RgbdImage::new(width, height, rgb, depth.data)?;
    Ok(RefinerResponse { image })
}

/// Runs an external command per request: protocol files are written to a
/// fresh directory, the directory path is appended as the final argument,
/// and the response is read back on clean exit. Request directories are
/// removed on success and kept for inspection on failure.
pub struct SubprocessRefiner {
    command: Vec<String>,
    workdir: PathBuf,
    pub timeout: Duration,
    pub keep_dirs: bool,
    counter: u64,
}

impl SubprocessRefiner {
    pub fn new(command_line: &str, workdir: impl Into<PathBuf>) -> Result<Self> {
        let command: Vec<String> =
            command_line.split_whitespace().map(str::to_string).collect();
        if command.is_empty() {
            return Err(Error::Usage("refiner command is empty".into()));
        }
        Ok(Self {
            command,
            workdir: workdir.into(),
            timeout: DEFAULT_TIMEOUT,
            keep_dirs: false,
            counter: 0,
        })
    }

    fn fresh_dir(&mut self) -> Result<PathBuf> {
        fs::create_dir_all(&self.workdir).map_err(|e| Error::io(&self.workdir, e))?;
        loop {
            self.counter += 1;
            let dir = self.workdir.join(format!("request-{:06}", self.counter));
            match fs::create_dir(&dir) {
                Ok(()) => return Ok(dir),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(Error::io(dir, e)),
            }
        }
    }

    fn run(&self, dir: &Path) -> Result<()> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(dir)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .spawn()
            .map_err(|e| Error::Refiner(format!("spawn {}: {e}", self.command[0])))?;
        let started = Instant::now();
        loop {
            match child.try_wait() {
                Ok(Some(status)) => {
                    if status.success() {
                        return Ok(());
                    }
                    return Err(Error::Refiner(format!(
                        "{} exited with {status} on {}",
                        self.command[0],
                        dir.display()
                    )));
                }
                Ok(None) => {
                    if started.elapsed() > self.timeout {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(Error::Refiner(format!(
                            "{} timed out after {:?} on {}",
                            self.command[0],
                            self.timeout,
                            dir.display()
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => {
                    return Err(Error::Refiner(format!("wait on {}: {e}", self.command[0])))
                }
            }
        }
    }
}

impl Refiner for SubprocessRefiner {
    fn refine(&mut self, request: &RefinerRequest) -> Result<RefinerResponse> {
        let dir = self.fresh_dir()?;
        let outcome = write_request(&dir, request)
            .and_then(|()| self.run(&dir))
            .and_then(|()| read_response(&dir, request.render.width, request.render.height));
        if outcome.is_ok() && !self.keep_dirs {
            let _ = fs::remove_dir_all(&dir);
        }
        outcome
    }

    fn name(&self) -> &str {
        "subprocess"
    }
}

/// Parse a refiner selector: `identity`, `oracle:SCENE.ply`, or `exec:CMD`
/// (command split on whitespace; the request directory is appended as the
/// final argument).
pub fn parse_refiner_spec(
    spec: &str,
    raster: &RasterConfig,
    workdir: &Path,
) -> Result<Box<dyn Refiner>> {
    if spec == "identity" {
        return Ok(Box::new(IdentityRefiner));
    }
    if let Some(path) = spec.strip_prefix("oracle:") {
        return Ok(Box::new(OracleRefiner::from_ply(Path::new(path), raster.clone())?));
    }
    if let Some(cmd) = spec.strip_prefix("exec:") {
        return Ok(Box::new(SubprocessRefiner::new(cmd, workdir)?));
    }
    Err(Error::Usage(format!(
        "unknown refiner '{spec}' (expected identity, oracle:FILE.ply, or exec:COMMAND)"
    )))
}

/// Render a view and bundle it with its confidence maps; the building block
/// callers use to assemble requests.
pub struct RequestImages {
    pub render: RenderOutput,
    pub confidence: ScalarMap,
    pub confidence_latent: ScalarMap,
}

pub fn render_for_request(
    cloud: &GaussianCloud,
    cam: &CameraView,
    cfg: &RasterConfig,
) -> RequestImages {
    let mut render = rasterize(cloud, cam, cfg);
    let confidence = confidence_map(&mut render, cfg);
    let confidence_latent = confidence.block_mean_pool(CONFIDENCE_POOL);
    RequestImages { render, confidence, confidence_latent }
}
