//! Synthetic training-pair generation: a dense scene renders the clean view,
//! its sparse counterpart renders the artifact view plus confidence, and the
//! pair ships with the conditioning tensors a learned refiner consumes.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{rig_extent, CameraView};
use crate::embed::embedding_tensor;
use crate::error::{Error, Result};
use crate::image::{RenderOutput, RgbdImage, ScalarMap};
use crate::io;
use crate::refine::{self, RefinerRequest, CONFIDENCE_POOL, CONTEXT_DIM};
use crate::render::RasterConfig;
use crate::rng::stream;
use crate::scene::GaussianCloud;

/// Source-view counts with published sparse-fit recipes; others work but
/// warn.
pub const SUPPORTED_M: [usize; 4] = [3, 6, 9, 18];

/// How each target camera was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    HeldOut,
    Interpolated,
    Perturbed,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::HeldOut => "held_out",
            TargetKind::Interpolated => "interpolated",
            TargetKind::Perturbed => "perturbed",
        }
    }
}

/// One clean/artifact pair with its conditioning tensors.
pub struct DatasetSample {
    pub camera: CameraView,
    pub kind: TargetKind,
    pub clean: RgbdImage,
    pub artifact: RenderOutput,
    pub confidence: ScalarMap,
    pub confidence_latent: ScalarMap,
    pub context: Vec<f32>,
    pub geo: Vec<f32>,
    pub m: usize,
    pub seed: u64,
}

/// Generation knobs beyond the core arguments.
#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub raster: RasterConfig,
    /// Rotation magnitude for perturbed targets, degrees.
    pub rot_deg: f64,
    /// Translation magnitude for perturbed targets, fraction of scene
    /// extent.
    pub trans_frac: f64,
    /// Precomputed M×768 context latents; zero-filled when absent.
    pub context: Option<Vec<f32>>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            raster: RasterConfig::default(),
            rot_deg: 5.0,
            trans_frac: 0.02,
            context: None,
        }
    }
}

/// 8×8 average pooling of a confidence map (edge replication); the latent-
/// resolution copy refiners condition on.
pub fn downsample_confidence(conf: &ScalarMap) -> Result<ScalarMap> {
    if conf.width < CONFIDENCE_POOL || conf.height < CONFIDENCE_POOL {
        return Err(Error::Usage(format!(
            "confidence map {}x{} is smaller than the {}x{} pooling window",
            conf.width, conf.height, CONFIDENCE_POOL, CONFIDENCE_POOL
        )));
    }
    Ok(conf.block_mean_pool(CONFIDENCE_POOL))
}

/// Rotate a camera in place by exactly `rot_deg` about a random axis, then
/// shift its center by `trans_frac`·`extent` in a random direction.
/// Deterministic per seed.
pub fn perturb_camera(
    cam: &CameraView,
    rot_deg: f64,
    trans_frac: f64,
    extent: f64,
    seed: u64,
) -> CameraView {
    let mut rng = stream(seed, "camera-perturb");
    let axis = random_unit(&mut rng);
    let delta = Rotation3::from_axis_angle(
        &nalgebra::Unit::new_normalize(axis),
        rot_deg.to_radians(),
    );
    let rotation = cam.rotation * delta.matrix();
    let center = cam.center() + trans_frac * extent * random_unit(&mut rng);
    let translation = -rotation * center;
    CameraView { rotation, translation, ..cam.clone() }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            normal_sample(rng),
            normal_sample(rng),
            normal_sample(rng),
        );
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn normal_sample(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// Pose between two cameras: spherical-linear rotation, linear center,
/// intrinsics from the first.
pub fn interpolate_pose(a: &CameraView, b: &CameraView, t: f64) -> CameraView {
    let qa = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
        a.rotation,
    ));
    let qb = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
        b.rotation,
    ));
    let q = qa.try_slerp(&qb, t, 1e-9).unwrap_or(if t < 0.5 { qa } else { qb });
    let rotation = *q.to_rotation_matrix().matrix();
    let center = (1.0 - t) * a.center() + t * b.center();
    let translation = -rotation * center;
    CameraView { rotation, translation, ..a.clone() }
}

/// Generate `per_scene` samples. The first `m` cameras are the source rig;
/// the rest are the held-out pool that target cameras cycle through
/// (verbatim, interpolated between rig neighbors, or perturbed).
pub fn make_samples(
    dense: &GaussianCloud,
    sparse: &GaussianCloud,
    cams: &[CameraView],
    m: usize,
    per_scene: usize,
    seed: u64,
) -> Result<Vec<DatasetSample>> {
    make_samples_with(dense, sparse, cams, m, per_scene, seed, &DatasetOptions::default())
}

pub fn make_samples_with(
    dense: &GaussianCloud,
    sparse: &GaussianCloud,
    cams: &[CameraView],
    m: usize,
    per_scene: usize,
    seed: u64,
    options: &DatasetOptions,
) -> Result<Vec<DatasetSample>> {
    if m == 0 || cams.len() <= m {
        return Err(Error::Usage(format!(
            "need more than {m} cameras to hold views out, got {}",
            cams.len()
        )));
    }
    if !SUPPORTED_M.contains(&m) {
        eprintln!(
            "warning: M={m} has no published sparse-fit recipe (expected one of {SUPPORTED_M:?})"
        );
    }
    if let Some(ctx) = &options.context {
        if ctx.len() != m * CONTEXT_DIM {
            return Err(Error::Shape(format!(
                "context holds {} floats, expected {}x{}",
                ctx.len(),
                m,
                CONTEXT_DIM
            )));
        }
    }
    options.raster.validate()?;

    let sources = &cams[..m];
    let pool = &cams[m..];
    let extent = rig_extent(cams).max(dense.extent());
    (0..per_scene)
        .into_par_iter()
        .map(|i| {
            let kind = match i % 3 {
                0 => TargetKind::HeldOut,
                1 => TargetKind::Interpolated,
                _ => TargetKind::Perturbed,
            };
            let ordinal = i / 3;
            let camera = match kind {
                TargetKind::HeldOut => pool[ordinal % pool.len()].clone(),
                TargetKind::Interpolated => {
                    let j = ordinal % m;
                    let mut rng = stream(seed, &format!("interp-{i}"));
                    let t = rng.random_range(0.25..0.75);
                    interpolate_pose(&sources[j], &sources[(j + 1) % m], t)
                }
                TargetKind::Perturbed => perturb_camera(
                    &pool[ordinal % pool.len()],
                    options.rot_deg,
                    options.trans_frac,
                    extent,
                    seed.wrapping_add(i as u64),
                ),
            };
            build_sample(dense, sparse, sources, &camera, kind, m, seed, options)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn build_sample(
    dense: &GaussianCloud,
    sparse: &GaussianCloud,
    sources: &[CameraView],
    camera: &CameraView,
    kind: TargetKind,
    m: usize,
    seed: u64,
    options: &DatasetOptions,
) -> Result<DatasetSample> {
    let clean = crate::render::rasterize(dense, camera, &options.raster).to_rgbd();
    let images = refine::render_for_request(sparse, camera, &options.raster);
    let context = options
        .context
        .clone()
        .unwrap_or_else(|| vec![0.0f32; m * CONTEXT_DIM]);
    let mut geo_cams: Vec<CameraView> = sources.to_vec();
    geo_cams.push(camera.clone());
    let geo = embedding_tensor(&geo_cams)?;
    Ok(DatasetSample {
        camera: camera.clone(),
        kind,
        clean,
        artifact: images.render,
        confidence: images.confidence,
        confidence_latent: images.confidence_latent,
        context,
        geo,
        m,
        seed,
    })
}

pub const CLEAN_IMAGE: &str = "clean.png";
pub const CLEAN_DEPTH: &str = "clean_depth.pfm";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub m: usize,
    pub samples: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dir: String,
    pub scene_id: String,
    pub kind: TargetKind,
}

/// Write one directory per sample (the refiner-protocol file set plus the
/// clean pair) and an index manifest at the root. Returns the manifest path.
pub fn write_dataset(
    out: &Path,
    scene_id: &str,
    samples: &[DatasetSample],
) -> Result<PathBuf> {
    if samples.is_empty() {
        return Err(Error::Usage("no samples to write".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let name = format!("sample-{i:06}");
        let dir = out.join(&name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let request = RefinerRequest {
            camera: &sample.camera,
            render: &sample.artifact,
            confidence: &sample.confidence,
            confidence_latent: &sample.confidence_latent,
            context: &sample.context,
            geo: &sample.geo,
            m: sample.m,
            seed: sample.seed,
        };
        refine::write_request(&dir, &request)?;
        io::write_rgb_png(
            &dir.join(CLEAN_IMAGE),
            sample.clean.width,
            sample.clean.height,
            &sample.clean.rgb,
        )?;
        io::write_pfm(&dir.join(CLEAN_DEPTH), &sample.clean.depth_map())?;
        entries.push(ManifestEntry {
            dir: name,
            scene_id: scene_id.to_string(),
            kind: sample.kind,
        });
    }
    let manifest = DatasetManifest { m: samples[0].m, samples: entries };
    let path = out.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(&path, format!("serialize: {e}")))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
