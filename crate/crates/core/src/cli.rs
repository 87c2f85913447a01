//! Command-line entry points wiring the library into complete workflows.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::camera::CameraView;
use crate::dataset;
use crate::error::{Error, Result};
use crate::image::RgbdImage;
use crate::io;
use crate::manifest::{append_run, PhaseTimer, RunRecord};
use crate::metrics::{pearson, psnr, ssim_rgb};
use crate::optim::{
    align_test_pose, fit_scene, reconstruct, OptimizerConfig, TrainingStack,
};
use crate::refine::parse_refiner_spec;
use crate::render::backward::gradcheck;
use crate::render::{
    enhancer_confidence, normalize_confidence_for_display, rasterize, RasterConfig,
    RasterMode,
};
use crate::synth::{orbit_camera, random_cloud};
use crate::trajectory::{fit_trajectory, sample_pose, uniform_angles};

pub const THREADS_ENV: &str = "SPLATKIT_THREADS";

#[derive(Parser)]
#[command(
    name = "splatkit",
    version,
    about = "Sparse-view Gaussian splatting: render, fit, refine, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Base seed; all stochastic phases derive named streams from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker thread cap (defaults to SPLATKIT_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Run log (JSON lines, append-only).
    #[arg(long, global = true, default_value = "runs.jsonl")]
    manifest: PathBuf,

    /// Exhaustive per-pixel rasterization instead of tiles.
    #[arg(long, global = true)]
    naive: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render every camera of a scene to images (plus optional maps).
    Render(RenderArgs),
    /// Fit a scene to input views starting from a colored point cloud.
    Fit(FitArgs),
    /// Fit an elliptical camera trajectory and sample poses along it.
    Trajectory(TrajectoryArgs),
    /// Write ray embeddings for a camera list.
    Embed(EmbedArgs),
    /// Align a camera pose to an image against a frozen scene.
    Align(AlignArgs),
    /// Refinement-in-the-loop optimization of an existing scene.
    Optimize(OptimizeArgs),
    /// Generate clean/artifact training pairs from a dense/sparse scene pair.
    Dataset(DatasetArgs),
    /// Compare two render directories (PSNR/SSIM, PCC on depth).
    Metrics(MetricsArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct RenderArgs {
    /// Scene checkpoint (.ply).
    #[arg(long)]
    ply: PathBuf,
    /// Camera list (.json).
    #[arg(long)]
    cameras: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also write per-view confidence maps (view-NNN.conf.pfm).
    #[arg(long)]
    confidence: bool,
    /// Also write per-view depth maps (view-NNN.depth.pfm).
    #[arg(long)]
    depth: bool,
    /// Also write per-view enhancer confidence maps (view-NNN.enhconf.pfm).
    #[arg(long = "enhancer-conf")]
    enhancer_conf: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Colored point cloud (.ply) to initialize from.
    #[arg(long)]
    points: PathBuf,
    /// Camera list (.json); order must match the image files.
    #[arg(long)]
    cameras: PathBuf,
    /// Directory of input views (view-*.png, optional *.depth.pfm).
    #[arg(long)]
    images: PathBuf,
    /// Joint splat/pose iterations.
    #[arg(long, default_value_t = 1000)]
    iters: u32,
    /// Output scene checkpoint (.ply); refined cameras land next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrajectoryArgs {
    /// Camera list (.json), at least three views.
    #[arg(long)]
    cameras: PathBuf,
    /// Number of poses to sample along the ellipse.
    #[arg(long, default_value_t = 60)]
    n: usize,
    /// Output camera list (.json) of sampled poses.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    /// Camera list (.json).
    #[arg(long)]
    cameras: PathBuf,
    /// Output tensor (.f32, row-major N x 78).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AlignArgs {
    /// Scene checkpoint (.ply).
    #[arg(long)]
    ply: PathBuf,
    /// Target image (.png).
    #[arg(long)]
    image: PathBuf,
    /// Initial pose: camera list (.json) whose first entry is used.
    #[arg(long = "init-pose")]
    init_pose: PathBuf,
    /// Alignment iterations.
    #[arg(long, default_value_t = 500)]
    iters: u32,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Scene checkpoint (.ply) to start from.
    #[arg(long)]
    ply: PathBuf,
    /// Input camera list (.json).
    #[arg(long)]
    cameras: PathBuf,
    /// Directory of input views matching the cameras.
    #[arg(long)]
    images: PathBuf,
    /// Refiner: identity | oracle:REF.ply | exec:COMMAND.
    #[arg(long)]
    refiner: String,
    /// Main-loop iterations.
    #[arg(long, default_value_t = 10_000)]
    iters: u32,
    /// Novel-view + density-control interval k.
    #[arg(long = "densify-interval", default_value_t = 100)]
    densify_interval: u32,
    /// Output scene checkpoint (.ply).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DatasetArgs {
    /// Dense (clean) scene checkpoint (.ply).
    #[arg(long)]
    dense: PathBuf,
    /// Sparse (artifact) scene checkpoint (.ply).
    #[arg(long)]
    sparse: PathBuf,
    /// Camera list (.json); the first M are the source rig.
    #[arg(long)]
    cameras: PathBuf,
    /// Source-view count.
    #[arg(short = 'M', long = "m", default_value_t = 3)]
    m: usize,
    /// Samples to generate.
    #[arg(long = "per-scene", default_value_t = 6)]
    per_scene: usize,
    /// Scene identifier recorded in the manifest.
    #[arg(long = "scene-id", default_value = "scene-000")]
    scene_id: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Predicted render directory.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth render directory.
    #[arg(long)]
    gt: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Maximum relative error accepted per parameter group.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

/// Parse arguments, run, and translate the outcome into an exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let threads = init_threads(cli.threads);
    let raster = base_raster(cli.naive);
    let ctx = RunContext { seed: cli.seed, threads, manifest: cli.manifest, raster };
    match cli.command {
        Command::Render(args) => cmd_render(&ctx, args),
        Command::Fit(args) => cmd_fit(&ctx, args),
        Command::Trajectory(args) => cmd_trajectory(&ctx, args),
        Command::Embed(args) => cmd_embed(&ctx, args),
        Command::Align(args) => cmd_align(&ctx, args),
        Command::Optimize(args) => cmd_optimize(&ctx, args),
        Command::Dataset(args) => cmd_dataset(&ctx, args),
        Command::Metrics(args) => cmd_metrics(&ctx, args),
        Command::Gradcheck(args) => cmd_gradcheck(&ctx, args),
    }
}

struct RunContext {
    seed: u64,
    threads: usize,
    manifest: PathBuf,
    raster: RasterConfig,
}

impl RunContext {
    fn record(&self, command: &str) -> RunRecord {
        RunRecord::new(command, self.seed, self.threads)
    }

    fn commit(&self, record: &RunRecord) -> Result<()> {
        append_run(&self.manifest, record)
    }
}

fn init_threads(requested: Option<usize>) -> usize {
    let n = requested
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}

fn base_raster(naive: bool) -> RasterConfig {
    let mut cfg = RasterConfig::default();
    if naive {
        cfg.mode = RasterMode::Naive;
    }
    cfg
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn view_stem(i: usize) -> String {
    format!("view-{i:03}")
}

/// PNG files of a directory in name order.
fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "png"))
        .collect();
    names.sort();
    Ok(names)
}

fn depth_sibling(png: &Path) -> PathBuf {
    let stem = png.file_stem().unwrap_or_default().to_string_lossy().to_string();
    png.with_file_name(format!("{stem}.depth.pfm"))
}

/// Load a PNG as RGBD; depth comes from `<stem>.depth.pfm` when present and
/// is zero (undefined) otherwise.
fn load_rgbd(png: &Path) -> Result<RgbdImage> {
    let (w, h, rgb) = io::read_rgb_png(png)?;
    let sibling = depth_sibling(png);
    let depth = if sibling.exists() {
        let map = io::read_pfm(&sibling)?;
        if map.width != w || map.height != h {
            return Err(Error::Shape(format!(
                "{}: depth {}x{} does not match image {w}x{h}",
                sibling.display(),
                map.width,
                map.height
            )));
        }
        map.data
    } else {
        vec![0.0; w * h]
    };
    RgbdImage::new(w, h, rgb, depth)
}

/// Input views in name order, checked against the camera list.
fn load_views(dir: &Path, cams: &[CameraView]) -> Result<Vec<(CameraView, RgbdImage)>> {
    let pngs = list_pngs(dir)?;
    if pngs.len() != cams.len() {
        return Err(Error::Usage(format!(
            "{} images in {} vs {} cameras",
            pngs.len(),
            dir.display(),
            cams.len()
        )));
    }
    cams.iter()
        .zip(&pngs)
        .map(|(cam, png)| Ok((cam.clone(), load_rgbd(png)?)))
        .collect()
}

fn cmd_render(ctx: &RunContext, args: RenderArgs) -> Result<()> {
    let mut record = ctx.record("render");
    record.add_input(&args.ply)?;
    record.add_input(&args.cameras)?;
    record.set_params(serde_json::json!({
        "out": args.out.display().to_string(),
        "confidence": args.confidence,
        "depth": args.depth,
        "enhancer_conf": args.enhancer_conf,
    }))?;
    let mut timer = PhaseTimer::start();

    let cloud = io::read_ply(&args.ply)?;
    let cams = io::read_cameras(&args.cameras)?;
    ensure_dir(&args.out)?;
    timer.lap(&mut record, "load");

    for (i, cam) in cams.iter().enumerate() {
        let stem = view_stem(i);
        let mut out = rasterize(&cloud, cam, &ctx.raster);
        io::write_rgb_png(
            &args.out.join(format!("{stem}.png")),
            out.width,
            out.height,
            &out.rgb,
        )?;
        if args.depth {
            io::write_pfm(
                &args.out.join(format!("{stem}.depth.pfm")),
                &out.depth_scalar_map(),
            )?;
        }
        if args.confidence {
            let conf = crate::render::confidence_map(&mut out, &ctx.raster);
            io::write_pfm(&args.out.join(format!("{stem}.conf.pfm")), &conf)?;
        }
        if args.enhancer_conf {
            let conf = enhancer_confidence(&out, &cloud, cam, &ctx.raster);
            let display = normalize_confidence_for_display(&conf);
            io::write_pfm(&args.out.join(format!("{stem}.enhconf.pfm")), &display)?;
        }
    }
    timer.lap(&mut record, "render");
    record.add_metric("views", cams.len() as f64);
    record.add_metric("splats", cloud.len() as f64);
    ctx.commit(&record)?;
    println!("rendered {} views to {}", cams.len(), args.out.display());
    Ok(())
}

fn cmd_fit(ctx: &RunContext, args: FitArgs) -> Result<()> {
    let mut record = ctx.record("fit");
    record.add_input(&args.points)?;
    record.add_input(&args.cameras)?;
    record.set_params(serde_json::json!({
        "iters": args.iters,
        "images": args.images.display().to_string(),
        "out": args.out.display().to_string(),
    }))?;
    let mut timer = PhaseTimer::start();

    let points = io::read_point_cloud(&args.points)?;
    let cams = io::read_cameras(&args.cameras)?;
    let views = load_views(&args.images, &cams)?;
    let images: Vec<RgbdImage> = views.iter().map(|(_, img)| img.clone()).collect();
    timer.lap(&mut record, "load");

    let cfg = OptimizerConfig {
        init_iters: args.iters,
        raster: ctx.raster.clone(),
        ..OptimizerConfig::default()
    };
    let fit = fit_scene(&points, &cams, &images, &cfg)?;
    timer.lap(&mut record, "fit");

    io::write_ply(&args.out, &fit.cloud)?;
    let cam_path = args.out.with_extension("cameras.json");
    io::write_cameras(&cam_path, &fit.cameras)?;
    timer.lap(&mut record, "write");
    record.add_metric("final_loss", fit.final_loss);
    record.add_metric("splats", fit.cloud.len() as f64);
    ctx.commit(&record)?;
    println!(
        "fit {} splats from {} points; scene -> {}, cameras -> {}",
        fit.cloud.len(),
        points.positions.len(),
        args.out.display(),
        cam_path.display()
    );
    Ok(())
}

fn cmd_trajectory(ctx: &RunContext, args: TrajectoryArgs) -> Result<()> {
    let mut record = ctx.record("trajectory");
    record.add_input(&args.cameras)?;
    record.set_params(serde_json::json!({
        "n": args.n,
        "out": args.out.display().to_string(),
    }))?;
    let mut timer = PhaseTimer::start();

    let cams = io::read_cameras(&args.cameras)?;
    let traj = fit_trajectory(&cams, None)?;
    let poses: Result<Vec<CameraView>> = uniform_angles(args.n)
        .into_iter()
        .map(|theta| sample_pose(&traj, theta, &cams[0]))
        .collect();
    let poses = poses?;
    io::write_cameras(&args.out, &poses)?;
    timer.lap(&mut record, "total");
    record.add_metric("poses", poses.len() as f64);
    record.add_metric("semi_a", traj.semi_a);
    record.add_metric("semi_b", traj.semi_b);
    ctx.commit(&record)?;
    println!(
        "ellipse axes ({:.4}, {:.4}); {} poses -> {}",
        traj.semi_a,
        traj.semi_b,
        poses.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_embed(ctx: &RunContext, args: EmbedArgs) -> Result<()> {
    let mut record = ctx.record("embed");
    record.add_input(&args.cameras)?;
    record.set_params(serde_json::json!({"out": args.out.display().to_string()}))?;
    let timer = PhaseTimer::start();

    let cams = io::read_cameras(&args.cameras)?;
    let tensor = crate::embed::embedding_tensor(&cams)?;
    io::write_f32(&args.out, &tensor)?;
    record.add_timing("total", timer.elapsed_ms());
    record.add_metric("rows", cams.len() as f64);
    ctx.commit(&record)?;
    println!(
        "embedded {} cameras ({}x{}) -> {}",
        cams.len(),
        cams.len(),
        crate::embed::EMBEDDING_LEN,
        args.out.display()
    );
    Ok(())
}

fn cmd_align(ctx: &RunContext, args: AlignArgs) -> Result<()> {
    let mut record = ctx.record("align");
    record.add_input(&args.ply)?;
    record.add_input(&args.image)?;
    record.add_input(&args.init_pose)?;
    record.set_params(serde_json::json!({"iters": args.iters}))?;
    let timer = PhaseTimer::start();

    let cloud = io::read_ply(&args.ply)?;
    let image = load_rgbd(&args.image)?;
    let inits = io::read_cameras(&args.init_pose)?;
    let init = inits
        .first()
        .ok_or_else(|| Error::Usage("initial pose file holds no cameras".into()))?;
    let cfg = OptimizerConfig {
        pose_align_iters: args.iters,
        raster: ctx.raster.clone(),
        ..OptimizerConfig::default()
    };
    let (pose, loss) = align_test_pose(&cloud, &image, init, &cfg)?;
    record.add_timing("total", timer.elapsed_ms());
    record.add_metric("final_loss", loss);
    ctx.commit(&record)?;
    println!("{}", io::cameras_json(std::slice::from_ref(&pose))?);
    eprintln!("final loss {loss:.6e} after {} iterations", args.iters);
    Ok(())
}

fn cmd_optimize(ctx: &RunContext, args: OptimizeArgs) -> Result<()> {
    let mut record = ctx.record("optimize");
    record.add_input(&args.ply)?;
    record.add_input(&args.cameras)?;
    record.set_params(serde_json::json!({
        "refiner": args.refiner,
        "iters": args.iters,
        "densify_interval": args.densify_interval,
        "out": args.out.display().to_string(),
    }))?;
    let mut timer = PhaseTimer::start();

    let cloud = io::read_ply(&args.ply)?;
    let cams = io::read_cameras(&args.cameras)?;
    let views = load_views(&args.images, &cams)?;
    let mut stack = TrainingStack::from_inputs(views)?;
    let traj = fit_trajectory(&cams, None)?;
    let workdir = args
        .out
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
        .join("refiner-requests");
    let mut refiner = parse_refiner_spec(&args.refiner, &ctx.raster, &workdir)?;
    timer.lap(&mut record, "load");

    let cfg = OptimizerConfig {
        main_iters: args.iters,
        densify_interval: args.densify_interval,
        raster: ctx.raster.clone(),
        ..OptimizerConfig::default()
    };
    let report = reconstruct(cloud, &mut stack, &traj, refiner.as_mut(), &cfg, ctx.seed)?;
    timer.lap(&mut record, "optimize");

    io::write_ply(&args.out, &report.cloud)?;
    timer.lap(&mut record, "write");
    record.add_metric("refiner_calls", report.refiner_calls as f64);
    record.add_metric("refiner_failures", report.refiner_failures as f64);
    record.add_metric("final_loss", report.final_loss);
    record.add_metric("splats", report.cloud.len() as f64);
    ctx.commit(&record)?;
    println!(
        "optimized {} iterations ({} refiner calls, {} failed); {} splats -> {}",
        args.iters,
        report.refiner_calls,
        report.refiner_failures,
        report.cloud.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_dataset(ctx: &RunContext, args: DatasetArgs) -> Result<()> {
    let mut record = ctx.record("dataset");
    record.add_input(&args.dense)?;
    record.add_input(&args.sparse)?;
    record.add_input(&args.cameras)?;
    record.set_params(serde_json::json!({
        "m": args.m,
        "per_scene": args.per_scene,
        "scene_id": args.scene_id,
        "out": args.out.display().to_string(),
    }))?;
    let mut timer = PhaseTimer::start();

    let dense = io::read_ply(&args.dense)?;
    let sparse = io::read_ply(&args.sparse)?;
    let cams = io::read_cameras(&args.cameras)?;
    timer.lap(&mut record, "load");

    let options = dataset::DatasetOptions { raster: ctx.raster.clone(), ..Default::default() };
    let samples = dataset::make_samples_with(
        &dense,
        &sparse,
        &cams,
        args.m,
        args.per_scene,
        ctx.seed,
        &options,
    )?;
    timer.lap(&mut record, "generate");
    let manifest = dataset::write_dataset(&args.out, &args.scene_id, &samples)?;
    timer.lap(&mut record, "write");
    record.add_metric("samples", samples.len() as f64);
    ctx.commit(&record)?;
    println!("{} samples -> {}", samples.len(), manifest.display());
    Ok(())
}

fn cmd_metrics(ctx: &RunContext, args: MetricsArgs) -> Result<()> {
    let mut record = ctx.record("metrics");
    record.set_params(serde_json::json!({
        "pred": args.pred.display().to_string(),
        "gt": args.gt.display().to_string(),
    }))?;
    let timer = PhaseTimer::start();

    let names = |dir: &Path, suffix: &str| -> Result<BTreeSet<String>> {
        Ok(std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.ends_with(suffix))
            .collect())
    };
    let pngs: Vec<String> = names(&args.pred, ".png")?
        .intersection(&names(&args.gt, ".png")?)
        .cloned()
        .collect();
    if pngs.is_empty() {
        return Err(Error::Usage(format!(
            "no common .png files between {} and {}",
            args.pred.display(),
            args.gt.display()
        )));
    }

    println!("{:<24} {:>9} {:>8}", "view", "psnr_db", "ssim");
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for name in &pngs {
        let (pw, ph, pred) = io::read_rgb_png(&args.pred.join(name))?;
        let (gw, gh, gt) = io::read_rgb_png(&args.gt.join(name))?;
        if (pw, ph) != (gw, gh) {
            return Err(Error::Shape(format!(
                "{name}: predicted {pw}x{ph} vs ground truth {gw}x{gh}"
            )));
        }
        let p = psnr(&pred, &gt)?;
        let s = ssim_rgb(&pred, &gt, pw, ph)?;
        psnr_sum += p;
        ssim_sum += s;
        println!("{name:<24} {p:>9.3} {s:>8.4}");
    }
    let n = pngs.len() as f64;
    println!("{:<24} {:>9.3} {:>8.4}", "mean", psnr_sum / n, ssim_sum / n);
    record.add_metric("psnr_db", psnr_sum / n);
    record.add_metric("ssim", ssim_sum / n);

    let depths: Vec<String> = names(&args.pred, ".depth.pfm")?
        .intersection(&names(&args.gt, ".depth.pfm")?)
        .cloned()
        .collect();
    if !depths.is_empty() {
        println!();
        println!("{:<24} {:>8}", "depth", "pcc");
        let mut pcc_sum = 0.0;
        let mut pcc_n = 0usize;
        for name in &depths {
            let pred = io::read_pfm(&args.pred.join(name))?;
            let gt = io::read_pfm(&args.gt.join(name))?;
            if (pred.width, pred.height) != (gt.width, gt.height) {
                return Err(Error::Shape(format!(
                    "{name}: predicted {}x{} vs ground truth {}x{}",
                    pred.width, pred.height, gt.width, gt.height
                )));
            }
            let mut a = Vec::new();
            let mut b = Vec::new();
            for i in 0..gt.data.len() {
                if gt.data[i] > 0.0 {
                    a.push(pred.data[i]);
                    b.push(gt.data[i]);
                }
            }
            match pearson(&a, &b) {
                Some(r) => {
                    pcc_sum += r;
                    pcc_n += 1;
                    println!("{name:<24} {r:>8.4}");
                }
                None => println!("{name:<24} {:>8}", "-"),
            }
        }
        if pcc_n > 0 {
            println!("{:<24} {:>8.4}", "mean", pcc_sum / pcc_n as f64);
            record.add_metric("pcc", pcc_sum / pcc_n as f64);
        }
    }
    record.add_timing("total", timer.elapsed_ms());
    ctx.commit(&record)?;
    Ok(())
}

fn cmd_gradcheck(ctx: &RunContext, args: GradcheckArgs) -> Result<()> {
    let mut record = ctx.record("gradcheck");
    record.set_params(serde_json::json!({"tol": args.tol}))?;
    let timer = PhaseTimer::start();

    let cloud = random_cloud(12, 3, ctx.seed);
    let cam = orbit_camera(0.5, 2.5, 0.6, 24, 24);
    let report = gradcheck(&cloud, &cam, &ctx.raster, ctx.seed);
    println!("{:<18} {:>12}", "group", "max_rel_err");
    for group in &report.groups {
        println!("{:<18} {:>12.3e}", group.name, group.max_rel_error);
    }
    record.add_timing("total", timer.elapsed_ms());
    record.add_metric("worst", report.worst());
    ctx.commit(&record)?;
    if report.all_within(args.tol) {
        println!("all groups within {:.1e}", args.tol);
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "worst gradient error {:.3e} exceeds {:.1e}",
            report.worst(),
            args.tol
        )))
    }
}
