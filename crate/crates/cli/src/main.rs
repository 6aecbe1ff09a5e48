//! Command-line surface for the tamper-localization pipeline.
//!
//! One subcommand per stage (init, optimize, render, evaluate, synth,
//! distort) plus `run-all`; stages communicate only through files so partial
//! reruns are cheap. Exit codes: 0 success, 1 internal numeric failure,
//! 2 bad input or configuration.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gsck_core::camera::{self, Camera};
use gsck_core::contrastive::{FeatureConfig, ShFeature};
use gsck_core::error::{Error, Result};
use gsck_core::optim::{self, OptimConfig};
use gsck_core::render;
use gsck_core::synth::{self, Distortion, SynthSpec, TamperKind};
use gsck_core::vote::{self, TamperMask};
use gsck_core::{eval, exec, image_io, ply};

#[derive(Parser)]
#[command(
    name = "gsck",
    version,
    about = "Localize tampered regions of a 3D Gaussian splatting model"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Seed the tampering attribute from multi-view masks by 3D voting.
    Init(InitArgs),
    /// Refine the attribute with the cyclic 2D/3D optimization.
    Optimize(OptimizeArgs),
    /// Render the attribute for one view as a PNG plus a raw float dump.
    Render(RenderArgs),
    /// Score rendered attribute masks against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic tampered case directory.
    Synth(SynthArgs),
    /// Perturb a model or a mask directory.
    Distort(DistortArgs),
    /// init, optimize, render and evaluate in one pass over a case directory.
    RunAll(RunAllArgs),
}

#[derive(Args)]
struct InitArgs {
    /// Input model PLY.
    #[arg(long)]
    model: PathBuf,
    /// cameras.json with intrinsics and world-to-camera transforms.
    #[arg(long)]
    cameras: PathBuf,
    /// Directory of tamper masks named mask_<view id>.png (or .pgm).
    #[arg(long)]
    masks: PathBuf,
    /// Output PLY with the initialized attribute.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Input model PLY (normally the init output).
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// Directory of tamper masks driving the 2D term.
    #[arg(long)]
    masks: PathBuf,
    /// Output PLY with the refined attribute.
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration loss trace CSV; defaults to trace.csv next to --out.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// View id to render (must match a camera id).
    #[arg(long)]
    view: u32,
    /// Output directory for mask_<id>.png and mask_<id>.gsck.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// Directory of ground-truth masks named mask_<view id>.png.
    #[arg(long, alias = "gt-masks")]
    gt_masks: PathBuf,
    /// Binarization threshold for the rendered attribute images.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Score report JSON output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Case directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Read the full spec from a JSON file; flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    /// incorporate | modify | remove-and-fill
    #[arg(long)]
    kind: Option<String>,
    /// Fraction of Gaussians to tamper.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
}

#[derive(Args)]
struct DistortArgs {
    /// mask-gauss-noise | mask-gauss-blur | scale-noise | opacity-noise
    #[arg(long)]
    kind: String,
    #[arg(long)]
    magnitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model PLY input (scale-noise / opacity-noise).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Mask directory input (mask-gauss-noise / mask-gauss-blur).
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Cameras JSON, required when distorting a mask directory.
    #[arg(long)]
    cameras: Option<PathBuf>,
    /// Output PLY path (model kinds) or mask directory (mask kinds).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunAllArgs {
    /// Case directory holding model.ply, cameras.json, masks/ and gt_masks/.
    #[arg(long)]
    case: PathBuf,
    /// Output directory for every stage artifact.
    #[arg(long)]
    out: PathBuf,
    /// Binarization threshold for evaluation.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[command(flatten)]
    hyper: HyperArgs,
}

/// Optimizer hyperparameters, defaulting to the published values.
#[derive(Args)]
struct HyperArgs {
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 10.0)]
    lambda2: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    /// Iterations running the 2D term only before the joint phase.
    #[arg(long, default_value_t = 50)]
    warmup: u64,
    /// Total optimization iterations.
    #[arg(long, default_value_t = 200)]
    iters: u64,
    /// High-confidence partition threshold (r >= tau-high).
    #[arg(long, default_value_t = 0.7)]
    tau_high: f64,
    /// Low-confidence partition threshold (r <= tau-low).
    #[arg(long, default_value_t = 0.05)]
    tau_low: f64,
    /// Spherical-harmonics slice of the contrastive feature vector.
    #[arg(long, value_enum, default_value_t = ShFlag::Dc)]
    sh_feature: ShFlag,
    /// Use raw feature values instead of per-dimension standardization.
    #[arg(long)]
    no_standardize: bool,
    /// Freeze the confidence partition at the start of the joint phase.
    #[arg(long)]
    freeze_partition: bool,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ShFlag {
    /// DC coefficients only (3 dims).
    Dc,
    /// Every stored coefficient.
    Full,
}

impl HyperArgs {
    fn to_config(&self) -> OptimConfig {
        OptimConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            beta: self.beta,
            gamma: self.gamma,
            lr: self.lr,
            warmup_iters: self.warmup,
            total_iters: self.iters,
            tau_high: self.tau_high,
            tau_low: self.tau_low,
            features: FeatureConfig {
                sh: match self.sh_feature {
                    ShFlag::Dc => ShFeature::Dc,
                    ShFlag::Full => ShFeature::Full,
                },
                standardize: !self.no_standardize,
            },
            freeze_partition: self.freeze_partition,
            ..OptimConfig::default()
        }
    }

    fn print(&self) {
        println!(
            "config: lambda1={} lambda2={} beta={} gamma={} lr={} warmup={} iters={} \
             tau_high={} tau_low={} sh_feature={} standardize={} freeze_partition={}",
            self.lambda1,
            self.lambda2,
            self.beta,
            self.gamma,
            self.lr,
            self.warmup,
            self.iters,
            self.tau_high,
            self.tau_low,
            match self.sh_feature {
                ShFlag::Dc => "dc",
                ShFlag::Full => "full",
            },
            !self.no_standardize,
            self.freeze_partition,
        );
    }
}

fn main() {
    exec::init_threads_from_env();
    let cli = Cli::parse();
    if let Err(e) = run(cli.cmd) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Init(a) => cmd_init(&a),
        Cmd::Optimize(a) => cmd_optimize(&a),
        Cmd::Render(a) => cmd_render(&a),
        Cmd::Evaluate(a) => cmd_evaluate(&a),
        Cmd::Synth(a) => cmd_synth(&a),
        Cmd::Distort(a) => cmd_distort(&a),
        Cmd::RunAll(a) => cmd_run_all(&a),
    }
}

fn load_inputs(
    model: &Path,
    cameras: &Path,
    masks: &Path,
) -> Result<(gsck_core::scene::GaussianScene, Vec<Camera>, Vec<TamperMask>)> {
    let scene = ply::load_ply(model)?;
    let cams = camera::load_cameras(cameras)?;
    let masks = vote::load_masks(masks, &cams)?;
    Ok((scene, cams, masks))
}

fn print_tally(tally: &vote::VoteTally, views: usize) {
    let n = tally.n_tamper.len();
    let consensus = (0..n).filter(|&i| tally.consensus(i)).count();
    println!("consensus: {consensus} of {n} gaussians");
    for (name, counts) in [
        ("tamper   ", &tally.n_tamper),
        ("authentic", &tally.n_authentic),
        ("abstain  ", &tally.n_abstain),
    ] {
        let mut hist = vec![0usize; views + 1];
        for &c in counts.iter() {
            hist[c as usize] += 1;
        }
        let cells: Vec<String> =
            hist.iter().enumerate().map(|(k, v)| format!("{k}:{v}")).collect();
        println!("votes {name} {}", cells.join(" "));
    }
}

fn cmd_init(a: &InitArgs) -> Result<()> {
    let (mut scene, cams, masks) = load_inputs(&a.model, &a.cameras, &a.masks)?;
    println!("loaded {} gaussians, {} views", scene.count(), cams.len());
    let tally = vote::cast_votes(&scene, &cams, &masks)?;
    print_tally(&tally, cams.len());
    vote::consensus_init(&mut scene, &tally)?;
    ply::save_ply(&a.out, &scene)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_optimize(a: &OptimizeArgs) -> Result<()> {
    let (mut scene, cams, masks) = load_inputs(&a.model, &a.cameras, &a.masks)?;
    a.hyper.print();
    let cfg = a.hyper.to_config();
    let trace = optim::run_optimization(&mut scene, &cams, &masks, &cfg)?;
    ply::save_ply(&a.out, &scene)?;
    let trace_path = match &a.trace {
        Some(p) => p.clone(),
        None => a.out.parent().unwrap_or(Path::new(".")).join("trace.csv"),
    };
    optim::write_trace_csv(&trace_path, &trace)?;
    if let Some(last) = trace.last() {
        println!(
            "iterations: {} final loss_total={:.6} mean_r={:.6}",
            trace.len(),
            last.loss_total,
            last.mean_r
        );
    }
    println!("wrote {} and {}", a.out.display(), trace_path.display());
    Ok(())
}

fn render_view(scene: &gsck_core::scene::GaussianScene, cam: &Camera, dir: &Path) -> Result<()> {
    let img = render::render_attribute(scene, cam)?;
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Write(format!("{}: {e}", dir.display())))?;
    let png = dir.join(format!("mask_{}.png", cam.id));
    let raw = dir.join(format!("mask_{}.gsck", cam.id));
    image_io::write_gray_png(&png, &img)?;
    image_io::write_raw_dump(&raw, &img)?;
    println!("wrote {} and {}", png.display(), raw.display());
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let scene = ply::load_ply(&a.model)?;
    let cams = camera::load_cameras(&a.cameras)?;
    let cam = cams
        .iter()
        .find(|c| c.id == a.view)
        .ok_or_else(|| Error::Config(format!("unknown view id {}", a.view)))?;
    render_view(&scene, cam, &a.out)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let scene = ply::load_ply(&a.model)?;
    let cams = camera::load_cameras(&a.cameras)?;
    let gt = vote::load_masks(&a.gt_masks, &cams)?;
    let report = eval::evaluate_views(&scene, &cams, &gt, a.threshold)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Write(format!("report: {e}")))?;
    std::fs::write(&a.out, json)
        .map_err(|e| Error::Write(format!("{}: {e}", a.out.display())))?;
    print!("{}", report.to_table());
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => synth::load_spec(p)?,
        None => SynthSpec::default(),
    };
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.count {
        spec.count = v;
    }
    if let Some(v) = a.clusters {
        spec.clusters = v;
    }
    if let Some(k) = &a.kind {
        spec.kind = k.parse::<TamperKind>()?;
    }
    if let Some(v) = a.fraction {
        spec.tamper_fraction = v;
    }
    if let Some(v) = a.views {
        spec.views = v;
    }
    if let Some(v) = a.width {
        spec.width = v;
    }
    if let Some(v) = a.height {
        spec.height = v;
    }
    let case = synth::write_case(&a.out, &spec)?;
    println!(
        "case: {} gaussians ({} tampered), {} views, {}x{} px at {}",
        case.scene.count(),
        case.labels.iter().filter(|&&l| l).count(),
        case.cameras.len(),
        spec.width,
        spec.height,
        a.out.display()
    );
    Ok(())
}

fn cmd_distort(a: &DistortArgs) -> Result<()> {
    let kind = a.kind.parse::<Distortion>()?;
    match kind {
        Distortion::ScaleNoise | Distortion::OpacityNoise => {
            let model = a.model.as_ref().ok_or_else(|| {
                Error::Config(format!("distortion {} needs --model", a.kind))
            })?;
            let mut scene = ply::load_ply(model)?;
            synth::distort_scene(&mut scene, kind, a.magnitude, a.seed)?;
            ply::save_ply(&a.out, &scene)?;
            println!("wrote {}", a.out.display());
        }
        Distortion::MaskGaussNoise | Distortion::MaskGaussBlur => {
            let (masks_dir, cams_path) = match (&a.masks, &a.cameras) {
                (Some(m), Some(c)) => (m, c),
                _ => {
                    return Err(Error::Config(format!(
                        "distortion {} needs --masks and --cameras",
                        a.kind
                    )))
                }
            };
            let cams = camera::load_cameras(cams_path)?;
            let mut masks = vote::load_masks(masks_dir, &cams)?;
            synth::distort_masks(&mut masks, kind, a.magnitude, a.seed)?;
            std::fs::create_dir_all(&a.out)
                .map_err(|e| Error::Write(format!("{}: {e}", a.out.display())))?;
            for mask in &masks {
                mask.save_png(&a.out.join(format!("mask_{}.png", mask.view_id)))?;
            }
            println!("wrote {} masks to {}", masks.len(), a.out.display());
        }
    }
    Ok(())
}

fn cmd_run_all(a: &RunAllArgs) -> Result<()> {
    let (mut scene, cams, masks) = load_inputs(
        &a.case.join("model.ply"),
        &a.case.join("cameras.json"),
        &a.case.join("masks"),
    )?;
    std::fs::create_dir_all(&a.out)
        .map_err(|e| Error::Write(format!("{}: {e}", a.out.display())))?;
    println!("loaded {} gaussians, {} views", scene.count(), cams.len());

    let tally = vote::cast_votes(&scene, &cams, &masks)?;
    print_tally(&tally, cams.len());
    vote::consensus_init(&mut scene, &tally)?;
    ply::save_ply(&a.out.join("init.ply"), &scene)?;

    a.hyper.print();
    let cfg = a.hyper.to_config();
    let trace = optim::run_optimization(&mut scene, &cams, &masks, &cfg)?;
    ply::save_ply(&a.out.join("refined.ply"), &scene)?;
    optim::write_trace_csv(&a.out.join("trace.csv"), &trace)?;

    for cam in &cams {
        render_view(&scene, cam, &a.out.join("renders"))?;
    }

    let gt = vote::load_masks(&a.case.join("gt_masks"), &cams)?;
    let report = eval::evaluate_views(&scene, &cams, &gt, a.threshold)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Write(format!("report: {e}")))?;
    std::fs::write(a.out.join("report.json"), json)
        .map_err(|e| Error::Write(format!("{}: {e}", a.out.join("report.json").display())))?;
    print!("{}", report.to_table());
    println!("wrote artifacts to {}", a.out.display());
    Ok(())
}
