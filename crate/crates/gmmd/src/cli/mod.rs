//! Command-line interface.
//!
//! Subcommands: `gen` (fixture point clouds), `train` (cycle-consistent map
//! pair), `gw` (entropic Gromov-Wasserstein baseline), `eval` (re-score a
//! finished run on fresh clouds), `sweep` (parameter grids), and `report`
//! (SVG diagnostics for a run directory).
//!
//! Exit codes: 0 success, 2 usage error, 3 input validation error,
//! 4 numerical failure.

mod manifest;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cloud::{format_f64, load_cloud, save_cloud, PointCloud};
use crate::error::{GmmdError, Result};
use crate::eval::{
    append_metrics_csv, evaluate_mapped, evaluate_models, sweep_gmmd, sweep_gw, write_metrics_csv,
    MapEvaluation, MetricsRow, SweepPoint,
};
use crate::fsio;
use crate::gw::{barycentric_maps, entropic_gw_uniform, GwConfig};
use crate::kernels::{distance_matrix, KernelSpec, Metric};
use crate::nnmap::{load_model, save_model, MapModel};
use crate::shapes::{embed_3d, rotate, sample_heart, scaling, unit_circle};
use crate::train::{
    derive_kernels, gmmd_loss, train_with_observer, EpochStats, GmmdConfig, MetricMode, MmdPower,
};

use manifest::{load_manifest, RunManifest};

// ============================================================================
// Command tree
// ============================================================================

#[derive(Parser)]
#[command(
    name = "gmmd",
    version,
    about = "Learn cycle-consistent maps between point clouds by minimizing a \
             generalized MMD objective, with an entropic Gromov-Wasserstein baseline."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a fixture point cloud (heart or circle, plus transforms).
    Gen(GenArgs),
    /// Learn a map pair f: X->Y, g: Y->X between two point-cloud CSVs.
    Train(TrainArgs),
    /// Couple two point clouds with entropic Gromov-Wasserstein.
    Gw(GwArgs),
    /// Re-score a finished training run on fresh point clouds.
    Eval(EvalArgs),
    /// Run a training or coupling grid over lambda or epsilon values.
    Sweep(SweepArgs),
    /// Render SVG diagnostics (map overlays, loss curves) for a run.
    Report(ReportArgs),
}

/// Parses arguments, runs the selected command, and returns the process exit
/// code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Gw(args) => cmd_gw(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

/// 4 for numerical failures (something went non-finite), 3 for everything
/// else an operator can fix by changing inputs or flags.
fn exit_code(err: &GmmdError) -> i32 {
    match err {
        GmmdError::NonFinite { .. } | GmmdError::NumericalFailure { .. } => 4,
        _ => 3,
    }
}

// ============================================================================
// Flag value parsers (grammar errors surface as clap usage errors, exit 2)
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Heart,
    Circle,
}

fn parse_shape(s: &str) -> std::result::Result<Shape, String> {
    match s {
        "heart" => Ok(Shape::Heart),
        "circle" => Ok(Shape::Circle),
        other => Err(format!("unknown shape '{other}' (expected heart or circle)")),
    }
}

/// A post-sampling transform: `rotate:THETA`, `scale:FACTOR`, or
/// `embed3d[:SEED]`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Transform {
    Rotate(f64),
    Scale(f64),
    Embed3d(u64),
}

impl std::fmt::Display for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Transform::Rotate(theta) => write!(f, "rotate:{theta}"),
            Transform::Scale(s) => write!(f, "scale:{s}"),
            Transform::Embed3d(seed) => write!(f, "embed3d:{seed}"),
        }
    }
}

fn parse_transform(s: &str) -> std::result::Result<Transform, String> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    match (name, arg) {
        ("rotate", Some(v)) => v
            .parse()
            .map(Transform::Rotate)
            .map_err(|_| format!("rotate angle must be a number, got '{v}'")),
        ("rotate", None) => Err("rotate needs an angle, e.g. rotate:1.0472".to_string()),
        ("scale", Some(v)) => v
            .parse()
            .map(Transform::Scale)
            .map_err(|_| format!("scale factor must be a number, got '{v}'")),
        ("scale", None) => Err("scale needs a factor, e.g. scale:0.5".to_string()),
        ("embed3d", None) => Ok(Transform::Embed3d(0)),
        ("embed3d", Some(v)) => v
            .parse()
            .map(Transform::Embed3d)
            .map_err(|_| format!("embed3d seed must be an integer, got '{v}'")),
        (other, _) => Err(format!(
            "unknown transform '{other}' (expected rotate:THETA, scale:FACTOR, or embed3d[:SEED])"
        )),
    }
}

/// Comma-separated floats where each entry is either a literal value or a
/// geometric range `START..STOPxFACTOR` (inclusive).
#[derive(Debug, Clone, PartialEq)]
struct ValueList(Vec<f64>);

fn parse_value_list(s: &str) -> std::result::Result<ValueList, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err("empty entry in value list".to_string());
        }
        if let Some((start_s, rest)) = part.split_once("..") {
            let (stop_s, factor_s) = rest
                .split_once('x')
                .ok_or_else(|| format!("range '{part}' must look like START..STOPxFACTOR"))?;
            let parse = |v: &str, what: &str| -> std::result::Result<f64, String> {
                v.parse()
                    .map_err(|_| format!("{what} in range '{part}' must be a number, got '{v}'"))
            };
            let start = parse(start_s, "start")?;
            let stop = parse(stop_s, "stop")?;
            let factor = parse(factor_s, "factor")?;
            if !(start > 0.0 && stop >= start && factor > 1.0) {
                return Err(format!(
                    "range '{part}' needs 0 < start <= stop and factor > 1"
                ));
            }
            let mut v = start;
            // Slack absorbs accumulated rounding so the intended stop value
            // is included.
            while v <= stop * (1.0 + 1e-9) {
                out.push(v);
                v *= factor;
            }
        } else {
            let v: f64 = part
                .parse()
                .map_err(|_| format!("value '{part}' must be a number"))?;
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err("value list is empty".to_string());
    }
    Ok(ValueList(out))
}

/// Comma-separated layer widths, e.g. `200,200,200`. The empty string means
/// no hidden layers (a single linear layer).
#[derive(Debug, Clone, PartialEq)]
struct UsizeList(Vec<usize>);

fn parse_usize_list(s: &str) -> std::result::Result<UsizeList, String> {
    let trimmed = s.trim();
    if trimmed.is_empty() {
        return Ok(UsizeList(Vec::new()));
    }
    let mut out = Vec::new();
    for part in trimmed.split(',') {
        let v: usize = part
            .trim()
            .parse()
            .map_err(|_| format!("layer width '{part}' must be a non-negative integer"))?;
        out.push(v);
    }
    Ok(UsizeList(out))
}

fn parse_metric_mode(s: &str) -> std::result::Result<MetricMode, String> {
    match s {
        "euclidean" => Ok(MetricMode::Euclidean),
        "kernel_induced" => Ok(MetricMode::KernelInduced),
        other => Err(format!(
            "unknown metric '{other}' (expected euclidean or kernel_induced)"
        )),
    }
}

fn parse_mmd_power(s: &str) -> std::result::Result<MmdPower, String> {
    match s {
        "1" => Ok(MmdPower::One),
        "2" => Ok(MmdPower::Two),
        other => Err(format!("mmd power must be 1 or 2, got '{other}'")),
    }
}

// ============================================================================
// Shared helpers
// ============================================================================

/// Loads a flat JSON config, or the defaults when no path is given. Unknown
/// keys are rejected with a message naming the key.
fn load_config(path: Option<&Path>) -> Result<GmmdConfig> {
    match path {
        None => Ok(GmmdConfig::default()),
        Some(p) => {
            let text = fsio::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| GmmdError::InvalidConfig(format!("{}: {e}", p.display())))
        }
    }
}

fn create_run_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| GmmdError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn config_value<T: Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serialization cannot fail")
}

const HISTORY_HEADER: &str = "epoch,mmd_x,mmd_y,delta_x,delta_y,delta_xy,total,seconds";

fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut text = String::with_capacity(64 * (history.len() + 1));
    text.push_str(HISTORY_HEADER);
    text.push('\n');
    for s in history {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.epoch,
            format_f64(s.loss.mmd_x),
            format_f64(s.loss.mmd_y),
            format_f64(s.loss.delta_x),
            format_f64(s.loss.delta_y),
            format_f64(s.loss.delta_xy),
            format_f64(s.loss.total),
            format_f64(s.seconds),
        ));
    }
    fsio::write_atomic(path, text.as_bytes())
}

const COST_HISTORY_HEADER: &str = "iter,cost";

fn write_cost_history_csv(path: &Path, costs: &[f64]) -> Result<()> {
    let mut text = String::from(COST_HISTORY_HEADER);
    text.push('\n');
    for (i, c) in costs.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i, format_f64(*c)));
    }
    fsio::write_atomic(path, text.as_bytes())
}

/// Writes a coupling matrix as a headerless CSV, one row per line.
fn write_coupling_csv(path: &Path, coupling: &ndarray::Array2<f64>) -> Result<()> {
    let mut text = String::with_capacity(coupling.len() * 24);
    for row in coupling.rows() {
        let mut first = true;
        for v in row {
            if !first {
                text.push(',');
            }
            text.push_str(&format_f64(*v));
            first = false;
        }
        text.push('\n');
    }
    fsio::write_atomic(path, text.as_bytes())
}

/// Bandwidths of both spaces' kernels, stored with the run so evaluations
/// can be repeated without re-deriving from the training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelsFile {
    kernel_x: KernelSpec,
    kernel_y: KernelSpec,
}

fn save_kernels(path: &Path, kx: &KernelSpec, ky: &KernelSpec) -> Result<()> {
    let file = KernelsFile {
        kernel_x: kx.clone(),
        kernel_y: ky.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file)
        .map_err(|e| GmmdError::InvalidConfig(format!("kernel serialization failed: {e}")))?;
    text.push('\n');
    fsio::write_atomic(path, text.as_bytes())
}

fn load_kernels(path: &Path) -> Result<(KernelSpec, KernelSpec)> {
    let text = fsio::read_to_string(path)?;
    let file: KernelsFile = serde_json::from_str(&text)
        .map_err(|e| GmmdError::InvalidConfig(format!("{}: {e}", path.display())))?;
    Ok((file.kernel_x, file.kernel_y))
}

// ============================================================================
// gen
// ============================================================================

#[derive(Args)]
struct GenArgs {
    /// Base shape: heart or circle.
    #[arg(long, value_parser = parse_shape)]
    shape: Shape,
    /// Number of points to sample.
    #[arg(long, default_value_t = 4000)]
    n: usize,
    /// Sampling seed (the circle grid is deterministic and ignores it).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of Gaussian jitter (heart only).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Transform applied after sampling; repeatable, applied in order.
    /// Grammar: rotate:THETA | scale:FACTOR | embed3d[:SEED].
    #[arg(long = "transform", value_parser = parse_transform)]
    transforms: Vec<Transform>,
    /// Output CSV path; a manifest lands alongside it.
    #[arg(long)]
    out: PathBuf,
}

fn transform_model(t: Transform, dim: usize) -> Result<MapModel> {
    match t {
        Transform::Rotate(theta) => {
            if dim != 2 {
                return Err(GmmdError::InvalidParameter {
                    name: "transform",
                    message: format!("rotate needs 2-D points, cloud has dimension {dim}"),
                });
            }
            rotate(theta)
        }
        Transform::Scale(s) => scaling(dim, s),
        Transform::Embed3d(seed) => {
            if dim != 2 {
                return Err(GmmdError::InvalidParameter {
                    name: "transform",
                    message: format!("embed3d needs 2-D points, cloud has dimension {dim}"),
                });
            }
            Ok(embed_3d(seed))
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let clock = Instant::now();
    if !args.noise.is_finite() || args.noise < 0.0 {
        return Err(GmmdError::InvalidParameter {
            name: "noise",
            message: format!("must be finite and non-negative, got {}", args.noise),
        });
    }
    let mut cloud = match args.shape {
        Shape::Heart => sample_heart(args.n, args.seed, args.noise)?,
        Shape::Circle => {
            if args.noise != 0.0 {
                return Err(GmmdError::InvalidParameter {
                    name: "noise",
                    message: "the circle fixture is deterministic; noise applies to heart only"
                        .to_string(),
                });
            }
            unit_circle(args.n)?
        }
    };
    for &t in &args.transforms {
        cloud = transform_model(t, cloud.dim())?.map_cloud(&cloud)?;
    }
    save_cloud(&cloud, &args.out)?;

    let shape_name = match args.shape {
        Shape::Heart => "heart",
        Shape::Circle => "circle",
    };
    let transforms: Vec<String> = args.transforms.iter().map(|t| t.to_string()).collect();
    let mut man = RunManifest::new(
        "gen",
        args.seed,
        serde_json::json!({
            "shape": shape_name,
            "n": args.n,
            "seed": args.seed,
            "noise": args.noise,
            "transforms": transforms,
        }),
    );
    let out_name = args
        .out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| args.out.display().to_string());
    man.record_output(&out_name);
    man.wall_clock_seconds = clock.elapsed().as_secs_f64();
    man.save(&args.out.with_extension("manifest.json"))?;

    println!(
        "wrote {} points (dim {}) to {}",
        cloud.n(),
        cloud.dim(),
        args.out.display()
    );
    Ok(())
}

// ============================================================================
// train
// ============================================================================

#[derive(Args)]
struct TrainArgs {
    /// X-side point cloud (CSV).
    #[arg(long)]
    x: PathBuf,
    /// Y-side point cloud (CSV).
    #[arg(long)]
    y: PathBuf,
    /// Flat JSON config; CLI flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sets both MMD weights at once.
    #[arg(long, conflicts_with_all = ["lambda_x", "lambda_y", "table_lambda"])]
    lambda: Option<f64>,
    /// Alias for --lambda named after published result tables that index
    /// rows by this value. The surrounding prose also mentions inverse
    /// weights; this tool uses the tabulated value directly as the weight.
    #[arg(long, conflicts_with_all = ["lambda_x", "lambda_y"])]
    table_lambda: Option<f64>,
    /// X-side MMD weight.
    #[arg(long)]
    lambda_x: Option<f64>,
    /// Y-side MMD weight.
    #[arg(long)]
    lambda_y: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Seed for model init, bandwidth subsampling, and batch order.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated hidden-layer widths (empty string = linear maps).
    #[arg(long, value_parser = parse_usize_list)]
    hidden: Option<UsizeList>,
    /// Distortion metric: euclidean or kernel_induced.
    #[arg(long, value_parser = parse_metric_mode)]
    metric: Option<MetricMode>,
    /// MMD exponent in the objective: 1 or 2.
    #[arg(long, value_parser = parse_mmd_power)]
    mmd_power: Option<MmdPower>,
    /// Run directory for all artifacts (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
    /// Print a progress line every N epochs (0 = silent).
    #[arg(long, default_value_t = 100)]
    progress_every: usize,
}

fn apply_train_overrides(cfg: &mut GmmdConfig, args: &TrainArgs) {
    if let Some(l) = args.lambda.or(args.table_lambda) {
        cfg.lambda_x = l;
        cfg.lambda_y = l;
    }
    if let Some(l) = args.lambda_x {
        cfg.lambda_x = l;
    }
    if let Some(l) = args.lambda_y {
        cfg.lambda_y = l;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.hidden {
        cfg.hidden_dims = v.0.clone();
    }
    if let Some(v) = args.metric {
        cfg.metric_mode = v;
    }
    if let Some(v) = args.mmd_power {
        cfg.mmd_power = v;
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let clock = Instant::now();
    let x = load_cloud(&args.x)?;
    let y = load_cloud(&args.y)?;
    let mut cfg = load_config(args.config.as_deref())?;
    apply_train_overrides(&mut cfg, &args);
    cfg.validate()?;
    create_run_dir(&args.out_dir)?;

    let mut man = RunManifest::new("train", cfg.seed, config_value(&cfg));
    man.record_input("x", &args.x)?;
    man.record_input("y", &args.y)?;
    if let Some(c) = &args.config {
        man.record_input("config", c)?;
    }

    let every = args.progress_every;
    let out = train_with_observer(&x, &y, &cfg, |s| {
        if every > 0 && (s.epoch + 1) % every == 0 {
            eprintln!(
                "epoch {:>6}  total {:.6}  mmd_x {:.6}  mmd_y {:.6}  delta {:.6}",
                s.epoch + 1,
                s.loss.total,
                s.loss.mmd_x,
                s.loss.mmd_y,
                s.loss.delta_x + s.loss.delta_y + s.loss.delta_xy,
            );
        }
    })?;
    let train_seconds = clock.elapsed().as_secs_f64();

    save_model(&out.f, &args.out_dir.join("f.json"))?;
    save_model(&out.g, &args.out_dir.join("g.json"))?;
    write_history_csv(&args.out_dir.join("history.csv"), &out.history)?;
    save_kernels(&args.out_dir.join("kernels.json"), &out.kernel_x, &out.kernel_y)?;

    // The metrics row re-evaluates the trained pair on the full clouds; the
    // final epoch's minibatch average lives in history.csv.
    let evaluation = evaluate_models(&cfg, &out.kernel_x, &out.kernel_y, &x, &y, &out.f, &out.g)?;
    let objective = gmmd_loss(&cfg, &out.kernel_x, &out.kernel_y, &x, &y, &out.f, &out.g)?.total;
    let row = MetricsRow::from_evaluation("gmmd", cfg.lambda_x, objective, &evaluation, train_seconds);
    write_metrics_csv(&args.out_dir.join("metrics.csv"), &[row])?;

    for name in ["f.json", "g.json", "history.csv", "kernels.json", "metrics.csv", "manifest.json"] {
        man.record_output(name);
    }
    man.wall_clock_seconds = clock.elapsed().as_secs_f64();
    man.save(&args.out_dir.join("manifest.json"))?;

    println!(
        "trained {} epochs in {:.1}s; objective {:.6}; artifacts in {}",
        cfg.epochs,
        train_seconds,
        objective,
        args.out_dir.display()
    );
    Ok(())
}

// ============================================================================
// gw
// ============================================================================

#[derive(Args)]
struct GwArgs {
    /// X-side point cloud (CSV).
    #[arg(long)]
    x: PathBuf,
    /// Y-side point cloud (CSV).
    #[arg(long)]
    y: PathBuf,
    /// Entropic regularization strength.
    #[arg(long, default_value_t = 5e-4)]
    epsilon: f64,
    /// Maximum outer (linearize + project) iterations.
    #[arg(long, default_value_t = 50)]
    max_outer: usize,
    /// Maximum Sinkhorn iterations per projection.
    #[arg(long, default_value_t = 1000)]
    max_sinkhorn: usize,
    #[arg(long, default_value_t = 1e-9)]
    sinkhorn_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    outer_tol: f64,
    /// Also write the full n x m coupling matrix as coupling.csv.
    #[arg(long)]
    export_coupling: bool,
    /// Flat JSON config for the scoring side (kernels, distortion metric).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory for all artifacts (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
}

fn cmd_gw(args: GwArgs) -> Result<()> {
    let clock = Instant::now();
    let x = load_cloud(&args.x)?;
    let y = load_cloud(&args.y)?;
    let score_cfg = load_config(args.config.as_deref())?;
    score_cfg.validate()?;
    let gw_cfg = GwConfig {
        epsilon: args.epsilon,
        max_outer: args.max_outer,
        max_sinkhorn: args.max_sinkhorn,
        sinkhorn_tol: args.sinkhorn_tol,
        outer_tol: args.outer_tol,
    };
    gw_cfg.validate()?;
    create_run_dir(&args.out_dir)?;

    let mut man = RunManifest::new(
        "gw",
        score_cfg.seed,
        serde_json::json!({ "gw": config_value(&gw_cfg), "scoring": config_value(&score_cfg) }),
    );
    man.record_input("x", &args.x)?;
    man.record_input("y", &args.y)?;
    if let Some(c) = &args.config {
        man.record_input("config", c)?;
    }

    let cx = distance_matrix(&Metric::Euclidean, &x, &x)?;
    let cy = distance_matrix(&Metric::Euclidean, &y, &y)?;
    let out = entropic_gw_uniform(&cx, &cy, &gw_cfg)?;
    let (fx, gy) = barycentric_maps(&out.coupling, &x, &y)?;
    let solve_seconds = clock.elapsed().as_secs_f64();

    save_cloud(&fx, &args.out_dir.join("fx.csv"))?;
    save_cloud(&gy, &args.out_dir.join("gy.csv"))?;
    write_cost_history_csv(&args.out_dir.join("cost_history.csv"), &out.history)?;
    if args.export_coupling {
        write_coupling_csv(&args.out_dir.join("coupling.csv"), &out.coupling)?;
    }

    let (kx, ky) = derive_kernels(&x, &y, &score_cfg)?;
    let evaluation = evaluate_mapped(&score_cfg, &kx, &ky, &x, &y, &fx, &gy)?;
    let row = MetricsRow::from_evaluation("gw", gw_cfg.epsilon, out.cost, &evaluation, solve_seconds);
    write_metrics_csv(&args.out_dir.join("metrics.csv"), &[row])?;

    for name in ["fx.csv", "gy.csv", "cost_history.csv", "metrics.csv", "manifest.json"] {
        man.record_output(name);
    }
    if args.export_coupling {
        man.record_output("coupling.csv");
    }
    man.wall_clock_seconds = clock.elapsed().as_secs_f64();
    man.save(&args.out_dir.join("manifest.json"))?;

    println!(
        "coupling solved: cost {:.6} ({} outer iterations, converged: {}) in {:.1}s; artifacts in {}",
        out.cost,
        out.outer_iterations,
        out.converged,
        solve_seconds,
        args.out_dir.display()
    );
    Ok(())
}

// ============================================================================
// eval
// ============================================================================

#[derive(Args)]
struct EvalArgs {
    /// Run directory produced by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Fresh X-side point cloud (CSV).
    #[arg(long)]
    x: PathBuf,
    /// Fresh Y-side point cloud (CSV).
    #[arg(long)]
    y: PathBuf,
    /// Method label for the appended metrics row.
    #[arg(long, default_value = "eval")]
    label: String,
    /// Metrics CSV to append to (default: metrics.csv inside the run).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let man = load_manifest(&args.run.join("manifest.json"))?;
    if man.command != "train" {
        return Err(GmmdError::InvalidConfig(format!(
            "eval needs a run produced by `train`, found command '{}' in {}",
            man.command,
            args.run.join("manifest.json").display()
        )));
    }
    let cfg: GmmdConfig = serde_json::from_value(man.config.clone())
        .map_err(|e| GmmdError::InvalidConfig(format!("config snapshot in manifest: {e}")))?;
    let f = load_model(&args.run.join("f.json"))?;
    let g = load_model(&args.run.join("g.json"))?;
    let x = load_cloud(&args.x)?;
    let y = load_cloud(&args.y)?;

    let clock = Instant::now();
    // Held-out clouds get kernels derived from themselves by the same median
    // recipe used at training time, so the score is self-contained.
    let (kx, ky) = derive_kernels(&x, &y, &cfg)?;
    let evaluation = evaluate_models(&cfg, &kx, &ky, &x, &y, &f, &g)?;
    let objective = gmmd_loss(&cfg, &kx, &ky, &x, &y, &f, &g)?.total;
    let seconds = clock.elapsed().as_secs_f64();

    let row = MetricsRow::from_evaluation(&args.label, cfg.lambda_x, objective, &evaluation, seconds);
    let out_path = args
        .out
        .clone()
        .unwrap_or_else(|| args.run.join("metrics.csv"));
    append_metrics_csv(&out_path, &[row])?;

    println!(
        "{}: objective {:.6} mmd_x {:.6} mmd_y {:.6} delta {:.6} cycle_x {:.6} cycle_y {:.6} (appended to {})",
        args.label,
        objective,
        evaluation.mmd_x,
        evaluation.mmd_y,
        evaluation.distortion.total,
        evaluation.cycle_x,
        evaluation.cycle_y,
        out_path.display()
    );
    Ok(())
}

// ============================================================================
// sweep
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    Rotate,
    Scale,
    Embed3d,
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    match s {
        "rotate" => Ok(Task::Rotate),
        "scale" => Ok(Task::Scale),
        "embed3d" => Ok(Task::Embed3d),
        other => Err(format!(
            "unknown task '{other}' (expected rotate, scale, or embed3d)"
        )),
    }
}

#[derive(Args)]
#[command(group(ArgGroup::new("grid").required(true).args(["lambdas", "epsilons"])))]
#[command(group(ArgGroup::new("source").required(true).args(["task", "x"])))]
struct SweepArgs {
    /// Built-in fixture pair: rotate, scale, or embed3d. X is a sampled
    /// heart; Y is an independently sampled heart pushed through the task's
    /// transform.
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// Explicit X-side cloud (instead of --task).
    #[arg(long, requires = "y")]
    x: Option<PathBuf>,
    /// Explicit Y-side cloud (instead of --task).
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    /// Points per cloud for built-in tasks.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Sampling seed for built-in tasks (X uses it, Y uses it plus one).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rotation angle for --task rotate.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3)]
    theta: f64,
    /// Scale factor for --task scale.
    #[arg(long, default_value_t = 0.5)]
    scale_factor: f64,
    /// MMD-weight grid: comma list and/or geometric ranges (a..bxk).
    #[arg(long, value_parser = parse_value_list)]
    lambdas: Option<ValueList>,
    /// Regularization grid for the coupling baseline (same syntax).
    #[arg(long, value_parser = parse_value_list)]
    epsilons: Option<ValueList>,
    /// Maximum outer iterations for the coupling baseline.
    #[arg(long, default_value_t = 50)]
    max_outer: usize,
    /// Maximum Sinkhorn iterations for the coupling baseline.
    #[arg(long, default_value_t = 1000)]
    max_sinkhorn: usize,
    /// Flat JSON base config for training or scoring.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for metrics.csv, fixture clouds, and the manifest.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Worker pool for sweep entries; `GMMD_THREADS` caps the width.
fn sweep_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("GMMD_THREADS") {
        let n: usize = raw.trim().parse().map_err(|_| GmmdError::InvalidParameter {
            name: "GMMD_THREADS",
            message: format!("expected a positive integer, got '{raw}'"),
        })?;
        if n == 0 {
            return Err(GmmdError::InvalidParameter {
                name: "GMMD_THREADS",
                message: "expected a positive integer, got '0'".to_string(),
            });
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| GmmdError::InvalidParameter {
        name: "GMMD_THREADS",
        message: e.to_string(),
    })
}

fn sweep_fixture(args: &SweepArgs, task: Task) -> Result<(PointCloud, PointCloud)> {
    let x = sample_heart(args.n, args.seed, 0.0)?;
    let base_y = sample_heart(args.n, args.seed + 1, 0.0)?;
    let y = match task {
        Task::Rotate => rotate(args.theta)?.map_cloud(&base_y)?,
        Task::Scale => scaling(2, args.scale_factor)?.map_cloud(&base_y)?,
        Task::Embed3d => embed_3d(args.seed).map_cloud(&base_y)?,
    };
    Ok((x, y))
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let clock = Instant::now();
    let cfg = load_config(args.config.as_deref())?;
    cfg.validate()?;
    create_run_dir(&args.out_dir)?;

    let mut man_inputs: Vec<(String, PathBuf)> = Vec::new();
    let (x, y, task_name) = match (args.task, &args.x, &args.y) {
        (Some(task), _, _) => {
            let (x, y) = sweep_fixture(&args, task)?;
            let name = match task {
                Task::Rotate => "rotate",
                Task::Scale => "scale",
                Task::Embed3d => "embed3d",
            };
            (x, y, Some(name))
        }
        (None, Some(px), Some(py)) => {
            man_inputs.push(("x".to_string(), px.clone()));
            man_inputs.push(("y".to_string(), py.clone()));
            (load_cloud(px)?, load_cloud(py)?, None)
        }
        _ => unreachable!("clap enforces exactly one source"),
    };
    // Persist the swept pair so every row can be traced to its data.
    save_cloud(&x, &args.out_dir.join("x.csv"))?;
    save_cloud(&y, &args.out_dir.join("y.csv"))?;

    let pool = sweep_pool()?;
    let (method, grid, points): (&str, Vec<f64>, Vec<SweepPoint>) =
        if let Some(ValueList(lambdas)) = &args.lambdas {
            let points = pool.install(|| sweep_gmmd(&x, &y, &cfg, lambdas))?;
            ("gmmd", lambdas.clone(), points)
        } else if let Some(ValueList(epsilons)) = &args.epsilons {
            let base = GwConfig {
                max_outer: args.max_outer,
                max_sinkhorn: args.max_sinkhorn,
                ..GwConfig::default()
            };
            base.validate()?;
            let points = pool.install(|| sweep_gw(&x, &y, &base, epsilons, &cfg))?;
            ("gw", epsilons.clone(), points)
        } else {
            unreachable!("clap enforces exactly one grid")
        };

    let rows: Vec<MetricsRow> = points
        .iter()
        .map(|p| MetricsRow::from_evaluation(method, p.param, p.objective, &p.evaluation, p.seconds))
        .collect();
    write_metrics_csv(&args.out_dir.join("metrics.csv"), &rows)?;

    let mut man = RunManifest::new(
        "sweep",
        args.seed,
        serde_json::json!({
            "method": method,
            "grid": grid,
            "task": task_name,
            "n": args.n,
            "seed": args.seed,
            "theta": args.theta,
            "scale_factor": args.scale_factor,
            "base": config_value(&cfg),
        }),
    );
    for (role, path) in &man_inputs {
        man.record_input(role, path)?;
    }
    if let Some(c) = &args.config {
        man.record_input("config", c)?;
    }
    for name in ["x.csv", "y.csv", "metrics.csv", "manifest.json"] {
        man.record_output(name);
    }
    man.wall_clock_seconds = clock.elapsed().as_secs_f64();
    man.save(&args.out_dir.join("manifest.json"))?;

    for (p, row) in points.iter().zip(rows.iter()) {
        println!(
            "{} {:<12.6} objective {:.6} mmd_x {:.6} mmd_y {:.6} delta {:.6} ({:.1}s)",
            row.method, p.param, p.objective, row.mmd_x, row.mmd_y, row.delta, p.seconds
        );
    }
    println!(
        "swept {} values in {:.1}s; metrics in {}",
        points.len(),
        clock.elapsed().as_secs_f64(),
        args.out_dir.join("metrics.csv").display()
    );
    Ok(())
}

// ============================================================================
// report
// ============================================================================

#[derive(Args)]
struct ReportArgs {
    /// Run directory produced by `train` or `gw`.
    #[arg(long)]
    run: PathBuf,
    /// Output directory (default: report/ inside the run).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// First two coordinates of every point (3-D clouds project onto them).
fn planar(cloud: &PointCloud) -> Vec<[f64; 2]> {
    (0..cloud.n())
        .map(|i| {
            let p = cloud.point(i);
            [p[0], if p.len() > 1 { p[1] } else { 0.0 }]
        })
        .collect()
}

fn write_overlay(
    dir: &Path,
    stem: &str,
    title: &str,
    base_label: &str,
    base: &PointCloud,
    mapped_label: &str,
    mapped: &PointCloud,
) -> Result<()> {
    let series = vec![
        report::Series {
            label: base_label.to_string(),
            color: report::PALETTE[0],
            points: planar(base),
        },
        report::Series {
            label: mapped_label.to_string(),
            color: report::PALETTE[1],
            points: planar(mapped),
        },
    ];
    fsio::write_atomic(
        &dir.join(format!("{stem}.svg")),
        report::scatter_svg(title, "coordinate 0", "coordinate 1", &series).as_bytes(),
    )?;
    let mut csv = String::from("series,c0,c1\n");
    for s in &series {
        for p in &s.points {
            csv.push_str(&format!(
                "{},{},{}\n",
                s.label,
                format_f64(p[0]),
                format_f64(p[1])
            ));
        }
    }
    fsio::write_atomic(&dir.join(format!("{stem}.csv")), csv.as_bytes())
}

/// Parses history.csv back into plottable columns.
fn read_history_columns(path: &Path) -> Result<Vec<(f64, [f64; 4])>> {
    let text = fsio::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HISTORY_HEADER => {}
        other => {
            return Err(GmmdError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header '{HISTORY_HEADER}', found {other:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(GmmdError::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let num = |j: usize| -> Result<f64> {
            fields[j].parse().map_err(|_| GmmdError::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("field {} is not a number: '{}'", j, fields[j]),
            })
        };
        let epoch = num(0)?;
        let mmd_x = num(1)?;
        let mmd_y = num(2)?;
        let delta = num(3)? + num(4)? + num(5)?;
        let total = num(6)?;
        out.push((epoch, [mmd_x, mmd_y, delta, total]));
    }
    Ok(out)
}

fn read_cost_history(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = fsio::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == COST_HISTORY_HEADER => {}
        other => {
            return Err(GmmdError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header '{COST_HISTORY_HEADER}', found {other:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let (iter_s, cost_s) = line.split_once(',').ok_or_else(|| GmmdError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: "expected 'iter,cost'".to_string(),
        })?;
        let parse = |v: &str| -> Result<f64> {
            v.parse().map_err(|_| GmmdError::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("not a number: '{v}'"),
            })
        };
        out.push([parse(iter_s)?, parse(cost_s)?]);
    }
    Ok(out)
}

/// Scores mapped clouds under both distortion metrics so the report shows
/// the bounded kernel-induced flavor next to the raw Euclidean one.
#[allow(clippy::too_many_arguments)] // row labels + scoring config + data being scored
fn both_metric_rows(
    label: &str,
    param: f64,
    objective: f64,
    cfg: &GmmdConfig,
    kx: &KernelSpec,
    ky: &KernelSpec,
    x: &PointCloud,
    y: &PointCloud,
    evaluate: impl Fn(&GmmdConfig) -> Result<MapEvaluation>,
) -> Result<Vec<MetricsRow>> {
    let _ = (kx, ky, x, y);
    let mut rows = Vec::with_capacity(2);
    for (mode, suffix) in [
        (MetricMode::KernelInduced, "kernel_metric"),
        (MetricMode::Euclidean, "euclidean_metric"),
    ] {
        let flavored = GmmdConfig {
            metric_mode: mode,
            ..cfg.clone()
        };
        let evaluation = evaluate(&flavored)?;
        rows.push(MetricsRow::from_evaluation(
            &format!("{label}_{suffix}"),
            param,
            objective,
            &evaluation,
            0.0,
        ));
    }
    Ok(rows)
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let man = load_manifest(&args.run.join("manifest.json"))?;
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| args.run.join("report"));
    create_run_dir(&out_dir)?;

    let input = |role: &str| -> Result<PathBuf> {
        man.input_path(role).ok_or_else(|| {
            GmmdError::InvalidConfig(format!(
                "manifest in {} records no '{role}' input",
                args.run.display()
            ))
        })
    };

    let mut written: Vec<String> = Vec::new();
    match man.command.as_str() {
        "train" => {
            let cfg: GmmdConfig = serde_json::from_value(man.config.clone()).map_err(|e| {
                GmmdError::InvalidConfig(format!("config snapshot in manifest: {e}"))
            })?;
            let x = load_cloud(&input("x")?)?;
            let y = load_cloud(&input("y")?)?;
            let f = load_model(&args.run.join("f.json"))?;
            let g = load_model(&args.run.join("g.json"))?;
            let (kx, ky) = load_kernels(&args.run.join("kernels.json"))?;
            let fx = f.map_cloud(&x)?;
            let gy = g.map_cloud(&y)?;

            write_overlay(&out_dir, "fig_map_x", "X and g(Y)", "x", &x, "g(y)", &gy)?;
            write_overlay(&out_dir, "fig_map_y", "Y and f(X)", "y", &y, "f(x)", &fx)?;
            written.extend(
                ["fig_map_x.svg", "fig_map_x.csv", "fig_map_y.svg", "fig_map_y.csv"]
                    .map(String::from),
            );

            let history = read_history_columns(&args.run.join("history.csv"))?;
            let labels = ["mmd_x", "mmd_y", "delta", "total"];
            let series: Vec<report::Series> = labels
                .iter()
                .enumerate()
                .map(|(k, label)| report::Series {
                    label: label.to_string(),
                    color: report::PALETTE[k],
                    points: history.iter().map(|(e, v)| [*e, v[k]]).collect(),
                })
                .collect();
            fsio::write_atomic(
                &out_dir.join("fig_loss.svg"),
                report::line_svg("Training loss", "epoch", "value", &series).as_bytes(),
            )?;
            let mut csv = String::from("epoch,mmd_x,mmd_y,delta,total\n");
            for (e, v) in &history {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    e,
                    format_f64(v[0]),
                    format_f64(v[1]),
                    format_f64(v[2]),
                    format_f64(v[3])
                ));
            }
            fsio::write_atomic(&out_dir.join("fig_loss.csv"), csv.as_bytes())?;
            written.extend(["fig_loss.svg", "fig_loss.csv"].map(String::from));

            let objective = gmmd_loss(&cfg, &kx, &ky, &x, &y, &f, &g)?.total;
            let rows = both_metric_rows(
                "gmmd",
                cfg.lambda_x,
                objective,
                &cfg,
                &kx,
                &ky,
                &x,
                &y,
                |flavored| evaluate_models(flavored, &kx, &ky, &x, &y, &f, &g),
            )?;
            write_metrics_csv(&out_dir.join("summary.csv"), &rows)?;
            written.push("summary.csv".to_string());
        }
        "gw" => {
            let score_cfg: GmmdConfig = man
                .config
                .get("scoring")
                .cloned()
                .map(serde_json::from_value)
                .transpose()
                .map_err(|e| {
                    GmmdError::InvalidConfig(format!("scoring snapshot in manifest: {e}"))
                })?
                .unwrap_or_default();
            let epsilon = man
                .config
                .pointer("/gw/epsilon")
                .and_then(|v| v.as_f64())
                .unwrap_or(f64::NAN);
            let x = load_cloud(&input("x")?)?;
            let y = load_cloud(&input("y")?)?;
            let fx = load_cloud(&args.run.join("fx.csv"))?;
            let gy = load_cloud(&args.run.join("gy.csv"))?;

            write_overlay(&out_dir, "fig_map_x", "X and g(Y)", "x", &x, "g(y)", &gy)?;
            write_overlay(&out_dir, "fig_map_y", "Y and f(X)", "y", &y, "f(x)", &fx)?;
            written.extend(
                ["fig_map_x.svg", "fig_map_x.csv", "fig_map_y.svg", "fig_map_y.csv"]
                    .map(String::from),
            );

            let costs = read_cost_history(&args.run.join("cost_history.csv"))?;
            let series = vec![report::Series {
                label: "cost".to_string(),
                color: report::PALETTE[0],
                points: costs.clone(),
            }];
            fsio::write_atomic(
                &out_dir.join("fig_loss.svg"),
                report::line_svg("Coupling cost", "outer iteration", "cost", &series).as_bytes(),
            )?;
            let mut csv = String::from("iter,cost\n");
            for p in &costs {
                csv.push_str(&format!("{},{}\n", p[0], format_f64(p[1])));
            }
            fsio::write_atomic(&out_dir.join("fig_loss.csv"), csv.as_bytes())?;
            written.extend(["fig_loss.svg", "fig_loss.csv"].map(String::from));

            let (kx, ky) = derive_kernels(&x, &y, &score_cfg)?;
            let objective = read_cost_history(&args.run.join("cost_history.csv"))?
                .last()
                .map(|p| p[1])
                .unwrap_or(f64::NAN);
            let rows = both_metric_rows(
                "gw",
                epsilon,
                objective,
                &score_cfg,
                &kx,
                &ky,
                &x,
                &y,
                |flavored| evaluate_mapped(flavored, &kx, &ky, &x, &y, &fx, &gy),
            )?;
            write_metrics_csv(&out_dir.join("summary.csv"), &rows)?;
            written.push("summary.csv".to_string());
        }
        other => {
            return Err(GmmdError::InvalidConfig(format!(
                "report supports train and gw runs, found command '{other}'"
            )));
        }
    }

    for name in &written {
        println!("wrote {}", out_dir.join(name).display());
    }
    Ok(())
}

// ============================================================================
// Tests
// ============================================================================
