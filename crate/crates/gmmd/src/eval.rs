//! Evaluation utilities: scoring trained or coupling-derived maps, parameter
//! sweeps, a sample-size convergence smoke test, and the shared metrics CSV
//! format.
//!
//! Evaluation reports the squared MMD (the V-statistic itself, the scale on
//! which two-sample discrepancies are conventionally tabulated) regardless of
//! which power the training objective used, and the distortion under the
//! ground metric selected by the config. Cycle columns measure raw Euclidean
//! round-trip error `mean ||x - g(f(x))||`; they need composable maps, so
//! coupling-based evaluations report them as NaN.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::cloud::{format_f64, PointCloud};
use crate::distortion::{delta_total, DistortionBreakdown};
use crate::error::{GmmdError, Result};
use crate::fsio;
use crate::gw::{barycentric_maps, entropic_gw_uniform, GwConfig};
use crate::kernels::{distance_matrix, KernelSpec, Metric};
use crate::mmd::mmd_squared_biased;
use crate::nnmap::MapModel;
use crate::train::{derive_kernels, gmmd_loss, train, GmmdConfig};

// ============================================================================
// Map evaluation
// ============================================================================

/// Quality scores for a pair of maps between two clouds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapEvaluation {
    /// Squared MMD (biased V-statistic) between `g(Y)` and `X` under the
    /// X-space kernel.
    pub mmd_x: f64,
    /// Squared MMD (biased V-statistic) between `f(X)` and `Y` under the
    /// Y-space kernel.
    pub mmd_y: f64,
    pub distortion: DistortionBreakdown,
    /// Mean Euclidean `||x - g(f(x))||`; NaN when maps cannot be composed.
    pub cycle_x: f64,
    /// Mean Euclidean `||y - f(g(y))||`; NaN when maps cannot be composed.
    pub cycle_y: f64,
    pub n_x: usize,
    pub n_y: usize,
}

fn mean_row_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.n() != b.n() {
        return Err(GmmdError::SizeMismatch {
            left: a.n(),
            right: b.n(),
            context: "cycle comparison rows",
        });
    }
    if a.dim() != b.dim() {
        return Err(GmmdError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
            context: "cycle comparison columns",
        });
    }
    let mut total = 0.0;
    for i in 0..a.n() {
        let (p, q) = (a.point(i), b.point(i));
        let sq: f64 = p.iter().zip(q).map(|(u, v)| (u - v) * (u - v)).sum();
        total += sq.sqrt();
    }
    Ok(total / a.n() as f64)
}

/// Scores already-mapped clouds (`fx = f(X)`, `gy = g(Y)`) against the given
/// kernels. Cycle columns are NaN because the underlying maps are unknown.
pub fn evaluate_mapped(
    cfg: &GmmdConfig,
    kx: &KernelSpec,
    ky: &KernelSpec,
    x: &PointCloud,
    y: &PointCloud,
    fx: &PointCloud,
    gy: &PointCloud,
) -> Result<MapEvaluation> {
    let mmd_x = mmd_squared_biased(kx, gy, x)?.max(0.0);
    let mmd_y = mmd_squared_biased(ky, fx, y)?.max(0.0);
    let distortion = delta_total(&cfg.metric_for(kx), &cfg.metric_for(ky), x, y, fx, gy)?;
    Ok(MapEvaluation {
        mmd_x,
        mmd_y,
        distortion,
        cycle_x: f64::NAN,
        cycle_y: f64::NAN,
        n_x: x.n(),
        n_y: y.n(),
    })
}

/// Scores map models on a pair of clouds, including round-trip cycle errors.
/// Passing clouds the models were not trained on measures generalization;
/// the kernels are the caller's choice (training kernels for in-sample
/// scores, freshly derived ones for held-out samples).
pub fn evaluate_models(
    cfg: &GmmdConfig,
    kx: &KernelSpec,
    ky: &KernelSpec,
    x: &PointCloud,
    y: &PointCloud,
    f: &MapModel,
    g: &MapModel,
) -> Result<MapEvaluation> {
    let fx = f.map_cloud(x)?;
    let gy = g.map_cloud(y)?;
    let mut eval = evaluate_mapped(cfg, kx, ky, x, y, &fx, &gy)?;
    let round_x = g.map_cloud(&fx)?;
    let round_y = f.map_cloud(&gy)?;
    eval.cycle_x = mean_row_distance(x, &round_x)?;
    eval.cycle_y = mean_row_distance(y, &round_y)?;
    Ok(eval)
}

// ============================================================================
// Metrics CSV
// ============================================================================

/// One row of the shared metrics table: a method/parameter pair and its
/// scores on some evaluation pair of clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    /// Method parameter: the MMD weight lambda for trained maps, the
    /// regularization epsilon for couplings.
    pub param: f64,
    /// Final training objective or coupling cost.
    pub objective: f64,
    pub mmd_x: f64,
    pub mmd_y: f64,
    /// Total distortion (all three terms).
    pub delta: f64,
    pub cycle_x: f64,
    pub cycle_y: f64,
    /// Evaluation sample size (the larger side when the clouds differ).
    pub n_eval: usize,
    /// Wall-clock seconds spent producing the maps (not the evaluation).
    pub seconds: f64,
}

impl MetricsRow {
    pub fn from_evaluation(
        method: &str,
        param: f64,
        objective: f64,
        eval: &MapEvaluation,
        seconds: f64,
    ) -> Self {
        Self {
            method: method.to_string(),
            param,
            objective,
            mmd_x: eval.mmd_x,
            mmd_y: eval.mmd_y,
            delta: eval.distortion.total,
            cycle_x: eval.cycle_x,
            cycle_y: eval.cycle_y,
            n_eval: eval.n_x.max(eval.n_y),
            seconds,
        }
    }
}

pub const METRICS_HEADER: &str =
    "method,param,objective,mmd_x,mmd_y,delta,cycle_x,cycle_y,n_eval,seconds";

/// Formats one metrics row; floats use round-trip-exact scientific notation.
pub fn format_metrics_row(row: &MetricsRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        row.method,
        format_f64(row.param),
        format_f64(row.objective),
        format_f64(row.mmd_x),
        format_f64(row.mmd_y),
        format_f64(row.delta),
        format_f64(row.cycle_x),
        format_f64(row.cycle_y),
        row.n_eval,
        format_f64(row.seconds),
    )
}

/// Writes a fresh metrics CSV (header plus rows) atomically.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&format_metrics_row(row));
        text.push('\n');
    }
    fsio::write_atomic(path, text.as_bytes())
}

/// Appends rows to a metrics CSV, creating it (with header) if missing.
/// The rewrite is atomic.
pub fn append_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut text = if path.exists() {
        fsio::read_to_string(path)?
    } else {
        let mut t = String::from(METRICS_HEADER);
        t.push('\n');
        t
    };
    if !text.ends_with('\n') {
        text.push('\n');
    }
    for row in rows {
        text.push_str(&format_metrics_row(row));
        text.push('\n');
    }
    fsio::write_atomic(path, text.as_bytes())
}

// ============================================================================
// Parameter sweeps
// ============================================================================

/// One sweep entry: the parameter value, the scores, the raw objective, and
/// the wall-clock cost of producing the maps.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub param: f64,
    pub objective: f64,
    pub evaluation: MapEvaluation,
    pub seconds: f64,
}

/// Trains map pairs for each MMD weight (`lambda_x = lambda_y = lambda`) and
/// scores them in-sample. Points run in parallel; results keep input order.
pub fn sweep_gmmd(
    x: &PointCloud,
    y: &PointCloud,
    base: &GmmdConfig,
    lambdas: &[f64],
) -> Result<Vec<SweepPoint>> {
    if lambdas.is_empty() {
        return Err(GmmdError::EmptyInput("lambda sweep values"));
    }
    lambdas
        .par_iter()
        .map(|&lambda| {
            let cfg = GmmdConfig {
                lambda_x: lambda,
                lambda_y: lambda,
                ..base.clone()
            };
            let clock = Instant::now();
            let out = train(x, y, &cfg)?;
            let seconds = clock.elapsed().as_secs_f64();
            let evaluation =
                evaluate_models(&cfg, &out.kernel_x, &out.kernel_y, x, y, &out.f, &out.g)?;
            // Full-data objective of the trained pair (the last epoch's
            // minibatch average lives in the history instead).
            let objective =
                gmmd_loss(&cfg, &out.kernel_x, &out.kernel_y, x, y, &out.f, &out.g)?.total;
            Ok(SweepPoint {
                param: lambda,
                objective,
                evaluation,
                seconds,
            })
        })
        .collect()
}

/// Solves the entropic coupling for each regularization strength, converts it
/// to barycentric maps, and scores those. Distance matrices are Euclidean;
/// the scoring kernels/metric come from `eval_cfg` exactly as for trained
/// maps, so rows are comparable across methods.
pub fn sweep_gw(
    x: &PointCloud,
    y: &PointCloud,
    base: &GwConfig,
    epsilons: &[f64],
    eval_cfg: &GmmdConfig,
) -> Result<Vec<SweepPoint>> {
    if epsilons.is_empty() {
        return Err(GmmdError::EmptyInput("epsilon sweep values"));
    }
    let cx = distance_matrix(&Metric::Euclidean, x, x)?;
    let cy = distance_matrix(&Metric::Euclidean, y, y)?;
    let (kx, ky) = derive_kernels(x, y, eval_cfg)?;
    epsilons
        .par_iter()
        .map(|&epsilon| {
            let cfg = GwConfig {
                epsilon,
                ..*base
            };
            let clock = Instant::now();
            let out = entropic_gw_uniform(&cx, &cy, &cfg)?;
            let (fx, gy) = barycentric_maps(&out.coupling, x, y)?;
            let seconds = clock.elapsed().as_secs_f64();
            let evaluation = evaluate_mapped(eval_cfg, &kx, &ky, x, y, &fx, &gy)?;
            Ok(SweepPoint {
                param: epsilon,
                objective: out.cost,
                evaluation,
                seconds,
            })
        })
        .collect()
}

// ============================================================================
// Sample-size convergence smoke test
// ============================================================================

/// Result of [`convergence_smoke`]: per-size median deviations of the
/// subsampled objective from its large-sample reference, and the fitted
/// log-log slope (Monte Carlo theory predicts about -1/2).
#[derive(Debug, Clone)]
pub struct ConvergenceSmoke {
    pub sizes: Vec<usize>,
    pub median_deviation: Vec<f64>,
    pub slope: f64,
}

/// Measures how fast the empirical objective for FIXED maps `f`, `g`
/// approaches its large-sample value as the evaluation sample grows.
///
/// For each seed, a reference pair of clouds of size `n_ref` pins down the
/// near-population objective once; each smaller size then draws fresh clouds
/// and records `|L_n - L_ref|`. Kernels are fixed by the caller so every
/// evaluation measures the same functional. Seeds run in parallel.
#[allow(clippy::too_many_arguments)] // generators + fixed maps/kernels + sampling plan
pub fn convergence_smoke<GX, GY>(
    gen_x: GX,
    gen_y: GY,
    f: &MapModel,
    g: &MapModel,
    cfg: &GmmdConfig,
    kx: &KernelSpec,
    ky: &KernelSpec,
    sizes: &[usize],
    n_ref: usize,
    seeds: &[u64],
) -> Result<ConvergenceSmoke>
where
    GX: Fn(usize, u64) -> Result<PointCloud> + Sync,
    GY: Fn(usize, u64) -> Result<PointCloud> + Sync,
{
    if sizes.len() < 2 {
        return Err(GmmdError::InvalidParameter {
            name: "sizes",
            message: "need at least two sizes to fit a slope".to_string(),
        });
    }
    if seeds.is_empty() {
        return Err(GmmdError::EmptyInput("convergence seeds"));
    }
    if sizes.iter().any(|&n| n == 0 || n >= n_ref) {
        return Err(GmmdError::InvalidParameter {
            name: "sizes",
            message: format!("sizes must be positive and below n_ref = {n_ref}"),
        });
    }

    let loss_on = |xs: &PointCloud, ys: &PointCloud| -> Result<f64> {
        let fx = f.map_cloud(xs)?;
        let gy = g.map_cloud(ys)?;
        Ok(crate::train::gmmd_loss_from_mapped(cfg, kx, ky, xs, ys, &fx, &gy)?.total)
    };
    // Distinct sub-seed per drawn cloud, derived from the seed and a tag.
    let sub_seed = |base: u64, tag: u64| base.wrapping_mul(1_000_003).wrapping_add(tag);

    // seeds x sizes deviation table, one row per seed.
    let table: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&base| {
            let ref_x = gen_x(n_ref, sub_seed(base, 0))?;
            let ref_y = gen_y(n_ref, sub_seed(base, 1))?;
            let l_ref = loss_on(&ref_x, &ref_y)?;
            let mut row = Vec::with_capacity(sizes.len());
            for (i, &n) in sizes.iter().enumerate() {
                let xs = gen_x(n, sub_seed(base, 2 + 2 * i as u64))?;
                let ys = gen_y(n, sub_seed(base, 3 + 2 * i as u64))?;
                row.push((loss_on(&xs, &ys)? - l_ref).abs());
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut median_deviation = Vec::with_capacity(sizes.len());
    for i in 0..sizes.len() {
        let mut col: Vec<f64> = table.iter().map(|row| row[i]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite deviations"));
        let mid = col.len() / 2;
        let median = if col.len() % 2 == 1 {
            col[mid]
        } else {
            0.5 * (col[mid - 1] + col[mid])
        };
        median_deviation.push(median);
    }

    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let slope = fit_loglog_slope(&xs, &median_deviation)?;
    Ok(ConvergenceSmoke {
        sizes: sizes.to_vec(),
        median_deviation,
        slope,
    })
}

/// Least-squares slope of `ln y` against `ln x`. All entries must be
/// strictly positive.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(GmmdError::SizeMismatch {
            left: xs.len(),
            right: ys.len(),
            context: "log-log fit lengths",
        });
    }
    if xs.len() < 2 {
        return Err(GmmdError::InvalidParameter {
            name: "points",
            message: "need at least two points to fit a slope".to_string(),
        });
    }
    if xs.iter().chain(ys.iter()).any(|&v| !v.is_finite() || v <= 0.0) {
        return Err(GmmdError::InvalidParameter {
            name: "points",
            message: "log-log fit needs finite positive coordinates".to_string(),
        });
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..lx.len() {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    if den == 0.0 {
        return Err(GmmdError::InvalidParameter {
            name: "points",
            message: "log-log fit needs at least two distinct x values".to_string(),
        });
    }
    Ok(num / den)
}

// ============================================================================
// Tests
// ============================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{rotate, sample_heart, unit_circle};
    use crate::train::MetricMode;

    fn quick_cfg() -> GmmdConfig {
        GmmdConfig {
            epochs: 20,
            batch_size: 32,
            hidden_dims: vec![8],
            lr: 1e-2,
            ..GmmdConfig::default()
        }
    }

    #[test]
    fn identity_maps_on_identical_clouds_score_zero() {
        let x = unit_circle(14).unwrap();
        let cfg = GmmdConfig::default();
        let (kx, ky) = derive_kernels(&x, &x, &cfg).unwrap();
        let id = MapModel::Identity { dim: 2 };
        let eval = evaluate_models(&cfg, &kx, &ky, &x, &x, &id, &id).unwrap();
        assert_eq!(eval.mmd_x, 0.0);
        assert_eq!(eval.mmd_y, 0.0);
        assert_eq!(eval.distortion.total, 0.0);
        assert_eq!(eval.cycle_x, 0.0);
        assert_eq!(eval.cycle_y, 0.0);
        assert_eq!(eval.n_x, 14);
    }

    #[test]
    fn planted_rotation_pair_scores_near_zero_with_tiny_cycles() {
        let x = sample_heart(40, 5, 0.0).unwrap();
        let theta = 0.9;
        let f = rotate(theta).unwrap();
        let g = rotate(-theta).unwrap();
        let y = f.map_cloud(&x).unwrap();
        let cfg = GmmdConfig {
            metric_mode: MetricMode::Euclidean,
            ..GmmdConfig::default()
        };
        let (kx, ky) = derive_kernels(&x, &y, &cfg).unwrap();
        let eval = evaluate_models(&cfg, &kx, &ky, &x, &y, &f, &g).unwrap();
        assert!(eval.mmd_x < 1e-6, "mmd_x {}", eval.mmd_x);
        assert!(eval.mmd_y < 1e-6, "mmd_y {}", eval.mmd_y);
        assert!(eval.distortion.total < 1e-9);
        assert!(eval.cycle_x < 1e-12, "cycle_x {}", eval.cycle_x);
        assert!(eval.cycle_y < 1e-12, "cycle_y {}", eval.cycle_y);
    }

    #[test]
    fn mapped_evaluation_reports_nan_cycles() {
        let x = unit_circle(10).unwrap();
        let y = unit_circle(12).unwrap();
        let cfg = GmmdConfig::default();
        let (kx, ky) = derive_kernels(&x, &y, &cfg).unwrap();
        let eval = evaluate_mapped(&cfg, &kx, &ky, &x, &y, &x, &y).unwrap();
        assert!(eval.cycle_x.is_nan());
        assert!(eval.cycle_y.is_nan());
        assert!(eval.mmd_x.is_finite());
    }

    #[test]
    fn metrics_rows_format_deterministically_and_round_trip() {
        let row = MetricsRow {
            method: "gmmd".to_string(),
            param: 0.064,
            objective: 0.123456789,
            mmd_x: 1e-3,
            mmd_y: 2e-3,
            delta: 0.5,
            cycle_x: f64::NAN,
            cycle_y: 0.25,
            n_eval: 500,
            seconds: 12.5,
        };
        let line = format_metrics_row(&row);
        assert_eq!(line, format_metrics_row(&row));
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), METRICS_HEADER.split(',').count());
        assert_eq!(fields[0], "gmmd");
        assert_eq!(fields[1].parse::<f64>().unwrap(), 0.064);
        assert!(fields[6].parse::<f64>().unwrap().is_nan());
        assert_eq!(fields[8], "500");
    }

    #[test]
    fn metrics_csv_write_and_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let row = MetricsRow {
            method: "gw".to_string(),
            param: 5e-4,
            objective: 0.01,
            mmd_x: 0.1,
            mmd_y: 0.2,
            delta: 0.3,
            cycle_x: f64::NAN,
            cycle_y: f64::NAN,
            n_eval: 10,
            seconds: 1.0,
        };
        write_metrics_csv(&path, std::slice::from_ref(&row)).unwrap();
        append_metrics_csv(&path, std::slice::from_ref(&row)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[1], lines[2]);
    }

    #[test]
    fn gmmd_sweep_returns_points_in_input_order() {
        let x = unit_circle(16).unwrap();
        let y = unit_circle(16).unwrap();
        let lambdas = [0.01, 0.064, 0.5];
        let points = sweep_gmmd(&x, &y, &quick_cfg(), &lambdas).unwrap();
        assert_eq!(points.len(), 3);
        for (p, &l) in points.iter().zip(lambdas.iter()) {
            assert_eq!(p.param, l);
            assert!(p.objective.is_finite());
            assert!(p.evaluation.cycle_x.is_finite());
            assert!(p.seconds >= 0.0);
        }
    }

    #[test]
    fn gw_sweep_scores_couplings_with_nan_cycles() {
        // An asymmetric cloud coupled with itself: the identity is the unique
        // optimum. (Highly symmetric shapes like evenly spaced circles make
        // the product coupling a fixed point of the projected scheme, so they
        // are deliberately avoided here.)
        let x = sample_heart(12, 0, 0.0).unwrap();
        let y = x.clone();
        let base = GwConfig {
            max_outer: 20,
            max_sinkhorn: 500,
            ..GwConfig::default()
        };
        let points = sweep_gw(&x, &y, &base, &[1e-2, 1e-3], &GmmdConfig::default()).unwrap();
        assert_eq!(points.len(), 2);
        for p in &points {
            assert!(p.objective.is_finite());
            assert!(p.evaluation.cycle_x.is_nan());
            assert!(p.evaluation.mmd_x.is_finite());
        }
        // A good coupling of a space with itself keeps the GW cost small.
        assert!(points[1].objective < 1e-2, "cost {}", points[1].objective);
    }

    #[test]
    fn loglog_slope_recovers_planted_exponents() {
        let xs: [f64; 4] = [50.0, 100.0, 200.0, 400.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-0.5)).collect();
        let slope = fit_loglog_slope(&xs, &ys).unwrap();
        assert!((slope - (-0.5)).abs() < 1e-12);
        let ys2: Vec<f64> = xs.iter().map(|x| 0.2 * x.powf(1.25)).collect();
        assert!((fit_loglog_slope(&xs, &ys2).unwrap() - 1.25).abs() < 1e-12);
        assert!(fit_loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(fit_loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn convergence_smoke_sees_monte_carlo_decay_for_planted_maps() {
        // Fixed rotation pair between a heart and its rotated copy; the
        // only randomness is the evaluation sample.
        let theta = std::f64::consts::PI / 3.0;
        let f = rotate(theta).unwrap();
        let g = rotate(-theta).unwrap();
        let cfg = GmmdConfig {
            multipliers: vec![0.25, 1.0, 4.0],
            ..GmmdConfig::default()
        };
        let probe_x = sample_heart(400, 0, 0.0).unwrap();
        let probe_y = rotate(theta)
            .unwrap()
            .map_cloud(&sample_heart(400, 1, 0.0).unwrap())
            .unwrap();
        let (kx, ky) = derive_kernels(&probe_x, &probe_y, &cfg).unwrap();

        let gen_x = |n: usize, seed: u64| sample_heart(n, seed, 0.0);
        let gen_y = |n: usize, seed: u64| {
            rotate(theta)?.map_cloud(&sample_heart(n, seed, 0.0)?)
        };
        let sizes = [25, 50, 100, 200];
        let seeds: Vec<u64> = (0..10).collect();
        let smoke = convergence_smoke(
            gen_x, gen_y, &f, &g, &cfg, &kx, &ky, &sizes, 2000, &seeds,
        )
        .unwrap();
        assert_eq!(smoke.median_deviation.len(), 4);
        assert!(smoke.median_deviation.iter().all(|d| d.is_finite() && *d > 0.0));
        // Deviations shrink with sample size; the fitted exponent sits in a
        // generous Monte Carlo band around -1/2.
        assert!(
            smoke.median_deviation[3] < smoke.median_deviation[0],
            "{:?}",
            smoke.median_deviation
        );
        assert!(
            (-1.2..=-0.2).contains(&smoke.slope),
            "slope {} deviations {:?}",
            smoke.slope,
            smoke.median_deviation
        );
    }
}
