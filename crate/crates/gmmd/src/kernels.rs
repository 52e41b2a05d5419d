//! Gaussian-mixture kernels, their induced metrics, and bandwidth selection.
//!
//! The kernel is an equal-weight mixture of Gaussians
//!
//! ```text
//! k(x, y) = (1/K) * sum_i exp(-||x - y||^2 / (2 * sigma_i^2))
//! ```
//!
//! Every component has unit peak, so `k(x, x) = 1` and
//! `rho(x, y) = sqrt(2 - 2 k(x, y))` is a metric (the RKHS distance between
//! the feature embeddings of `x` and `y`). Bandwidths come from the median
//! heuristic: the median pairwise distance of a (possibly subsampled) cloud,
//! scaled by a list of multipliers.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cloud::PointCloud;
use crate::error::{GmmdError, Result};

/// Bandwidth multipliers used when none are configured explicitly; they span
/// seven orders of magnitude so at least one component stays informative at
/// any scale the optimizer visits.
pub const DEFAULT_MULTIPLIERS: [f64; 10] = [
    0.0001, 0.001, 0.01, 0.05, 0.25, 1.0, 4.0, 20.0, 100.0, 1000.0,
];

/// Distances below this are treated as zero when dividing by a distance in
/// metric gradients (subgradient 0 at coincident points).
pub(crate) const DIST_GUARD: f64 = 1e-10;

/// An equal-weight Gaussian-mixture kernel, described by its component
/// bandwidths (all finite and strictly positive, at least one).
///
/// Serializes as the bare bandwidth list; deserialization re-validates.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct KernelSpec {
    bandwidths: Vec<f64>,
}

impl TryFrom<Vec<f64>> for KernelSpec {
    type Error = String;

    fn try_from(bandwidths: Vec<f64>) -> std::result::Result<Self, String> {
        Self::new(bandwidths).map_err(|e| e.to_string())
    }
}

impl From<KernelSpec> for Vec<f64> {
    fn from(spec: KernelSpec) -> Self {
        spec.bandwidths
    }
}

impl KernelSpec {
    pub fn new(bandwidths: Vec<f64>) -> Result<Self> {
        if bandwidths.is_empty() {
            return Err(GmmdError::EmptyInput("kernel bandwidth list"));
        }
        for &b in &bandwidths {
            if !b.is_finite() || b <= 0.0 {
                return Err(GmmdError::InvalidParameter {
                    name: "bandwidth",
                    message: format!("must be finite and positive, got {b}"),
                });
            }
        }
        Ok(Self { bandwidths })
    }

    /// Single-component convenience constructor.
    pub fn single(sigma: f64) -> Result<Self> {
        Self::new(vec![sigma])
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }
}

// ============================================================================
// Scalar evaluation core
// ============================================================================

/// Precomputed coefficients for fast repeated kernel evaluation.
///
/// `k(s) = inv_k * sum_i exp(-s * coef_i)` where `s` is a squared distance
/// and `coef_i = 1 / (2 sigma_i^2)`.
#[derive(Debug, Clone)]
pub(crate) struct KernelEval {
    coef: Vec<f64>,
    inv_k: f64,
}

impl KernelEval {
    pub(crate) fn new(spec: &KernelSpec) -> Self {
        let coef = spec
            .bandwidths
            .iter()
            .map(|s| 1.0 / (2.0 * s * s))
            .collect::<Vec<_>>();
        let inv_k = 1.0 / spec.bandwidths.len() as f64;
        Self { coef, inv_k }
    }

    /// Kernel value from a squared distance.
    #[inline]
    pub(crate) fn k_of_sqdist(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for &c in &self.coef {
            acc += (-s * c).exp();
        }
        acc * self.inv_k
    }

    /// Kernel value and the scalar `w(s) = (2/K) * sum_i c_i exp(-s c_i)`
    /// such that `d k / d x = -w * (x - y)` (used by metric and MMD
    /// gradients).
    #[inline]
    pub(crate) fn k_and_weight(&self, s: f64) -> (f64, f64) {
        let mut k = 0.0;
        let mut w = 0.0;
        for &c in &self.coef {
            let e = (-s * c).exp();
            k += e;
            w += c * e;
        }
        (k * self.inv_k, 2.0 * w * self.inv_k)
    }

    /// Induced metric value from a squared distance.
    #[inline]
    pub(crate) fn rho_of_sqdist(&self, s: f64) -> f64 {
        let radicand = 2.0 - 2.0 * self.k_of_sqdist(s);
        radicand.max(0.0).sqrt()
    }
}

/// Squared Euclidean distance of two equal-length slices.
#[inline]
pub(crate) fn sqdist(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = 0.0;
    for i in 0..x.len() {
        let d = x[i] - y[i];
        acc += d * d;
    }
    acc
}

fn check_same_len(x: &[f64], y: &[f64], context: &'static str) -> Result<()> {
    if x.len() != y.len() {
        return Err(GmmdError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
            context,
        });
    }
    Ok(())
}

fn check_same_dim(a: &PointCloud, b: &PointCloud, context: &'static str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(GmmdError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
            context,
        });
    }
    Ok(())
}

// ============================================================================
// Public kernel operations
// ============================================================================

/// Mixture-kernel value `k(x, y)`.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_same_len(x, y, "kernel_eval points")?;
    Ok(KernelEval::new(spec).k_of_sqdist(sqdist(x, y)))
}

/// Dense Gram matrix `G[i][j] = k(a_i, b_j)`; entries are computed by exactly
/// the same scalar routine as [`kernel_eval`].
pub fn gram_matrix(spec: &KernelSpec, a: &PointCloud, b: &PointCloud) -> Result<Array2<f64>> {
    check_same_dim(a, b, "gram_matrix clouds")?;
    let ev = KernelEval::new(spec);
    let mut out = Array2::zeros((a.n(), b.n()));
    for i in 0..a.n() {
        let ai = a.point(i);
        for j in 0..b.n() {
            out[[i, j]] = ev.k_of_sqdist(sqdist(ai, b.point(j)));
        }
    }
    Ok(out)
}

/// Kernel-induced metric `rho(x, y) = sqrt(max(2 - 2 k(x, y), 0))`; the
/// radicand is clamped so rounding can never produce a NaN.
pub fn induced_metric(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_same_len(x, y, "induced_metric points")?;
    Ok(KernelEval::new(spec).rho_of_sqdist(sqdist(x, y)))
}

/// Dense matrix of induced distances `D[i][j] = rho(a_i, b_j)`.
pub fn induced_distance_matrix(
    spec: &KernelSpec,
    a: &PointCloud,
    b: &PointCloud,
) -> Result<Array2<f64>> {
    check_same_dim(a, b, "induced_distance_matrix clouds")?;
    let ev = KernelEval::new(spec);
    let mut out = Array2::zeros((a.n(), b.n()));
    for i in 0..a.n() {
        let ai = a.point(i);
        for j in 0..b.n() {
            out[[i, j]] = ev.rho_of_sqdist(sqdist(ai, b.point(j)));
        }
    }
    Ok(out)
}

/// Dense matrix of pairwise distances `D[i][j] = d(a_i, b_j)` under either
/// supported ground metric.
pub fn distance_matrix(metric: &Metric, a: &PointCloud, b: &PointCloud) -> Result<Array2<f64>> {
    check_same_dim(a, b, "distance_matrix clouds")?;
    match metric {
        Metric::KernelInduced(spec) => induced_distance_matrix(spec, a, b),
        Metric::Euclidean => {
            let mut out = Array2::zeros((a.n(), b.n()));
            for i in 0..a.n() {
                let ai = a.point(i);
                for j in 0..b.n() {
                    out[[i, j]] = sqdist(ai, b.point(j)).sqrt();
                }
            }
            Ok(out)
        }
    }
}

// ============================================================================
// Metric abstraction
// ============================================================================

/// Ground metric used by distortion penalties and bandwidth selection: either
/// plain Euclidean distance or the kernel-induced metric of a mixture kernel.
/// Both variants are differentiable away from coincident points.
#[derive(Debug, Clone)]
pub enum Metric {
    Euclidean,
    KernelInduced(KernelSpec),
}

impl Metric {
    /// Distance between two points (equal dimensions assumed; public entry
    /// points validate dimensions before looping).
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => sqdist(x, y).sqrt(),
            Metric::KernelInduced(spec) => KernelEval::new(spec).rho_of_sqdist(sqdist(x, y)),
        }
    }

    /// Gradient of `d(x, y)` with respect to `x`, written into `out`. At
    /// (numerically) coincident points the gradient is defined as zero.
    pub fn grad_first(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let ev = match self {
            Metric::Euclidean => None,
            Metric::KernelInduced(spec) => Some(KernelEval::new(spec)),
        };
        grad_first_with(self, ev.as_ref(), x, y, out);
    }
}

/// Evaluation helper that reuses a prepared [`KernelEval`] across many calls;
/// `ev` must match the metric variant (`Some` iff kernel-induced).
#[inline]
pub(crate) fn eval_with(metric: &Metric, ev: Option<&KernelEval>, x: &[f64], y: &[f64]) -> f64 {
    match metric {
        Metric::Euclidean => sqdist(x, y).sqrt(),
        Metric::KernelInduced(_) => ev
            .expect("kernel evaluator prepared for kernel-induced metric")
            .rho_of_sqdist(sqdist(x, y)),
    }
}

/// Gradient twin of [`eval_with`]; writes `d d(x, y) / d x` into `out`.
#[inline]
pub(crate) fn grad_first_with(
    metric: &Metric,
    ev: Option<&KernelEval>,
    x: &[f64],
    y: &[f64],
    out: &mut [f64],
) {
    debug_assert_eq!(x.len(), y.len());
    debug_assert_eq!(x.len(), out.len());
    let s = sqdist(x, y);
    match metric {
        Metric::Euclidean => {
            let d = s.sqrt();
            if d < DIST_GUARD {
                out.fill(0.0);
            } else {
                let inv = 1.0 / d;
                for i in 0..x.len() {
                    out[i] = (x[i] - y[i]) * inv;
                }
            }
        }
        Metric::KernelInduced(_) => {
            let ev = ev.expect("kernel evaluator prepared for kernel-induced metric");
            let rho = ev.rho_of_sqdist(s);
            if rho < DIST_GUARD {
                out.fill(0.0);
            } else {
                // rho^2 = 2 - 2 k  =>  d rho / d x = -(d k / d x) / rho
                // and d k / d x = -w(s) (x - y).
                let (_, w) = ev.k_and_weight(s);
                let scale = w / rho;
                for i in 0..x.len() {
                    out[i] = (x[i] - y[i]) * scale;
                }
            }
        }
    }
}

pub(crate) fn kernel_eval_for(metric: &Metric) -> Option<KernelEval> {
    match metric {
        Metric::Euclidean => None,
        Metric::KernelInduced(spec) => Some(KernelEval::new(spec)),
    }
}

// ============================================================================
// Median-heuristic bandwidths
// ============================================================================

/// Median of a list (average of the two middle elements for even lengths).
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Builds a mixture kernel whose bandwidths are `median * multiplier` for
/// each multiplier, where `median` is the median pairwise `base` distance
/// over at most `subsample_cap` points chosen uniformly (seeded, without
/// replacement). If the median is zero (all points coincide, or a single
/// point), the bandwidths fall back to the multipliers themselves.
pub fn median_bandwidths(
    cloud: &PointCloud,
    base: &Metric,
    multipliers: &[f64],
    subsample_cap: usize,
    seed: u64,
) -> Result<KernelSpec> {
    if multipliers.is_empty() {
        return Err(GmmdError::EmptyInput("bandwidth multiplier list"));
    }
    for &m in multipliers {
        if !m.is_finite() || m <= 0.0 {
            return Err(GmmdError::InvalidParameter {
                name: "bandwidth_multiplier",
                message: format!("must be finite and positive, got {m}"),
            });
        }
    }
    if subsample_cap == 0 {
        return Err(GmmdError::InvalidParameter {
            name: "subsample_cap",
            message: "must be at least 1".to_string(),
        });
    }
    let n = cloud.n();
    let chosen: Vec<usize> = if n > subsample_cap {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        idx.truncate(subsample_cap);
        idx
    } else {
        (0..n).collect()
    };

    let ev = kernel_eval_for(base);
    let mut dists = Vec::with_capacity(chosen.len() * (chosen.len().saturating_sub(1)) / 2);
    for (a, &i) in chosen.iter().enumerate() {
        let pi = cloud.point(i);
        for &j in chosen.iter().skip(a + 1) {
            dists.push(eval_with(base, ev.as_ref(), pi, cloud.point(j)));
        }
    }

    let med = if dists.is_empty() { 0.0 } else { median(&mut dists) };
    let bandwidths: Vec<f64> = if med > 0.0 {
        multipliers.iter().map(|m| med * m).collect()
    } else {
        multipliers.to_vec()
    };
    KernelSpec::new(bandwidths)
}

// ============================================================================
// Tests
// ============================================================================
