//! The bidirectional-map training loop.
//!
//! The objective couples two point clouds `X` (n points) and `Y` (m points)
//! through a forward map `f : X-space -> Y-space` and a backward map
//! `g : Y-space -> X-space`:
//!
//! ```text
//! L(f, g) = lambda_x * MMD_X(g(Y), X) + lambda_y * MMD_Y(f(X), Y)
//!         + delta_x(f) + delta_y(g) + delta_xy(f, g)
//! ```
//!
//! `MMD_X` uses a mixture kernel fitted to `X` by the median heuristic (and
//! `MMD_Y` one fitted to `Y`); the three distortion terms compare pairwise
//! distances before and after mapping and tie the two maps together. The
//! objective is symmetric under swapping the roles of the spaces (with
//! `f <-> g`) whenever `lambda_x == lambda_y`, and the implementation keeps
//! that symmetry exactly up to floating-point summation order: both maps are
//! initialized from the same seed and both kernels derive their median from
//! the same subsample seed.
//!
//! Each epoch makes one pass over the larger cloud in mini-batches; the
//! smaller cloud cycles with reshuffling. Both maps are updated by Adam from
//! gradients of a single shared loss evaluation per batch.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::distortion::{delta_total_with_grads, DistortionBreakdown};
use crate::error::{GmmdError, Result};
use crate::kernels::{median_bandwidths, KernelSpec, Metric, DEFAULT_MULTIPLIERS};
use crate::mmd::{mmd, mmd_squared_biased, mmd_squared_with_grad, mmd_with_grad};
use crate::nnmap::{adam_step, mlp_init, AdamParams, AdamState, MapModel};

// ============================================================================
// Configuration
// ============================================================================

/// Which metric the distortion terms use inside each space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    /// Plain Euclidean distances.
    Euclidean,
    /// The bounded metric induced by each space's mixture kernel,
    /// `rho(x, y) = sqrt(2 - 2 k(x, y))`.
    KernelInduced,
}

/// Whether the MMD terms enter the loss unsquared or squared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdPower {
    One,
    Two,
}

/// Training hyperparameters. `Default` gives the reference settings; partial
/// JSON configs deserialize with the remaining fields defaulted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmmdConfig {
    /// Weight of the X-side MMD term.
    pub lambda_x: f64,
    /// Weight of the Y-side MMD term.
    pub lambda_y: f64,
    /// Adam learning rate.
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds model initialization, bandwidth subsampling, and batch order.
    pub seed: u64,
    /// Bandwidth = median pairwise distance times each multiplier.
    #[serde(rename = "bandwidth_multipliers")]
    pub multipliers: Vec<f64>,
    /// Hidden-layer widths of both MLPs (empty = single linear layer).
    pub hidden_dims: Vec<usize>,
    pub metric_mode: MetricMode,
    pub mmd_power: MmdPower,
    /// At most this many points enter the median-distance computation.
    pub median_subsample_cap: usize,
    /// Optimizer moment constants; fixed at their standard values and not
    /// part of the JSON config surface (configs stay flat scalars/lists).
    #[serde(skip)]
    pub adam: AdamParams,
}

impl Default for GmmdConfig {
    fn default() -> Self {
        Self {
            lambda_x: 0.064,
            lambda_y: 0.064,
            lr: 1e-3,
            epochs: 3000,
            batch_size: 256,
            seed: 0,
            multipliers: DEFAULT_MULTIPLIERS.to_vec(),
            hidden_dims: vec![200, 200, 200],
            metric_mode: MetricMode::KernelInduced,
            mmd_power: MmdPower::One,
            median_subsample_cap: 1000,
            adam: AdamParams::default(),
        }
    }
}

impl GmmdConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_x", self.lambda_x), ("lambda_y", self.lambda_y)] {
            if !v.is_finite() || v < 0.0 {
                return Err(GmmdError::InvalidParameter {
                    name,
                    message: format!("must be finite and non-negative, got {v}"),
                });
            }
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(GmmdError::InvalidParameter {
                name: "lr",
                message: format!("must be finite and positive, got {}", self.lr),
            });
        }
        if self.batch_size == 0 {
            return Err(GmmdError::InvalidParameter {
                name: "batch_size",
                message: "must be at least 1".to_string(),
            });
        }
        if self.median_subsample_cap == 0 {
            return Err(GmmdError::InvalidParameter {
                name: "median_subsample_cap",
                message: "must be at least 1".to_string(),
            });
        }
        if self.multipliers.is_empty() {
            return Err(GmmdError::EmptyInput("bandwidth multiplier list"));
        }
        for &m in &self.multipliers {
            if !m.is_finite() || m <= 0.0 {
                return Err(GmmdError::InvalidParameter {
                    name: "multipliers",
                    message: format!("entries must be finite and positive, got {m}"),
                });
            }
        }
        if self.hidden_dims.contains(&0) {
            return Err(GmmdError::InvalidParameter {
                name: "hidden_dims",
                message: "layer widths must be positive".to_string(),
            });
        }
        for (name, v) in [("adam.beta1", self.adam.beta1), ("adam.beta2", self.adam.beta2)] {
            if !v.is_finite() || !(0.0..1.0).contains(&v) {
                return Err(GmmdError::InvalidParameter {
                    name,
                    message: format!("must lie in [0, 1), got {v}"),
                });
            }
        }
        if !self.adam.eps.is_finite() || self.adam.eps <= 0.0 {
            return Err(GmmdError::InvalidParameter {
                name: "adam.eps",
                message: format!("must be finite and positive, got {}", self.adam.eps),
            });
        }
        Ok(())
    }

    /// Distortion metric for a space with the given kernel.
    pub fn metric_for(&self, spec: &KernelSpec) -> Metric {
        match self.metric_mode {
            MetricMode::Euclidean => Metric::Euclidean,
            MetricMode::KernelInduced => Metric::KernelInduced(spec.clone()),
        }
    }
}

/// Median-heuristic mixture kernels for both clouds. Both medians use the
/// same subsample seed so that swapping the clouds swaps the kernels.
pub fn derive_kernels(
    x: &PointCloud,
    y: &PointCloud,
    cfg: &GmmdConfig,
) -> Result<(KernelSpec, KernelSpec)> {
    let kx = median_bandwidths(
        x,
        &Metric::Euclidean,
        &cfg.multipliers,
        cfg.median_subsample_cap,
        cfg.seed,
    )?;
    let ky = median_bandwidths(
        y,
        &Metric::Euclidean,
        &cfg.multipliers,
        cfg.median_subsample_cap,
        cfg.seed,
    )?;
    Ok((kx, ky))
}

// ============================================================================
// Loss
// ============================================================================

/// One evaluation of the objective, split into its terms. `total` already
/// applies the lambda weights:
/// `total = lambda_x * mmd_x + lambda_y * mmd_y + delta_x + delta_y + delta_xy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// MMD between `g(Y)` and `X` under the X-space kernel (power applied).
    pub mmd_x: f64,
    /// MMD between `f(X)` and `Y` under the Y-space kernel (power applied).
    pub mmd_y: f64,
    pub delta_x: f64,
    pub delta_y: f64,
    pub delta_xy: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn delta_total(&self) -> f64 {
        self.delta_x + self.delta_y + self.delta_xy
    }

    fn zero() -> Self {
        Self {
            mmd_x: 0.0,
            mmd_y: 0.0,
            delta_x: 0.0,
            delta_y: 0.0,
            delta_xy: 0.0,
            total: 0.0,
        }
    }
}

fn assemble(cfg: &GmmdConfig, mx: f64, my: f64, d: &DistortionBreakdown) -> LossBreakdown {
    LossBreakdown {
        mmd_x: mx,
        mmd_y: my,
        delta_x: d.delta_x,
        delta_y: d.delta_y,
        delta_xy: d.delta_xy,
        total: cfg.lambda_x * mx + cfg.lambda_y * my + d.total,
    }
}

/// Evaluates the objective given already-mapped clouds `fx = f(X)` and
/// `gy = g(Y)`.
pub fn gmmd_loss_from_mapped(
    cfg: &GmmdConfig,
    kx: &KernelSpec,
    ky: &KernelSpec,
    x: &PointCloud,
    y: &PointCloud,
    fx: &PointCloud,
    gy: &PointCloud,
) -> Result<LossBreakdown> {
    let (mx, my) = match cfg.mmd_power {
        MmdPower::One => (mmd(kx, gy, x)?, mmd(ky, fx, y)?),
        MmdPower::Two => (mmd_squared_biased(kx, gy, x)?, mmd_squared_biased(ky, fx, y)?),
    };
    let d = crate::distortion::delta_total(
        &cfg.metric_for(kx),
        &cfg.metric_for(ky),
        x,
        y,
        fx,
        gy,
    )?;
    Ok(assemble(cfg, mx, my, &d))
}

/// Evaluates the objective for explicit map models over full clouds.
pub fn gmmd_loss(
    cfg: &GmmdConfig,
    kx: &KernelSpec,
    ky: &KernelSpec,
    x: &PointCloud,
    y: &PointCloud,
    f: &MapModel,
    g: &MapModel,
) -> Result<LossBreakdown> {
    let fx = f.map_cloud(x)?;
    let gy = g.map_cloud(y)?;
    gmmd_loss_from_mapped(cfg, kx, ky, x, y, &fx, &gy)
}

/// Objective value plus gradients with respect to the rows of `fx` and `gy`.
/// Used by the training loop; exposed for gradient checking.
pub fn gmmd_loss_grads(
    cfg: &GmmdConfig,
    kx: &KernelSpec,
    ky: &KernelSpec,
    x: &PointCloud,
    y: &PointCloud,
    fx: &PointCloud,
    gy: &PointCloud,
) -> Result<(LossBreakdown, Array2<f64>, Array2<f64>)> {
    let ((mx, gm_gy), (my, gm_fx)) = match cfg.mmd_power {
        MmdPower::One => (mmd_with_grad(kx, gy, x)?, mmd_with_grad(ky, fx, y)?),
        MmdPower::Two => (
            mmd_squared_with_grad(kx, gy, x)?,
            mmd_squared_with_grad(ky, fx, y)?,
        ),
    };
    let (d, d_fx, d_gy) =
        delta_total_with_grads(&cfg.metric_for(kx), &cfg.metric_for(ky), x, y, fx, gy)?;

    let mut grad_fx = d_fx;
    grad_fx.scaled_add(cfg.lambda_y, &gm_fx);
    let mut grad_gy = d_gy;
    grad_gy.scaled_add(cfg.lambda_x, &gm_gy);
    Ok((assemble(cfg, mx, my, &d), grad_fx, grad_gy))
}

// ============================================================================
// Training loop
// ============================================================================

/// Per-epoch record: mean loss over the epoch's batches and cumulative wall
/// clock since training started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub seconds: f64,
}

/// Trained maps plus the kernels they were trained under and the loss history.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub f: MapModel,
    pub g: MapModel,
    pub kernel_x: KernelSpec,
    pub kernel_y: KernelSpec,
    pub history: Vec<EpochStats>,
}

/// Endless shuffled index stream: hands out batches of a fixed set of
/// indices, reshuffling whenever the current pass is exhausted.
struct CyclingSampler {
    indices: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl CyclingSampler {
    fn new(n: usize, mut rng: ChaCha8Rng) -> Self {
        let mut indices: Vec<usize> = (0..n).collect();
        indices.shuffle(&mut rng);
        Self { indices, pos: 0, rng }
    }

    fn next_batch(&mut self, batch: usize, out: &mut Vec<usize>) {
        out.clear();
        while out.len() < batch {
            if self.pos == self.indices.len() {
                self.indices.shuffle(&mut self.rng);
                self.pos = 0;
            }
            let take = (batch - out.len()).min(self.indices.len() - self.pos);
            out.extend_from_slice(&self.indices[self.pos..self.pos + take]);
            self.pos += take;
        }
    }
}

/// Order-sensitive FNV-1a fingerprint of a cloud's shape and raw coordinate
/// bits. Feeds [`init_seed`] so the two map initializations decouple.
fn cloud_fingerprint(cloud: &PointCloud) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |word: u64| {
        for b in word.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(cloud.n() as u64);
    eat(cloud.dim() as u64);
    for &v in cloud.view().iter() {
        eat(v.to_bits());
    }
    h
}

/// Mixes the config seed with the two cloud fingerprints. The mix is
/// order-sensitive, so `init_seed(s, a, b) != init_seed(s, b, a)` unless the
/// fingerprints coincide, and swapping the training spaces swaps the seeds.
fn init_seed(seed: u64, first: u64, second: u64) -> u64 {
    let mut z = seed ^ first.rotate_left(17) ^ second.rotate_left(43);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Factor applied to the output layer at initialization; see the comment at
/// the call site in [`train_with_observer`].
const INIT_OUTPUT_SCALE: f64 = 0.01;

/// Multiplies the final linear layer's weights by `factor` (biases start at
/// zero already), collapsing the map's initial range toward the origin.
fn shrink_output_layer(model: &mut MapModel, factor: f64) {
    if let MapModel::Mlp { layers } = model {
        if let Some(last) = layers.last_mut() {
            last.weight.mapv_inplace(|w| w * factor);
        }
    }
}

/// Trains fresh MLP maps `f : X-space -> Y-space` and `g : Y-space -> X-space`
/// on the two clouds. See [`train_with_observer`] for the variant that streams
/// per-epoch statistics.
pub fn train(x: &PointCloud, y: &PointCloud, cfg: &GmmdConfig) -> Result<TrainOutput> {
    train_with_observer(x, y, cfg, |_| {})
}

/// Like [`train`], also invoking `observer` after every completed epoch.
///
/// Determinism: every random choice derives from `cfg.seed` and the input
/// clouds (model initializations mix the seed with cloud fingerprints; the
/// median subsamples and batch shuffling streams use the seed directly), so
/// identical inputs give bitwise-identical outputs.
pub fn train_with_observer(
    x: &PointCloud,
    y: &PointCloud,
    cfg: &GmmdConfig,
    mut observer: impl FnMut(&EpochStats),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let (kernel_x, kernel_y) = derive_kernels(x, y, cfg)?;

    // Each map draws its own initialization: the config seed is mixed with
    // order-sensitive fingerprints of the two clouds, so within one problem
    // f and g start from independent draws (sharing a draw couples them
    // toward involution-like map pairs that stall in poor pose optima),
    // while swapping the input spaces swaps the two seeds exactly and the
    // swapped problem trains the mirrored pair.
    let fp_x = cloud_fingerprint(x);
    let fp_y = cloud_fingerprint(y);
    let mut f = mlp_init(x.dim(), &cfg.hidden_dims, y.dim(), init_seed(cfg.seed, fp_x, fp_y))?;
    let mut g = mlp_init(y.dim(), &cfg.hidden_dims, x.dim(), init_seed(cfg.seed, fp_y, fp_x))?;
    // Shrink the output layers so both maps start near-collapsed. A
    // full-scale random init fixes an arbitrary pose that gradient descent
    // then has to rotate through high loss barriers (the distortion terms
    // are blind to rigid pose, so only the weakly weighted matching terms
    // could correct it, and they plateau in spurious pose optima). Growing
    // the maps from small scale lets the matching terms steer the unfolding
    // into their preferred pose while rotations are still cheap.
    shrink_output_layer(&mut f, INIT_OUTPUT_SCALE);
    shrink_output_layer(&mut g, INIT_OUTPUT_SCALE);
    let mut adam_f = AdamState::new(&f);
    let mut adam_g = AdamState::new(&g);

    // Separate shuffle streams per side, both rooted at the config seed.
    let mut rng_x = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_x.set_stream(1);
    let mut rng_y = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_y.set_stream(2);
    let mut sampler_x = CyclingSampler::new(x.n(), rng_x);
    let mut sampler_y = CyclingSampler::new(y.n(), rng_y);

    let batch_x = cfg.batch_size.min(x.n());
    let batch_y = cfg.batch_size.min(y.n());
    // One epoch traverses the larger cloud once; the smaller one cycles.
    let steps = if x.n() >= y.n() {
        x.n().div_ceil(batch_x)
    } else {
        y.n().div_ceil(batch_y)
    };

    let mut idx_x = Vec::with_capacity(batch_x);
    let mut idx_y = Vec::with_capacity(batch_y);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let fail = |detail: &str| GmmdError::NumericalFailure {
            epoch,
            detail: detail.to_string(),
        };
        let mut mean = LossBreakdown::zero();
        for _ in 0..steps {
            sampler_x.next_batch(batch_x, &mut idx_x);
            sampler_y.next_batch(batch_y, &mut idx_y);
            let xb = x.gather(&idx_x)?;
            let yb = y.gather(&idx_y)?;

            let (fx_mat, cache_f) = f.forward(xb.matrix())?;
            let (gy_mat, cache_g) = g.forward(yb.matrix())?;
            let fxb =
                PointCloud::new(fx_mat).map_err(|_| fail("f produced non-finite outputs"))?;
            let gyb =
                PointCloud::new(gy_mat).map_err(|_| fail("g produced non-finite outputs"))?;

            let (loss, grad_fx, grad_gy) =
                gmmd_loss_grads(cfg, &kernel_x, &kernel_y, &xb, &yb, &fxb, &gyb)?;
            if !loss.total.is_finite() {
                return Err(fail("loss is not finite"));
            }
            if grad_fx.iter().chain(grad_gy.iter()).any(|v| !v.is_finite()) {
                return Err(fail("loss gradient is not finite"));
            }

            // Backpropagate into both models, then apply both Adam updates;
            // the updates are simultaneous with respect to the shared loss.
            let pf = f.backward(&cache_f, &grad_fx)?;
            let pg = g.backward(&cache_g, &grad_gy)?;
            adam_step(&mut f, &pf, &mut adam_f, &cfg.adam, cfg.lr)?;
            adam_step(&mut g, &pg, &mut adam_g, &cfg.adam, cfg.lr)?;

            mean.mmd_x += loss.mmd_x;
            mean.mmd_y += loss.mmd_y;
            mean.delta_x += loss.delta_x;
            mean.delta_y += loss.delta_y;
            mean.delta_xy += loss.delta_xy;
            mean.total += loss.total;
        }
        let inv = 1.0 / steps as f64;
        mean.mmd_x *= inv;
        mean.mmd_y *= inv;
        mean.delta_x *= inv;
        mean.delta_y *= inv;
        mean.delta_xy *= inv;
        mean.total *= inv;
        let stats = EpochStats {
            epoch,
            loss: mean,
            seconds: start.elapsed().as_secs_f64(),
        };
        observer(&stats);
        history.push(stats);
    }

    Ok(TrainOutput {
        f,
        g,
        kernel_x,
        kernel_y,
        history,
    })
}

// ============================================================================
// Continuity probe
// ============================================================================

/// Measures how much the objective moves when every coordinate of `f`'s
/// output is shifted by `delta` (with `g` untouched): returns
/// `|L(f + delta, g) - L(f, g)|`. A zero shift returns exactly zero; for a
/// bounded kernel-induced metric the response shrinks at least linearly with
/// the shift.
pub fn loss_continuity_probe(
    cfg: &GmmdConfig,
    x: &PointCloud,
    y: &PointCloud,
    f: &MapModel,
    g: &MapModel,
    delta: f64,
) -> Result<f64> {
    if !delta.is_finite() {
        return Err(GmmdError::InvalidParameter {
            name: "delta",
            message: format!("must be finite, got {delta}"),
        });
    }
    cfg.validate()?;
    let (kx, ky) = derive_kernels(x, y, cfg)?;
    let fx = f.map_cloud(x)?;
    let gy = g.map_cloud(y)?;
    let base = gmmd_loss_from_mapped(cfg, &kx, &ky, x, y, &fx, &gy)?;
    let shifted = PointCloud::new(fx.matrix().mapv(|v| v + delta))?;
    let moved = gmmd_loss_from_mapped(cfg, &kx, &ky, x, y, &shifted, &gy)?;
    Ok((moved.total - base.total).abs())
}

// ============================================================================
// Tests
// ============================================================================
