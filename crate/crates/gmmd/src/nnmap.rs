//! Map models (identity, affine, ReLU MLP) with hand-rolled backpropagation
//! and an Adam optimizer.
//!
//! A model maps batches of points row-wise: `forward` takes an `n x d_in`
//! matrix and returns an `n x d_out` matrix plus the cache needed by
//! `backward`. `backward` turns a gradient with respect to the outputs into
//! gradients with respect to every parameter (chain rule through the linear
//! layers and ReLUs, with `relu'(0) = 0`).
//!
//! MLP weights use He-uniform initialization,
//! `U(-sqrt(6 / fan_in), +sqrt(6 / fan_in))`, biases start at zero, and all
//! randomness is driven by a seeded ChaCha stream so initialization is
//! bit-reproducible.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{GmmdError, Result};
use crate::fsio;

/// One fully connected layer; `weight` is `out x in`, applied as
/// `x |-> x W^T + b` on row-major batches.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// A point map. `Identity` and `Affine` exist for planted fixtures and
/// baselines; `Mlp` is the trainable model (ReLU after every layer except the
/// last, linear output).
#[derive(Debug, Clone, PartialEq)]
pub enum MapModel {
    Identity { dim: usize },
    Affine { layer: DenseLayer },
    Mlp { layers: Vec<DenseLayer> },
}

/// Intermediate activations kept by `forward` for use in `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    /// Pre-activations of each hidden layer (before ReLU).
    pres: Vec<Array2<f64>>,
    /// Post-ReLU activations of each hidden layer.
    acts: Vec<Array2<f64>>,
}

/// Per-parameter tensors mirroring a model's layers; used for gradients and
/// Adam moments. Identity models have no parameters and empty vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ParamGrads {
    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl MapModel {
    pub fn input_dim(&self) -> usize {
        match self {
            MapModel::Identity { dim } => *dim,
            MapModel::Affine { layer } => layer.weight.ncols(),
            MapModel::Mlp { layers } => layers[0].weight.ncols(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            MapModel::Identity { dim } => *dim,
            MapModel::Affine { layer } => layer.weight.nrows(),
            MapModel::Mlp { layers } => layers.last().expect("mlp has layers").weight.nrows(),
        }
    }

    fn layers(&self) -> &[DenseLayer] {
        match self {
            MapModel::Identity { .. } => &[],
            MapModel::Affine { layer } => std::slice::from_ref(layer),
            MapModel::Mlp { layers } => layers,
        }
    }

    /// Maps a batch (rows are points); returns outputs and the backward cache.
    pub fn forward(&self, batch: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if batch.nrows() == 0 {
            return Err(GmmdError::EmptyInput("forward batch"));
        }
        if batch.ncols() != self.input_dim() {
            return Err(GmmdError::DimensionMismatch {
                expected: self.input_dim(),
                found: batch.ncols(),
                context: "forward batch columns",
            });
        }
        let mut cache = ForwardCache {
            input: batch.clone(),
            pres: Vec::new(),
            acts: Vec::new(),
        };
        let out = match self {
            MapModel::Identity { .. } => batch.clone(),
            MapModel::Affine { layer } => affine_apply(layer, batch),
            MapModel::Mlp { layers } => {
                let mut h = batch.clone();
                for layer in &layers[..layers.len() - 1] {
                    let pre = affine_apply(layer, &h);
                    let act = pre.mapv(|v| if v > 0.0 { v } else { 0.0 });
                    cache.pres.push(pre);
                    h = act.clone();
                    cache.acts.push(act);
                }
                affine_apply(layers.last().expect("mlp has layers"), &h)
            }
        };
        Ok((out, cache))
    }

    /// Convenience wrapper: maps a cloud and re-validates finiteness.
    pub fn map_cloud(&self, cloud: &PointCloud) -> Result<PointCloud> {
        let (out, _) = self.forward(cloud.matrix())?;
        PointCloud::new(out)
    }

    /// Gradients of `sum_rows <grad_output_row, output_row>` with respect to
    /// every parameter, given the cache of the matching `forward` call.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Array2<f64>) -> Result<ParamGrads> {
        if grad_output.nrows() != cache.input.nrows() {
            return Err(GmmdError::SizeMismatch {
                left: grad_output.nrows(),
                right: cache.input.nrows(),
                context: "backward batch rows",
            });
        }
        if grad_output.ncols() != self.output_dim() {
            return Err(GmmdError::DimensionMismatch {
                expected: self.output_dim(),
                found: grad_output.ncols(),
                context: "backward gradient columns",
            });
        }
        match self {
            MapModel::Identity { .. } => Ok(ParamGrads {
                weights: Vec::new(),
                biases: Vec::new(),
            }),
            MapModel::Affine { .. } => {
                let dw = grad_output.t().dot(&cache.input);
                let db = grad_output.sum_axis(Axis(0));
                Ok(ParamGrads {
                    weights: vec![dw],
                    biases: vec![db],
                })
            }
            MapModel::Mlp { layers } => {
                let n_layers = layers.len();
                if cache.pres.len() != n_layers - 1 {
                    return Err(GmmdError::SizeMismatch {
                        left: cache.pres.len(),
                        right: n_layers - 1,
                        context: "backward cache does not match model depth",
                    });
                }
                let mut weights = vec![Array2::zeros((0, 0)); n_layers];
                let mut biases = vec![Array1::zeros(0); n_layers];
                let mut delta = grad_output.clone();
                for l in (0..n_layers).rev() {
                    let below = if l == 0 {
                        &cache.input
                    } else {
                        &cache.acts[l - 1]
                    };
                    weights[l] = delta.t().dot(below);
                    biases[l] = delta.sum_axis(Axis(0));
                    if l > 0 {
                        let mut prev = delta.dot(&layers[l].weight);
                        prev.zip_mut_with(&cache.pres[l - 1], |g, &pre| {
                            if pre <= 0.0 {
                                *g = 0.0;
                            }
                        });
                        delta = prev;
                    }
                }
                Ok(ParamGrads { weights, biases })
            }
        }
    }

    /// A zero-filled gradient/moment container matching this model's shapes.
    pub fn zero_grads(&self) -> ParamGrads {
        let layers = self.layers();
        ParamGrads {
            weights: layers
                .iter()
                .map(|l| Array2::zeros(l.weight.raw_dim()))
                .collect(),
            biases: layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }
}

fn affine_apply(layer: &DenseLayer, batch: &Array2<f64>) -> Array2<f64> {
    let mut out = batch.dot(&layer.weight.t());
    out += &layer.bias;
    out
}

/// Builds an MLP with the given hidden widths (may be empty, giving a single
/// linear layer). He-uniform weights, zero biases, seeded and deterministic:
/// entries are drawn layer by layer in row-major order.
pub fn mlp_init(
    input_dim: usize,
    hidden_dims: &[usize],
    output_dim: usize,
    seed: u64,
) -> Result<MapModel> {
    if input_dim == 0 || output_dim == 0 || hidden_dims.contains(&0) {
        return Err(GmmdError::InvalidParameter {
            name: "layer_dims",
            message: "all layer widths must be positive".to_string(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = Vec::with_capacity(hidden_dims.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden_dims);
    dims.push(output_dim);

    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let limit = (6.0 / fan_in as f64).sqrt();
        let mut flat = Vec::with_capacity(fan_out * fan_in);
        for _ in 0..fan_out * fan_in {
            flat.push(rng.random::<f64>() * 2.0 * limit - limit);
        }
        layers.push(DenseLayer {
            weight: Array2::from_shape_vec((fan_out, fan_in), flat).expect("shape is consistent"),
            bias: Array1::zeros(fan_out),
        });
    }
    Ok(MapModel::Mlp { layers })
}

// ============================================================================
// Adam
// ============================================================================

/// Adam hyperparameters (defaults: beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: ParamGrads,
    v: ParamGrads,
    t: u64,
}

impl AdamState {
    pub fn new(model: &MapModel) -> Self {
        Self {
            m: model.zero_grads(),
            v: model.zero_grads(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update with bias correction:
/// `theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)`.
pub fn adam_step(
    model: &mut MapModel,
    grads: &ParamGrads,
    state: &mut AdamState,
    params: &AdamParams,
    lr: f64,
) -> Result<()> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(GmmdError::InvalidParameter {
            name: "lr",
            message: format!("must be finite and positive, got {lr}"),
        });
    }
    let expected = match model {
        MapModel::Identity { .. } => 0,
        MapModel::Affine { .. } => 1,
        MapModel::Mlp { layers } => layers.len(),
    };
    if grads.weights.len() != expected || state.m.weights.len() != expected {
        return Err(GmmdError::SizeMismatch {
            left: grads.weights.len(),
            right: expected,
            context: "adam_step layer count",
        });
    }

    state.t += 1;
    let bc1 = 1.0 - params.beta1.powi(state.t as i32);
    let bc2 = 1.0 - params.beta2.powi(state.t as i32);

    let update = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..theta.len() {
            m[i] = params.beta1 * m[i] + (1.0 - params.beta1) * g[i];
            v[i] = params.beta2 * v[i] + (1.0 - params.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + params.eps);
        }
    };

    let layers: &mut [DenseLayer] = match model {
        MapModel::Identity { .. } => &mut [],
        MapModel::Affine { layer } => std::slice::from_mut(layer),
        MapModel::Mlp { layers } => layers,
    };
    for (l, layer) in layers.iter_mut().enumerate() {
        if grads.weights[l].raw_dim() != layer.weight.raw_dim()
            || grads.biases[l].len() != layer.bias.len()
        {
            return Err(GmmdError::SizeMismatch {
                left: grads.weights[l].len(),
                right: layer.weight.len(),
                context: "adam_step tensor shapes",
            });
        }
        update(
            layer.weight.as_slice_mut().expect("standard layout"),
            grads.weights[l].as_slice().expect("standard layout"),
            state.m.weights[l].as_slice_mut().expect("standard layout"),
            state.v.weights[l].as_slice_mut().expect("standard layout"),
        );
        update(
            layer.bias.as_slice_mut().expect("standard layout"),
            grads.biases[l].as_slice().expect("standard layout"),
            state.m.biases[l].as_slice_mut().expect("standard layout"),
            state.v.biases[l].as_slice_mut().expect("standard layout"),
        );
    }
    Ok(())
}

// ============================================================================
// Serialization
// ============================================================================

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    kind: String,
    input_dim: usize,
    output_dim: usize,
    layers: Vec<LayerFile>,
}

const MODEL_VERSION: u32 = 1;

/// Serializes a model to its JSON document.
pub fn model_to_json(model: &MapModel) -> String {
    let kind = match model {
        MapModel::Identity { .. } => "identity",
        MapModel::Affine { .. } => "affine",
        MapModel::Mlp { .. } => "mlp",
    };
    let layers = model
        .layers()
        .iter()
        .map(|l| LayerFile {
            rows: l.weight.nrows(),
            cols: l.weight.ncols(),
            weight: l.weight.iter().copied().collect(),
            bias: l.bias.to_vec(),
        })
        .collect();
    let file = ModelFile {
        version: MODEL_VERSION,
        kind: kind.to_string(),
        input_dim: model.input_dim(),
        output_dim: model.output_dim(),
        layers,
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

/// Parses and validates a model JSON document.
pub fn model_from_json(text: &str) -> Result<MapModel> {
    let file: ModelFile = serde_json::from_str(text)
        .map_err(|e| GmmdError::InvalidConfig(format!("model JSON: {e}")))?;
    if file.version != MODEL_VERSION {
        return Err(GmmdError::InvalidConfig(format!(
            "unsupported model version {} (expected {MODEL_VERSION})",
            file.version
        )));
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for (idx, l) in file.layers.iter().enumerate() {
        if l.weight.len() != l.rows * l.cols {
            return Err(GmmdError::InvalidConfig(format!(
                "layer {idx}: weight has {} entries, expected {} x {}",
                l.weight.len(),
                l.rows,
                l.cols
            )));
        }
        if l.bias.len() != l.rows {
            return Err(GmmdError::InvalidConfig(format!(
                "layer {idx}: bias has {} entries, expected {}",
                l.bias.len(),
                l.rows
            )));
        }
        if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
            return Err(GmmdError::InvalidConfig(format!(
                "layer {idx}: non-finite parameter"
            )));
        }
        layers.push(DenseLayer {
            weight: Array2::from_shape_vec((l.rows, l.cols), l.weight.clone())
                .expect("checked above"),
            bias: Array1::from_vec(l.bias.clone()),
        });
    }
    let model = match file.kind.as_str() {
        "identity" => {
            if !layers.is_empty() {
                return Err(GmmdError::InvalidConfig(
                    "identity model must have no layers".to_string(),
                ));
            }
            if file.input_dim != file.output_dim || file.input_dim == 0 {
                return Err(GmmdError::InvalidConfig(
                    "identity model needs equal, positive input/output dims".to_string(),
                ));
            }
            MapModel::Identity {
                dim: file.input_dim,
            }
        }
        "affine" => {
            if layers.len() != 1 {
                return Err(GmmdError::InvalidConfig(
                    "affine model must have exactly one layer".to_string(),
                ));
            }
            MapModel::Affine {
                layer: layers.into_iter().next().expect("one layer"),
            }
        }
        "mlp" => {
            if layers.is_empty() {
                return Err(GmmdError::InvalidConfig(
                    "mlp model must have at least one layer".to_string(),
                ));
            }
            for w in layers.windows(2) {
                if w[1].weight.ncols() != w[0].weight.nrows() {
                    return Err(GmmdError::InvalidConfig(format!(
                        "inconsistent layer chain: {} outputs feed {} inputs",
                        w[0].weight.nrows(),
                        w[1].weight.ncols()
                    )));
                }
            }
            MapModel::Mlp { layers }
        }
        other => {
            return Err(GmmdError::InvalidConfig(format!(
                "unknown model kind `{other}`"
            )))
        }
    };
    if model.input_dim() != file.input_dim || model.output_dim() != file.output_dim {
        return Err(GmmdError::InvalidConfig(format!(
            "declared dims {}->{} do not match layers {}->{}",
            file.input_dim,
            file.output_dim,
            model.input_dim(),
            model.output_dim()
        )));
    }
    Ok(model)
}

/// Writes a model JSON file atomically.
pub fn save_model(model: &MapModel, path: &Path) -> Result<()> {
    fsio::write_atomic(path, model_to_json(model).as_bytes())
}

/// Loads and validates a model JSON file.
pub fn load_model(path: &Path) -> Result<MapModel> {
    let text = fsio::read_to_string(path)?;
    model_from_json(&text)
}

// ============================================================================
// Tests
// ============================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_mlp() -> MapModel {
        // 2 -> 2 -> 1 with fixed weights for hand computation.
        MapModel::Mlp {
            layers: vec![
                DenseLayer {
                    weight: array![[1.0, 2.0], [-1.0, 0.5]],
                    bias: array![0.1, -0.2],
                },
                DenseLayer {
                    weight: array![[0.3, -0.4]],
                    bias: array![0.05],
                },
            ],
        }
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = mlp_init(2, &[200, 200, 200], 2, 42).unwrap();
        let b = mlp_init(2, &[200, 200, 200], 2, 42).unwrap();
        assert_eq!(a, b);
        let c = mlp_init(2, &[200, 200, 200], 2, 43).unwrap();
        assert_ne!(a, c);

        let MapModel::Mlp { layers } = &a else {
            panic!("expected mlp")
        };
        let shapes: Vec<(usize, usize)> =
            layers.iter().map(|l| (l.weight.nrows(), l.weight.ncols())).collect();
        assert_eq!(shapes, vec![(200, 2), (200, 200), (200, 200), (2, 200)]);
        assert!(layers.iter().all(|l| l.bias.iter().all(|&v| v == 0.0)));
        assert_eq!(a.input_dim(), 2);
        assert_eq!(a.output_dim(), 2);
    }

    #[test]
    fn init_entries_are_bounded_and_centered() {
        let model = mlp_init(4, &[50, 50], 3, 0).unwrap();
        let MapModel::Mlp { layers } = &model else {
            panic!("expected mlp")
        };
        for layer in layers {
            let fan_in = layer.weight.ncols() as f64;
            let limit = (6.0 / fan_in).sqrt();
            let n = layer.weight.len() as f64;
            let mut sum = 0.0;
            for &v in layer.weight.iter() {
                assert!(v > -limit && v < limit);
                sum += v;
            }
            let mean = sum / n;
            // Standard error of the mean of U(-limit, limit) entries.
            let se = limit / (3.0 * n).sqrt();
            assert!(mean.abs() <= 3.0 * se, "mean {mean} vs 3se {}", 3.0 * se);
        }
    }

    #[test]
    fn init_rejects_zero_widths() {
        assert!(mlp_init(0, &[4], 2, 0).is_err());
        assert!(mlp_init(2, &[0], 2, 0).is_err());
        assert!(mlp_init(2, &[4], 0, 0).is_err());
    }

    #[test]
    fn identity_forward_returns_input() {
        let model = MapModel::Identity { dim: 3 };
        let batch = array![[1.0, -2.0, 0.5], [0.0, 4.0, 1.0]];
        let (out, _) = model.forward(&batch).unwrap();
        assert_eq!(out, batch);
    }

    #[test]
    fn zero_weight_mlp_propagates_output_bias() {
        let model = MapModel::Mlp {
            layers: vec![
                DenseLayer {
                    weight: Array2::zeros((4, 2)),
                    bias: Array1::zeros(4),
                },
                DenseLayer {
                    weight: Array2::zeros((2, 4)),
                    bias: array![0.7, -0.3],
                },
            ],
        };
        let batch = array![[1.0, 2.0], [-5.0, 0.25]];
        let (out, _) = model.forward(&batch).unwrap();
        for i in 0..2 {
            assert_eq!(out[[i, 0]], 0.7);
            assert_eq!(out[[i, 1]], -0.3);
        }
    }

    #[test]
    fn hand_computed_forward() {
        let model = small_mlp();
        let (out, _) = model.forward(&array![[1.0, 0.3]]).unwrap();
        // pre1 = [1.7, -1.05], act = [1.7, 0], out = 0.3 * 1.7 + 0.05.
        assert!((out[[0, 0]] - 0.56).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_width_and_empty_batch() {
        let model = small_mlp();
        assert!(model.forward(&Array2::zeros((1, 3))).is_err());
        assert!(model.forward(&Array2::zeros((0, 2))).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let model = mlp_init(2, &[3], 2, 7).unwrap();
        let batch = array![[0.3, -0.8], [1.2, 0.4], [-0.5, 0.9], [0.0, 2.0]];
        // Scalar objective: sum of w .* outputs for a fixed random-ish w.
        let w = array![[0.7, -0.2], [0.1, 0.9], [-0.4, 0.3], [0.25, -0.6]];
        let objective = |m: &MapModel| -> f64 {
            let (out, _) = m.forward(&batch).unwrap();
            (&out * &w).sum()
        };
        let (_, cache) = model.forward(&batch).unwrap();
        let grads = model.backward(&cache, &w).unwrap();

        let h = 1e-5;
        let MapModel::Mlp { layers } = &model else {
            panic!("expected mlp")
        };
        for (l, layer) in layers.iter().enumerate() {
            for r in 0..layer.weight.nrows() {
                for c in 0..layer.weight.ncols() {
                    let mut mp = model.clone();
                    let mut mm = model.clone();
                    if let MapModel::Mlp { layers } = &mut mp {
                        layers[l].weight[[r, c]] += h;
                    }
                    if let MapModel::Mlp { layers } = &mut mm {
                        layers[l].weight[[r, c]] -= h;
                    }
                    let fd = (objective(&mp) - objective(&mm)) / (2.0 * h);
                    let got = grads.weights[l][[r, c]];
                    assert!(
                        (got - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                        "layer {l} w[{r},{c}]: {got} vs {fd}"
                    );
                }
            }
            for r in 0..layer.bias.len() {
                let mut mp = model.clone();
                let mut mm = model.clone();
                if let MapModel::Mlp { layers } = &mut mp {
                    layers[l].bias[r] += h;
                }
                if let MapModel::Mlp { layers } = &mut mm {
                    layers[l].bias[r] -= h;
                }
                let fd = (objective(&mp) - objective(&mm)) / (2.0 * h);
                let got = grads.biases[l][r];
                assert!(
                    (got - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "layer {l} b[{r}]: {got} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn backward_is_additive_over_the_batch() {
        let model = mlp_init(2, &[4], 2, 3).unwrap();
        let batch = array![[0.2, -0.7], [1.0, 0.1], [-0.3, 0.5]];
        let grad_out = array![[1.0, -0.5], [0.25, 0.75], [-1.5, 0.4]];
        let (_, cache) = model.forward(&batch).unwrap();
        let full = model.backward(&cache, &grad_out).unwrap();

        let mut acc = model.zero_grads();
        for i in 0..batch.nrows() {
            let row = batch.row(i).insert_axis(Axis(0)).to_owned();
            let grow = grad_out.row(i).insert_axis(Axis(0)).to_owned();
            let (_, c) = model.forward(&row).unwrap();
            let g = model.backward(&c, &grow).unwrap();
            for l in 0..acc.weights.len() {
                acc.weights[l] += &g.weights[l];
                acc.biases[l] += &g.biases[l];
            }
        }
        for l in 0..acc.weights.len() {
            for (a, b) in full.weights[l].iter().zip(acc.weights[l].iter()) {
                assert!((a - b).abs() <= 1e-10);
            }
            for (a, b) in full.biases[l].iter().zip(acc.biases[l].iter()) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn relu_derivative_is_zero_at_zero_preactivation() {
        // 1 -> 1 -> 1 net, input 0 gives pre-activation exactly 0; the
        // convention relu'(0) = 0 must kill the first-layer gradient.
        let model = MapModel::Mlp {
            layers: vec![
                DenseLayer {
                    weight: array![[1.0]],
                    bias: array![0.0],
                },
                DenseLayer {
                    weight: array![[2.0]],
                    bias: array![0.0],
                },
            ],
        };
        let batch = array![[0.0]];
        let (_, cache) = model.forward(&batch).unwrap();
        let grads = model.backward(&cache, &array![[1.0]]).unwrap();
        assert_eq!(grads.weights[0][[0, 0]], 0.0);
        assert_eq!(grads.biases[0][0], 0.0);
        // The output layer still sees the (zero) activation and a live bias.
        assert_eq!(grads.biases[1][0], 1.0);
    }

    #[test]
    fn affine_forward_and_backward() {
        let model = MapModel::Affine {
            layer: DenseLayer {
                weight: array![[2.0, 0.0], [0.0, -1.0]],
                bias: array![0.5, 0.25],
            },
        };
        let batch = array![[1.0, 2.0]];
        let (out, cache) = model.forward(&batch).unwrap();
        assert_eq!(out, array![[2.5, -1.75]]);
        let grads = model.backward(&cache, &array![[1.0, 1.0]]).unwrap();
        assert_eq!(grads.weights[0], array![[1.0, 2.0], [1.0, 2.0]]);
        assert_eq!(grads.biases[0], array![1.0, 1.0]);
    }

    #[test]
    fn adam_zero_gradients_leave_parameters_unchanged() {
        let mut model = mlp_init(2, &[3], 2, 1).unwrap();
        let reference = model.clone();
        let mut state = AdamState::new(&model);
        let zeros = model.zero_grads();
        adam_step(&mut model, &zeros, &mut state, &AdamParams::default(), 1e-3).unwrap();
        assert_eq!(model, reference);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_matches_closed_form() {
        // Scalar parameter 0, gradient 0.5, lr 1e-3: after bias correction
        // the step is lr * g / (|g| + eps) regardless of the moment decay.
        let mut model = MapModel::Affine {
            layer: DenseLayer {
                weight: array![[0.0]],
                bias: array![0.0],
            },
        };
        let grads = ParamGrads {
            weights: vec![array![[0.5]]],
            biases: vec![array![0.0]],
        };
        let mut state = AdamState::new(&model);
        adam_step(&mut model, &grads, &mut state, &AdamParams::default(), 1e-3).unwrap();
        let expected = -1e-3 * 0.5 / (0.5 + 1e-8);
        let MapModel::Affine { layer } = &model else {
            panic!("expected affine")
        };
        assert!((layer.weight[[0, 0]] - expected).abs() < 1e-12);
        assert_eq!(layer.bias[0], 0.0);
    }

    #[test]
    fn adam_is_deterministic_across_reruns() {
        let run = || {
            let mut model = mlp_init(2, &[4], 2, 9).unwrap();
            let mut state = AdamState::new(&model);
            let batch = array![[0.4, -0.2], [1.1, 0.8]];
            let grad_out = array![[1.0, 0.5], [-0.75, 0.2]];
            for _ in 0..25 {
                let (_, cache) = model.forward(&batch).unwrap();
                let grads = model.backward(&cache, &grad_out).unwrap();
                adam_step(&mut model, &grads, &mut state, &AdamParams::default(), 1e-2)
                    .unwrap();
            }
            model
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adam_rejects_mismatched_shapes() {
        let mut model = mlp_init(2, &[3], 2, 0).unwrap();
        let other = mlp_init(2, &[4], 2, 0).unwrap();
        let grads = other.zero_grads();
        let mut state = AdamState::new(&model);
        assert!(adam_step(&mut model, &grads, &mut state, &AdamParams::default(), 1e-3).is_err());
    }

    #[test]
    fn serialization_round_trips_bit_for_bit() {
        for model in [
            MapModel::Identity { dim: 3 },
            MapModel::Affine {
                layer: DenseLayer {
                    weight: array![[0.1, -0.2], [0.3, 0.4], [0.5, -0.6]],
                    bias: array![1e-17, 2.5, -0.125],
                },
            },
            mlp_init(2, &[5, 4], 3, 11).unwrap(),
        ] {
            let json = model_to_json(&model);
            let back = model_from_json(&json).unwrap();
            assert_eq!(model, back);
            assert_eq!(json, model_to_json(&back));
        }
    }

    #[test]
    fn save_and_load_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        let model = mlp_init(3, &[4], 2, 5).unwrap();
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }

    #[test]
    fn load_rejects_malformed_documents() {
        // Bad bias length.
        let bad_bias = r#"{"version":1,"kind":"affine","input_dim":1,"output_dim":1,
            "layers":[{"rows":1,"cols":1,"weight":[1.0],"bias":[1.0,2.0]}]}"#;
        assert!(model_from_json(bad_bias).is_err());
        // Unknown kind.
        let bad_kind = r#"{"version":1,"kind":"rbf","input_dim":1,"output_dim":1,"layers":[]}"#;
        assert!(model_from_json(bad_kind).is_err());
        // Unsupported version.
        let bad_version =
            r#"{"version":2,"kind":"identity","input_dim":1,"output_dim":1,"layers":[]}"#;
        assert!(model_from_json(bad_version).is_err());
        // Non-finite weight (serde_json encodes NaN as null, which fails).
        let bad_value = r#"{"version":1,"kind":"affine","input_dim":1,"output_dim":1,
            "layers":[{"rows":1,"cols":1,"weight":[null],"bias":[0.0]}]}"#;
        assert!(model_from_json(bad_value).is_err());
        // Inconsistent chain.
        let bad_chain = r#"{"version":1,"kind":"mlp","input_dim":1,"output_dim":1,
            "layers":[{"rows":2,"cols":1,"weight":[1.0,1.0],"bias":[0.0,0.0]},
                      {"rows":1,"cols":3,"weight":[1.0,1.0,1.0],"bias":[0.0]}]}"#;
        assert!(model_from_json(bad_chain).is_err());
        // Declared dims disagree with layers.
        let bad_dims = r#"{"version":1,"kind":"affine","input_dim":2,"output_dim":1,
            "layers":[{"rows":1,"cols":1,"weight":[1.0],"bias":[0.0]}]}"#;
        assert!(model_from_json(bad_dims).is_err());
    }
}
