//! Feed-forward network mapping features to the probability simplex.
//!
//! Hidden layers use the exact (erf-based) GeLU, the output is a row-wise
//! softmax, and the first and last layers are optionally weight-normalized.
//! Forward, backward, and the first-order optimizers are written by hand;
//! the trainer injects its gradient directly as dL/dP, so [`backward`] only
//! ever composes that constant coefficient matrix through the network.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer widths must list input, hidden..., output; got {0:?}")]
    BadWidths(Vec<usize>),
    #[error("output width must be at least 2, got {0}")]
    OutputTooNarrow(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("weight-normalized row {0} has zero direction norm")]
    DegenerateDirection(usize),
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture description: `layer_widths = [input, hidden..., output]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub weight_norm_first_last: bool,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, weight_norm_first_last: bool) -> Result<Self, ModelError> {
        if layer_widths.len() < 2 || layer_widths.contains(&0) {
            return Err(ModelError::BadWidths(layer_widths));
        }
        let k = *layer_widths.last().unwrap();
        if k < 2 {
            return Err(ModelError::OutputTooNarrow(k));
        }
        Ok(Self {
            layer_widths,
            weight_norm_first_last,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    fn layer_is_weight_normed(&self, layer: usize) -> bool {
        self.weight_norm_first_last && (layer == 0 || layer == self.num_layers() - 1)
    }
}

/// One layer's parameters. Weights are stored `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
enum LayerParams {
    Dense {
        weight: Array2<f64>,
        bias: Array1<f64>,
    },
    /// Effective weight row o is `scale_o * direction_o / ||direction_o||`.
    WeightNorm {
        direction: Array2<f64>,
        scale: Array1<f64>,
        bias: Array1<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    spec: MlpSpec,
    layers: Vec<LayerParams>,
}

/// Exact GeLU: x * Phi(x) with the Gaussian CDF.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// d/dx GeLU = Phi(x) + x * phi(x).
pub fn gelu_prime(x: f64) -> f64 {
    let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)) + x * phi
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    p
}

/// Deterministic fan-in-scaled uniform initialization; biases start at zero
/// and weight-norm scales at the row norms so the effective weights match
/// the plain initialization.
pub fn init_mlp(spec: &MlpSpec, seed: u64) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(spec.num_layers());
    for layer in 0..spec.num_layers() {
        let fan_in = spec.layer_widths[layer];
        let fan_out = spec.layer_widths[layer + 1];
        let bound = (3.0 / fan_in as f64).sqrt();
        let weight =
            Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
        let bias = Array1::zeros(fan_out);
        if spec.layer_is_weight_normed(layer) {
            let scale = Array1::from_iter(
                weight.rows().into_iter().map(|r| r.dot(&r).sqrt()),
            );
            layers.push(LayerParams::WeightNorm {
                direction: weight,
                scale,
                bias,
            });
        } else {
            layers.push(LayerParams::Dense { weight, bias });
        }
    }
    MlpModel {
        spec: spec.clone(),
        layers,
    }
}

impl LayerParams {
    fn effective_weight(&self) -> Result<Array2<f64>, ModelError> {
        match self {
            LayerParams::Dense { weight, .. } => Ok(weight.clone()),
            LayerParams::WeightNorm {
                direction, scale, ..
            } => {
                let mut w = direction.clone();
                for (o, mut row) in w.rows_mut().into_iter().enumerate() {
                    let norm = row.dot(&row).sqrt();
                    if norm == 0.0 {
                        return Err(ModelError::DegenerateDirection(o));
                    }
                    let factor = scale[o] / norm;
                    row.mapv_inplace(|v| v * factor);
                }
                Ok(w)
            }
        }
    }

    fn bias(&self) -> &Array1<f64> {
        match self {
            LayerParams::Dense { bias, .. } => bias,
            LayerParams::WeightNorm { bias, .. } => bias,
        }
    }

    fn param_count(&self) -> usize {
        match self {
            LayerParams::Dense { weight, bias } => weight.len() + bias.len(),
            LayerParams::WeightNorm {
                direction,
                scale,
                bias,
            } => direction.len() + scale.len() + bias.len(),
        }
    }
}

/// Intermediate activations kept for [`backward`].
pub struct ForwardCache {
    /// Input to each layer (so `inputs[0]` is the batch itself).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre_activations: Vec<Array2<f64>>,
    /// Softmax output.
    probs: Array2<f64>,
}

impl MlpModel {
    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Parameters flattened in declaration order (per layer: weight or
    /// direction row-major, then scale for weight-norm, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            match layer {
                LayerParams::Dense { weight, bias } => {
                    out.extend(weight.iter());
                    out.extend(bias.iter());
                }
                LayerParams::WeightNorm {
                    direction,
                    scale,
                    bias,
                } => {
                    out.extend(direction.iter());
                    out.extend(scale.iter());
                    out.extend(bias.iter());
                }
            }
        }
        out
    }

    /// Overwrite all parameters from a flat slice in [`flatten`] order.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.num_params() {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{} params", self.num_params()),
                got: format!("{}", flat.len()),
            });
        }
        let mut cursor = 0;
        for layer in &mut self.layers {
            match layer {
                LayerParams::Dense { weight, bias } => {
                    for v in weight.iter_mut() {
                        *v = flat[cursor];
                        cursor += 1;
                    }
                    for v in bias.iter_mut() {
                        *v = flat[cursor];
                        cursor += 1;
                    }
                }
                LayerParams::WeightNorm {
                    direction,
                    scale,
                    bias,
                } => {
                    for v in direction.iter_mut() {
                        *v = flat[cursor];
                        cursor += 1;
                    }
                    for v in scale.iter_mut() {
                        *v = flat[cursor];
                        cursor += 1;
                    }
                    for v in bias.iter_mut() {
                        *v = flat[cursor];
                        cursor += 1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Zero every parameter of the last layer; softmax then yields uniform
    /// rows. Handy for tests and collapse demonstrations.
    pub fn zero_last_layer(&mut self) {
        if let Some(layer) = self.layers.last_mut() {
            match layer {
                LayerParams::Dense { weight, bias } => {
                    weight.fill(0.0);
                    bias.fill(0.0);
                }
                LayerParams::WeightNorm {
                    scale, bias, ..
                } => {
                    scale.fill(0.0);
                    bias.fill(0.0);
                }
            }
        }
    }

    /// Add `delta` to output unit `unit`'s bias in the last layer.
    pub fn nudge_output_bias(&mut self, unit: usize, delta: f64) {
        if let Some(layer) = self.layers.last_mut() {
            match layer {
                LayerParams::Dense { bias, .. } => bias[unit] += delta,
                LayerParams::WeightNorm { bias, .. } => bias[unit] += delta,
            }
        }
    }
}

/// Run the network; rows of the returned matrix lie on the simplex.
pub fn forward(
    model: &MlpModel,
    inputs: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, ForwardCache), ModelError> {
    if inputs.ncols() != model.spec.input_dim() {
        return Err(ModelError::ShapeMismatch {
            expected: format!("input dim {}", model.spec.input_dim()),
            got: format!("{}", inputs.ncols()),
        });
    }
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("input"));
    }

    let num_layers = model.layers.len();
    let mut cache_inputs = Vec::with_capacity(num_layers);
    let mut pre_activations = Vec::with_capacity(num_layers);
    let mut h = inputs.to_owned();
    for (idx, layer) in model.layers.iter().enumerate() {
        let w = layer.effective_weight()?;
        let z = h.dot(&w.t()) + layer.bias();
        cache_inputs.push(h);
        if idx + 1 < num_layers {
            h = z.mapv(gelu);
        } else {
            h = softmax_rows(&z);
        }
        pre_activations.push(z);
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("activations"));
    }
    let cache = ForwardCache {
        inputs: cache_inputs,
        pre_activations,
        probs: h.clone(),
    };
    Ok((h, cache))
}

/// Backpropagate a constant coefficient matrix `dP = dL/dP` through the
/// network and return flat parameter gradients (in [`MlpModel::flatten`]
/// order). The implied scalar loss is `sum_ij dP_ij P_ij`.
pub fn backward(
    model: &MlpModel,
    cache: &ForwardCache,
    d_probs: ArrayView2<'_, f64>,
) -> Result<Vec<f64>, ModelError> {
    let probs = &cache.probs;
    if d_probs.shape() != probs.shape() {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{:?}", probs.shape()),
            got: format!("{:?}", d_probs.shape()),
        });
    }

    // Softmax Jacobian: dz = P .* (dP - rowdot(dP, P)).
    let mut d_z = probs.clone();
    for ((mut dz_row, dp_row), p_row) in d_z
        .rows_mut()
        .into_iter()
        .zip(d_probs.rows())
        .zip(probs.rows())
    {
        let inner = dp_row.dot(&p_row);
        for (dz, &dp) in dz_row.iter_mut().zip(dp_row) {
            // dz currently holds p.
            *dz *= dp - inner;
        }
    }

    let mut grads_rev: Vec<Vec<f64>> = Vec::with_capacity(model.layers.len());
    for (idx, layer) in model.layers.iter().enumerate().rev() {
        let x = &cache.inputs[idx];
        let d_weight = d_z.t().dot(x);
        let d_bias: Array1<f64> = d_z.sum_axis(ndarray::Axis(0));

        let mut layer_grads = Vec::with_capacity(layer.param_count());
        match layer {
            LayerParams::Dense { .. } => {
                layer_grads.extend(d_weight.iter());
                layer_grads.extend(d_bias.iter());
            }
            LayerParams::WeightNorm {
                direction, scale, ..
            } => {
                // Chain through w_o = g_o * v_o / ||v_o||.
                let mut d_direction = Array2::zeros(direction.raw_dim());
                let mut d_scale = Array1::zeros(scale.len());
                for o in 0..direction.nrows() {
                    let v = direction.row(o);
                    let norm = v.dot(&v).sqrt();
                    if norm == 0.0 {
                        return Err(ModelError::DegenerateDirection(o));
                    }
                    let dw = d_weight.row(o);
                    let vdw = v.dot(&dw);
                    d_scale[o] = vdw / norm;
                    let coeff = scale[o] / norm;
                    let proj = vdw / (norm * norm);
                    for (c, (dv, (&dwi, &vi))) in d_direction
                        .row_mut(o)
                        .iter_mut()
                        .zip(dw.iter().zip(v.iter()))
                        .enumerate()
                    {
                        let _ = c;
                        *dv = coeff * (dwi - proj * vi);
                    }
                }
                layer_grads.extend(d_direction.iter());
                layer_grads.extend(d_scale.iter());
                layer_grads.extend(d_bias.iter());
            }
        }
        grads_rev.push(layer_grads);

        if idx > 0 {
            let w = layer.effective_weight()?;
            let d_x = d_z.dot(&w);
            // Through the previous layer's GeLU.
            let z_prev = &cache.pre_activations[idx - 1];
            d_z = &d_x * &z_prev.mapv(gelu_prime);
        }
    }

    let mut flat = Vec::with_capacity(model.num_params());
    for layer_grads in grads_rev.into_iter().rev() {
        flat.extend(layer_grads);
    }
    Ok(flat)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    RmsProp,
    Adam,
}

/// Per-parameter accumulator state for the first-order optimizers. Weight
/// decay is decoupled (applied directly to the parameters, not the
/// gradients) for all three kinds.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const RMSPROP_ALPHA: f64 = 0.99;
const EPS: f64 = 1e-8;

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64, num_params: usize) -> Self {
        Self {
            kind,
            lr,
            weight_decay,
            step: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Apply one update in place. Non-finite gradients abort with an error so
/// the trainer can surface a diagnostic instead of corrupting the model.
pub fn optimizer_step(
    opt: &mut OptimizerState,
    model: &mut MlpModel,
    grads: &[f64],
) -> Result<(), ModelError> {
    let mut params = model.flatten();
    if grads.len() != params.len() {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{} grads", params.len()),
            got: format!("{}", grads.len()),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(ModelError::NonFinite("gradient"));
    }
    opt.step += 1;
    match opt.kind {
        OptimizerKind::Sgd => {
            for (p, &g) in params.iter_mut().zip(grads) {
                *p -= opt.lr * g;
            }
        }
        OptimizerKind::RmsProp => {
            for ((p, &g), v) in params
                .iter_mut()
                .zip(grads)
                .zip(opt.second_moment.iter_mut())
            {
                *v = RMSPROP_ALPHA * *v + (1.0 - RMSPROP_ALPHA) * g * g;
                *p -= opt.lr * g / (v.sqrt() + EPS);
            }
        }
        OptimizerKind::Adam => {
            let bc1 = 1.0 - ADAM_BETA1.powi(opt.step as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(opt.step as i32);
            for (((p, &g), m), v) in params
                .iter_mut()
                .zip(grads)
                .zip(opt.first_moment.iter_mut())
                .zip(opt.second_moment.iter_mut())
            {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= opt.lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
    if opt.weight_decay != 0.0 {
        let decay = opt.lr * opt.weight_decay;
        for p in params.iter_mut() {
            *p -= decay * *p;
        }
    }
    model.load_flat(&params)
}

/// Checkpoint: one JSON header line (spec, seed, step, count) followed by
/// the parameters as little-endian 64-bit floats in declaration order.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    layer_widths: Vec<usize>,
    weight_norm_first_last: bool,
    seed: u64,
    step: u64,
    params: usize,
}

pub fn save_checkpoint<W: Write>(
    out: &mut W,
    model: &MlpModel,
    seed: u64,
    step: u64,
) -> Result<(), ModelError> {
    let flat = model.flatten();
    let header = CheckpointHeader {
        layer_widths: model.spec.layer_widths.clone(),
        weight_norm_first_last: model.spec.weight_norm_first_last,
        seed,
        step,
        params: flat.len(),
    };
    let mut line = serde_json::to_string(&header)
        .map_err(|e| ModelError::MalformedCheckpoint(e.to_string()))?;
    line.push('\n');
    out.write_all(line.as_bytes())?;
    for value in flat {
        out.write_all(&value.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_checkpoint<R: Read>(input: R) -> Result<(MlpModel, u64, u64), ModelError> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| ModelError::MalformedCheckpoint(e.to_string()))?;
    let spec = MlpSpec::new(header.layer_widths, header.weight_norm_first_last)?;
    let mut model = init_mlp(&spec, header.seed);
    if model.num_params() != header.params {
        return Err(ModelError::MalformedCheckpoint(format!(
            "header claims {} params, spec needs {}",
            header.params,
            model.num_params()
        )));
    }
    let mut flat = vec![0.0; header.params];
    let mut buf = [0u8; 8];
    for value in flat.iter_mut() {
        reader.read_exact(&mut buf).map_err(|_| {
            ModelError::MalformedCheckpoint("truncated parameter block".into())
        })?;
        *value = f64::from_le_bytes(buf);
    }
    model.load_flat(&flat)?;
    Ok((model, header.seed, header.step))
}

pub fn save_checkpoint_file(
    path: &Path,
    model: &MlpModel,
    seed: u64,
    step: u64,
) -> Result<(), ModelError> {
    let mut file = std::fs::File::create(path)?;
    save_checkpoint(&mut file, model, seed, step)
}

pub fn load_checkpoint_file(path: &Path) -> Result<(MlpModel, u64, u64), ModelError> {
    load_checkpoint(std::fs::File::open(path)?)
}
