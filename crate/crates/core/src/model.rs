//! The MLP classifier, its loss, the SGD optimizer and checkpoints.

use std::io::{Read, Write};
use std::path::Path;

use dcg_autodiff::{Graph, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DcgError, Result};

/// Dense feed-forward layout: `input_dim -> hidden... -> classes`, relu between layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl LayerSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, classes: usize) -> Self {
        Self {
            input_dim,
            hidden,
            classes,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden);
        w.push(self.classes);
        w
    }

    pub fn layers(&self) -> usize {
        self.hidden.len() + 1
    }

    /// `(name, shape)` of every parameter in forward order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let w = self.widths();
        let mut out = Vec::new();
        for l in 0..self.layers() {
            out.push((format!("fc{}.weight", l + 1), vec![w[l], w[l + 1]]));
            out.push((format!("fc{}.bias", l + 1), vec![w[l + 1]]));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.classes < 2 || self.hidden.contains(&0) {
            return Err(DcgError::contract(format!("invalid layer spec {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    spec: LayerSpec,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for
    /// weights and biases alike.
    pub fn init<R: Rng>(spec: &LayerSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape) in spec.parameter_shapes() {
            let fan_in = if shape.len() == 2 {
                shape[0]
            } else {
                // bias: fan-in of the owning weight
                spec.widths()[names.len() / 2]
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
            tensors.push(Tensor::new(shape, data)?);
            names.push(name);
        }
        Ok(Self {
            spec: spec.clone(),
            names,
            tensors,
        })
    }

    pub fn zeros(spec: &LayerSpec) -> Result<Self> {
        spec.validate()?;
        let (names, tensors) = spec
            .parameter_shapes()
            .into_iter()
            .map(|(n, s)| (n, Tensor::zeros(s)))
            .unzip();
        Ok(Self {
            spec: spec.clone(),
            names,
            tensors,
        })
    }

    pub fn from_tensors(spec: &LayerSpec, tensors: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.parameter_shapes();
        if shapes.len() != tensors.len()
            || shapes.iter().zip(&tensors).any(|((_, s), t)| s.as_slice() != t.shape())
        {
            return Err(DcgError::contract("parameter shapes do not match the layer spec"));
        }
        Ok(Self {
            spec: spec.clone(),
            names: shapes.into_iter().map(|(n, _)| n).collect(),
            tensors,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn unflatten(spec: &LayerSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.parameter_count() {
            return Err(DcgError::contract(format!(
                "{} values for {} parameters",
                flat.len(),
                spec.parameter_count()
            )));
        }
        let mut offset = 0;
        let mut tensors = Vec::new();
        for (_, shape) in spec.parameter_shapes() {
            let n: usize = shape.iter().product();
            tensors.push(Tensor::new(shape, flat[offset..offset + n].to_vec())?);
            offset += n;
        }
        Self::from_tensors(spec, tensors)
    }

    /// Grad-tracked leaves for every parameter.
    pub fn track<'g>(&self, graph: &'g Graph) -> Vec<Var<'g>> {
        self.tensors.iter().map(|t| graph.param(t.clone())).collect()
    }

    pub fn constants<'g>(&self, graph: &'g Graph) -> Vec<Var<'g>> {
        self.tensors.iter().map(|t| graph.constant(t.clone())).collect()
    }
}

/// Logits `batch x classes` for a `batch x input_dim` input.
pub fn forward<'g>(spec: &LayerSpec, params: &[Var<'g>], x: Var<'g>) -> Result<Var<'g>> {
    if params.len() != 2 * spec.layers() {
        return Err(DcgError::contract(format!(
            "expected {} parameter tensors, got {}",
            2 * spec.layers(),
            params.len()
        )));
    }
    let shape = x.shape();
    if shape.len() != 2 || shape[1] != spec.input_dim {
        return Err(DcgError::contract(format!(
            "input shape {shape:?} does not match input dim {}",
            spec.input_dim
        )));
    }
    let mut h = x;
    for l in 0..spec.layers() {
        h = h.matmul(params[2 * l])?.add_row_vector(params[2 * l + 1])?;
        if l + 1 < spec.layers() {
            h = h.relu()?;
        }
    }
    Ok(h)
}

/// Per-row `-log softmax(logits)[label]`.
pub fn sample_losses<'g>(logits: Var<'g>, labels: &[usize]) -> Result<Var<'g>> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(DcgError::contract(format!(
            "{} labels for logits of shape {shape:?}",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= shape[1]) {
        return Err(DcgError::contract(format!(
            "label {bad} out of range for {} classes",
            shape[1]
        )));
    }
    Ok(logits.logsumexp_rows()?.sub(logits.gather(labels)?)?)
}

/// Mean cross-entropy over the batch.
pub fn cross_entropy<'g>(logits: Var<'g>, labels: &[usize]) -> Result<Var<'g>> {
    Ok(sample_losses(logits, labels)?.mean()?)
}

/// Summed cross-entropy over the batch.
pub fn cross_entropy_sum<'g>(logits: Var<'g>, labels: &[usize]) -> Result<Var<'g>> {
    Ok(sample_losses(logits, labels)?.sum()?)
}

/// Argmax predictions for row-major inputs (`rows x input_dim`).
pub fn predict(params: &ModelParams, inputs: &Tensor) -> Result<Vec<usize>> {
    let graph = Graph::new();
    let p = params.constants(&graph);
    let logits = forward(params.spec(), &p, graph.constant(inputs.clone()))?.value();
    let c = params.spec().classes;
    Ok(logits
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

pub fn accuracy(params: &ModelParams, inputs: &Tensor, labels: &[usize]) -> Result<f64> {
    let pred = predict(params, inputs)?;
    if pred.len() != labels.len() || labels.is_empty() {
        return Err(DcgError::contract("accuracy needs one label per row"));
    }
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// SGD with momentum and coupled weight decay, plus a single step decay of
/// the learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub decay_factor: f64,
    pub decay_at: f64,
    velocity: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            decay_factor: 0.1,
            decay_at: 0.8,
            velocity: params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn with_schedule(mut self, decay_factor: f64, decay_at: f64) -> Self {
        self.decay_factor = decay_factor;
        self.decay_at = decay_at;
        self
    }

    pub fn lr_at(&self, epoch_fraction: f64) -> f64 {
        if epoch_fraction >= self.decay_at {
            self.lr * self.decay_factor
        } else {
            self.lr
        }
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }
}

/// `v <- momentum * v + (grad + wd * p)`, then `p <- p - lr(t) * v`.
pub fn sgd_step(
    params: &mut ModelParams,
    grads: &[Tensor],
    state: &mut OptimizerState,
    epoch_fraction: f64,
) -> Result<()> {
    if grads.len() != params.tensors.len() {
        return Err(DcgError::contract(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.tensors.len()
        )));
    }
    let lr = state.lr_at(epoch_fraction);
    for ((p, g), v) in params.tensors.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        if p.shape() != g.shape() {
            return Err(DcgError::contract(format!(
                "gradient shape {:?} for parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let shape = p.shape().to_vec();
        let new_v: Vec<f64> = v
            .data()
            .iter()
            .zip(g.data())
            .zip(p.data())
            .map(|((&vel, &grad), &param)| state.momentum * vel + (grad + state.weight_decay * param))
            .collect();
        let new_p: Vec<f64> = p
            .data()
            .iter()
            .zip(&new_v)
            .map(|(&param, &vel)| param - lr * vel)
            .collect();
        *v = Tensor::new(shape.clone(), new_v)
            .map_err(|_| DcgError::Numeric("non-finite momentum buffer".into()))?;
        *p = Tensor::new(shape, new_p)
            .map_err(|_| DcgError::Numeric("non-finite parameter after step".into()))?;
    }
    Ok(())
}

const CHECKPOINT_MAGIC: &[u8] = b"DCGCKPT1\n";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    layer_spec: LayerSpec,
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
}

/// Writes `DCGCKPT1\n`, a one-line JSON header, then every parameter as
/// little-endian f64 in header order.
pub fn write_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let header = CheckpointHeader {
        layer_spec: params.spec.clone(),
        names: params.names.clone(),
        shapes: params.tensors.iter().map(|t| t.shape().to_vec()).collect(),
    };
    let mut out = Vec::with_capacity(params.spec.parameter_count() * 8 + 256);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(serde_json::to_string(&header)?.as_bytes());
    out.push(b'\n');
    for v in params.flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    let malformed = |detail: &str| DcgError::Format {
        path: path.display().to_string(),
        detail: detail.to_string(),
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let rest = bytes
        .strip_prefix(CHECKPOINT_MAGIC)
        .ok_or_else(|| malformed("missing magic"))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| malformed("unterminated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&rest[..nl])?;
    let blob = &rest[nl + 1..];
    if blob.len() % 8 != 0 {
        return Err(malformed("blob length is not a multiple of 8"));
    }
    let flat: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let params = ModelParams::unflatten(&header.layer_spec, &flat)?;
    if params.names != header.names {
        return Err(malformed("parameter names do not match the layer spec"));
    }
    Ok(params)
}
