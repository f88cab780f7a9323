//! Feed-forward network with per-column category embeddings, three hidden
//! ReLU layers, optional batch normalization and dropout, a skip connection
//! from the first to the penultimate layer, and one or more output heads.
//!
//! The same trunk serves the predictive model (single scalar head) and the
//! group-classifier feature map (one softmax head per attribute). Backward
//! passes are hand-written and checked against central finite differences.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{linear_backward, Mat};
use super::params::{ModelParams, ParamLayout};
use crate::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

/// Output head on top of the shared trunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// Scalar logit trained with the sigmoid-Bernoulli log-likelihood.
    Binary,
    /// Scalar output trained with the unit-variance Gaussian log-likelihood
    /// (squared error up to a dropped constant).
    Regression,
    /// k-way classifier trained with the softmax cross-entropy.
    Softmax(usize),
}

impl HeadKind {
    pub fn width(&self) -> usize {
        match self {
            HeadKind::Binary | HeadKind::Regression => 1,
            HeadKind::Softmax(k) => *k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub n_continuous: usize,
    /// Vocabulary size per categorical input column.
    pub cat_vocab_sizes: Vec<usize>,
    /// Embedding width per categorical input column.
    pub embed_dims: Vec<usize>,
    /// Three hidden layer widths.
    pub hidden: Vec<usize>,
    /// Dropout rate per hidden layer, in [0, 1).
    pub dropout: Vec<f64>,
    /// Batch-normalization flag per hidden layer.
    pub batch_norm: Vec<bool>,
    /// Adds the first hidden layer's output to the penultimate layer's
    /// pre-activation; requires equal first and last hidden widths.
    pub skip_connection: bool,
    pub heads: Vec<HeadKind>,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.len() != 3 {
            return Err(Error::Model(format!(
                "network expects exactly 3 hidden layers, got {}",
                self.hidden.len()
            )));
        }
        if self.dropout.len() != 3 || self.batch_norm.len() != 3 {
            return Err(Error::Model("dropout/batch_norm must list 3 layers".into()));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Model("hidden widths must be at least 1".into()));
        }
        if self.dropout.iter().any(|&p| !(0.0..1.0).contains(&p)) {
            return Err(Error::Model("dropout rates must lie in [0, 1)".into()));
        }
        if self.skip_connection && self.hidden[0] != self.hidden[2] {
            return Err(Error::Model(
                "skip connection requires equal first and penultimate widths".into(),
            ));
        }
        if self.cat_vocab_sizes.len() != self.embed_dims.len() {
            return Err(Error::Model("one embedding width per categorical column".into()));
        }
        if self.heads.is_empty() {
            return Err(Error::Model("network needs at least one head".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.n_continuous + self.embed_dims.iter().sum::<usize>()
    }

    pub fn layout(&self) -> ParamLayout {
        let mut b = ParamLayout::builder();
        for (c, (&vocab, &dim)) in self.cat_vocab_sizes.iter().zip(&self.embed_dims).enumerate() {
            b.push(format!("emb{c}"), vocab, dim);
        }
        let mut in_dim = self.input_width();
        for (l, &width) in self.hidden.iter().enumerate() {
            b.push(format!("w{l}"), width, in_dim);
            b.push(format!("b{l}"), width, 1);
            if self.batch_norm[l] {
                b.push(format!("gamma{l}"), width, 1);
                b.push(format!("beta{l}"), width, 1);
            }
            in_dim = width;
        }
        for (h, head) in self.heads.iter().enumerate() {
            b.push(format!("head_w{h}"), head.width(), self.hidden[2]);
            b.push(format!("head_b{h}"), head.width(), 1);
        }
        b.build()
    }

    /// Seeded Xavier-uniform initialization; batch-norm scales start at 1.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> ModelParams {
        let layout = self.layout();
        let mut values = vec![0.0; layout.total()];
        for seg in layout.segments().to_vec() {
            let slice = &mut values[seg.offset..seg.offset + seg.len()];
            if seg.name.starts_with("emb") {
                for v in slice.iter_mut() {
                    *v = rng.random_range(-0.1..0.1);
                }
            } else if seg.name.starts_with('w') || seg.name.starts_with("head_w") {
                let bound = (6.0 / (seg.rows + seg.cols) as f64).sqrt();
                for v in slice.iter_mut() {
                    *v = rng.random_range(-bound..bound);
                }
            } else if seg.name.starts_with("gamma") {
                slice.fill(1.0);
            } else {
                // Biases and batch-norm shifts start small but nonzero;
                // exact zeros park dead-row pre-activations on the ReLU
                // kink, which is a non-differentiable point.
                for v in slice.iter_mut() {
                    *v = rng.random_range(-0.01..0.01);
                }
            }
        }
        ModelParams::new(values, layout).expect("init produces finite parameters")
    }
}

/// Running batch-norm statistics per layer (`None` when the layer has no
/// batch norm). Not trainable parameters; carried by the trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnState {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub fn initial_bn_states(cfg: &NetConfig) -> Vec<Option<BnState>> {
    cfg.hidden
        .iter()
        .zip(&cfg.batch_norm)
        .map(|(&w, &on)| on.then(|| BnState { mean: vec![0.0; w], var: vec![1.0; w] }))
        .collect()
}

/// Network inputs: a continuous block plus raw category indices.
pub struct NetInputs<'a> {
    pub continuous: &'a Mat,
    pub cat_indices: &'a [Vec<u32>],
}

/// Per-head training targets; `Classes` entries may be `None` to skip a row
/// for that head.
pub enum HeadTargets<'a> {
    Scalar(&'a [f64]),
    Classes(&'a [Option<u32>]),
}

fn assemble_input(cfg: &NetConfig, params: &ModelParams, inputs: &NetInputs) -> Mat {
    let b = inputs.continuous.rows;
    let mut x = Mat::zeros(b, cfg.input_width());
    for r in 0..b {
        let row = x.row_mut(r);
        row[..cfg.n_continuous].copy_from_slice(inputs.continuous.row(r));
        let mut cursor = cfg.n_continuous;
        for (c, &dim) in cfg.embed_dims.iter().enumerate() {
            let idx = inputs.cat_indices[r][c] as usize;
            let table = params.layout.slice(&format!("emb{c}"), &params.values).unwrap();
            row[cursor..cursor + dim].copy_from_slice(&table[idx * dim..(idx + 1) * dim]);
            cursor += dim;
        }
    }
    x
}

struct BnCache {
    normalized: Mat,
    inv_std: Vec<f64>,
}

struct LayerCache {
    input: Mat,
    /// Pre-activation after batch norm and skip addition.
    pre_activation: Mat,
    bn: Option<BnCache>,
    dropout_mask: Option<Mat>,
    output: Mat,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
}

#[derive(Clone, Copy)]
enum BnMode<'a> {
    Batch,
    Running(&'a [Option<BnState>]),
}

fn bn_forward(
    z: &Mat,
    gamma: &[f64],
    beta: &[f64],
    mode: BnMode,
    layer: usize,
    update: &mut Option<&mut Vec<Option<BnState>>>,
) -> (Mat, Option<BnCache>) {
    let b = z.rows as f64;
    let width = z.cols;
    match mode {
        BnMode::Batch => {
            let mut mean = vec![0.0; width];
            let mut var = vec![0.0; width];
            for r in 0..z.rows {
                for j in 0..width {
                    mean[j] += z.get(r, j);
                }
            }
            for m in mean.iter_mut() {
                *m /= b;
            }
            for r in 0..z.rows {
                for j in 0..width {
                    let d = z.get(r, j) - mean[j];
                    var[j] += d * d;
                }
            }
            for v in var.iter_mut() {
                *v /= b;
            }
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut normalized = Mat::zeros(z.rows, width);
            let mut out = Mat::zeros(z.rows, width);
            for r in 0..z.rows {
                for j in 0..width {
                    let zn = (z.get(r, j) - mean[j]) * inv_std[j];
                    normalized.set(r, j, zn);
                    out.set(r, j, gamma[j] * zn + beta[j]);
                }
            }
            if let Some(states) = update.as_deref_mut() {
                let state = states[layer].as_mut().expect("bn layer has state");
                for j in 0..width {
                    state.mean[j] = BN_MOMENTUM * state.mean[j] + (1.0 - BN_MOMENTUM) * mean[j];
                    state.var[j] = BN_MOMENTUM * state.var[j] + (1.0 - BN_MOMENTUM) * var[j];
                }
            }
            (out, Some(BnCache { normalized, inv_std }))
        }
        BnMode::Running(states) => {
            let state = states[layer].as_ref().expect("bn layer has state");
            let mut out = Mat::zeros(z.rows, width);
            for r in 0..z.rows {
                for j in 0..width {
                    let zn = (z.get(r, j) - state.mean[j]) / (state.var[j] + BN_EPS).sqrt();
                    out.set(r, j, gamma[j] * zn + beta[j]);
                }
            }
            (out, None)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn forward(
    cfg: &NetConfig,
    params: &ModelParams,
    inputs: &NetInputs,
    bn_mode: BnMode,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
    mut bn_update: Option<&mut Vec<Option<BnState>>>,
) -> (Vec<Mat>, ForwardCache) {
    let mut layers: Vec<LayerCache> = Vec::with_capacity(3);
    let mut current = assemble_input(cfg, params, inputs);
    for l in 0..3 {
        let w = params.layout.slice(&format!("w{l}"), &params.values).unwrap();
        let bvec = params.layout.slice(&format!("b{l}"), &params.values).unwrap();
        let weight = Mat { rows: cfg.hidden[l], cols: current.cols, data: w.to_vec() };
        let z = current.linear_forward(&weight, bvec);
        let (mut pre, bn_cache) = if cfg.batch_norm[l] {
            let gamma = params.layout.slice(&format!("gamma{l}"), &params.values).unwrap();
            let beta = params.layout.slice(&format!("beta{l}"), &params.values).unwrap();
            bn_forward(&z, gamma, beta, bn_mode, l, &mut bn_update)
        } else {
            (z, None)
        };
        if cfg.skip_connection && l == 2 {
            let h0 = &layers[0].output;
            for r in 0..pre.rows {
                for j in 0..pre.cols {
                    let v = pre.get(r, j) + h0.get(r, j);
                    pre.set(r, j, v);
                }
            }
        }
        let mut out = Mat::zeros(pre.rows, pre.cols);
        for r in 0..pre.rows {
            for j in 0..pre.cols {
                out.set(r, j, pre.get(r, j).max(0.0));
            }
        }
        let dropout_mask = match (&mut dropout_rng, cfg.dropout[l] > 0.0) {
            (Some(rng), true) => {
                let p = cfg.dropout[l];
                let scale = 1.0 / (1.0 - p);
                let mut mask = Mat::zeros(out.rows, out.cols);
                for r in 0..out.rows {
                    for j in 0..out.cols {
                        let keep = rng.random::<f64>() >= p;
                        let factor = if keep { scale } else { 0.0 };
                        mask.set(r, j, factor);
                        out.set(r, j, out.get(r, j) * factor);
                    }
                }
                Some(mask)
            }
            _ => None,
        };
        layers.push(LayerCache { input: current, pre_activation: pre, bn: bn_cache, dropout_mask, output: out.clone() });
        current = out;
    }
    let h_last = current;
    let mut head_outputs = Vec::with_capacity(cfg.heads.len());
    for (h, head) in cfg.heads.iter().enumerate() {
        let w = params.layout.slice(&format!("head_w{h}"), &params.values).unwrap();
        let bvec = params.layout.slice(&format!("head_b{h}"), &params.values).unwrap();
        let weight = Mat { rows: head.width(), cols: h_last.cols, data: w.to_vec() };
        head_outputs.push(h_last.linear_forward(&weight, bvec));
    }
    (head_outputs, ForwardCache { layers })
}

fn stable_sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Per-sample loss and d(loss)/d(output) for one head.
fn head_loss(
    head: &HeadKind,
    outputs: &Mat,
    targets: &HeadTargets,
    losses: &mut [f64],
    d_out: &mut Mat,
) -> Result<()> {
    match (head, targets) {
        (HeadKind::Binary, HeadTargets::Scalar(ys)) => {
            for r in 0..outputs.rows {
                let s = outputs.get(r, 0);
                let y = ys[r];
                losses[r] += s.max(0.0) - s * y + (-s.abs()).exp().ln_1p();
                d_out.set(r, 0, stable_sigmoid(s) - y);
            }
        }
        (HeadKind::Regression, HeadTargets::Scalar(ys)) => {
            for r in 0..outputs.rows {
                let s = outputs.get(r, 0);
                let diff = s - ys[r];
                losses[r] += 0.5 * diff * diff;
                d_out.set(r, 0, diff);
            }
        }
        (HeadKind::Softmax(k), HeadTargets::Classes(classes)) => {
            for r in 0..outputs.rows {
                let Some(target) = classes[r] else { continue };
                let logits = outputs.row(r);
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum_exp: f64 = logits.iter().map(|&v| (v - max).exp()).sum();
                let log_z = max + sum_exp.ln();
                losses[r] += log_z - logits[target as usize];
                for j in 0..*k {
                    let p = (logits[j] - log_z).exp();
                    let indicator = if j == target as usize { 1.0 } else { 0.0 };
                    d_out.set(r, j, p - indicator);
                }
            }
        }
        _ => return Err(Error::Model("head/target kind mismatch".into())),
    }
    Ok(())
}

/// Per-sample losses of the summed-head objective, optionally accumulating
/// the weighted gradient `sum_b weight_b * d(loss_b)/d(theta)` into `grad`.
///
/// Batch statistics are used for batch norm (training mode); dropout is
/// active only when a generator is supplied, so the deterministic path is
/// exactly differentiable and finite-difference checkable.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad(
    cfg: &NetConfig,
    params: &ModelParams,
    inputs: &NetInputs,
    targets: &[HeadTargets],
    sample_weights: &[f64],
    mut grad: Option<&mut [f64]>,
    dropout_rng: Option<&mut ChaCha8Rng>,
    bn_update: Option<&mut Vec<Option<BnState>>>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if targets.len() != cfg.heads.len() {
        return Err(Error::Model("one target set per head required".into()));
    }
    let batch = inputs.continuous.rows;
    let (head_outputs, cache) =
        forward(cfg, params, inputs, BnMode::Batch, dropout_rng, bn_update);

    let mut losses = vec![0.0; batch];
    let mut d_heads: Vec<Mat> = head_outputs
        .iter()
        .map(|out| Mat::zeros(out.rows, out.cols))
        .collect();
    for ((head, outputs), (targets, d_out)) in cfg
        .heads
        .iter()
        .zip(&head_outputs)
        .zip(targets.iter().zip(d_heads.iter_mut()))
    {
        head_loss(head, outputs, targets, &mut losses, d_out)?;
    }

    let Some(grad) = grad.as_deref_mut() else {
        return Ok(losses);
    };
    if grad.len() != params.len() {
        return Err(Error::Model("gradient buffer size mismatch".into()));
    }

    // Scale head gradients by per-sample weights.
    for d_out in d_heads.iter_mut() {
        for r in 0..d_out.rows {
            let w = sample_weights[r];
            for j in 0..d_out.cols {
                d_out.set(r, j, d_out.get(r, j) * w);
            }
        }
    }

    // Heads backward into the trunk output.
    let h_last = &cache.layers[2].output;
    let mut d_h = Mat::zeros(h_last.rows, h_last.cols);
    for (h, head) in cfg.heads.iter().enumerate() {
        let w_seg = params.layout.segment(&format!("head_w{h}"))?.clone();
        let b_seg = params.layout.segment(&format!("head_b{h}"))?.clone();
        let weight = Mat {
            rows: head.width(),
            cols: h_last.cols,
            data: params.values[w_seg.offset..w_seg.offset + w_seg.len()].to_vec(),
        };
        let (left, right) = grad.split_at_mut(b_seg.offset);
        let d_w = &mut left[w_seg.offset..w_seg.offset + w_seg.len()];
        let d_b = &mut right[..b_seg.len()];
        let d_input = linear_backward(h_last, &weight, &d_heads[h], d_w, d_b);
        for r in 0..d_h.rows {
            for j in 0..d_h.cols {
                d_h.set(r, j, d_h.get(r, j) + d_input.get(r, j));
            }
        }
    }

    // Trunk backward, carrying the skip contribution to layer 0's output.
    let mut d_skip_h0: Option<Mat> = None;
    let mut d_current = d_h;
    for l in (0..3).rev() {
        let layer = &cache.layers[l];
        if l == 0 {
            if let Some(extra) = d_skip_h0.take() {
                for r in 0..d_current.rows {
                    for j in 0..d_current.cols {
                        d_current.set(r, j, d_current.get(r, j) + extra.get(r, j));
                    }
                }
            }
        }
        // Dropout backward.
        if let Some(mask) = &layer.dropout_mask {
            for r in 0..d_current.rows {
                for j in 0..d_current.cols {
                    d_current.set(r, j, d_current.get(r, j) * mask.get(r, j));
                }
            }
        }
        // ReLU backward.
        for r in 0..d_current.rows {
            for j in 0..d_current.cols {
                if layer.pre_activation.get(r, j) <= 0.0 {
                    d_current.set(r, j, 0.0);
                }
            }
        }
        // Skip backward: the addition routes the same gradient to h0.
        if cfg.skip_connection && l == 2 {
            d_skip_h0 = Some(d_current.clone());
        }
        // Batch-norm backward.
        if let Some(bn) = &layer.bn {
            let gamma = params.layout.slice(&format!("gamma{l}"), &params.values)?.to_vec();
            let g_seg = params.layout.segment(&format!("gamma{l}"))?.clone();
            let be_seg = params.layout.segment(&format!("beta{l}"))?.clone();
            let width = d_current.cols;
            let b = d_current.rows as f64;
            let mut sum_dzn = vec![0.0; width];
            let mut sum_dzn_zn = vec![0.0; width];
            for r in 0..d_current.rows {
                for j in 0..width {
                    let g_out = d_current.get(r, j);
                    grad[g_seg.offset + j] += g_out * bn.normalized.get(r, j);
                    grad[be_seg.offset + j] += g_out;
                    let dzn = g_out * gamma[j];
                    sum_dzn[j] += dzn;
                    sum_dzn_zn[j] += dzn * bn.normalized.get(r, j);
                }
            }
            let mut d_z = Mat::zeros(d_current.rows, width);
            for r in 0..d_current.rows {
                for j in 0..width {
                    let dzn = d_current.get(r, j) * gamma[j];
                    let zn = bn.normalized.get(r, j);
                    let v = bn.inv_std[j] / b * (b * dzn - sum_dzn[j] - zn * sum_dzn_zn[j]);
                    d_z.set(r, j, v);
                }
            }
            d_current = d_z;
        }
        // Linear backward.
        let w_seg = params.layout.segment(&format!("w{l}"))?.clone();
        let b_seg = params.layout.segment(&format!("b{l}"))?.clone();
        let weight = Mat {
            rows: cfg.hidden[l],
            cols: layer.input.cols,
            data: params.values[w_seg.offset..w_seg.offset + w_seg.len()].to_vec(),
        };
        let (left, right) = grad.split_at_mut(b_seg.offset);
        let d_w = &mut left[w_seg.offset..w_seg.offset + w_seg.len()];
        let d_b = &mut right[..b_seg.len()];
        d_current = linear_backward(&layer.input, &weight, &d_current, d_w, d_b);
    }

    // Embedding scatter.
    let mut cursor = cfg.n_continuous;
    for (c, &dim) in cfg.embed_dims.iter().enumerate() {
        let seg = params.layout.segment(&format!("emb{c}"))?.clone();
        for r in 0..d_current.rows {
            let idx = inputs.cat_indices[r][c] as usize;
            for d in 0..dim {
                grad[seg.offset + idx * dim + d] += d_current.get(r, cursor + d);
            }
        }
        cursor += dim;
    }

    Ok(losses)
}

/// Inference-mode head outputs: dropout off, batch norm on running
/// statistics.
pub fn infer(
    cfg: &NetConfig,
    params: &ModelParams,
    bn_states: &[Option<BnState>],
    inputs: &NetInputs,
) -> Vec<Mat> {
    let (outputs, _) = forward(cfg, params, inputs, BnMode::Running(bn_states), None, None);
    outputs
}

/// Penultimate-layer activations in inference mode; the learned feature map.
pub fn trunk_features(
    cfg: &NetConfig,
    params: &ModelParams,
    bn_states: &[Option<BnState>],
    inputs: &NetInputs,
) -> Mat {
    let (_, cache) = forward(cfg, params, inputs, BnMode::Running(bn_states), None, None);
    cache.layers.into_iter().last().expect("three layers").output
}

pub fn sigmoid(s: f64) -> f64 {
    stable_sigmoid(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn small_config(bn: bool, skip: bool) -> NetConfig {
        NetConfig {
            n_continuous: 2,
            cat_vocab_sizes: vec![3],
            embed_dims: vec![2],
            hidden: vec![4, 5, 4],
            dropout: vec![0.0; 3],
            batch_norm: vec![bn; 3],
            skip_connection: skip,
            heads: vec![HeadKind::Binary],
        }
    }

    fn toy_batch() -> (Mat, Vec<Vec<u32>>, Vec<f64>) {
        let continuous = Mat::from_rows(vec![
            vec![0.3, -1.2],
            vec![1.1, 0.4],
            vec![-0.5, 0.9],
            vec![0.0, 0.2],
            vec![2.0, -0.3],
        ]);
        let cats = vec![vec![0], vec![1], vec![2], vec![1], vec![0]];
        let ys = vec![1.0, 0.0, 1.0, 0.0, 1.0];
        (continuous, cats, ys)
    }

    fn check_gradient(cfg: &NetConfig, weights: &[f64]) {
        let mut rng = rng_for(17, &[1]);
        let params = cfg.init_params(&mut rng);
        let (continuous, cats, ys) = toy_batch();
        let inputs = NetInputs { continuous: &continuous, cat_indices: &cats };
        let targets = [HeadTargets::Scalar(&ys)];

        let mut grad = vec![0.0; params.len()];
        loss_and_grad(cfg, &params, &inputs, &targets, weights, Some(&mut grad), None, None)
            .unwrap();

        let weighted_loss = |values: &[f64]| -> f64 {
            let p = ModelParams::new(values.to_vec(), params.layout.clone()).unwrap();
            let losses =
                loss_and_grad(cfg, &p, &inputs, &targets, weights, None, None, None).unwrap();
            losses.iter().zip(weights).map(|(l, w)| l * w).sum()
        };

        let eps = 1e-5;
        for idx in 0..params.len() {
            let mut plus = params.values.clone();
            plus[idx] += eps;
            let mut minus = params.values.clone();
            minus[idx] -= eps;
            let numeric = (weighted_loss(&plus) - weighted_loss(&minus)) / (2.0 * eps);
            if (numeric - grad[idx]).abs() < 1e-9 {
                continue;
            }
            let denom = numeric.abs().max(grad[idx].abs()).max(1e-8);
            let rel = (numeric - grad[idx]).abs() / denom;
            assert!(
                rel < 1e-4,
                "param {idx}: numeric {numeric} analytic {} rel {rel}",
                grad[idx]
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences_plain() {
        check_gradient(&small_config(false, false), &[0.2; 5]);
    }

    #[test]
    fn gradient_matches_finite_differences_with_bn_and_skip() {
        check_gradient(&small_config(true, true), &[0.1, 0.3, 0.05, 0.25, 0.3]);
    }

    #[test]
    fn softmax_head_gradient() {
        let cfg = NetConfig {
            n_continuous: 2,
            cat_vocab_sizes: vec![],
            embed_dims: vec![],
            hidden: vec![3, 4, 3],
            dropout: vec![0.0; 3],
            batch_norm: vec![false, true, false],
            skip_connection: true,
            heads: vec![HeadKind::Softmax(3), HeadKind::Softmax(2)],
        };
        let mut rng = rng_for(3, &[9]);
        let params = cfg.init_params(&mut rng);
        let continuous = Mat::from_rows(vec![
            vec![0.3, -1.2],
            vec![1.1, 0.4],
            vec![-0.5, 0.9],
            vec![0.7, 0.1],
        ]);
        let cats: Vec<Vec<u32>> = vec![vec![]; 4];
        let head_a = [Some(0u32), Some(2), None, Some(1)];
        let head_b = [Some(1u32), Some(0), Some(1), None];
        let targets = [HeadTargets::Classes(&head_a), HeadTargets::Classes(&head_b)];
        let weights = [0.25; 4];
        let inputs = NetInputs { continuous: &continuous, cat_indices: &cats };

        let mut grad = vec![0.0; params.len()];
        loss_and_grad(&cfg, &params, &inputs, &targets, &weights, Some(&mut grad), None, None)
            .unwrap();

        let loss_fn = |values: &[f64]| -> f64 {
            let p = ModelParams::new(values.to_vec(), params.layout.clone()).unwrap();
            let targets = [HeadTargets::Classes(&head_a), HeadTargets::Classes(&head_b)];
            let losses =
                loss_and_grad(&cfg, &p, &inputs, &targets, &weights, None, None, None).unwrap();
            losses.iter().zip(&weights).map(|(l, w)| l * w).sum()
        };
        let eps = 1e-5;
        for idx in (0..params.len()).step_by(3) {
            let mut plus = params.values.clone();
            plus[idx] += eps;
            let mut minus = params.values.clone();
            minus[idx] -= eps;
            let numeric = (loss_fn(&plus) - loss_fn(&minus)) / (2.0 * eps);
            if (numeric - grad[idx]).abs() < 1e-9 {
                continue;
            }
            let denom = numeric.abs().max(grad[idx].abs()).max(1e-8);
            assert!(
                (numeric - grad[idx]).abs() / denom < 1e-4,
                "param {idx}: numeric {numeric} analytic {}",
                grad[idx]
            );
        }
    }

    #[test]
    fn inference_uses_running_statistics_and_is_deterministic() {
        let cfg = small_config(true, true);
        let mut rng = rng_for(5, &[2]);
        let params = cfg.init_params(&mut rng);
        let mut bn = initial_bn_states(&cfg);
        let (continuous, cats, ys) = toy_batch();
        let inputs = NetInputs { continuous: &continuous, cat_indices: &cats };
        let targets = [HeadTargets::Scalar(&ys)];
        loss_and_grad(&cfg, &params, &inputs, &targets, &[0.2; 5], None, None, Some(&mut bn))
            .unwrap();
        let out_a = infer(&cfg, &params, &bn, &inputs);
        let out_b = infer(&cfg, &params, &bn, &inputs);
        assert_eq!(out_a[0].data, out_b[0].data);
        // Running stats must have moved off their initial values.
        let state = bn[0].as_ref().unwrap();
        assert!(state.mean.iter().any(|&m| m != 0.0));
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = small_config(false, false);
        cfg.hidden = vec![4, 5];
        assert!(cfg.validate().is_err());
        let mut cfg = small_config(false, true);
        cfg.hidden = vec![4, 5, 6];
        assert!(cfg.validate().is_err());
        let mut cfg = small_config(false, false);
        cfg.dropout = vec![0.0, 0.0, 1.0];
        assert!(cfg.validate().is_err());
    }
}
