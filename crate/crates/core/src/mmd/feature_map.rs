use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::models::{
    initial_bn_states, net_loss_and_grad, split_view, BnState, HeadKind, HeadTargets, MlpConfig,
    ModelParams, NetConfig, NetInputs, OptimizerConfig,
};
use crate::rng::rng_for;
use crate::{Error, Result};

/// Configuration of the multi-head group classifier whose penultimate layer
/// is the learned feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapConfig {
    pub trunk: MlpConfig,
    pub optimizer: OptimizerConfig,
}

impl Default for FeatureMapConfig {
    fn default() -> Self {
        FeatureMapConfig {
            trunk: MlpConfig {
                hidden: vec![64, 64, 64],
                dropout: vec![0.1; 3],
                batch_norm: vec![true; 3],
                skip_connection: true,
                embed_dim: None,
            },
            optimizer: OptimizerConfig {
                step_size: 0.05,
                batch_size: Some(64),
                epochs: 60,
                seed: 0,
                grad_tol: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedAttribute {
    pub attribute: String,
    pub reason: String,
}

/// Trained shared-trunk classifier with one softmax head per group
/// attribute; its penultimate layer is the canonical feature map applied
/// before computing kernel statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMap {
    pub net: NetConfig,
    pub params: ModelParams,
    pub bn_states: Vec<Option<BnState>>,
    /// Attributes with a trained head, in input order.
    pub attributes: Vec<String>,
    /// Attributes left out (fewer than two populated groups), with reasons.
    pub excluded: Vec<ExcludedAttribute>,
}

impl FeatureMap {
    /// Feature dimension of the map (penultimate layer width).
    pub fn feature_dim(&self) -> usize {
        self.net.hidden[2]
    }

    /// Map rows through the trunk in inference mode.
    pub fn features(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        let view = split_view(data)?;
        if view.continuous.cols != self.net.n_continuous
            || view.cat_columns.len() != self.net.cat_vocab_sizes.len()
        {
            return Err(Error::Mmd("feature mismatch between feature map and data".into()));
        }
        let inputs = NetInputs { continuous: &view.continuous, cat_indices: &view.cat_indices };
        let mat = crate::models::trunk_features(&self.net, &self.params, &self.bn_states, &inputs);
        Ok((0..mat.rows).map(|r| mat.row(r).to_vec()).collect())
    }

    /// Arg-max head predictions for one attribute (vocabulary indices).
    pub fn head_predictions(&self, data: &Dataset, attribute: &str) -> Result<Vec<u32>> {
        let head = self
            .attributes
            .iter()
            .position(|a| a == attribute)
            .ok_or_else(|| Error::Mmd(format!("no head for attribute `{attribute}`")))?;
        let view = split_view(data)?;
        let inputs = NetInputs { continuous: &view.continuous, cat_indices: &view.cat_indices };
        let outputs = crate::models::net_infer(&self.net, &self.params, &self.bn_states, &inputs);
        let logits = &outputs[head];
        Ok((0..logits.rows)
            .map(|r| {
                let row = logits.row(r);
                let mut best = 0usize;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best as u32
            })
            .collect())
    }
}

/// Train the shared trunk with one softmax head per usable attribute by
/// minimizing the sum of per-head cross-entropies. Attributes with fewer
/// than two populated groups are excluded with a recorded warning.
pub fn learn_feature_map(
    data: &Dataset,
    attributes: &[String],
    config: &FeatureMapConfig,
) -> Result<FeatureMap> {
    if data.n_rows() < 4 {
        return Err(Error::Mmd("too few rows to learn a feature map".into()));
    }
    let mut heads = Vec::new();
    let mut head_targets_all: Vec<Vec<Option<u32>>> = Vec::new();
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    for attribute in attributes {
        let spec = data.schema().column(attribute)?;
        if spec.kind != ColumnKind::GroupAttribute {
            return Err(Error::Mmd(format!("column `{attribute}` is not a group attribute")));
        }
        let vocab = spec.categories.as_ref().expect("group vocabulary");
        let col = data.schema().column_index(attribute)?;
        let targets: Vec<Option<u32>> =
            (0..data.n_rows()).map(|r| data.cell(r, col).as_category()).collect();
        let mut counts = vec![0usize; vocab.len()];
        for t in targets.iter().flatten() {
            counts[*t as usize] += 1;
        }
        let populated = counts.iter().filter(|&&c| c >= 2).count();
        if populated < 2 {
            excluded.push(ExcludedAttribute {
                attribute: attribute.clone(),
                reason: format!("{populated} group(s) with at least 2 rows"),
            });
            continue;
        }
        heads.push(HeadKind::Softmax(vocab.len()));
        head_targets_all.push(targets);
        included.push(attribute.clone());
    }
    if included.is_empty() {
        return Err(Error::Mmd("no attribute with at least two populated groups".into()));
    }

    let view = split_view(data)?;
    let net = config.trunk.to_net(&view, heads);
    net.validate()?;

    let opt = &config.optimizer;
    let mut params = net.init_params(&mut rng_for(opt.seed, &[0xFA]));
    let mut bn_states = initial_bn_states(&net);
    let uses_dropout = net.dropout.iter().any(|&p| p > 0.0);
    let mut dropout_rng = rng_for(opt.seed, &[0xFB]);
    let total = data.n_rows();
    let batch_size = opt.batch_size.unwrap_or(total).clamp(1, total);
    let mut grad = vec![0.0; params.len()];

    for epoch in 0..opt.epochs {
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut rng_for(opt.seed, &[0xFC, epoch as u64]));
        for batch in order.chunks(batch_size) {
            let continuous = view.continuous.take_rows(batch);
            let cats: Vec<Vec<u32>> =
                batch.iter().map(|&r| view.cat_indices[r].clone()).collect();
            let batch_targets: Vec<Vec<Option<u32>>> = head_targets_all
                .iter()
                .map(|t| batch.iter().map(|&r| t[r]).collect())
                .collect();
            let targets: Vec<HeadTargets> =
                batch_targets.iter().map(|t| HeadTargets::Classes(t)).collect();
            let weights = vec![1.0 / batch.len() as f64; batch.len()];
            let inputs = NetInputs { continuous: &continuous, cat_indices: &cats };
            grad.fill(0.0);
            net_loss_and_grad(
                &net,
                &params,
                &inputs,
                &targets,
                &weights,
                Some(&mut grad),
                uses_dropout.then_some(&mut dropout_rng),
                Some(&mut bn_states),
            )?;
            for (p, g) in params.values.iter_mut().zip(&grad) {
                *p -= opt.step_size * g;
            }
            if params.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Mmd(format!(
                    "feature-map training diverged at epoch {epoch}"
                )));
            }
        }
    }

    Ok(FeatureMap { net, params, bn_states, attributes: included, excluded })
}
