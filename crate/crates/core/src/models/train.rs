use serde::{Deserialize, Serialize};

use super::feature::{one_hot_view, split_view, training_labels};
use super::forest::{ForestConfig, ForestModel};
use super::knn::{KnnConfig, KnnModel};
use super::linear::{linear_layout, LinearModel};
use super::matrix::Mat;
use super::net::{
    initial_bn_states, loss_and_grad, sigmoid, BnState, HeadKind, HeadTargets, NetConfig,
    NetInputs,
};
use super::params::ModelParams;
use crate::data::{Dataset, GroupedDataset, Task};
use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    L2,
    None,
}

/// Omega(theta): `strength * ||theta||^2 / 2` for L2 over all parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub strength: f64,
}

impl RegularizerSpec {
    pub fn none() -> Self {
        RegularizerSpec { kind: RegularizerKind::None, strength: 0.0 }
    }

    pub fn l2(strength: f64) -> Self {
        RegularizerSpec { kind: RegularizerKind::L2, strength }
    }

    pub fn penalty(&self, params: &[f64]) -> f64 {
        match self.kind {
            RegularizerKind::None => 0.0,
            RegularizerKind::L2 => {
                0.5 * self.strength * params.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }

    pub fn add_gradient(&self, params: &[f64], grad: &mut [f64]) {
        if self.kind == RegularizerKind::L2 && self.strength != 0.0 {
            for (g, p) in grad.iter_mut().zip(params) {
                *g += self.strength * p;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub step_size: f64,
    /// Mini-batch size; `None` trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
    /// Stop early once the full-gradient infinity norm falls below this.
    #[serde(default)]
    pub grad_tol: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { step_size: 0.05, batch_size: Some(64), epochs: 200, seed: 0, grad_tol: None }
    }
}

/// Configuration of the weighted empirical risk objective
/// `(1 - alpha) * R_s + alpha * R_t + Omega(theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub regularizer: RegularizerSpec,
    pub optimizer: OptimizerConfig,
    pub task: Task,
}

impl TrainConfig {
    pub fn validate(&self, pair: &GroupedDataset) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Model(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.alpha > 0.0 && pair.n() == 0 {
            return Err(Error::Model(
                "alpha > 0 requires at least one target row".into(),
            ));
        }
        if self.optimizer.step_size <= 0.0 {
            return Err(Error::Model("step size must be positive".into()));
        }
        if self.optimizer.epochs == 0 {
            return Err(Error::Model("at least one epoch required".into()));
        }
        if self.regularizer.strength < 0.0 {
            return Err(Error::Model("regularizer strength must be non-negative".into()));
        }
        Ok(())
    }
}

/// Empirical source/target risks and the combined weighted objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskValues {
    pub source_risk: f64,
    pub target_risk: f64,
    pub objective: f64,
}

/// Per-sample weights realizing the weighted objective on the pooled
/// (source-then-target) row order: `(1 - alpha)/m` per source row and
/// `alpha/n` per target row.
pub fn sample_weights(m: usize, n: usize, alpha: f64) -> Vec<f64> {
    let mut w = Vec::with_capacity(m + n);
    let ws = if m > 0 { (1.0 - alpha) / m as f64 } else { 0.0 };
    let wt = if n > 0 { alpha / n as f64 } else { 0.0 };
    w.extend(std::iter::repeat_n(ws, m));
    w.extend(std::iter::repeat_n(wt, n));
    w
}

/// Multi-layer perceptron hyper-parameters. Widths, dropout and batch norm
/// are per hidden layer; embeddings default to ceil(sqrt(vocabulary)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub dropout: Vec<f64>,
    pub batch_norm: Vec<bool>,
    pub skip_connection: bool,
    #[serde(default)]
    pub embed_dim: Option<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![128, 128, 128],
            dropout: vec![0.25; 3],
            batch_norm: vec![true; 3],
            skip_connection: true,
            embed_dim: None,
        }
    }
}

impl MlpConfig {
    pub fn embed_dim_for(&self, vocab: usize) -> usize {
        self.embed_dim.unwrap_or_else(|| (vocab as f64).sqrt().ceil() as usize).max(1)
    }

    pub(crate) fn to_net(&self, view: &super::feature::SplitView, heads: Vec<HeadKind>) -> NetConfig {
        NetConfig {
            n_continuous: view.continuous.cols,
            cat_vocab_sizes: view.cat_columns.iter().map(|(_, v)| *v).collect(),
            embed_dims: view.cat_columns.iter().map(|(_, v)| self.embed_dim_for(*v)).collect(),
            hidden: self.hidden.clone(),
            dropout: self.dropout.clone(),
            batch_norm: self.batch_norm.clone(),
            skip_connection: self.skip_connection,
            heads,
        }
    }
}

/// Base-learner selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Linear(LinearConfig),
    Mlp(MlpConfig),
    Knn(KnnConfig),
    Forest(ForestConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {}

impl LearnerSpec {
    pub fn linear() -> Self {
        LearnerSpec::Linear(LinearConfig {})
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::Linear(_) => "linear",
            LearnerSpec::Mlp(_) => "mlp",
            LearnerSpec::Knn(_) => "knn",
            LearnerSpec::Forest(_) => "forest",
        }
    }
}

/// Trained multi-layer perceptron: flat parameters, layout, and the running
/// batch-norm statistics used at inference time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub net: NetConfig,
    pub params: ModelParams,
    pub bn_states: Vec<Option<BnState>>,
    pub task: Task,
    pub training_curve: Vec<f64>,
}

impl MlpModel {
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let view = split_view(data)?;
        if view.continuous.cols != self.net.n_continuous
            || view.cat_columns.len() != self.net.cat_vocab_sizes.len()
        {
            return Err(Error::Model("feature mismatch between network and data".into()));
        }
        let inputs = NetInputs { continuous: &view.continuous, cat_indices: &view.cat_indices };
        let outputs = super::net::infer(&self.net, &self.params, &self.bn_states, &inputs);
        let raw = &outputs[0];
        Ok((0..raw.rows)
            .map(|r| match self.task {
                Task::BinaryClassification => sigmoid(raw.get(r, 0)),
                Task::Regression => raw.get(r, 0),
            })
            .collect())
    }
}

/// A trained base model of any kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Linear(LinearModel),
    Mlp(MlpModel),
    Knn(KnnModel),
    Forest(ForestModel),
}

impl TrainedModel {
    /// Probability per row for classification, real prediction for
    /// regression. Dropout is off and batch norm runs on running statistics.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Linear(m) => m.predict(data),
            TrainedModel::Mlp(m) => m.predict(data),
            TrainedModel::Knn(m) => m.predict(data),
            TrainedModel::Forest(m) => m.predict(data),
        }
    }

    /// Stable content digest of the serialized model; used by downstream
    /// analyses to prove the model was not refit.
    pub fn digest(&self) -> String {
        let blob = serde_json::to_string(self).expect("models serialize");
        crate::util::sha256_hex(blob.as_bytes())
    }

    pub fn training_curve(&self) -> Option<&[f64]> {
        match self {
            TrainedModel::Linear(m) => Some(&m.training_curve),
            TrainedModel::Mlp(m) => Some(&m.training_curve),
            _ => None,
        }
    }
}

/// Free-function form of [`TrainedModel::predict`].
pub fn predict(model: &TrainedModel, data: &Dataset) -> Result<Vec<f64>> {
    model.predict(data)
}

/// Pooled differentiable problem: features of source rows followed by
/// target rows, per-sample losses weighted by [`sample_weights`].
enum DiffProblem {
    Linear { x: Mat, labels: Vec<f64>, feature_names: Vec<String> },
    Mlp { net: NetConfig, continuous: Mat, cats: Vec<Vec<u32>>, labels: Vec<f64> },
}

impl DiffProblem {
    fn build(pair: &GroupedDataset, spec: &LearnerSpec, task: Task) -> Result<(Self, usize, usize)> {
        let m = pair.m();
        let n = pair.n();
        let mut labels = training_labels(pair.source(), task)?;
        if n > 0 {
            labels.extend(training_labels(pair.target(), task)?);
        }
        match spec {
            LearnerSpec::Linear(_) => {
                let src = one_hot_view(pair.source())?;
                let mut rows_data = src.matrix.data;
                if n > 0 {
                    let tgt = one_hot_view(pair.target())?;
                    if tgt.names != src.names {
                        return Err(Error::Model("source/target feature mismatch".into()));
                    }
                    rows_data.extend(tgt.matrix.data);
                }
                let x = Mat { rows: m + n, cols: src.names.len(), data: rows_data };
                Ok((DiffProblem::Linear { x, labels, feature_names: src.names }, m, n))
            }
            LearnerSpec::Mlp(mlp) => {
                let src = split_view(pair.source())?;
                let mut continuous = src.continuous.data.clone();
                let mut cats = src.cat_indices.clone();
                if n > 0 {
                    let tgt = split_view(pair.target())?;
                    continuous.extend(tgt.continuous.data);
                    cats.extend(tgt.cat_indices);
                }
                let continuous = Mat { rows: m + n, cols: src.continuous.cols, data: continuous };
                let head = match task {
                    Task::BinaryClassification => HeadKind::Binary,
                    Task::Regression => HeadKind::Regression,
                };
                let net = mlp.to_net(&src, vec![head]);
                net.validate()?;
                Ok((DiffProblem::Mlp { net, continuous, cats, labels }, m, n))
            }
            _ => Err(Error::Model(format!("{} is not a gradient-trained model", spec.name()))),
        }
    }

    fn n_rows(&self) -> usize {
        match self {
            DiffProblem::Linear { x, .. } => x.rows,
            DiffProblem::Mlp { continuous, .. } => continuous.rows,
        }
    }

    fn init_params(&self, seed: u64) -> ModelParams {
        match self {
            DiffProblem::Linear { x, .. } => ModelParams::zeros(linear_layout(x.cols)),
            DiffProblem::Mlp { net, .. } => {
                let mut rng = rng_for(seed, &[0x1217]);
                net.init_params(&mut rng)
            }
        }
    }

    /// Per-sample losses over `rows`; optionally accumulates the weighted
    /// data-term gradient. `batch_weights` aligns with `rows`.
    #[allow(clippy::too_many_arguments)]
    fn losses(
        &self,
        params: &ModelParams,
        rows: &[usize],
        batch_weights: &[f64],
        task: Task,
        grad: Option<&mut [f64]>,
        dropout_rng: Option<&mut rand_chacha::ChaCha8Rng>,
        bn_update: Option<&mut Vec<Option<BnState>>>,
    ) -> Result<Vec<f64>> {
        match self {
            DiffProblem::Linear { x, labels, .. } => Ok(super::linear::losses_and_grad(
                params,
                x,
                labels,
                rows,
                batch_weights,
                task,
                grad,
            )),
            DiffProblem::Mlp { net, continuous, cats, labels } => {
                let batch_x = continuous.take_rows(rows);
                let batch_cats: Vec<Vec<u32>> = rows.iter().map(|&r| cats[r].clone()).collect();
                let batch_labels: Vec<f64> = rows.iter().map(|&r| labels[r]).collect();
                let inputs = NetInputs { continuous: &batch_x, cat_indices: &batch_cats };
                let targets = [HeadTargets::Scalar(&batch_labels)];
                loss_and_grad(
                    net,
                    params,
                    &inputs,
                    &targets,
                    batch_weights,
                    grad,
                    dropout_rng,
                    bn_update,
                )
            }
        }
    }
}

fn risk_values(
    losses: &[f64],
    m: usize,
    n: usize,
    cfg: &TrainConfig,
    params: &ModelParams,
) -> Result<RiskValues> {
    let source_risk =
        if m > 0 { losses[..m].iter().sum::<f64>() / m as f64 } else { 0.0 };
    let target_risk =
        if n > 0 { losses[m..].iter().sum::<f64>() / n as f64 } else { 0.0 };
    let objective = (1.0 - cfg.alpha) * source_risk
        + cfg.alpha * target_risk
        + cfg.regularizer.penalty(&params.values);
    if !objective.is_finite() {
        return Err(Error::Model(format!(
            "non-finite weighted objective (source risk {source_risk}, target risk {target_risk})"
        )));
    }
    Ok(RiskValues { source_risk, target_risk, objective })
}

/// Weighted empirical risk of `params` on the pair under `cfg`.
pub fn weighted_erm_loss(
    spec: &LearnerSpec,
    params: &ModelParams,
    pair: &GroupedDataset,
    cfg: &TrainConfig,
) -> Result<RiskValues> {
    cfg.validate(pair)?;
    let (problem, m, n) = DiffProblem::build(pair, spec, cfg.task)?;
    let rows: Vec<usize> = (0..problem.n_rows()).collect();
    let weights = sample_weights(m, n, cfg.alpha);
    let losses = problem.losses(params, &rows, &weights, cfg.task, None, None, None)?;
    risk_values(&losses, m, n, cfg, params)
}

/// Exact analytic gradient of the weighted objective (dropout disabled,
/// batch statistics over the full pooled set).
pub fn gradient(
    spec: &LearnerSpec,
    params: &ModelParams,
    pair: &GroupedDataset,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate(pair)?;
    let (problem, m, n) = DiffProblem::build(pair, spec, cfg.task)?;
    let rows: Vec<usize> = (0..problem.n_rows()).collect();
    let weights = sample_weights(m, n, cfg.alpha);
    let mut grad = vec![0.0; params.len()];
    problem.losses(params, &rows, &weights, cfg.task, Some(&mut grad), None, None)?;
    cfg.regularizer.add_gradient(&params.values, &mut grad);
    Ok(grad)
}

/// Train a model on the pooled pair by mini-batch SGD on the weighted
/// objective. Deterministic for a fixed seed; divergence aborts with the
/// last finite checkpoint reported.
pub fn train(pair: &GroupedDataset, spec: &LearnerSpec, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate(pair)?;
    match spec {
        LearnerSpec::Knn(knn_cfg) => {
            let (x, names, labels) = pooled_one_hot(pair, cfg.task)?;
            let weights = sample_weights(pair.m(), pair.n(), cfg.alpha);
            Ok(TrainedModel::Knn(KnnModel::fit(
                knn_cfg.clone(),
                cfg.task,
                names,
                x,
                labels,
                weights,
            )?))
        }
        LearnerSpec::Forest(forest_cfg) => {
            let (x, names, labels) = pooled_one_hot(pair, cfg.task)?;
            let weights = sample_weights(pair.m(), pair.n(), cfg.alpha);
            Ok(TrainedModel::Forest(ForestModel::fit(
                forest_cfg.clone(),
                cfg.task,
                names,
                &x,
                &labels,
                &weights,
                cfg.optimizer.seed,
            )?))
        }
        LearnerSpec::Linear(_) | LearnerSpec::Mlp(_) => train_gradient_model(pair, spec, cfg),
    }
}

fn pooled_one_hot(pair: &GroupedDataset, task: Task) -> Result<(Mat, Vec<String>, Vec<f64>)> {
    let src = one_hot_view(pair.source())?;
    let mut labels = training_labels(pair.source(), task)?;
    let mut data = src.matrix.data;
    if pair.n() > 0 {
        let tgt = one_hot_view(pair.target())?;
        if tgt.names != src.names {
            return Err(Error::Model("source/target feature mismatch".into()));
        }
        data.extend(tgt.matrix.data);
        labels.extend(training_labels(pair.target(), task)?);
    }
    let x = Mat { rows: pair.m() + pair.n(), cols: src.names.len(), data };
    Ok((x, src.names, labels))
}

fn train_gradient_model(
    pair: &GroupedDataset,
    spec: &LearnerSpec,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let (problem, m, n) = DiffProblem::build(pair, spec, cfg.task)?;
    let total = problem.n_rows();
    let weights = sample_weights(m, n, cfg.alpha);
    let all_rows: Vec<usize> = (0..total).collect();

    let mut params = problem.init_params(cfg.optimizer.seed);
    let mut bn_states = match &problem {
        DiffProblem::Mlp { net, .. } => initial_bn_states(net),
        DiffProblem::Linear { .. } => Vec::new(),
    };
    let uses_dropout = match &problem {
        DiffProblem::Mlp { net, .. } => net.dropout.iter().any(|&p| p > 0.0),
        DiffProblem::Linear { .. } => false,
    };

    let batch_size = cfg.optimizer.batch_size.unwrap_or(total).clamp(1, total);
    let mut curve = Vec::with_capacity(cfg.optimizer.epochs);
    let mut last_finite = f64::INFINITY;
    let mut grad = vec![0.0; params.len()];
    let mut dropout_rng = rng_for(cfg.optimizer.seed, &[0xD0]);

    for epoch in 0..cfg.optimizer.epochs {
        let mut order = all_rows.clone();
        {
            use rand::seq::SliceRandom;
            let mut rng = rng_for(cfg.optimizer.seed, &[0xE0, epoch as u64]);
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(batch_size) {
            grad.fill(0.0);
            let scale = total as f64 / batch.len() as f64;
            let batch_weights: Vec<f64> = batch.iter().map(|&r| weights[r] * scale).collect();
            problem.losses(
                &params,
                batch,
                &batch_weights,
                cfg.task,
                Some(&mut grad),
                uses_dropout.then_some(&mut dropout_rng),
                Some(&mut bn_states),
            )?;
            cfg.regularizer.add_gradient(&params.values, &mut grad);
            for (p, g) in params.values.iter_mut().zip(&grad) {
                *p -= cfg.optimizer.step_size * g;
            }
            if params.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainDiverged { epoch, last_objective: last_finite });
            }
        }
        // Full-batch objective for the curve (deterministic: no dropout).
        let losses = problem.losses(&params, &all_rows, &weights, cfg.task, None, None, None)?;
        let risk = risk_values(&losses, m, n, cfg, &params)
            .map_err(|_| Error::TrainDiverged { epoch, last_objective: last_finite })?;
        curve.push(risk.objective);
        last_finite = risk.objective;

        if let Some(tol) = cfg.optimizer.grad_tol {
            grad.fill(0.0);
            problem.losses(&params, &all_rows, &weights, cfg.task, Some(&mut grad), None, None)?;
            cfg.regularizer.add_gradient(&params.values, &mut grad);
            let inf_norm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            if inf_norm <= tol {
                break;
            }
        }
    }

    Ok(match problem {
        DiffProblem::Linear { feature_names, .. } => TrainedModel::Linear(LinearModel {
            params,
            task: cfg.task,
            feature_names,
            training_curve: curve,
        }),
        DiffProblem::Mlp { net, .. } => {
            let LearnerSpec::Mlp(mlp_cfg) = spec else { unreachable!() };
            TrainedModel::Mlp(MlpModel {
                config: mlp_cfg.clone(),
                net,
                params,
                bn_states,
                task: cfg.task,
                training_curve: curve,
            })
        }
    })
}
