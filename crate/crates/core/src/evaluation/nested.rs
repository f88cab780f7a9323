use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auc, mae};
use crate::data::{
    group_partition, stratified_split, stratified_take, strata_map, stratum_keys, Dataset,
    GroupedDataset, Task,
};
use crate::ensemble::{ensemble_predict, stack_fit, EnsembleConfig, StackedEnsemble};
use crate::models::{one_hot_view, train, LearnerSpec, TrainConfig, TrainedModel};
use crate::preprocess::{fit as preprocess_fit, transform, PreprocessorState};
use crate::rng::{derive_seed, rng_for};
use crate::theory::{optimal_alpha, BoundInputs};
use crate::util::row_set_digest;
use crate::{Error, Result};

/// The paper-style search grid k/(k+1), k = 1..=10; finer toward 1.
pub const ALPHA_SEARCH_GRID: [f64; 10] = [
    1.0 / 2.0,
    2.0 / 3.0,
    3.0 / 4.0,
    4.0 / 5.0,
    5.0 / 6.0,
    6.0 / 7.0,
    7.0 / 8.0,
    8.0 / 9.0,
    9.0 / 10.0,
    10.0 / 11.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum AlphaPolicy {
    Fixed { alpha: f64 },
    Grid,
    /// Grid augmented with the bound-minimizing alpha computed from the
    /// fold's sample counts and a divergence proxy.
    Theory,
}

/// Predictive model under evaluation: a single base learner or the stacked
/// ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    Base(LearnerSpec),
    Ensemble(EnsembleConfig),
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Base(spec) => spec.name().to_string(),
            ModelSpec::Ensemble(_) => "ensemble".to_string(),
        }
    }
}

/// A fitted model of either kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedModel {
    Base(TrainedModel),
    Ensemble(StackedEnsemble),
}

impl FittedModel {
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        match self {
            FittedModel::Base(m) => m.predict(data),
            FittedModel::Ensemble(e) => ensemble_predict(e, data),
        }
    }

    pub fn digest(&self) -> String {
        match self {
            FittedModel::Base(m) => m.digest(),
            FittedModel::Ensemble(e) => e.digest(),
        }
    }
}

pub fn fit_model(
    pair: &GroupedDataset,
    model: &ModelSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FittedModel> {
    let mut cfg = cfg.clone();
    cfg.optimizer.seed = seed;
    match model {
        ModelSpec::Base(spec) => Ok(FittedModel::Base(train(pair, spec, &cfg)?)),
        ModelSpec::Ensemble(config) => {
            let ensemble = stack_fit(pair, config, &cfg, seed)?;
            ensemble.audit()?;
            Ok(FittedModel::Ensemble(ensemble))
        }
    }
}

/// One experiment: which groups, how much target data, which model, and how
/// alpha is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub group_attribute: String,
    pub source_group: String,
    pub target_group: String,
    /// Fraction of target rows placed in train. Supported settings: 0, up
    /// to 1/outer_folds, and (outer_folds-1)/outer_folds ("train on all").
    #[serde(default)]
    pub target_fraction: f64,
    pub model: ModelSpec,
    pub alpha_policy: AlphaPolicy,
    pub base_train: TrainConfig,
    #[serde(default = "default_folds")]
    pub outer_folds: usize,
    #[serde(default = "default_folds")]
    pub inner_folds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Reproduce the bookkeeping of the small-fraction protocol exactly:
    /// the test set is the other k-1 folds and the unsampled remainder of
    /// the sampled fold stays unused.
    #[serde(default = "default_true")]
    pub strict_paper_splits: bool,
    #[serde(default = "default_skew")]
    pub skew_threshold: f64,
}

fn default_folds() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_skew() -> f64 {
    crate::preprocess::DEFAULT_SKEW_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub metric: f64,
    pub chosen_alpha: Option<f64>,
    /// "target_oof" when alpha selection scored pooled out-of-fold target
    /// predictions, "pooled_oof" when it fell back to all validation rows,
    /// "none" when no selection ran.
    pub selection_basis: String,
    pub n_train: usize,
    pub n_test: usize,
    pub test_row_ids: Vec<String>,
    pub test_scores: Vec<f64>,
    /// Digest of every row id that influenced selection and fitting.
    pub selection_digest: String,
    pub test_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedFold {
    pub fold: usize,
    pub reason: String,
}

/// Per-fold metrics with their aggregation; mean and standard deviation are
/// recomputable from the fold values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric_name: String,
    pub source_group: String,
    pub target_group: String,
    pub target_fraction: f64,
    pub model: String,
    pub seed: u64,
    pub folds: Vec<FoldOutcome>,
    pub excluded: Vec<ExcludedFold>,
    pub mean: f64,
    pub std: f64,
    /// p-values against named baselines, filled by comparison drivers.
    pub comparisons: BTreeMap<String, f64>,
    pub audits_passed: bool,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Alpha chosen by inner cross-validation, with the per-candidate scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSelection {
    pub best_alpha: f64,
    /// (alpha, oriented metric) per grid candidate; higher is better.
    pub scores: Vec<(f64, f64)>,
    pub basis: String,
}

fn oriented_metric(task: Task, scores: &[f64], labels: &[f64]) -> Result<f64> {
    match task {
        Task::BinaryClassification => auc(scores, labels),
        Task::Regression => Ok(-mae(scores, labels)?),
    }
}

fn reported_metric(task: Task, scores: &[f64], labels: &[f64]) -> Result<f64> {
    match task {
        Task::BinaryClassification => auc(scores, labels),
        Task::Regression => mae(scores, labels),
    }
}

pub(crate) fn metric_name(task: Task) -> &'static str {
    match task {
        Task::BinaryClassification => "auc",
        Task::Regression => "mae",
    }
}

/// Select alpha by stratified inner cross-validation on the (preprocessed)
/// train pair: per candidate, models are trained on each inner-train split
/// and scored on the pooled out-of-fold predictions over the train set's
/// target rows (all validation rows when the target rows alone leave the
/// metric undefined).
pub fn select_alpha_by_inner_cv(
    pair: &GroupedDataset,
    grid: &[f64],
    model: &ModelSpec,
    base: &TrainConfig,
    inner_folds: usize,
    seed: u64,
) -> Result<AlphaSelection> {
    if grid.is_empty() {
        return Err(Error::Evaluation("empty alpha grid".into()));
    }
    let slots = crate::ensemble::pooled_fold_slots(pair, inner_folds, seed)?;
    // Every inner fold must hold a target share when target data is in play.
    if pair.n() > 0 {
        let mut per_fold = vec![0usize; inner_folds];
        for id in pair.target().row_ids() {
            if let Some(&crate::data::RowSlot::Fold(f)) = slots.get(id) {
                per_fold[f] += 1;
            }
        }
        if let Some(empty) = per_fold.iter().position(|&c| c == 0) {
            return Err(Error::Evaluation(format!(
                "inner fold {empty} holds no target rows; too little target data for {inner_folds} folds"
            )));
        }
    }

    // Materialize the fold splits once.
    let mut splits = Vec::with_capacity(inner_folds);
    for fold in 0..inner_folds {
        let pick = |data: &Dataset, in_fold: bool| -> Result<Dataset> {
            let idx: Vec<usize> = data
                .row_ids()
                .iter()
                .enumerate()
                .filter(|(_, id)| match slots.get(*id) {
                    Some(&crate::data::RowSlot::Fold(f)) => (f == fold) == in_fold,
                    _ => false,
                })
                .map(|(i, _)| i)
                .collect();
            data.select_rows(&idx)
        };
        let train_pair = GroupedDataset::new(pick(pair.source(), false)?, pick(pair.target(), false)?)?;
        let val_source = pick(pair.source(), true)?;
        let val_target = pick(pair.target(), true)?;
        splits.push((train_pair, val_source, val_target));
    }

    let mut scores = Vec::with_capacity(grid.len());
    for (a_idx, &alpha) in grid.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.alpha = alpha;
        let mut target_scores = Vec::new();
        let mut target_labels = Vec::new();
        let mut all_scores = Vec::new();
        let mut all_labels = Vec::new();
        for (fold, (train_pair, val_source, val_target)) in splits.iter().enumerate() {
            let fitted = fit_model(
                train_pair,
                model,
                &cfg,
                derive_seed(seed, &[0xA1, a_idx as u64, fold as u64]),
            )
            .map_err(|e| Error::Evaluation(format!("inner fold {fold}: {e}")))?;
            if val_target.n_rows() > 0 {
                let preds = fitted.predict(val_target)?;
                target_scores.extend_from_slice(&preds);
                target_labels.extend(val_target.labels()?);
                all_scores.extend(preds);
                all_labels.extend(val_target.labels()?);
            }
            if val_source.n_rows() > 0 {
                let preds = fitted.predict(val_source)?;
                all_scores.extend(preds);
                all_labels.extend(val_source.labels()?);
            }
        }
        let (metric, basis) =
            match oriented_metric(base.task, &target_scores, &target_labels) {
                Ok(m) if !target_scores.is_empty() => (m, "target_oof"),
                _ => (oriented_metric(base.task, &all_scores, &all_labels)?, "pooled_oof"),
            };
        scores.push((alpha, metric, basis));
    }

    let best = scores
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.1.partial_cmp(&b.1)
                .expect("finite metrics")
                // Deterministic ties: the earlier grid entry wins.
                .then(ib.cmp(ia))
        })
        .expect("non-empty grid");
    Ok(AlphaSelection {
        best_alpha: best.1 .0,
        basis: best.1 .2.to_string(),
        scores: scores.iter().map(|(a, m, _)| (*a, *m)).collect(),
    })
}

/// Parameter-count heuristic for the VC dimension entering the theory
/// policy.
pub fn vc_heuristic(model: &ModelSpec, data: &Dataset) -> Result<f64> {
    let width = one_hot_view(data)?.names.len();
    let linear = (width + 1) as f64;
    Ok(match model {
        ModelSpec::Base(LearnerSpec::Mlp(mlp)) => {
            let mut total = 0.0;
            let mut prev = width as f64;
            for &h in &mlp.hidden {
                total += prev * h as f64 + h as f64;
                prev = h as f64;
            }
            total + prev + 1.0
        }
        _ => linear,
    })
}

/// Squared-MMD proxy between preprocessed source and target rows, capped at
/// 200 rows per side for cost. An engineering stand-in for the divergence
/// the adaptation bounds are stated with.
pub fn divergence_proxy(source: &Dataset, target: &Dataset, seed: u64) -> Result<f64> {
    use rand::seq::SliceRandom;
    let cap = 200usize.min(source.n_rows()).min(target.n_rows());
    if cap < 2 {
        return Ok(0.0);
    }
    let sample = |data: &Dataset, salt: u64| -> Result<Vec<Vec<f64>>> {
        let mut idx: Vec<usize> = (0..data.n_rows()).collect();
        idx.shuffle(&mut rng_for(seed, &[0xD1, salt]));
        idx.truncate(cap);
        let view = one_hot_view(&data.select_rows(&idx)?)?;
        Ok((0..view.matrix.rows).map(|r| view.matrix.row(r).to_vec()).collect())
    };
    let xs = sample(source, 0)?;
    let ys = sample(target, 1)?;
    let pooled: Vec<Vec<f64>> = xs.iter().chain(ys.iter()).cloned().collect();
    let kernel = match crate::mmd::median_bandwidth(&pooled) {
        Ok(bw) => crate::mmd::Kernel::rbf(bw)?,
        Err(_) => return Ok(0.0),
    };
    crate::mmd::mmd_unbiased(&xs, &ys, &kernel).map(|v| v.max(0.0))
}

fn alpha_grid(
    policy: &AlphaPolicy,
    model: &ModelSpec,
    source_pp: &Dataset,
    target_train_pp: &Dataset,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(match policy {
        AlphaPolicy::Fixed { alpha } => vec![*alpha],
        AlphaPolicy::Grid => ALPHA_SEARCH_GRID.to_vec(),
        AlphaPolicy::Theory => {
            let mut grid = ALPHA_SEARCH_GRID.to_vec();
            let v = vc_heuristic(model, source_pp)?;
            let d = divergence_proxy(source_pp, target_train_pp, seed)?;
            let bounds = BoundInputs::new(v, 0.05, source_pp.n_rows(), target_train_pp.n_rows())?
                .with_divergence(d);
            let alpha = optimal_alpha(&bounds)?;
            if !grid.iter().any(|a| (a - alpha).abs() < 1e-9) {
                grid.push(alpha);
                grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
            }
            grid
        }
    })
}

struct FoldResult {
    outcome: std::result::Result<FoldOutcome, ExcludedFold>,
}

/// Nested cross-validation implementing the evaluation protocol: outer folds
/// estimate the test metric, inner folds select alpha, and no test row
/// influences any selection decision (enforced and recorded via digests).
pub fn nested_cv(spec: &ExperimentSpec, data: &Dataset) -> Result<MetricReport> {
    if spec.outer_folds < 2 || spec.inner_folds < 2 {
        return Err(Error::Evaluation("outer and inner fold counts must be at least 2".into()));
    }
    if spec.base_train.task != data.schema().task() {
        return Err(Error::Evaluation("spec task does not match the dataset label".into()));
    }
    if matches!(spec.alpha_policy, AlphaPolicy::Grid | AlphaPolicy::Theory)
        && spec.target_fraction <= 0.0
    {
        return Err(Error::Evaluation(
            "a search policy requires target_fraction > 0".into(),
        ));
    }
    let partition = group_partition(data, &spec.group_attribute)?;
    let fetch = |name: &str| -> Result<Dataset> {
        partition
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Evaluation(format!("group `{name}` not present in the data")))
    };
    let outcomes = if spec.source_group == spec.target_group {
        same_group_cv(spec, &fetch(&spec.source_group)?)?
    } else {
        adaptation_cv(spec, &fetch(&spec.source_group)?, &fetch(&spec.target_group)?)?
    };

    let mut folds = Vec::new();
    let mut excluded = Vec::new();
    for result in outcomes {
        match result.outcome {
            Ok(outcome) => folds.push(outcome),
            Err(excl) => excluded.push(excl),
        }
    }
    if folds.is_empty() {
        return Err(Error::Evaluation(format!(
            "every fold was excluded: {excluded:?}"
        )));
    }
    let values: Vec<f64> = folds.iter().map(|f| f.metric).collect();
    Ok(MetricReport {
        metric_name: metric_name(spec.base_train.task).to_string(),
        source_group: spec.source_group.clone(),
        target_group: spec.target_group.clone(),
        target_fraction: spec.target_fraction,
        model: spec.model.name(),
        seed: spec.seed,
        folds,
        excluded,
        mean: crate::util::mean(&values),
        std: crate::util::sample_std(&values),
        comparisons: BTreeMap::new(),
        audits_passed: true,
    })
}

fn disjoint_or_error(selection: &[String], test: &[String]) -> Result<()> {
    let set: HashSet<&str> = selection.iter().map(|s| s.as_str()).collect();
    for id in test {
        if set.contains(id.as_str()) {
            return Err(Error::Evaluation(format!(
                "test row `{id}` leaked into model selection"
            )));
        }
    }
    Ok(())
}

fn preprocess_pair(
    train_source: &Dataset,
    train_target: &Dataset,
    test: &Dataset,
    skew_threshold: f64,
) -> Result<(GroupedDataset, Dataset, PreprocessorState)> {
    // Fit on the union of the train rows only.
    let mut fit_ids = Vec::new();
    let mut fit_rows = Vec::new();
    for d in [train_source, train_target] {
        for i in 0..d.n_rows() {
            fit_ids.push(d.row_ids()[i].clone());
            fit_rows.push(d.row(i).to_vec());
        }
    }
    let fit_data = Dataset::new(train_source.schema().clone(), fit_ids, fit_rows)?;
    let state = preprocess_fit(&fit_data, skew_threshold)?;
    let source_pp = transform(&state, train_source)?.data;
    let target_pp = if train_target.n_rows() > 0 {
        transform(&state, train_target)?.data
    } else {
        Dataset::new(source_pp.schema().clone(), vec![], vec![])?
    };
    let test_pp = transform(&state, test)?.data;
    Ok((GroupedDataset::new(source_pp, target_pp)?, test_pp, state))
}

fn evaluate_fold(
    fold: usize,
    spec: &ExperimentSpec,
    train_pair: &GroupedDataset,
    test_pp: &Dataset,
    chosen_alpha: f64,
    selection_basis: String,
) -> std::result::Result<FoldOutcome, Error> {
    let mut cfg = spec.base_train.clone();
    cfg.alpha = chosen_alpha;
    let fitted = fit_model(
        train_pair,
        &spec.model,
        &cfg,
        derive_seed(spec.seed, &[0xF1, fold as u64]),
    )?;
    let scores = fitted.predict(test_pp)?;
    let labels = test_pp.labels()?;
    let metric = reported_metric(spec.base_train.task, &scores, &labels)?;

    let selection_rows: Vec<String> = train_pair
        .source()
        .row_ids()
        .iter()
        .chain(train_pair.target().row_ids())
        .cloned()
        .collect();
    let test_rows = test_pp.row_ids().to_vec();
    disjoint_or_error(&selection_rows, &test_rows)?;
    Ok(FoldOutcome {
        fold,
        metric,
        chosen_alpha: Some(chosen_alpha),
        selection_basis,
        n_train: selection_rows.len(),
        n_test: test_rows.len(),
        selection_digest: row_set_digest(&selection_rows),
        test_digest: row_set_digest(&test_rows),
        test_row_ids: test_rows,
        test_scores: scores,
    })
}

fn same_group_cv(spec: &ExperimentSpec, data: &Dataset) -> Result<Vec<FoldResult>> {
    let label = data.schema().label_column().name.clone();
    let plan = stratified_split(data, spec.outer_folds, &label, spec.seed)?;
    let folds = plan.fold_indices(data)?;
    (0..spec.outer_folds)
        .into_par_iter()
        .map(|i| {
            let test_idx = &folds[i];
            let train_idx: Vec<usize> =
                (0..spec.outer_folds).filter(|&j| j != i).flat_map(|j| folds[j].clone()).collect();
            let train_raw = data.select_rows(&train_idx)?;
            let test_raw = data.select_rows(test_idx)?;
            let empty = Dataset::new(train_raw.schema().clone(), vec![], vec![])?;
            let (train_pair, test_pp, _) =
                preprocess_pair(&train_raw, &empty, &test_raw, spec.skew_threshold)?;
            let alpha = match spec.alpha_policy {
                // Same-group training has no source/target distinction: the
                // weighted objective reduces to plain ERM at alpha 0.
                AlphaPolicy::Fixed { .. } | AlphaPolicy::Grid | AlphaPolicy::Theory => 0.0,
            };
            let outcome = evaluate_fold(i, spec, &train_pair, &test_pp, alpha, "none".into());
            Ok(FoldResult {
                outcome: outcome.map_err(|e| ExcludedFold { fold: i, reason: e.to_string() }),
            })
        })
        .collect()
}

fn adaptation_cv(
    spec: &ExperimentSpec,
    source: &Dataset,
    target: &Dataset,
) -> Result<Vec<FoldResult>> {
    let fraction = spec.target_fraction;
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Evaluation(format!(
            "target_fraction must lie in [0,1], got {fraction}"
        )));
    }
    if fraction == 0.0 {
        // Single evaluation on all target data, no test folds.
        let empty = Dataset::new(source.schema().clone(), vec![], vec![])?;
        let (train_pair, test_pp, _) =
            preprocess_pair(source, &empty, target, spec.skew_threshold)?;
        let outcome = evaluate_fold(0, spec, &train_pair, &test_pp, 0.0, "none".into());
        return Ok(vec![FoldResult {
            outcome: outcome.map_err(|e| ExcludedFold { fold: 0, reason: e.to_string() }),
        }]);
    }

    let label = target.schema().label_column().name.clone();
    let plan = stratified_split(target, spec.outer_folds, &label, spec.seed)?;
    let folds = plan.fold_indices(target)?;
    let n_target = target.n_rows();
    let n_take = (fraction * n_target as f64).round() as usize;
    let train_all = (fraction - (spec.outer_folds - 1) as f64 / spec.outer_folds as f64).abs()
        < 1e-9;

    (0..spec.outer_folds)
        .into_par_iter()
        .map(|i| {
            let run = || -> std::result::Result<FoldOutcome, Error> {
                let fold_ids: Vec<String> =
                    folds[i].iter().map(|&r| target.row_ids()[r].clone()).collect();
                let (train_target_ids, test_ids): (Vec<String>, Vec<String>) = if train_all {
                    // Train on the other k-1 folds; test on fold i.
                    let train: Vec<String> = (0..spec.outer_folds)
                        .filter(|&j| j != i)
                        .flat_map(|j| folds[j].iter().map(|&r| target.row_ids()[r].clone()))
                        .collect();
                    (train, fold_ids.clone())
                } else {
                    if n_take > folds[i].len() {
                        return Err(Error::Evaluation(format!(
                            "target_fraction {fraction} needs {n_take} rows but outer fold {i} holds {}; supported fractions are at most 1/k or exactly (k-1)/k",
                            folds[i].len()
                        )));
                    }
                    // Stratified sample of the fraction inside fold i.
                    let fold_data = target.select_rows(&folds[i])?;
                    let keys = stratum_keys(&fold_data)?;
                    let strata = strata_map(fold_data.row_ids(), &keys);
                    let taken = stratified_take(
                        &strata,
                        n_take,
                        fold_data.n_rows(),
                        derive_seed(spec.seed, &[0x77, i as u64]),
                        0x78,
                    );
                    let taken_set: HashSet<&str> = taken.iter().map(|s| s.as_str()).collect();
                    let test: Vec<String> = if spec.strict_paper_splits {
                        // The unsampled remainder of fold i stays unused.
                        target
                            .row_ids()
                            .iter()
                            .filter(|id| !fold_ids.contains(id))
                            .cloned()
                            .collect()
                    } else {
                        target
                            .row_ids()
                            .iter()
                            .filter(|id| !taken_set.contains(id.as_str()))
                            .cloned()
                            .collect()
                    };
                    (taken, test)
                };

                let to_indices = |ids: &[String]| -> Result<Vec<usize>> {
                    ids.iter().map(|id| target.row_index(id)).collect()
                };
                let train_target_raw = target.select_rows(&to_indices(&train_target_ids)?)?;
                let test_raw = target.select_rows(&to_indices(&test_ids)?)?;
                let (train_pair, test_pp, _) =
                    preprocess_pair(source, &train_target_raw, &test_raw, spec.skew_threshold)?;

                let grid = alpha_grid(
                    &spec.alpha_policy,
                    &spec.model,
                    train_pair.source(),
                    train_pair.target(),
                    derive_seed(spec.seed, &[0xE7, i as u64]),
                )?;
                let (alpha, basis) = if grid.len() == 1 {
                    (grid[0], "none".to_string())
                } else {
                    let selection = select_alpha_by_inner_cv(
                        &train_pair,
                        &grid,
                        &spec.model,
                        &spec.base_train,
                        spec.inner_folds,
                        derive_seed(spec.seed, &[0xE8, i as u64]),
                    )?;
                    (selection.best_alpha, selection.basis)
                };
                evaluate_fold(i, spec, &train_pair, &test_pp, alpha, basis)
            };
            Ok(FoldResult {
                outcome: run().map_err(|e| ExcludedFold { fold: i, reason: e.to_string() }),
            })
        })
        .collect()
}
