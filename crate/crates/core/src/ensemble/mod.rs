//! Two-level stacking with repeated k-fold bagging and greedy ensemble
//! selection over the base-learner zoo.
//!
//! Level-1 learners are bagged with out-of-fold bookkeeping; their
//! out-of-fold predictions, concatenated with the original features, feed
//! the level-2 learners; the top combiner is fitted by forward selection on
//! level-2 out-of-fold predictions. Alpha weighting applies at every level.

mod bagging;
mod selection;

pub use bagging::{
    audit_oof, bagged_oof_fit, BaggedModel, BaggingConfig, OofColumn, OofMatrix, OofProvenance,
};
pub(crate) use bagging::pooled_fold_slots;
pub use selection::{ensemble_select, selection_metric, SelectionResult};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroupedDataset};
use crate::models::{LearnerSpec, TrainConfig};
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub zoo: Vec<LearnerSpec>,
    pub bagging: BaggingConfig,
    /// Stacking levels; capped at 2. A single-learner zoo degenerates to
    /// one level regardless.
    pub levels: usize,
    pub selection_iterations: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            zoo: vec![LearnerSpec::linear()],
            bagging: BaggingConfig::default(),
            levels: 2,
            selection_iterations: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLearner {
    pub model_name: String,
    pub reason: String,
}

/// Diagnostics recorded while fitting: per-learner out-of-fold metrics at
/// each level, the combiner trajectory, and skipped learners.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackFitReport {
    pub level1_oof_metrics: Vec<(String, f64)>,
    pub stacked_oof_metric: f64,
    pub selection_trajectory: Vec<f64>,
    pub skipped: Vec<SkippedLearner>,
}

/// A fitted stacked ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackedEnsemble {
    pub config: EnsembleConfig,
    pub train_config: TrainConfig,
    level1: Vec<BaggedModel>,
    level1_names: Vec<String>,
    level2: Vec<BaggedModel>,
    /// Combiner weights over the final level's models; non-negative, sum 1.
    pub weights: Vec<f64>,
    /// Levels actually fitted (1 or 2).
    pub levels_used: usize,
    pub fit_report: StackFitReport,
    /// Out-of-fold matrices kept for audits.
    pub level1_oof: OofMatrix,
    pub level2_oof: Option<OofMatrix>,
}

fn augmented_names(names: &[String]) -> Vec<String> {
    names.iter().map(|n| format!("oof_{n}")).collect()
}

fn augment_pair(
    pair: &GroupedDataset,
    names: &[String],
    columns: &[Vec<f64>],
) -> Result<GroupedDataset> {
    let m = pair.m();
    let col_names = augmented_names(names);
    let source_cols: Vec<Vec<f64>> = columns.iter().map(|c| c[..m].to_vec()).collect();
    let target_cols: Vec<Vec<f64>> = columns.iter().map(|c| c[m..].to_vec()).collect();
    let source = pair.source().append_continuous_columns(&col_names, &source_cols)?;
    let target = if pair.n() > 0 {
        pair.target().append_continuous_columns(&col_names, &target_cols)?
    } else {
        Dataset::new(source.schema().clone(), vec![], vec![])?
    };
    GroupedDataset::new(source, target)
}

/// Fit the stacked ensemble on the pooled pair under the weighted objective.
/// Base-model failures exclude that model with a recorded reason; the fit
/// proceeds while at least one learner survives a level.
pub fn stack_fit(
    pair: &GroupedDataset,
    config: &EnsembleConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<StackedEnsemble> {
    if config.zoo.is_empty() {
        return Err(Error::Ensemble("the learner zoo is empty".into()));
    }
    if config.levels == 0 || config.levels > 2 {
        return Err(Error::Ensemble("stacking supports 1 or 2 levels".into()));
    }
    let labels: Vec<f64> = {
        let mut l = pair.source().labels().map_err(|e| Error::Ensemble(e.to_string()))?;
        if pair.n() > 0 {
            l.extend(pair.target().labels().map_err(|e| Error::Ensemble(e.to_string()))?);
        }
        l
    };
    let row_ids: Vec<String> = pair
        .source()
        .row_ids()
        .iter()
        .chain(pair.target().row_ids())
        .cloned()
        .collect();

    let mut skipped = Vec::new();
    let mut level1 = Vec::new();
    let mut level1_names = Vec::new();
    let mut level1_columns = Vec::new();
    for (z, spec) in config.zoo.iter().enumerate() {
        match bagged_oof_fit(pair, spec, cfg, &config.bagging, derive_seed(seed, &[1, z as u64]))
        {
            Ok((bagged, column)) => {
                level1_names.push(format!("{}_{z}", spec.name()));
                level1.push(bagged);
                level1_columns.push(column);
            }
            Err(e) => skipped.push(SkippedLearner {
                model_name: format!("{}_{z}", spec.name()),
                reason: e.to_string(),
            }),
        }
    }
    if level1.is_empty() {
        return Err(Error::Ensemble("every level-1 learner failed".into()));
    }
    let mut level1_oof_metrics = Vec::new();
    for (name, column) in level1_names.iter().zip(&level1_columns) {
        let metric = selection_metric(cfg.task, &column.values, &labels)?;
        level1_oof_metrics.push((name.clone(), metric));
    }

    let levels_used = if config.levels == 2 && level1.len() >= 2 { 2 } else { 1 };
    let (level2, level2_oof, final_columns, final_oof_rows) = if levels_used == 2 {
        let oof_values: Vec<Vec<f64>> =
            level1_columns.iter().map(|c| c.values.clone()).collect();
        let augmented = augment_pair(pair, &level1_names, &oof_values)?;
        let mut level2 = Vec::new();
        let mut level2_columns = Vec::new();
        let mut survivors = Vec::new();
        for (z, spec) in config.zoo.iter().enumerate() {
            match bagged_oof_fit(
                &augmented,
                spec,
                cfg,
                &config.bagging,
                derive_seed(seed, &[2, z as u64]),
            ) {
                Ok((bagged, column)) => {
                    survivors.push(format!("{}_{z}", spec.name()));
                    level2.push(bagged);
                    level2_columns.push(column);
                }
                Err(e) => skipped.push(SkippedLearner {
                    model_name: format!("l2_{}_{z}", spec.name()),
                    reason: e.to_string(),
                }),
            }
        }
        if level2.is_empty() {
            return Err(Error::Ensemble("every level-2 learner failed".into()));
        }
        let columns: Vec<Vec<f64>> =
            level2_columns.iter().map(|c| c.values.clone()).collect();
        let matrix = OofMatrix { row_ids: row_ids.clone(), columns: level2_columns };
        (level2, Some(matrix), columns, row_ids.clone())
    } else {
        let columns: Vec<Vec<f64>> =
            level1_columns.iter().map(|c| c.values.clone()).collect();
        (Vec::new(), None, columns, row_ids.clone())
    };
    debug_assert_eq!(final_oof_rows.len(), labels.len());

    let selection =
        ensemble_select(&final_columns, &labels, cfg.task, config.selection_iterations)?;
    let stacked_oof: Vec<f64> = (0..labels.len())
        .map(|r| {
            final_columns
                .iter()
                .zip(&selection.weights)
                .map(|(c, w)| w * c[r])
                .sum()
        })
        .collect();
    let stacked_oof_metric = selection_metric(cfg.task, &stacked_oof, &labels)?;

    Ok(StackedEnsemble {
        config: config.clone(),
        train_config: cfg.clone(),
        level1,
        level1_names: level1_names.clone(),
        level2,
        weights: selection.weights,
        levels_used,
        fit_report: StackFitReport {
            level1_oof_metrics,
            stacked_oof_metric,
            selection_trajectory: selection.trajectory,
            skipped,
        },
        level1_oof: OofMatrix { row_ids, columns: level1_columns },
        level2_oof,
    })
}

/// Deterministic forward pass: level-1 bagged predictions, concatenation
/// with the original features, level-2 bagged predictions, weighted
/// combination.
pub fn ensemble_predict(ensemble: &StackedEnsemble, data: &Dataset) -> Result<Vec<f64>> {
    let level1_preds: Vec<Vec<f64>> = ensemble
        .level1
        .iter()
        .map(|bagged| bagged.predict(data))
        .collect::<Result<_>>()?;
    let final_preds: Vec<Vec<f64>> = if ensemble.levels_used == 2 {
        let augmented = data.append_continuous_columns(
            &augmented_names(&ensemble.level1_names),
            &level1_preds,
        )?;
        ensemble
            .level2
            .iter()
            .map(|bagged| bagged.predict(&augmented))
            .collect::<Result<_>>()?
    } else {
        level1_preds
    };
    if final_preds.len() != ensemble.weights.len() {
        return Err(Error::Ensemble("combiner width mismatch".into()));
    }
    Ok((0..data.n_rows())
        .map(|r| {
            final_preds
                .iter()
                .zip(&ensemble.weights)
                .map(|(p, w)| w * p[r])
                .sum()
        })
        .collect())
}

impl StackedEnsemble {
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        ensemble_predict(self, data)
    }

    /// Re-run the leakage audit over all levels.
    pub fn audit(&self) -> Result<()> {
        for (bagged, column) in self.level1.iter().zip(&self.level1_oof.columns) {
            audit_oof(bagged, column, &self.level1_oof.row_ids)?;
        }
        if let Some(matrix) = &self.level2_oof {
            for (bagged, column) in self.level2.iter().zip(&matrix.columns) {
                audit_oof(bagged, column, &matrix.row_ids)?;
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        let blob = serde_json::to_string(self).expect("ensembles serialize");
        crate::util::sha256_hex(blob.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::models::{KnnConfig, OptimizerConfig, RegularizerSpec};
    use crate::rng::rng_for;
    use crate::testutil::{classification_dataset, pair};
    use rand::Rng;

    fn separable_pair(n: usize, seed: u64) -> GroupedDataset {
        let mut rng = rng_for(seed, &[1]);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = f64::from(i % 2 == 0);
            let center = if y > 0.5 { 2.0 } else { -2.0 };
            xs.push(vec![
                center + rng.random_range(-0.8..0.8),
                -center + rng.random_range(-0.8..0.8),
            ]);
            ys.push(y);
        }
        let source = classification_dataset("s", &xs, &ys);
        let mut xt = Vec::new();
        let mut yt = Vec::new();
        for i in 0..(n / 2) {
            let y = f64::from(i % 2 == 0);
            let center = if y > 0.5 { 2.0 } else { -2.0 };
            xt.push(vec![
                center + rng.random_range(-0.8..0.8),
                -center + rng.random_range(-0.8..0.8),
            ]);
            yt.push(y);
        }
        pair(source, classification_dataset("t", &xt, &yt))
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            alpha: 0.4,
            regularizer: RegularizerSpec::l2(0.05),
            optimizer: OptimizerConfig {
                step_size: 0.3,
                batch_size: None,
                epochs: 80,
                seed: 0,
                grad_tol: None,
            },
            task: Task::BinaryClassification,
        }
    }

    #[test]
    fn single_learner_degenerates_to_bagged_model_with_identity_combiner() {
        let p = separable_pair(24, 3);
        let config = EnsembleConfig {
            zoo: vec![LearnerSpec::linear()],
            bagging: BaggingConfig { folds: 3, repeats: 1 },
            levels: 2,
            selection_iterations: 10,
        };
        let ensemble = stack_fit(&p, &config, &cfg(), 5).unwrap();
        assert_eq!(ensemble.levels_used, 1);
        assert_eq!(ensemble.weights, vec![1.0]);
        let probe = classification_dataset("q", &[vec![1.5, -1.5], vec![-1.5, 1.5]], &[1.0, 0.0]);
        let stacked = ensemble.predict(&probe).unwrap();
        let bagged = ensemble.level1[0].predict(&probe).unwrap();
        assert_eq!(stacked, bagged);
    }

    #[test]
    fn level2_feature_width_is_original_plus_level1_models() {
        let p = separable_pair(30, 7);
        let config = EnsembleConfig {
            zoo: vec![LearnerSpec::linear(), LearnerSpec::Knn(KnnConfig { k: 3 })],
            bagging: BaggingConfig { folds: 3, repeats: 1 },
            levels: 2,
            selection_iterations: 10,
        };
        let ensemble = stack_fit(&p, &config, &cfg(), 9).unwrap();
        assert_eq!(ensemble.levels_used, 2);
        // The concatenation contract, checked through the augmented schema.
        let oof_values: Vec<Vec<f64>> =
            ensemble.level1_oof.columns.iter().map(|c| c.values.clone()).collect();
        let augmented = augment_pair(&p, &ensemble.level1_names, &oof_values).unwrap();
        let n_original = p.schema().columns().len();
        assert_eq!(
            augmented.schema().columns().len(),
            n_original + ensemble.level1.len()
        );
        ensemble.audit().unwrap();
    }

    #[test]
    fn stacked_oof_metric_close_to_best_single_learner() {
        let p = separable_pair(60, 11);
        let config = EnsembleConfig {
            zoo: vec![LearnerSpec::linear(), LearnerSpec::Knn(KnnConfig { k: 5 })],
            bagging: BaggingConfig { folds: 3, repeats: 2 },
            levels: 2,
            selection_iterations: 15,
        };
        let ensemble = stack_fit(&p, &config, &cfg(), 13).unwrap();
        let best_single = ensemble
            .fit_report
            .level1_oof_metrics
            .iter()
            .map(|(_, m)| *m)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            ensemble.fit_report.stacked_oof_metric >= best_single - 0.02,
            "stacked {} vs best single {}",
            ensemble.fit_report.stacked_oof_metric,
            best_single
        );
        for w in ensemble.fit_report.selection_trajectory.windows(2) {
            assert!(w[1] >= w[0] - 1e-15);
        }
    }

    #[test]
    fn failed_learner_is_recorded_and_fit_proceeds() {
        let p = separable_pair(20, 15);
        // k = 50 exceeds every bagging training subset: the k-NN member
        // must fail and be skipped.
        let config = EnsembleConfig {
            zoo: vec![LearnerSpec::linear(), LearnerSpec::Knn(KnnConfig { k: 500 })],
            bagging: BaggingConfig { folds: 2, repeats: 1 },
            levels: 2,
            selection_iterations: 5,
        };
        let ensemble = stack_fit(&p, &config, &cfg(), 17).unwrap();
        assert!(!ensemble.fit_report.skipped.is_empty());
        assert!(ensemble
            .fit_report
            .skipped
            .iter()
            .all(|s| s.model_name.contains("knn")));
    }

    #[test]
    fn constant_combiner_average_of_two_constants() {
        // Combiner weights (0.5, 0.5) over constants c1 and c2 predict the
        // midpoint.
        let p = separable_pair(20, 19);
        let config = EnsembleConfig {
            zoo: vec![LearnerSpec::linear(), LearnerSpec::linear()],
            bagging: BaggingConfig { folds: 2, repeats: 1 },
            levels: 2,
            selection_iterations: 4,
        };
        let mut ensemble = stack_fit(&p, &config, &cfg(), 21).unwrap();
        ensemble.weights = vec![0.5, 0.5];
        let probe = classification_dataset("q", &[vec![0.3, -0.3]], &[0.0]);
        let combined = ensemble.predict(&probe).unwrap()[0];
        // Straight-line reference recomputation of the forward pass.
        let l1: Vec<Vec<f64>> = ensemble
            .level1
            .iter()
            .map(|b| b.predict(&probe).unwrap())
            .collect();
        let augmented = probe
            .append_continuous_columns(&augmented_names(&ensemble.level1_names), &l1)
            .unwrap();
        let l2: Vec<f64> = ensemble
            .level2
            .iter()
            .map(|b| b.predict(&augmented).unwrap()[0])
            .collect();
        let reference = 0.5 * l2[0] + 0.5 * l2[1];
        assert!((combined - reference).abs() < 1e-15);
    }

    #[test]
    fn prediction_is_deterministic_across_refits() {
        let p = separable_pair(24, 23);
        let config = EnsembleConfig {
            zoo: vec![LearnerSpec::linear()],
            bagging: BaggingConfig { folds: 2, repeats: 2 },
            levels: 1,
            selection_iterations: 5,
        };
        let a = stack_fit(&p, &config, &cfg(), 31).unwrap();
        let b = stack_fit(&p, &config, &cfg(), 31).unwrap();
        let probe = classification_dataset("q", &[vec![0.1, 0.4]], &[0.0]);
        assert_eq!(a.predict(&probe).unwrap(), b.predict(&probe).unwrap());
        assert_eq!(a.digest(), b.digest());
    }
}
