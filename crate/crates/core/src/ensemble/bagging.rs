use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::{deal_ring, strata_map, stratum_keys, Dataset, GroupedDataset, RowSlot};
use crate::models::{train, LearnerSpec, TrainConfig, TrainedModel};
use crate::rng::derive_seed;
use crate::util::row_set_digest;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaggingConfig {
    pub folds: usize,
    pub repeats: usize,
}

impl Default for BaggingConfig {
    fn default() -> Self {
        BaggingConfig { folds: 5, repeats: 2 }
    }
}

/// One contribution to an out-of-fold entry: the model (identified by its
/// index into the bagged committee) whose training folds excluded the row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OofProvenance {
    pub repeat: usize,
    pub fold: usize,
    pub model_index: usize,
    pub training_digest: String,
}

/// Out-of-fold predictions of one bagged learner over the training rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OofColumn {
    pub model_name: String,
    /// Mean out-of-fold prediction per row, averaged over repeats.
    pub values: Vec<f64>,
    /// Contributions per row; length `repeats` each.
    pub provenance: Vec<Vec<OofProvenance>>,
}

/// Collection of out-of-fold columns over a shared row universe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OofMatrix {
    pub row_ids: Vec<String>,
    pub columns: Vec<OofColumn>,
}

/// A committee of `folds * repeats` models of one learner spec; inference
/// averages all members.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaggedModel {
    pub spec: LearnerSpec,
    pub models: Vec<TrainedModel>,
    /// Row ids each member was trained on (bagging provenance).
    pub training_row_ids: Vec<Vec<String>>,
}

impl BaggedModel {
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mut total = vec![0.0; data.n_rows()];
        for model in &self.models {
            for (t, p) in total.iter_mut().zip(model.predict(data)?) {
                *t += p;
            }
        }
        for t in total.iter_mut() {
            *t /= self.models.len() as f64;
        }
        Ok(total)
    }
}

/// Stratified fold slots over the pooled pair, with target rows dealt
/// separately so every fold holds an equal (within one) share of them.
pub(crate) fn pooled_fold_slots(
    pair: &GroupedDataset,
    k: usize,
    seed: u64,
) -> Result<BTreeMap<String, RowSlot>> {
    let mut slots = BTreeMap::new();
    let source_keys = stratum_keys(pair.source())?;
    deal_ring(&strata_map(pair.source().row_ids(), &source_keys), k, seed, 0xB1, &mut slots);
    if pair.n() > 0 {
        let target_keys = stratum_keys(pair.target())?;
        deal_ring(&strata_map(pair.target().row_ids(), &target_keys), k, seed, 0xB2, &mut slots);
    }
    Ok(slots)
}

fn subset_by_slot(
    data: &Dataset,
    slots: &BTreeMap<String, RowSlot>,
    fold: usize,
    keep_in_fold: bool,
) -> Result<Dataset> {
    let indices: Vec<usize> = data
        .row_ids()
        .iter()
        .enumerate()
        .filter(|(_, id)| match slots.get(*id) {
            Some(RowSlot::Fold(f)) => (*f == fold) == keep_in_fold,
            _ => false,
        })
        .map(|(i, _)| i)
        .collect();
    data.select_rows(&indices)
}

/// Fit one learner with repeated stratified k-fold bagging.
///
/// Per repeat, `k` models are each trained on k-1 folds of the pooled pair
/// (alpha weights recomputed on each sub-pair); a row's out-of-fold entry is
/// the average over repeats of the prediction from the model whose training
/// folds exclude it. The leakage audit runs before returning.
pub fn bagged_oof_fit(
    pair: &GroupedDataset,
    spec: &LearnerSpec,
    cfg: &TrainConfig,
    bagging: &BaggingConfig,
    seed: u64,
) -> Result<(BaggedModel, OofColumn)> {
    if bagging.folds < 2 {
        return Err(Error::Ensemble("bagging needs at least 2 folds".into()));
    }
    if bagging.repeats == 0 {
        return Err(Error::Ensemble("bagging needs at least 1 repeat".into()));
    }
    let row_ids: Vec<String> = pair
        .source()
        .row_ids()
        .iter()
        .chain(pair.target().row_ids())
        .cloned()
        .collect();
    let mut sums = vec![0.0; row_ids.len()];
    let mut provenance: Vec<Vec<OofProvenance>> = vec![Vec::new(); row_ids.len()];
    let mut models = Vec::with_capacity(bagging.folds * bagging.repeats);
    let mut training_row_ids = Vec::with_capacity(bagging.folds * bagging.repeats);

    let row_pos: BTreeMap<&str, usize> =
        row_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    for repeat in 0..bagging.repeats {
        let slots = pooled_fold_slots(pair, bagging.folds, derive_seed(seed, &[repeat as u64]))?;
        for fold in 0..bagging.folds {
            let train_source = subset_by_slot(pair.source(), &slots, fold, false)?;
            let train_target = subset_by_slot(pair.target(), &slots, fold, false)?;
            let val_source = subset_by_slot(pair.source(), &slots, fold, true)?;
            let val_target = subset_by_slot(pair.target(), &slots, fold, true)?;
            let sub_pair = GroupedDataset::new(train_source, train_target).map_err(|e| {
                Error::Ensemble(format!("repeat {repeat}, fold {fold}: {e}"))
            })?;
            let mut sub_cfg = cfg.clone();
            sub_cfg.optimizer.seed = derive_seed(seed, &[0xAA, repeat as u64, fold as u64]);
            let model = train(&sub_pair, spec, &sub_cfg).map_err(|e| {
                Error::Ensemble(format!("repeat {repeat}, fold {fold}: {e}"))
            })?;

            let trained_on: Vec<String> = sub_pair
                .source()
                .row_ids()
                .iter()
                .chain(sub_pair.target().row_ids())
                .cloned()
                .collect();
            let digest = row_set_digest(&trained_on);
            let model_index = models.len();

            for val in [&val_source, &val_target] {
                if val.n_rows() == 0 {
                    continue;
                }
                let preds = model.predict(val)?;
                for (id, p) in val.row_ids().iter().zip(preds) {
                    let pos = row_pos[id.as_str()];
                    sums[pos] += p;
                    provenance[pos].push(OofProvenance {
                        repeat,
                        fold,
                        model_index,
                        training_digest: digest.clone(),
                    });
                }
            }
            models.push(model);
            training_row_ids.push(trained_on);
        }
    }

    for (pos, contributions) in provenance.iter().enumerate() {
        if contributions.len() != bagging.repeats {
            return Err(Error::Ensemble(format!(
                "row `{}` received {} out-of-fold contributions, expected {}",
                row_ids[pos],
                contributions.len(),
                bagging.repeats
            )));
        }
    }
    let values: Vec<f64> =
        sums.into_iter().map(|s| s / bagging.repeats as f64).collect();
    let bagged = BaggedModel { spec: spec.clone(), models, training_row_ids };
    let column =
        OofColumn { model_name: spec.name().to_string(), values, provenance };
    audit_oof(&bagged, &column, &row_ids)?;
    Ok((bagged, column))
}

/// Leakage audit: every out-of-fold contribution must come from a model
/// whose recorded training set excludes the row, and the recorded digest
/// must match the training set.
pub fn audit_oof(bagged: &BaggedModel, column: &OofColumn, row_ids: &[String]) -> Result<()> {
    let digests: Vec<String> =
        bagged.training_row_ids.iter().map(|ids| row_set_digest(ids)).collect();
    let sets: Vec<HashSet<&str>> = bagged
        .training_row_ids
        .iter()
        .map(|ids| ids.iter().map(|s| s.as_str()).collect())
        .collect();
    for (row, contributions) in row_ids.iter().zip(&column.provenance) {
        for c in contributions {
            if sets[c.model_index].contains(row.as_str()) {
                return Err(Error::Ensemble(format!(
                    "leakage: row `{row}` is in the training set of model {}",
                    c.model_index
                )));
            }
            if digests[c.model_index] != c.training_digest {
                return Err(Error::Ensemble(format!(
                    "provenance digest mismatch for model {}",
                    c.model_index
                )));
            }
        }
    }
    Ok(())
}
