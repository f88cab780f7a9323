use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::dataset::{Dataset, GroupedDataset};
use super::schema::{ColumnKind, Task, UNKNOWN_CATEGORY};
use crate::rng::rng_for;
use crate::{Error, Result};

/// Number of label bins used when stratifying a regression task.
const REGRESSION_BINS: usize = 5;

/// Where a row sits inside a fold plan: one of the k folds, or the held-out
/// test set of an adaptation split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSlot {
    Fold(usize),
    Test,
}

impl Serialize for RowSlot {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RowSlot::Fold(i) => serializer.serialize_u64(*i as u64),
            RowSlot::Test => serializer.serialize_str("test"),
        }
    }
}

impl<'de> Deserialize<'de> for RowSlot {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct SlotVisitor;
        impl Visitor<'_> for SlotVisitor {
            type Value = RowSlot;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a fold index or the string \"test\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<RowSlot, E> {
                Ok(RowSlot::Fold(v as usize))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<RowSlot, E> {
                if v == "test" {
                    Ok(RowSlot::Test)
                } else {
                    Err(E::custom(format!("unexpected slot `{v}`")))
                }
            }
        }
        deserializer.deserialize_any(SlotVisitor)
    }
}

/// Deterministic fold bookkeeping. Assignments depend only on the row-id
/// sets per stratum and the seed, never on row order, so shuffled inputs
/// produce identical plans.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k_folds: usize,
    pub stratify_on: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_fraction: Option<f64>,
    pub seed: u64,
    assignments: BTreeMap<String, RowSlot>,
}

impl FoldPlan {
    pub fn slot(&self, row_id: &str) -> Option<RowSlot> {
        self.assignments.get(row_id).copied()
    }

    pub fn assignments(&self) -> &BTreeMap<String, RowSlot> {
        &self.assignments
    }

    /// Row indices of `data` per fold, in dataset order.
    pub fn fold_indices(&self, data: &Dataset) -> Result<Vec<Vec<usize>>> {
        let mut folds = vec![Vec::new(); self.k_folds];
        for (i, id) in data.row_ids().iter().enumerate() {
            match self.slot(id) {
                Some(RowSlot::Fold(f)) => folds[f].push(i),
                Some(RowSlot::Test) => {}
                None => {
                    return Err(Error::Data(format!("row `{id}` has no fold assignment")))
                }
            }
        }
        Ok(folds)
    }

    /// Row indices of `data` assigned to the held-out test slot.
    pub fn test_indices(&self, data: &Dataset) -> Vec<usize> {
        data.row_ids()
            .iter()
            .enumerate()
            .filter(|(_, id)| matches!(self.slot(id), Some(RowSlot::Test)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Stable JSON export including seed and parameters.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub(crate) fn from_parts(
        k_folds: usize,
        stratify_on: String,
        target_fraction: Option<f64>,
        seed: u64,
        assignments: BTreeMap<String, RowSlot>,
    ) -> Self {
        FoldPlan { k_folds, stratify_on, target_fraction, seed, assignments }
    }
}

/// Stratum key per row: the class name for classification labels, a
/// rank-based quintile bin for regression labels (ties broken by row id so
/// the binning is row-order independent).
pub fn stratum_keys(data: &Dataset) -> Result<Vec<String>> {
    let labels = data.labels()?;
    match data.schema().task() {
        Task::BinaryClassification => {
            let classes = data
                .schema()
                .label_column()
                .categories
                .clone()
                .expect("classification label has classes");
            Ok(labels.iter().map(|&v| classes[v as usize].clone()).collect())
        }
        Task::Regression => {
            let mut order: Vec<usize> = (0..labels.len()).collect();
            order.sort_by(|&a, &b| {
                labels[a]
                    .partial_cmp(&labels[b])
                    .expect("finite labels")
                    .then_with(|| data.row_ids()[a].cmp(&data.row_ids()[b]))
            });
            let n = labels.len();
            let mut keys = vec![String::new(); n];
            for (rank, &row) in order.iter().enumerate() {
                let bin = rank * REGRESSION_BINS / n.max(1);
                keys[row] = format!("q{bin}");
            }
            Ok(keys)
        }
    }
}

/// Group rows by stratum with canonical (sorted) row-id order inside each
/// stratum.
pub(crate) fn strata_map(ids: &[String], keys: &[String]) -> BTreeMap<String, Vec<String>> {
    let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (id, key) in ids.iter().zip(keys) {
        map.entry(key.clone()).or_default().push(id.clone());
    }
    for rows in map.values_mut() {
        rows.sort();
    }
    map
}

/// Deal each stratum's rows round-robin into `k` folds, carrying the ring
/// offset across strata so fold sizes differ by at most one overall and at
/// most one per stratum.
pub(crate) fn deal_ring(
    strata: &BTreeMap<String, Vec<String>>,
    k: usize,
    seed: u64,
    salt: u64,
    out: &mut BTreeMap<String, RowSlot>,
) {
    let mut offset = 0usize;
    for (key, rows) in strata {
        let mut shuffled = rows.clone();
        let mut rng: ChaCha8Rng = rng_for(seed, &[salt, crate::rng::stable_hash(key)]);
        shuffled.shuffle(&mut rng);
        for (j, id) in shuffled.iter().enumerate() {
            out.insert(id.clone(), RowSlot::Fold((offset + j) % k));
        }
        offset = (offset + rows.len()) % k;
    }
}

/// Stratified k-fold split. Folds are disjoint, exhaustive, sized within one
/// row of each other, and hold per-stratum counts within one of each other.
pub fn stratified_split(data: &Dataset, k: usize, label_col: &str, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Data(format!("k must be at least 2, got {k}")));
    }
    let label = data.schema().label_column();
    if label.name != label_col {
        return Err(Error::Data(format!(
            "stratification column `{label_col}` is not the label column `{}`",
            label.name
        )));
    }
    if data.n_rows() == 0 {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    let keys = stratum_keys(data)?;
    let strata = strata_map(data.row_ids(), &keys);
    for (key, rows) in &strata {
        if rows.len() < k {
            return Err(Error::Data(format!(
                "label class `{key}` has {} members, fewer than k = {k}",
                rows.len()
            )));
        }
    }
    let mut assignments = BTreeMap::new();
    deal_ring(&strata, k, seed, 0x51, &mut assignments);
    Ok(FoldPlan::from_parts(k, label_col.to_string(), None, seed, assignments))
}

/// Proportional stratified subsample: picks `take` rows respecting stratum
/// proportions via largest-remainder rounding. Returns selected row ids.
pub(crate) fn stratified_take(
    strata: &BTreeMap<String, Vec<String>>,
    take: usize,
    total: usize,
    seed: u64,
    salt: u64,
) -> Vec<String> {
    let mut counts: Vec<(String, usize, f64)> = strata
        .iter()
        .map(|(key, rows)| {
            let exact = take as f64 * rows.len() as f64 / total as f64;
            (key.clone(), exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut assigned: usize = counts.iter().map(|(_, c, _)| *c).sum();
    // Hand out the remainder to the largest fractional parts.
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        counts[b].2.partial_cmp(&counts[a].2).unwrap().then_with(|| counts[a].0.cmp(&counts[b].0))
    });
    let mut cursor = 0;
    while assigned < take {
        let idx = order[cursor % order.len()];
        if counts[idx].1 < strata[&counts[idx].0].len() {
            counts[idx].1 += 1;
            assigned += 1;
        }
        cursor += 1;
    }
    let mut selected = Vec::with_capacity(take);
    for (key, count, _) in &counts {
        let mut rows = strata[key].clone();
        let mut rng = rng_for(seed, &[salt, crate::rng::stable_hash(key)]);
        rows.shuffle(&mut rng);
        selected.extend(rows.into_iter().take(*count));
    }
    selected.sort();
    selected
}

/// Adaptation split: train = all source rows plus `target_fraction` of the
/// target rows (stratified); test = the remaining target rows. The train set
/// is sub-divided into `k` inner folds, stratified by label and holding an
/// equal (within one) count of the included target rows in each fold.
pub fn adaptation_split(
    pair: &GroupedDataset,
    k: usize,
    target_fraction: f64,
    seed: u64,
) -> Result<FoldPlan> {
    if !(0.0..=1.0).contains(&target_fraction) {
        return Err(Error::Data(format!(
            "target_fraction must lie in [0, 1], got {target_fraction}"
        )));
    }
    if k < 2 {
        return Err(Error::Data(format!("k must be at least 2, got {k}")));
    }
    let label_col = pair.schema().label_column().name.clone();

    let source_keys = stratum_keys(pair.source())?;
    let source_strata = strata_map(pair.source().row_ids(), &source_keys);

    let mut assignments = BTreeMap::new();
    if pair.n() > 0 && target_fraction > 0.0 {
        let target_keys = stratum_keys(pair.target())?;
        let target_strata = strata_map(pair.target().row_ids(), &target_keys);
        for (key, rows) in &target_strata {
            if rows.len() < k {
                return Err(Error::Data(format!(
                    "target label class `{key}` has {} members, fewer than k = {k}",
                    rows.len()
                )));
            }
        }
        let take = (target_fraction * pair.n() as f64).round() as usize;
        let taken = stratified_take(&target_strata, take, pair.n(), seed, 0x7a);
        let taken_set: HashSet<&String> = taken.iter().collect();
        let taken_strata = strata_map(
            &taken,
            &taken
                .iter()
                .map(|id| {
                    let idx = pair.target().row_ids().iter().position(|r| r == id).unwrap();
                    target_keys[idx].clone()
                })
                .collect::<Vec<_>>(),
        );
        deal_ring(&taken_strata, k, seed, 0x7b, &mut assignments);
        for id in pair.target().row_ids() {
            if !taken_set.contains(id) {
                assignments.insert(id.clone(), RowSlot::Test);
            }
        }
    } else {
        for id in pair.target().row_ids() {
            assignments.insert(id.clone(), RowSlot::Test);
        }
    }
    deal_ring(&source_strata, k, seed, 0x7c, &mut assignments);

    Ok(FoldPlan::from_parts(k, label_col, Some(target_fraction), seed, assignments))
}

/// Partition rows by the value of a group-attribute column; rows with a
/// missing group value are collected under [`UNKNOWN_CATEGORY`].
pub fn group_partition(data: &Dataset, attribute: &str) -> Result<BTreeMap<String, Dataset>> {
    let spec = data.schema().column(attribute)?;
    if spec.kind != ColumnKind::GroupAttribute {
        return Err(Error::Data(format!("column `{attribute}` is not a group attribute")));
    }
    let values = data.group_values(attribute)?;
    let mut buckets: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, value) in values.iter().enumerate() {
        let key = value.clone().unwrap_or_else(|| UNKNOWN_CATEGORY.to_string());
        buckets.entry(key).or_default().push(i);
    }
    buckets
        .into_iter()
        .map(|(key, indices)| Ok((key, data.select_rows(&indices)?)))
        .collect()
}
