//! Fit/transform feature preparation: median imputation, z-scoring,
//! quantile normalization for skewed features, unknown-category mapping and
//! missingness indicators.
//!
//! Statistics are computed exclusively on the rows passed to [`fit`]; the
//! fitted row ids are recorded in the state so leakage can be audited.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Cell, ColumnKind, ColumnSpec, Dataset, FeatureSchema, UNKNOWN_CATEGORY};
use crate::{Error, Result};

/// Default skewness magnitude above which a feature is quantile-normalized
/// instead of z-scored.
pub const DEFAULT_SKEW_THRESHOLD: f64 = 1.0;

/// Suffix of the appended binary missingness-indicator columns.
pub const INDICATOR_SUFFIX: &str = "__missing";

/// Fitted statistics for one continuous column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuousStats {
    pub median: f64,
    pub mean: f64,
    /// Sample (N-1) standard deviation.
    pub std: f64,
    pub skewness: f64,
    pub use_quantile: bool,
    /// Empirical CDF knots `(value, rank)` with midrank plotting positions
    /// in `[1/(N+1), N/(N+1)]`; present only when `use_quantile` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_map: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    pub reason: String,
}

/// Immutable fitted preprocessing state, serializable to JSON for audit and
/// re-use across CLI invocations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessorState {
    pub continuous: BTreeMap<String, ContinuousStats>,
    /// Fitted vocabulary per categorical column; transform maps category
    /// strings through this vocabulary.
    pub categorical_vocab: BTreeMap<String, Vec<String>>,
    /// Feature columns with at least one missing value in the fit data, in
    /// column-name order; each yields an appended indicator feature.
    pub indicator_columns: Vec<String>,
    pub dropped_columns: Vec<DroppedColumn>,
    /// Rows the state was fitted on (leakage guard).
    pub fit_row_ids: Vec<String>,
    pub skew_threshold: f64,
}

impl PreprocessorState {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Transform output plus diagnostics about out-of-vocabulary categories.
#[derive(Debug, Clone)]
pub struct Transformed {
    pub data: Dataset,
    /// Count of transform-time category strings that were not in the fitted
    /// vocabulary and were mapped to "unknown", per column.
    pub unseen_categories: BTreeMap<String, usize>,
}

/// Fit preprocessing statistics on `data`. Continuous columns with no
/// observed values or zero variance are dropped and recorded, never
/// silently.
pub fn fit(data: &Dataset, skew_threshold: f64) -> Result<PreprocessorState> {
    if data.n_rows() == 0 {
        return Err(Error::Preprocess("cannot fit on an empty dataset".into()));
    }
    if data.schema().preprocessed {
        return Err(Error::Preprocess("dataset is already preprocessed".into()));
    }
    let mut continuous = BTreeMap::new();
    let mut categorical_vocab = BTreeMap::new();
    let mut indicator_columns = Vec::new();
    let mut dropped_columns = Vec::new();

    for (col_idx, spec) in data.schema().feature_columns() {
        let mut any_missing = false;
        match spec.kind {
            ColumnKind::Continuous => {
                let mut values = Vec::new();
                for r in 0..data.n_rows() {
                    match data.cell(r, col_idx) {
                        Cell::Number(v) => values.push(v),
                        Cell::Missing => any_missing = true,
                        Cell::Category(_) => unreachable!("validated at construction"),
                    }
                }
                if values.is_empty() {
                    dropped_columns.push(DroppedColumn {
                        name: spec.name.clone(),
                        reason: "all values missing".into(),
                    });
                    continue;
                }
                if values.len() < 2 {
                    dropped_columns.push(DroppedColumn {
                        name: spec.name.clone(),
                        reason: "fewer than 2 observed values".into(),
                    });
                    continue;
                }
                let mean = crate::util::mean(&values);
                let std = crate::util::sample_std(&values);
                if std <= 0.0 {
                    dropped_columns.push(DroppedColumn {
                        name: spec.name.clone(),
                        reason: "zero variance".into(),
                    });
                    continue;
                }
                let median = crate::util::median(&values);
                let skewness = fisher_skewness(&values, mean);
                let use_quantile = skewness.abs() > skew_threshold;
                let quantile_map = use_quantile.then(|| empirical_cdf_knots(&values));
                continuous.insert(
                    spec.name.clone(),
                    ContinuousStats { median, mean, std, skewness, use_quantile, quantile_map },
                );
            }
            ColumnKind::Categorical => {
                for r in 0..data.n_rows() {
                    if data.cell(r, col_idx).is_missing() {
                        any_missing = true;
                        break;
                    }
                }
                let vocab = spec.categories.clone().expect("categorical has vocabulary");
                categorical_vocab.insert(spec.name.clone(), vocab);
            }
            _ => unreachable!("feature_columns yields features only"),
        }
        if any_missing {
            indicator_columns.push(spec.name.clone());
        }
    }
    indicator_columns.sort();

    Ok(PreprocessorState {
        continuous,
        categorical_vocab,
        indicator_columns,
        dropped_columns,
        fit_row_ids: data.row_ids().to_vec(),
        skew_threshold,
    })
}

/// Population-moment Fisher skewness g1 = m3 / m2^(3/2).
fn fisher_skewness(values: &[f64], mean: f64) -> f64 {
    let n = values.len() as f64;
    let m2: f64 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3: f64 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Sorted unique values with midrank plotting positions i/(N+1), averaged
/// over ties so knots are strictly increasing.
fn empirical_cdf_knots(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut knots: Vec<(f64, f64)> = Vec::new();
    let mut i = 0usize;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        // 1-based positions i+1 ..= j+1 share the value; midrank over the run.
        let midrank = (i + 1 + j + 1) as f64 / 2.0 / (n + 1.0);
        knots.push((sorted[i], midrank));
        i = j + 1;
    }
    knots
}

/// Map `x` to the standard-normal quantile of its empirical CDF rank, with
/// linear interpolation between knots and clamping at the edges.
pub fn quantile_normalize(knots: &[(f64, f64)], x: f64) -> f64 {
    debug_assert!(!knots.is_empty());
    let p = if x <= knots[0].0 {
        knots[0].1
    } else if x >= knots[knots.len() - 1].0 {
        knots[knots.len() - 1].1
    } else {
        let mut upper = 1;
        while knots[upper].0 < x {
            upper += 1;
        }
        let (x0, p0) = knots[upper - 1];
        let (x1, p1) = knots[upper];
        p0 + (p1 - p0) * (x - x0) / (x1 - x0)
    };
    Normal::standard().inverse_cdf(p)
}

/// Apply fitted statistics to a dataset. The output has no missing feature
/// cells; indicator features are appended after all other columns in
/// column-name order. Label and group-attribute columns pass through.
pub fn transform(state: &PreprocessorState, data: &Dataset) -> Result<Transformed> {
    if data.schema().preprocessed {
        return Err(Error::Preprocess(
            "dataset is already preprocessed; refusing to transform again".into(),
        ));
    }
    let dropped: std::collections::HashSet<&str> =
        state.dropped_columns.iter().map(|d| d.name.as_str()).collect();

    // Schema compatibility: every fitted column must exist with the same kind.
    for name in state.continuous.keys() {
        let spec = data.schema().column(name).map_err(|_| {
            Error::Preprocess(format!("fitted column `{name}` absent from dataset"))
        })?;
        if spec.kind != ColumnKind::Continuous {
            return Err(Error::Preprocess(format!("fitted column `{name}` changed kind")));
        }
    }
    for name in state.categorical_vocab.keys() {
        let spec = data.schema().column(name).map_err(|_| {
            Error::Preprocess(format!("fitted column `{name}` absent from dataset"))
        })?;
        if spec.kind != ColumnKind::Categorical {
            return Err(Error::Preprocess(format!("fitted column `{name}` changed kind")));
        }
    }

    let mut out_specs: Vec<ColumnSpec> = Vec::new();
    let mut kept_cols: Vec<usize> = Vec::new();
    for (col_idx, spec) in data.schema().columns().iter().enumerate() {
        match spec.kind {
            ColumnKind::Continuous => {
                if dropped.contains(spec.name.as_str()) {
                    continue;
                }
                if !state.continuous.contains_key(&spec.name) {
                    return Err(Error::Preprocess(format!(
                        "column `{}` was not seen during fit",
                        spec.name
                    )));
                }
                out_specs.push(spec.clone());
                kept_cols.push(col_idx);
            }
            ColumnKind::Categorical => {
                let vocab = state.categorical_vocab.get(&spec.name).ok_or_else(|| {
                    Error::Preprocess(format!("column `{}` was not seen during fit", spec.name))
                })?;
                out_specs.push(ColumnSpec {
                    name: spec.name.clone(),
                    kind: ColumnKind::Categorical,
                    categories: Some(vocab.clone()),
                });
                kept_cols.push(col_idx);
            }
            ColumnKind::Label | ColumnKind::GroupAttribute => {
                out_specs.push(spec.clone());
                kept_cols.push(col_idx);
            }
        }
    }
    for name in &state.indicator_columns {
        out_specs.push(ColumnSpec::continuous(&format!("{name}{INDICATOR_SUFFIX}")));
    }
    let out_schema = FeatureSchema::from_parts(out_specs, true);

    let mut unseen_categories: BTreeMap<String, usize> = BTreeMap::new();
    let mut rows: Vec<Vec<Cell>> = Vec::with_capacity(data.n_rows());
    for r in 0..data.n_rows() {
        let mut row: Vec<Cell> = Vec::with_capacity(out_schema.columns().len());
        for &col_idx in &kept_cols {
            let spec = &data.schema().columns()[col_idx];
            let cell = data.cell(r, col_idx);
            let out_cell = match spec.kind {
                ColumnKind::Continuous => {
                    let stats = &state.continuous[&spec.name];
                    let raw = cell.as_number().unwrap_or(stats.median);
                    let value = if stats.use_quantile {
                        quantile_normalize(stats.quantile_map.as_ref().unwrap(), raw)
                    } else {
                        (raw - stats.mean) / stats.std
                    };
                    Cell::Number(value)
                }
                ColumnKind::Categorical => {
                    let fitted_vocab = &state.categorical_vocab[&spec.name];
                    let unknown_idx = fitted_vocab
                        .iter()
                        .position(|c| c == UNKNOWN_CATEGORY)
                        .expect("fitted vocabulary contains unknown")
                        as u32;
                    match cell {
                        Cell::Missing => Cell::Category(unknown_idx),
                        Cell::Category(i) => {
                            let original = &spec.categories.as_ref().unwrap()[i as usize];
                            match fitted_vocab.iter().position(|c| c == original) {
                                Some(idx) => Cell::Category(idx as u32),
                                None => {
                                    *unseen_categories.entry(spec.name.clone()).or_insert(0) += 1;
                                    Cell::Category(unknown_idx)
                                }
                            }
                        }
                        Cell::Number(_) => unreachable!("validated at construction"),
                    }
                }
                ColumnKind::Label | ColumnKind::GroupAttribute => cell,
            };
            row.push(out_cell);
        }
        for name in &state.indicator_columns {
            let col_idx = data.schema().column_index(name)?;
            let was_missing = data.cell(r, col_idx).is_missing();
            row.push(Cell::Number(if was_missing { 1.0 } else { 0.0 }));
        }
        rows.push(row);
    }

    let out = Dataset::new(out_schema, data.row_ids().to_vec(), rows)?;
    Ok(Transformed { data: out, unseen_categories })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSpec, FeatureSchema};
    use approx::assert_abs_diff_eq;

    fn dataset_with_column(values: &[Option<f64>]) -> Dataset {
        let schema = FeatureSchema::new(vec![
            ColumnSpec::continuous("x"),
            ColumnSpec::regression_label("y"),
        ])
        .unwrap();
        let ids = (0..values.len()).map(|i| format!("r{i}")).collect();
        let rows = values
            .iter()
            .map(|v| vec![v.map(Cell::Number).unwrap_or(Cell::Missing), Cell::Number(0.0)])
            .collect();
        Dataset::new(schema, ids, rows).unwrap()
    }

    #[test]
    fn median_and_indicator_from_partial_column() {
        // Hand computation: median of {1,2,3} is 2; the missing cell makes
        // the column an indicator column.
        let data = dataset_with_column(&[Some(1.0), Some(2.0), Some(3.0), None]);
        let state = fit(&data, DEFAULT_SKEW_THRESHOLD).unwrap();
        let stats = &state.continuous["x"];
        assert_eq!(stats.median, 2.0);
        assert_eq!(stats.mean, 2.0);
        assert_eq!(stats.std, 1.0);
        assert_eq!(state.indicator_columns, vec!["x".to_string()]);
    }

    #[test]
    fn zero_variance_column_dropped_with_record() {
        let data = dataset_with_column(&[Some(5.0), Some(5.0), Some(5.0)]);
        let state = fit(&data, DEFAULT_SKEW_THRESHOLD).unwrap();
        assert!(state.continuous.is_empty());
        assert_eq!(state.dropped_columns.len(), 1);
        assert_eq!(state.dropped_columns[0].name, "x");
        assert!(state.dropped_columns[0].reason.contains("zero variance"));
    }

    #[test]
    fn all_missing_column_dropped_with_record() {
        let data = dataset_with_column(&[None, None, None]);
        let state = fit(&data, DEFAULT_SKEW_THRESHOLD).unwrap();
        assert_eq!(state.dropped_columns[0].reason, "all values missing");
    }

    #[test]
    fn symmetric_column_is_not_quantile_normalized() {
        let data = dataset_with_column(&[Some(-1.0), Some(0.0), Some(1.0)]);
        let state = fit(&data, 1.0).unwrap();
        assert_eq!(state.continuous["x"].skewness, 0.0);
        assert!(!state.continuous["x"].use_quantile);
    }

    #[test]
    fn transform_mean_maps_to_zero_and_missing_to_imputed_zero() {
        let fit_data = dataset_with_column(&[Some(1.0), Some(2.0), Some(3.0), None]);
        let state = fit(&fit_data, DEFAULT_SKEW_THRESHOLD).unwrap();
        let new_data = dataset_with_column(&[Some(2.0), None]);
        let out = transform(&state, &new_data).unwrap().data;
        // x column is index 0; indicator appended last.
        assert_abs_diff_eq!(out.cell(0, 0).as_number().unwrap(), 0.0);
        let ind_col = out.schema().column_index("x__missing").unwrap();
        assert_eq!(out.cell(0, ind_col).as_number().unwrap(), 0.0);
        // Missing: imputed to the median 2, standardized to 0, indicator 1.
        assert_abs_diff_eq!(out.cell(1, 0).as_number().unwrap(), 0.0);
        assert_eq!(out.cell(1, ind_col).as_number().unwrap(), 1.0);
    }

    #[test]
    fn unseen_category_maps_to_unknown_with_diagnostic() {
        let fit_schema = FeatureSchema::new(vec![
            ColumnSpec::categorical("site", &["a", "b"]),
            ColumnSpec::regression_label("y"),
        ])
        .unwrap();
        let fit_data = Dataset::new(
            fit_schema,
            vec!["r0".into()],
            vec![vec![Cell::Category(0), Cell::Number(0.0)]],
        )
        .unwrap();
        let state = fit(&fit_data, DEFAULT_SKEW_THRESHOLD).unwrap();

        let new_schema = FeatureSchema::new(vec![
            ColumnSpec::categorical("site", &["a", "b", "q"]),
            ColumnSpec::regression_label("y"),
        ])
        .unwrap();
        let new_data = Dataset::new(
            new_schema,
            vec!["n0".into(), "n1".into()],
            vec![
                vec![Cell::Category(2), Cell::Number(0.0)],
                vec![Cell::Missing, Cell::Number(0.0)],
            ],
        )
        .unwrap();
        let out = transform(&state, &new_data).unwrap();
        let vocab = &state.categorical_vocab["site"];
        let unknown_idx = vocab.iter().position(|c| c == UNKNOWN_CATEGORY).unwrap() as u32;
        assert_eq!(out.data.cell(0, 0).as_category().unwrap(), unknown_idx);
        assert_eq!(out.data.cell(1, 0).as_category().unwrap(), unknown_idx);
        assert_eq!(out.unseen_categories["site"], 1);
    }

    #[test]
    fn quantile_normalize_hand_values() {
        // N = 3 knots [1,2,4]: ranks 1/4, 2/4, 3/4.
        let knots = vec![(1.0, 0.25), (2.0, 0.5), (4.0, 0.75)];
        assert_abs_diff_eq!(quantile_normalize(&knots, 2.0), 0.0, epsilon = 1e-12);
        // Below all knots: clamp to rank 1/(N+1).
        let normal = Normal::standard();
        assert_abs_diff_eq!(
            quantile_normalize(&knots, -10.0),
            normal.inverse_cdf(0.25),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            quantile_normalize(&knots, 10.0),
            normal.inverse_cdf(0.75),
            epsilon = 1e-12
        );
        // Interpolation halfway between knots 2 and 4.
        assert_abs_diff_eq!(
            quantile_normalize(&knots, 3.0),
            normal.inverse_cdf(0.625),
            epsilon = 1e-12
        );
    }

    #[test]
    fn skewed_column_routes_through_quantile_map() {
        let values: Vec<Option<f64>> =
            vec![1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 2.0, 3.0, 10.0, 50.0, 200.0]
                .into_iter()
                .map(Some)
                .collect();
        let data = dataset_with_column(&values);
        let state = fit(&data, 1.0).unwrap();
        assert!(state.continuous["x"].use_quantile);
        let knots = state.continuous["x"].quantile_map.as_ref().unwrap();
        // The median is the middle knot of an odd-sized sample: rank 1/2.
        let out = quantile_normalize(knots, state.continuous["x"].median);
        assert_abs_diff_eq!(out, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn fitted_columns_standardize_to_unit_moments() {
        let values: Vec<Option<f64>> =
            (0..40).map(|i| Some((i as f64).sin() * 3.0 + 0.5)).collect();
        let data = dataset_with_column(&values);
        let state = fit(&data, 10.0).unwrap();
        let out = transform(&state, &data).unwrap().data;
        let col: Vec<f64> =
            (0..out.n_rows()).map(|r| out.cell(r, 0).as_number().unwrap()).collect();
        assert_abs_diff_eq!(crate::util::mean(&col), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(crate::util::sample_std(&col), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn transform_of_transformed_data_is_refused() {
        let data = dataset_with_column(&[Some(1.0), Some(2.0), Some(3.0)]);
        let state = fit(&data, DEFAULT_SKEW_THRESHOLD).unwrap();
        let once = transform(&state, &data).unwrap().data;
        let err = transform(&state, &once).unwrap_err();
        assert!(err.to_string().contains("already preprocessed"));
        assert!(fit(&once, 1.0).is_err());
    }

    #[test]
    fn fit_depends_only_on_fit_rows() {
        let full = dataset_with_column(&[Some(1.0), Some(2.0), Some(3.0), Some(100.0)]);
        let perturbed = dataset_with_column(&[Some(1.0), Some(2.0), Some(3.0), Some(-999.0)]);
        let fit_rows = [0usize, 1, 2];
        let a = fit(&full.select_rows(&fit_rows).unwrap(), 1.0).unwrap();
        let b = fit(&perturbed.select_rows(&fit_rows).unwrap(), 1.0).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.fit_row_ids, vec!["r0", "r1", "r2"]);
    }

    #[test]
    fn state_json_round_trip() {
        let data = dataset_with_column(&[Some(1.0), Some(2.0), None, Some(9.0)]);
        let state = fit(&data, 0.5).unwrap();
        let json = state.to_json().unwrap();
        let back = PreprocessorState::from_json(&json).unwrap();
        assert_eq!(json, back.to_json().unwrap());
    }
}
