//! Design-matrix extraction from preprocessed datasets.
//!
//! Linear models, k-NN and forests consume categorical features one-hot over
//! the vocabulary; the network embeds category indices instead, so the two
//! views are built separately.

use crate::data::{Cell, ColumnKind, Dataset, Task};
use crate::models::matrix::Mat;
use crate::{Error, Result};

/// One-hot numeric view: continuous columns as-is, each categorical column
/// expanded over its full vocabulary.
#[derive(Debug, Clone)]
pub struct OneHotView {
    pub names: Vec<String>,
    pub matrix: Mat,
}

/// Split view for the network: continuous block plus raw category indices.
#[derive(Debug, Clone)]
pub struct SplitView {
    pub continuous_names: Vec<String>,
    pub continuous: Mat,
    /// Per categorical column: (name, vocabulary size).
    pub cat_columns: Vec<(String, usize)>,
    /// Category index per row and categorical column.
    pub cat_indices: Vec<Vec<u32>>,
}

fn missing_cell_error(data: &Dataset, row: usize, col: &str) -> Error {
    Error::Model(format!(
        "row `{}` has a missing value in feature column `{col}`; preprocess the data first",
        data.row_ids()[row]
    ))
}

/// Build the one-hot view. Missing feature cells are refused: models consume
/// preprocessed data only.
pub fn one_hot_view(data: &Dataset) -> Result<OneHotView> {
    let mut names = Vec::new();
    let mut columns: Vec<(usize, Option<usize>)> = Vec::new(); // (col idx, one-hot base)
    for (idx, spec) in data.schema().feature_columns() {
        match spec.kind {
            ColumnKind::Continuous => {
                columns.push((idx, None));
                names.push(spec.name.clone());
            }
            ColumnKind::Categorical => {
                let cats = spec.categories.as_ref().expect("categorical vocabulary");
                columns.push((idx, Some(names.len())));
                for cat in cats {
                    names.push(format!("{}={cat}", spec.name));
                }
            }
            _ => unreachable!(),
        }
    }
    let width = names.len();
    let mut matrix = Mat::zeros(data.n_rows(), width);
    let mut cursor;
    for r in 0..data.n_rows() {
        cursor = 0;
        for &(col_idx, one_hot_base) in &columns {
            let spec = &data.schema().columns()[col_idx];
            match (data.cell(r, col_idx), one_hot_base) {
                (Cell::Number(v), None) => {
                    matrix.set(r, cursor, v);
                    cursor += 1;
                }
                (Cell::Category(i), Some(base)) => {
                    matrix.set(r, base + i as usize, 1.0);
                    cursor = base + spec.categories.as_ref().unwrap().len();
                }
                (Cell::Missing, _) => return Err(missing_cell_error(data, r, &spec.name)),
                _ => unreachable!("validated at construction"),
            }
        }
    }
    Ok(OneHotView { names, matrix })
}

/// Build the split view used by embedding-based models.
pub fn split_view(data: &Dataset) -> Result<SplitView> {
    let mut continuous_names = Vec::new();
    let mut continuous_cols = Vec::new();
    let mut cat_columns = Vec::new();
    let mut cat_cols = Vec::new();
    for (idx, spec) in data.schema().feature_columns() {
        match spec.kind {
            ColumnKind::Continuous => {
                continuous_names.push(spec.name.clone());
                continuous_cols.push(idx);
            }
            ColumnKind::Categorical => {
                let vocab = spec.categories.as_ref().expect("categorical vocabulary");
                cat_columns.push((spec.name.clone(), vocab.len()));
                cat_cols.push(idx);
            }
            _ => unreachable!(),
        }
    }
    let mut continuous = Mat::zeros(data.n_rows(), continuous_cols.len());
    let mut cat_indices = vec![Vec::with_capacity(cat_cols.len()); data.n_rows()];
    for r in 0..data.n_rows() {
        for (j, &col_idx) in continuous_cols.iter().enumerate() {
            match data.cell(r, col_idx) {
                Cell::Number(v) => continuous.set(r, j, v),
                _ => {
                    return Err(missing_cell_error(
                        data,
                        r,
                        &data.schema().columns()[col_idx].name,
                    ))
                }
            }
        }
        for &col_idx in &cat_cols {
            match data.cell(r, col_idx) {
                Cell::Category(i) => cat_indices[r].push(i),
                _ => {
                    return Err(missing_cell_error(
                        data,
                        r,
                        &data.schema().columns()[col_idx].name,
                    ))
                }
            }
        }
    }
    Ok(SplitView { continuous_names, continuous, cat_columns, cat_indices })
}

/// Labels for supervised training; classification labels must be 0/1.
pub fn training_labels(data: &Dataset, task: Task) -> Result<Vec<f64>> {
    let labels = data.labels().map_err(|e| Error::Model(e.to_string()))?;
    if task == Task::BinaryClassification {
        for (id, &y) in data.row_ids().iter().zip(&labels) {
            if y != 0.0 && y != 1.0 {
                return Err(Error::Model(format!(
                    "row `{id}`: classification label must be 0 or 1, got {y}"
                )));
            }
        }
    }
    Ok(labels)
}
