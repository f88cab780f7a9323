//! Shared fixtures for unit tests.

use crate::data::{Cell, ColumnSpec, Dataset, FeatureSchema, GroupedDataset};

/// Binary-classification dataset over plain continuous features. Labels are
/// 0/1; rows are identified by `prefix` plus index.
pub fn classification_dataset(prefix: &str, xs: &[Vec<f64>], ys: &[f64]) -> Dataset {
    assert_eq!(xs.len(), ys.len());
    let n_features = xs[0].len();
    let mut columns: Vec<ColumnSpec> =
        (0..n_features).map(|i| ColumnSpec::continuous(&format!("x{i}"))).collect();
    columns.push(ColumnSpec::class_label("y", &["neg", "pos"]));
    let schema = FeatureSchema::new(columns).unwrap();
    let ids = (0..xs.len()).map(|i| format!("{prefix}{i:04}")).collect();
    let rows = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let mut row: Vec<Cell> = x.iter().map(|&v| Cell::Number(v)).collect();
            row.push(Cell::Category(y as u32));
            row
        })
        .collect();
    Dataset::new(schema, ids, rows).unwrap()
}

/// Regression dataset over plain continuous features.
pub fn regression_dataset(prefix: &str, xs: &[Vec<f64>], ys: &[f64]) -> Dataset {
    assert_eq!(xs.len(), ys.len());
    let n_features = xs[0].len();
    let mut columns: Vec<ColumnSpec> =
        (0..n_features).map(|i| ColumnSpec::continuous(&format!("x{i}"))).collect();
    columns.push(ColumnSpec::regression_label("y"));
    let schema = FeatureSchema::new(columns).unwrap();
    let ids = (0..xs.len()).map(|i| format!("{prefix}{i:04}")).collect();
    let rows = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let mut row: Vec<Cell> = x.iter().map(|&v| Cell::Number(v)).collect();
            row.push(Cell::Number(y));
            row
        })
        .collect();
    Dataset::new(schema, ids, rows).unwrap()
}

pub fn pair(source: Dataset, target: Dataset) -> GroupedDataset {
    GroupedDataset::new(source, target).unwrap()
}
