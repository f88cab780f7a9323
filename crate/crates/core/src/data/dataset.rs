use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, ColumnSpec, FeatureSchema};
use crate::{Error, Result};

/// One table cell. Missing values are an explicit state, never a sentinel
/// number, so the preprocessing pipeline can detect them reliably.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Number(f64),
    Category(u32),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_category(&self) -> Option<u32> {
        match self {
            Cell::Category(i) => Some(*i),
            _ => None,
        }
    }
}

/// Immutable column-typed table with stable row identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: FeatureSchema,
    row_ids: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Dataset {
    /// Validates that every non-missing cell conforms to its column kind and
    /// that row identifiers are unique and non-empty.
    pub fn new(schema: FeatureSchema, row_ids: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self> {
        if row_ids.len() != rows.len() {
            return Err(Error::Data(format!(
                "{} row ids for {} rows",
                row_ids.len(),
                rows.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &row_ids {
            if id.is_empty() {
                return Err(Error::Data("empty row id".into()));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::Data(format!("duplicate row id `{id}`")));
            }
        }
        let n_cols = schema.columns().len();
        for (row, id) in rows.iter().zip(&row_ids) {
            if row.len() != n_cols {
                return Err(Error::Data(format!(
                    "row `{id}` has {} cells, schema has {n_cols} columns",
                    row.len()
                )));
            }
            for (cell, spec) in row.iter().zip(schema.columns()) {
                validate_cell(cell, spec, id)?;
            }
        }
        Ok(Dataset { schema, row_ids, rows })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn row(&self, index: usize) -> &[Cell] {
        &self.rows[index]
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.rows[row][col]
    }

    pub fn row_index(&self, row_id: &str) -> Result<usize> {
        self.row_ids
            .iter()
            .position(|id| id == row_id)
            .ok_or_else(|| Error::Data(format!("unknown row id `{row_id}`")))
    }

    /// New dataset holding the given row indices (in the given order).
    pub fn select_rows(&self, indices: &[usize]) -> Result<Dataset> {
        let mut ids = Vec::with_capacity(indices.len());
        let mut rows = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.rows.len() {
                return Err(Error::Data(format!("row index {i} out of range")));
            }
            ids.push(self.row_ids[i].clone());
            rows.push(self.rows[i].clone());
        }
        Dataset::new(self.schema.clone(), ids, rows)
    }

    /// Labels as f64: class index (0/1) for classification labels, the raw
    /// number for regression labels. Missing labels are refused.
    pub fn labels(&self) -> Result<Vec<f64>> {
        let label = self.schema.label_column().name.clone();
        let col = self.schema.column_index(&label)?;
        let mut out = Vec::with_capacity(self.rows.len());
        for (row, id) in self.rows.iter().zip(&self.row_ids) {
            let v = match row[col] {
                Cell::Number(v) => v,
                Cell::Category(i) => i as f64,
                Cell::Missing => {
                    return Err(Error::Data(format!("row `{id}` has a missing label")))
                }
            };
            out.push(v);
        }
        Ok(out)
    }

    /// Group name per row for a group-attribute column; `None` marks a
    /// missing group value.
    pub fn group_values(&self, attribute: &str) -> Result<Vec<Option<String>>> {
        let spec = self.schema.column(attribute)?;
        if spec.kind != ColumnKind::GroupAttribute {
            return Err(Error::Data(format!("column `{attribute}` is not a group attribute")));
        }
        let cats = spec.categories.as_ref().expect("group column has categories");
        let col = self.schema.column_index(attribute)?;
        Ok(self
            .rows
            .iter()
            .map(|row| row[col].as_category().map(|i| cats[i as usize].clone()))
            .collect())
    }

    /// New dataset with extra continuous columns appended after all existing
    /// columns; used by the stacking ensemble to feed out-of-fold
    /// predictions into the next level.
    pub fn append_continuous_columns(
        &self,
        names: &[String],
        columns: &[Vec<f64>],
    ) -> Result<Dataset> {
        if names.len() != columns.len() {
            return Err(Error::Data("column name/value count mismatch".into()));
        }
        for (name, col) in names.iter().zip(columns) {
            if col.len() != self.n_rows() {
                return Err(Error::Data(format!(
                    "appended column `{name}` has {} values for {} rows",
                    col.len(),
                    self.n_rows()
                )));
            }
        }
        let mut specs = self.schema.columns().to_vec();
        for name in names {
            if self.schema.column_index(name).is_ok() {
                return Err(Error::Data(format!("appended column `{name}` already exists")));
            }
            specs.push(ColumnSpec::continuous(name));
        }
        let schema = FeatureSchema::from_parts(specs, self.schema.preprocessed);
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut row = row.clone();
                row.extend(columns.iter().map(|col| Cell::Number(col[i])));
                row
            })
            .collect();
        Dataset::new(schema, self.row_ids.clone(), rows)
    }

}

fn validate_cell(cell: &Cell, spec: &ColumnSpec, row_id: &str) -> Result<()> {
    match (cell, spec.kind) {
        (Cell::Missing, _) => Ok(()),
        (Cell::Number(v), ColumnKind::Continuous) => {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Data(format!(
                    "row `{row_id}`, column `{}`: non-finite number",
                    spec.name
                )))
            }
        }
        (Cell::Number(v), ColumnKind::Label) if spec.categories.is_none() => {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Data(format!("row `{row_id}`: non-finite label", )))
            }
        }
        (Cell::Category(i), ColumnKind::Categorical | ColumnKind::GroupAttribute) => {
            let n = spec.categories.as_ref().map(|c| c.len()).unwrap_or(0);
            if (*i as usize) < n {
                Ok(())
            } else {
                Err(Error::Data(format!(
                    "row `{row_id}`, column `{}`: category index {i} out of range",
                    spec.name
                )))
            }
        }
        (Cell::Category(i), ColumnKind::Label) if spec.categories.is_some() => {
            let n = spec.categories.as_ref().unwrap().len();
            if (*i as usize) < n {
                Ok(())
            } else {
                Err(Error::Data(format!("row `{row_id}`: label index {i} out of range")))
            }
        }
        _ => Err(Error::Data(format!(
            "row `{row_id}`, column `{}`: cell does not conform to column kind {:?}",
            spec.name, spec.kind
        ))),
    }
}

/// Source/target dataset pair for adaptation; `m` source rows drawn from the
/// training-rich distribution, `n` target rows from the evaluation one.
#[derive(Debug, Clone)]
pub struct GroupedDataset {
    source: Dataset,
    target: Dataset,
}

impl GroupedDataset {
    /// Schemas must be identical; the source must be nonempty, the target
    /// may be empty (pure domain generalization).
    pub fn new(source: Dataset, target: Dataset) -> Result<Self> {
        if source.schema() != target.schema() {
            return Err(Error::Data("source and target schemas differ".into()));
        }
        if source.n_rows() == 0 {
            return Err(Error::Data("source dataset is empty".into()));
        }
        let mut ids: HashSet<&str> = source.row_ids().iter().map(|s| s.as_str()).collect();
        for id in target.row_ids() {
            if !ids.insert(id) {
                return Err(Error::Data(format!(
                    "row id `{id}` appears in both source and target"
                )));
            }
        }
        Ok(GroupedDataset { source, target })
    }

    pub fn source(&self) -> &Dataset {
        &self.source
    }

    pub fn target(&self) -> &Dataset {
        &self.target
    }

    /// Count of source rows.
    pub fn m(&self) -> usize {
        self.source.n_rows()
    }

    /// Count of target rows.
    pub fn n(&self) -> usize {
        self.target.n_rows()
    }

    pub fn schema(&self) -> &FeatureSchema {
        self.source.schema()
    }
}
