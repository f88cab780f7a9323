use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reserved category name for missing or unseen categorical values.
pub const UNKNOWN_CATEGORY: &str = "unknown";

/// Role of a column within a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Real-valued feature.
    Continuous,
    /// Categorical feature with an enumerated vocabulary.
    Categorical,
    /// The supervised label. Categorical labels (with a vocabulary) denote
    /// classification; plain labels denote regression.
    Label,
    /// Attribute partitioning rows into named groups (sex, age band, site).
    GroupAttribute,
}

/// One column declaration: name, kind and, where applicable, category
/// vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl ColumnSpec {
    pub fn continuous(name: &str) -> Self {
        ColumnSpec { name: name.to_string(), kind: ColumnKind::Continuous, categories: None }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Categorical,
            categories: Some(categories.iter().map(|c| c.to_string()).collect()),
        }
    }

    pub fn group(name: &str, groups: &[&str]) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::GroupAttribute,
            categories: Some(groups.iter().map(|c| c.to_string()).collect()),
        }
    }

    /// Binary classification label with the given class names (negative
    /// class first).
    pub fn class_label(name: &str, classes: &[&str]) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Label,
            categories: Some(classes.iter().map(|c| c.to_string()).collect()),
        }
    }

    pub fn regression_label(name: &str) -> Self {
        ColumnSpec { name: name.to_string(), kind: ColumnKind::Label, categories: None }
    }
}

/// Supervised task implied by the label column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    BinaryClassification,
    Regression,
}

/// Ordered column declarations for a dataset.
///
/// Invariants enforced at construction: exactly one label column, unique
/// column names, and every categorical or group column carries a vocabulary
/// that includes the reserved [`UNKNOWN_CATEGORY`] (appended when absent;
/// group vocabularies are left as declared and "unknown" only materializes
/// during partitioning).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    columns: Vec<ColumnSpec>,
    /// Set by the preprocessing pipeline on its outputs; fitting or
    /// transforming a dataset that is already preprocessed is refused.
    #[serde(default)]
    pub preprocessed: bool,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let mut normalized = columns;
        let mut names = std::collections::HashSet::new();
        let mut label_count = 0usize;
        for col in &mut normalized {
            if !names.insert(col.name.clone()) {
                return Err(Error::Data(format!("duplicate column name `{}`", col.name)));
            }
            match col.kind {
                ColumnKind::Continuous => {
                    if col.categories.is_some() {
                        return Err(Error::Data(format!(
                            "continuous column `{}` must not declare categories",
                            col.name
                        )));
                    }
                }
                ColumnKind::Categorical | ColumnKind::GroupAttribute => {
                    let cats = col.categories.as_mut().ok_or_else(|| {
                        Error::Data(format!("column `{}` requires a category list", col.name))
                    })?;
                    if cats.is_empty() {
                        return Err(Error::Data(format!(
                            "column `{}` has an empty category list",
                            col.name
                        )));
                    }
                    let mut seen = std::collections::HashSet::new();
                    for c in cats.iter() {
                        if !seen.insert(c.clone()) {
                            return Err(Error::Data(format!(
                                "column `{}` repeats category `{c}`",
                                col.name
                            )));
                        }
                    }
                    if col.kind == ColumnKind::Categorical
                        && !cats.iter().any(|c| c == UNKNOWN_CATEGORY)
                    {
                        cats.push(UNKNOWN_CATEGORY.to_string());
                    }
                }
                ColumnKind::Label => {
                    label_count += 1;
                    if let Some(cats) = &col.categories {
                        if cats.len() != 2 {
                            return Err(Error::Data(format!(
                                "classification label `{}` must declare exactly 2 classes, got {}",
                                col.name,
                                cats.len()
                            )));
                        }
                    }
                }
            }
        }
        if label_count != 1 {
            return Err(Error::Data(format!(
                "schema must declare exactly one label column, found {label_count}"
            )));
        }
        Ok(FeatureSchema { columns: normalized, preprocessed: false })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Data(format!("unknown column `{name}`")))
    }

    pub fn column(&self, name: &str) -> Result<&ColumnSpec> {
        Ok(&self.columns[self.column_index(name)?])
    }

    pub fn label_column(&self) -> &ColumnSpec {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::Label)
            .expect("schema invariant: exactly one label column")
    }

    pub fn task(&self) -> Task {
        if self.label_column().categories.is_some() {
            Task::BinaryClassification
        } else {
            Task::Regression
        }
    }

    pub fn group_columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.kind == ColumnKind::GroupAttribute)
    }

    /// Feature columns: everything that is not the label and not a group
    /// attribute.
    pub fn feature_columns(&self) -> impl Iterator<Item = (usize, &ColumnSpec)> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.kind, ColumnKind::Continuous | ColumnKind::Categorical))
    }

    /// Index of a category string within a column's vocabulary.
    pub fn category_index(&self, column: &str, value: &str) -> Result<u32> {
        let spec = self.column(column)?;
        let cats = spec
            .categories
            .as_ref()
            .ok_or_else(|| Error::Data(format!("column `{column}` has no categories")))?;
        cats.iter()
            .position(|c| c == value)
            .map(|i| i as u32)
            .ok_or_else(|| Error::Data(format!("category `{value}` not in vocabulary of `{column}`")))
    }

    /// With-categories builder used by the preprocessing pipeline when it
    /// appends indicator columns and drops constant ones.
    pub(crate) fn from_parts(columns: Vec<ColumnSpec>, preprocessed: bool) -> Self {
        FeatureSchema { columns, preprocessed }
    }
}
