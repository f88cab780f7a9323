//! Column-typed tabular datasets with group stratification and
//! deterministic split bookkeeping.
//!
//! A [`Dataset`] pairs a [`FeatureSchema`] with a cell matrix and stable row
//! identifiers. Datasets and [`FoldPlan`]s are immutable after construction
//! and safe to share across parallel workers.

mod dataset;
mod io;
mod schema;
mod split;

pub use dataset::{Cell, Dataset, GroupedDataset};
pub use io::{read_csv, read_schema, write_csv, write_schema};
pub use schema::{ColumnKind, ColumnSpec, FeatureSchema, Task, UNKNOWN_CATEGORY};
pub use split::{
    adaptation_split, group_partition, stratified_split, stratum_keys, FoldPlan, RowSlot,
};
pub(crate) use split::{deal_ring, strata_map, stratified_take};
