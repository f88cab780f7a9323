//! Distribution-shift quantification and domain adaptation for tabular data.
//!
//! The crate covers the full workflow for moving a predictive model from a
//! data-rich source group to a data-scarce target group:
//!
//! * [`data`] — column-typed datasets, group partitions and stratified fold
//!   plans shared by everything else.
//! * [`preprocess`] — median imputation, z-scoring, quantile normalization
//!   and missingness indicators, fitted strictly on training rows.
//! * [`models`] — linear models, a small feed-forward network, k-NN and
//!   random forests, all trained under one alpha-weighted risk objective
//!   that trades off source fit against target fit.
//! * [`mmd`] — learned-feature maximum mean discrepancy two-sample tests,
//!   permutation p-values, pairwise group distances and dendrograms.
//! * [`theory`] — generalization and adaptation bounds plus the optimal
//!   alpha rule used to seed the hyper-parameter search.
//! * [`ensemble`] — two-level stacking with repeated k-fold bagging and
//!   greedy ensemble selection.
//! * [`evaluation`] — the nested cross-validation harness, AUC/MAE,
//!   fairness disparities and paired significance tests.
//! * [`downstream`] — LDA-on-probability transfer tasks and age-residual
//!   correlation analysis.
//! * [`synthgen`] — seeded synthetic shifted populations for end-to-end
//!   verification at desk scale.

pub mod data;
pub mod downstream;
pub mod ensemble;
mod error;
pub mod evaluation;
pub mod mmd;
pub mod models;
pub mod preprocess;
pub mod rng;
pub mod synthgen;
#[cfg(test)]
pub(crate) mod testutil;
pub mod theory;
pub mod util;

pub use error::{Error, Result};
