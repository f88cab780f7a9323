//! Learned-feature maximum-mean-discrepancy two-sample testing.
//!
//! A multi-head group classifier supplies the canonical feature map; the
//! unbiased squared-MMD statistic on those features quantifies the
//! distribution shift between groups, with permutation p-values, pairwise
//! distance matrices and average-linkage dendrograms as summaries.

mod dendrogram;
mod feature_map;
mod kernel;
mod statistic;

pub use dendrogram::{
    build_dendrogram, pairwise_mmd, Dendrogram, DistanceMatrix, ExcludedGroup, PairwiseMmd,
    DEFAULT_SUBSAMPLE_REPEATS,
};
pub use feature_map::{learn_feature_map, ExcludedAttribute, FeatureMap, FeatureMapConfig};
pub use kernel::{median_bandwidth, Kernel, KernelChoice};
pub use statistic::{
    mmd_unbiased, permutation_test, MmdResult, DEFAULT_PERMUTATIONS, MIN_PERMUTATIONS,
};

/// Label recorded in exported metadata: the reported statistic is the
/// unbiased squared MMD, not its square root.
pub const STATISTIC_LABEL: &str = "mmd2_unbiased";

/// Label recorded in exported metadata for the dendrogram linkage.
pub const LINKAGE_LABEL: &str = "average";
