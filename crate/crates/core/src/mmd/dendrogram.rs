use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::feature_map::FeatureMap;
use super::kernel::KernelChoice;
use super::statistic::mmd_unbiased;
use crate::data::{group_partition, Dataset};
use crate::rng::rng_for;
use crate::{Error, Result};

/// Times the larger group is re-subsampled when equalizing pair sizes.
pub const DEFAULT_SUBSAMPLE_REPEATS: usize = 10;

/// Symmetric matrix of pairwise discrepancies over named groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub groups: Vec<String>,
    /// Row-major n x n values; zero diagonal.
    pub values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(groups: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = groups.len();
        if values.len() != n * n {
            return Err(Error::Mmd("distance matrix shape mismatch".into()));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::Mmd("distance matrix diagonal must be zero".into()));
            }
            for j in 0..n {
                if (values[i * n + j] - values[j * n + i]).abs() > 1e-12 {
                    return Err(Error::Mmd("distance matrix must be symmetric".into()));
                }
            }
        }
        Ok(DistanceMatrix { groups, values })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.groups.len() + j]
    }

    /// CSV with group-name headers.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("group");
        for g in &self.groups {
            out.push(',');
            out.push_str(g);
        }
        out.push('\n');
        for (i, g) in self.groups.iter().enumerate() {
            out.push_str(g);
            for j in 0..self.groups.len() {
                out.push(',');
                out.push_str(&format!("{}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Binary merge tree; heights are average-linkage distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dendrogram {
    Leaf { leaf: String },
    Merge { left: Box<Dendrogram>, right: Box<Dendrogram>, height: f64 },
}

impl Dendrogram {
    pub fn leaves(&self) -> Vec<&str> {
        match self {
            Dendrogram::Leaf { leaf } => vec![leaf.as_str()],
            Dendrogram::Merge { left, right, .. } => {
                let mut l = left.leaves();
                l.extend(right.leaves());
                l
            }
        }
    }

    /// Merge heights in merge order (root last).
    pub fn heights(&self) -> Vec<f64> {
        match self {
            Dendrogram::Leaf { .. } => vec![],
            Dendrogram::Merge { left, right, height } => {
                let mut h = left.heights();
                h.extend(right.heights());
                h.push(*height);
                h
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedGroup {
    pub group: String,
    pub reason: String,
}

/// Pairwise group discrepancies plus exclusion records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairwiseMmd {
    pub attribute: String,
    pub matrix: DistanceMatrix,
    pub excluded: Vec<ExcludedGroup>,
}

/// Pairwise unbiased squared-MMD between groups of `attribute`, computed on
/// learned features. Unequal pair sizes are equalized by seeded subsampling
/// of the larger group, averaged over [`DEFAULT_SUBSAMPLE_REPEATS`] draws.
pub fn pairwise_mmd(
    data: &Dataset,
    attribute: &str,
    fmap: &FeatureMap,
    kernel: KernelChoice,
    seed: u64,
) -> Result<PairwiseMmd> {
    let partition = group_partition(data, attribute)?;
    let mut groups = Vec::new();
    let mut features = Vec::new();
    let mut excluded = Vec::new();
    for (name, subset) in &partition {
        if subset.n_rows() < 2 {
            excluded.push(ExcludedGroup {
                group: name.clone(),
                reason: format!("{} row(s), need at least 2", subset.n_rows()),
            });
            continue;
        }
        groups.push(name.clone());
        features.push(fmap.features(subset)?);
    }
    if groups.len() < 2 {
        return Err(Error::Mmd(format!(
            "attribute `{attribute}` has fewer than two usable groups"
        )));
    }

    let n = groups.len();
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let entries: Vec<((usize, usize), f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let value = pair_statistic(&features[i], &features[j], kernel, seed, i, j)?;
            Ok(((i, j), value))
        })
        .collect::<Result<_>>()?;

    let mut values = vec![0.0; n * n];
    for ((i, j), v) in entries {
        values[i * n + j] = v;
        values[j * n + i] = v;
    }
    Ok(PairwiseMmd {
        attribute: attribute.to_string(),
        matrix: DistanceMatrix::new(groups, values)?,
        excluded,
    })
}

fn pair_statistic(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    kernel: KernelChoice,
    seed: u64,
    i: usize,
    j: usize,
) -> Result<f64> {
    let n = a.len().min(b.len());
    let pooled: Vec<Vec<f64>> = a.iter().chain(b.iter()).cloned().collect();
    let resolved = kernel.resolve(&pooled)?;
    if a.len() == b.len() {
        return mmd_unbiased(a, b, &resolved);
    }
    let repeats = DEFAULT_SUBSAMPLE_REPEATS;
    let mut total = 0.0;
    for r in 0..repeats {
        let mut rng = rng_for(seed, &[0x5b, i as u64, j as u64, r as u64]);
        let take = |side: &[Vec<f64>], rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            use rand::seq::SliceRandom;
            let mut idx: Vec<usize> = (0..side.len()).collect();
            idx.shuffle(rng);
            idx.truncate(n);
            idx.into_iter().map(|k| side[k].clone()).collect()
        };
        let (sa, sb) = if a.len() > b.len() {
            (take(a, &mut rng), b.to_vec())
        } else {
            (a.to_vec(), take(b, &mut rng))
        };
        total += mmd_unbiased(&sa, &sb, &resolved)?;
    }
    Ok(total / repeats as f64)
}

/// Agglomerative clustering with average linkage over a distance matrix.
pub fn build_dendrogram(matrix: &DistanceMatrix) -> Result<Dendrogram> {
    let n = matrix.len();
    if n < 2 {
        return Err(Error::Mmd("dendrogram needs at least two groups".into()));
    }
    let mut nodes: Vec<Option<(Dendrogram, usize)>> = matrix
        .groups
        .iter()
        .map(|g| Some((Dendrogram::Leaf { leaf: g.clone() }, 1)))
        .collect();
    let mut dist = matrix.values.clone();
    let idx = |i: usize, j: usize| i * n + j;

    for _ in 0..(n - 1) {
        // Closest active pair; ties resolved toward smaller indices.
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if nodes[i].is_none() {
                continue;
            }
            for j in (i + 1)..n {
                if nodes[j].is_none() {
                    continue;
                }
                let d = dist[idx(i, j)];
                if best.map(|(_, _, bd)| d < bd).unwrap_or(true) {
                    best = Some((i, j, d));
                }
            }
        }
        let (i, j, height) = best.expect("at least two active clusters");
        let (left, size_l) = nodes[i].take().expect("active");
        let (right, size_r) = nodes[j].take().expect("active");
        // Average linkage: size-weighted mean of member distances.
        for k in 0..n {
            if k == i || k == j || nodes[k].is_none() {
                continue;
            }
            let d = (size_l as f64 * dist[idx(i.min(k), i.max(k))]
                + size_r as f64 * dist[idx(j.min(k), j.max(k))])
                / (size_l + size_r) as f64;
            dist[idx(i.min(k), i.max(k))] = d;
            dist[idx(i.max(k), i.min(k))] = d;
        }
        nodes[i] = Some((
            Dendrogram::Merge { left: Box::new(left), right: Box::new(right), height },
            size_l + size_r,
        ));
    }
    let root = nodes.into_iter().flatten().next().expect("one cluster remains");
    Ok(root.0)
}
