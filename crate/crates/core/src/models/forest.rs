use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Mat;
use crate::data::{Dataset, Task};
use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; defaults to sqrt(d) for classification and
    /// d/3 for regression.
    #[serde(default)]
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 64,
            max_depth: 8,
            min_samples_leaf: 1,
            max_features: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
    /// Rows used to grow this tree (for bagging provenance).
    training_rows: Vec<usize>,
}

impl Tree {
    fn predict_row(&self, features: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    at = if features[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Random forest with per-sample weights entering the split criterion
/// (weighted Gini / weighted squared error) and the leaf values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub task: Task,
    pub feature_names: Vec<String>,
    trees: Vec<Tree>,
}

struct TreeBuilder<'a> {
    x: &'a Mat,
    labels: &'a [f64],
    weights: &'a [f64],
    task: Task,
    config: &'a ForestConfig,
    max_features: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let total: f64 = rows.iter().map(|&r| self.weights[r]).sum();
        if total > 0.0 {
            rows.iter().map(|&r| self.weights[r] * self.labels[r]).sum::<f64>() / total
        } else {
            rows.iter().map(|&r| self.labels[r]).sum::<f64>() / rows.len() as f64
        }
    }

    /// Weighted impurity contribution of one side from its weight/label
    /// sums: 2(W·p)(1-p)·... for Gini reduces to 2(S - S²/W); squared error
    /// reduces to Q - S²/W with Q = Σw·y².
    fn side_score(&self, w: f64, s: f64, q: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        match self.task {
            Task::BinaryClassification => 2.0 * (s - s * s / w),
            Task::Regression => q - s * s / w,
        }
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut rand_chacha::ChaCha8Rng) -> usize {
        let first = self.labels[rows[0]];
        let pure = rows.iter().all(|&r| self.labels[r] == first);
        if depth >= self.config.max_depth
            || pure
            || rows.len() < 2 * self.config.min_samples_leaf
        {
            let value = self.leaf_value(&rows);
            self.nodes.push(Node::Leaf { value });
            return self.nodes.len() - 1;
        }

        let n_features = self.x.cols;
        let mut feature_pool: Vec<usize> = (0..n_features).collect();
        feature_pool.shuffle(rng);
        feature_pool.truncate(self.max_features);

        let mut best: Option<(f64, usize, f64)> = None; // (score, feature, threshold)
        for &feature in &feature_pool {
            let mut order: Vec<usize> = rows.clone();
            order.sort_by(|&a, &b| {
                self.x.get(a, feature).partial_cmp(&self.x.get(b, feature)).unwrap()
            });
            let total_w: f64 = order.iter().map(|&r| self.weights[r]).sum();
            let total_s: f64 = order.iter().map(|&r| self.weights[r] * self.labels[r]).sum();
            let total_q: f64 =
                order.iter().map(|&r| self.weights[r] * self.labels[r] * self.labels[r]).sum();
            let mut w_left = 0.0;
            let mut s_left = 0.0;
            let mut q_left = 0.0;
            for i in 0..order.len() - 1 {
                let r = order[i];
                w_left += self.weights[r];
                s_left += self.weights[r] * self.labels[r];
                q_left += self.weights[r] * self.labels[r] * self.labels[r];
                let here = self.x.get(r, feature);
                let next = self.x.get(order[i + 1], feature);
                if here == next {
                    continue;
                }
                let left_count = i + 1;
                let right_count = order.len() - left_count;
                if left_count < self.config.min_samples_leaf
                    || right_count < self.config.min_samples_leaf
                {
                    continue;
                }
                let score = self.side_score(w_left, s_left, q_left)
                    + self.side_score(total_w - w_left, total_s - s_left, total_q - q_left);
                let threshold = 0.5 * (here + next);
                if best.map(|(b, _, _)| score < b).unwrap_or(true) {
                    best = Some((score, feature, threshold));
                }
            }
        }

        match best {
            None => {
                let value = self.leaf_value(&rows);
                self.nodes.push(Node::Leaf { value });
                self.nodes.len() - 1
            }
            Some((_, feature, threshold)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&r| self.x.get(r, feature) <= threshold);
                let placeholder = self.nodes.len();
                self.nodes.push(Node::Leaf { value: 0.0 });
                let left = self.build(left_rows, depth + 1, rng);
                let right = self.build(right_rows, depth + 1, rng);
                self.nodes[placeholder] = Node::Split { feature, threshold, left, right };
                placeholder
            }
        }
    }
}

impl ForestModel {
    pub(crate) fn fit(
        config: ForestConfig,
        task: Task,
        feature_names: Vec<String>,
        x: &Mat,
        labels: &[f64],
        sample_weights: &[f64],
        seed: u64,
    ) -> Result<Self> {
        if x.rows == 0 {
            return Err(Error::Model("cannot fit a forest on an empty dataset".into()));
        }
        if config.n_trees == 0 {
            return Err(Error::Model("forest needs at least one tree".into()));
        }
        let default_mf = match task {
            Task::BinaryClassification => (x.cols as f64).sqrt().ceil() as usize,
            Task::Regression => (x.cols / 3).max(1),
        };
        let max_features = config.max_features.unwrap_or(default_mf).clamp(1, x.cols);
        let trees: Vec<Tree> = (0..config.n_trees)
            .map(|t| {
                let mut rng = rng_for(seed, &[0xF0, t as u64]);
                let rows: Vec<usize> = if config.bootstrap {
                    (0..x.rows).map(|_| rng.random_range(0..x.rows)).collect()
                } else {
                    (0..x.rows).collect()
                };
                let mut builder = TreeBuilder {
                    x,
                    labels,
                    weights: sample_weights,
                    task,
                    config: &config,
                    max_features,
                    nodes: Vec::new(),
                };
                builder.build(rows.clone(), 0, &mut rng);
                Tree { nodes: builder.nodes, training_rows: rows }
            })
            .collect();
        Ok(ForestModel { config, task, feature_names, trees })
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let view = super::feature::one_hot_view(data)?;
        if view.names != self.feature_names {
            return Err(Error::Model("feature mismatch between forest and data".into()));
        }
        Ok((0..view.matrix.rows)
            .map(|r| {
                let row = view.matrix.row(r);
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
                    / self.trees.len() as f64
            })
            .collect())
    }

    /// Row indices (into the fitting matrix) each tree was grown on.
    pub fn tree_training_rows(&self) -> impl Iterator<Item = &[usize]> {
        self.trees.iter().map(|t| t.training_rows.as_slice())
    }
}
