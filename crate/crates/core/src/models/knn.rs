use serde::{Deserialize, Serialize};

use super::matrix::Mat;
use crate::data::{Dataset, Task};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 5 }
    }
}

/// k-nearest-neighbors on preprocessed features (Euclidean distance over the
/// one-hot view) with weighted neighbor votes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    pub config: KnnConfig,
    pub task: Task,
    pub feature_names: Vec<String>,
    features: Mat,
    labels: Vec<f64>,
    sample_weights: Vec<f64>,
}

impl KnnModel {
    pub(crate) fn fit(
        config: KnnConfig,
        task: Task,
        feature_names: Vec<String>,
        features: Mat,
        labels: Vec<f64>,
        sample_weights: Vec<f64>,
    ) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::Model("k must be at least 1".into()));
        }
        if config.k > features.rows {
            return Err(Error::Model(format!(
                "k = {} larger than the training set ({} rows)",
                config.k, features.rows
            )));
        }
        Ok(KnnModel { config, task, feature_names, features, labels, sample_weights })
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let view = super::feature::one_hot_view(data)?;
        if view.names != self.feature_names {
            return Err(Error::Model("feature mismatch between k-NN model and data".into()));
        }
        let mut out = Vec::with_capacity(view.matrix.rows);
        for r in 0..view.matrix.rows {
            out.push(self.predict_row(view.matrix.row(r)));
        }
        Ok(out)
    }

    fn predict_row(&self, query: &[f64]) -> f64 {
        let mut dist: Vec<(f64, usize)> = (0..self.features.rows)
            .map(|t| {
                let row = self.features.row(t);
                let d2: f64 =
                    row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, t)
            })
            .collect();
        dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let neighbors = &dist[..self.config.k];
        let total_weight: f64 = neighbors.iter().map(|&(_, t)| self.sample_weights[t]).sum();
        if total_weight > 0.0 {
            neighbors
                .iter()
                .map(|&(_, t)| self.sample_weights[t] * self.labels[t])
                .sum::<f64>()
                / total_weight
        } else {
            // All neighbors carry zero weight (alpha at 0 or 1): plain vote.
            neighbors.iter().map(|&(_, t)| self.labels[t]).sum::<f64>()
                / self.config.k as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_toy(k: usize, weights: Vec<f64>) -> KnnModel {
        KnnModel::fit(
            KnnConfig { k },
            Task::BinaryClassification,
            vec!["x".into()],
            Mat::from_rows(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]),
            vec![0.0, 0.0, 1.0, 1.0],
            weights,
        )
        .unwrap()
    }

    #[test]
    fn one_nn_memorizes_training_points() {
        let model = fit_toy(1, vec![1.0; 4]);
        for (x, y) in [(0.0, 0.0), (1.0, 0.0), (2.0, 1.0), (3.0, 1.0)] {
            assert_eq!(model.predict_row(&[x]), y);
        }
    }

    #[test]
    fn weighted_votes_shift_the_prediction() {
        // Neighbors of 1.4 with k = 3 are x = 1, 2, 0; weights tilt the vote.
        let model = fit_toy(3, vec![0.1, 0.1, 0.8, 0.1]);
        let p = model.predict_row(&[1.4]);
        assert!((p - 0.8).abs() < 1e-12);
    }

    #[test]
    fn k_larger_than_training_set_is_refused() {
        let err = KnnModel::fit(
            KnnConfig { k: 5 },
            Task::Regression,
            vec!["x".into()],
            Mat::from_rows(vec![vec![0.0], vec![1.0]]),
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        )
        .unwrap_err();
        assert!(err.to_string().contains("larger than the training set"));
    }

    #[test]
    fn zero_weight_neighbors_fall_back_to_plain_vote() {
        let model = fit_toy(2, vec![0.0; 4]);
        assert_eq!(model.predict_row(&[2.5]), 1.0);
    }
}
