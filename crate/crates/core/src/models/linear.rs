use serde::{Deserialize, Serialize};

use super::matrix::Mat;
use super::net::sigmoid;
use super::params::{ModelParams, ParamLayout};
use crate::data::{Dataset, Task};
use crate::{Error, Result};

/// Regularized linear model: logistic regression for classification, least
/// squares for regression. Categorical features enter one-hot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub params: ModelParams,
    pub task: Task,
    pub feature_names: Vec<String>,
    /// Objective value after each epoch of training.
    pub training_curve: Vec<f64>,
}

pub(crate) fn linear_layout(n_features: usize) -> ParamLayout {
    let mut b = ParamLayout::builder();
    b.push("weight", 1, n_features).push("bias", 1, 1);
    b.build()
}

/// Raw linear scores w·x + b.
pub(crate) fn raw_scores(params: &ModelParams, x: &Mat) -> Vec<f64> {
    let w = params.layout.slice("weight", &params.values).unwrap();
    let b = params.layout.slice("bias", &params.values).unwrap()[0];
    (0..x.rows)
        .map(|r| {
            let row = x.row(r);
            let mut s = b;
            for i in 0..row.len() {
                s += w[i] * row[i];
            }
            s
        })
        .collect()
}

/// Per-sample losses on `rows`; when `grad` is given, accumulates
/// `sum_b weight_b * d(loss_b)/d(theta)`.
pub(crate) fn losses_and_grad(
    params: &ModelParams,
    x: &Mat,
    labels: &[f64],
    rows: &[usize],
    sample_weights: &[f64],
    task: Task,
    mut grad: Option<&mut [f64]>,
) -> Vec<f64> {
    let w = params.layout.slice("weight", &params.values).unwrap().to_vec();
    let b = params.layout.slice("bias", &params.values).unwrap()[0];
    let n_features = w.len();
    let mut losses = Vec::with_capacity(rows.len());
    for (pos, &r) in rows.iter().enumerate() {
        let features = x.row(r);
        let mut s = b;
        for i in 0..n_features {
            s += w[i] * features[i];
        }
        let y = labels[r];
        let (loss, d_s) = match task {
            Task::BinaryClassification => {
                (s.max(0.0) - s * y + (-s.abs()).exp().ln_1p(), sigmoid(s) - y)
            }
            Task::Regression => {
                let diff = s - y;
                (0.5 * diff * diff, diff)
            }
        };
        losses.push(loss);
        if let Some(g) = grad.as_deref_mut() {
            let scaled = d_s * sample_weights[pos];
            for i in 0..n_features {
                g[i] += scaled * features[i];
            }
            g[n_features] += scaled;
        }
    }
    losses
}

impl LinearModel {
    /// Probability (classification) or real prediction (regression) per row.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let view = super::feature::one_hot_view(data)?;
        if view.names != self.feature_names {
            return Err(Error::Model(format!(
                "feature mismatch: model expects {} features, data provides {}",
                self.feature_names.len(),
                view.names.len()
            )));
        }
        let scores = raw_scores(&self.params, &view.matrix);
        Ok(match self.task {
            Task::BinaryClassification => scores.into_iter().map(sigmoid).collect(),
            Task::Regression => scores,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_score_half() {
        let params = ModelParams::zeros(linear_layout(3));
        let x = Mat::from_rows(vec![vec![1.0, -2.0, 0.5]]);
        let s = raw_scores(&params, &x);
        assert_eq!(s, vec![0.0]);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn sigmoid_of_ln3_is_three_quarters() {
        let mut params = ModelParams::zeros(linear_layout(1));
        params.values[0] = 1.0;
        let x = Mat::from_rows(vec![vec![3.0_f64.ln()]]);
        let s = raw_scores(&params, &x);
        assert!((sigmoid(s[0]) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let mut params = ModelParams::zeros(linear_layout(2));
        params.values.copy_from_slice(&[0.3, -0.7, 0.1]);
        let x = Mat::from_rows(vec![vec![1.0, 2.0], vec![-0.5, 0.4], vec![0.0, 1.5]]);
        let labels = vec![1.0, 0.0, 1.0];
        let rows = vec![0, 1, 2];
        let weights = vec![0.5, 0.3, 0.2];
        for task in [Task::BinaryClassification, Task::Regression] {
            let mut grad = vec![0.0; 3];
            losses_and_grad(&params, &x, &labels, &rows, &weights, task, Some(&mut grad));
            let objective = |values: &[f64]| -> f64 {
                let p = ModelParams::new(values.to_vec(), params.layout.clone()).unwrap();
                let l = losses_and_grad(&p, &x, &labels, &rows, &weights, task, None);
                l.iter().zip(&weights).map(|(a, b)| a * b).sum()
            };
            let eps = 1e-6;
            for i in 0..3 {
                let mut plus = params.values.clone();
                plus[i] += eps;
                let mut minus = params.values.clone();
                minus[i] -= eps;
                let numeric = (objective(&plus) - objective(&minus)) / (2.0 * eps);
                assert!((numeric - grad[i]).abs() < 1e-6, "{task:?} coord {i}");
            }
        }
    }
}
