use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::evaluation::{auc, mae};
use crate::{Error, Result};

/// Output of greedy forward selection: normalized selection frequencies and
/// the metric after each accepted iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub weights: Vec<f64>,
    pub trajectory: Vec<f64>,
}

/// Validation metric maximized by the selector: AUC for classification,
/// negative MAE for regression.
pub fn selection_metric(task: Task, scores: &[f64], labels: &[f64]) -> Result<f64> {
    match task {
        Task::BinaryClassification => auc(scores, labels),
        Task::Regression => Ok(-mae(scores, labels)?),
    }
}

/// Greedy forward selection with replacement: each iteration adds the model
/// whose inclusion in the uniform average maximizes the metric; an iteration
/// that would decrease the metric stops the search. Weights are selection
/// frequencies and the metric trajectory is non-decreasing.
pub fn ensemble_select(
    columns: &[Vec<f64>],
    labels: &[f64],
    task: Task,
    iterations: usize,
) -> Result<SelectionResult> {
    if columns.is_empty() {
        return Err(Error::Ensemble("selection needs at least one model".into()));
    }
    let n = labels.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Ensemble("column length mismatch".into()));
    }
    if iterations == 0 {
        return Err(Error::Ensemble("selection needs at least one iteration".into()));
    }
    let mut counts = vec![0usize; columns.len()];
    let mut selected_sum = vec![0.0; n];
    let mut total_selected = 0usize;
    let mut current_metric = f64::NEG_INFINITY;
    let mut trajectory = Vec::new();

    for _ in 0..iterations {
        let mut best: Option<(usize, f64)> = None;
        for (c, column) in columns.iter().enumerate() {
            let divisor = (total_selected + 1) as f64;
            let candidate: Vec<f64> = selected_sum
                .iter()
                .zip(column)
                .map(|(s, v)| (s + v) / divisor)
                .collect();
            let metric = selection_metric(task, &candidate, labels)?;
            if best.map(|(_, m)| metric > m).unwrap_or(true) {
                best = Some((c, metric));
            }
        }
        let (chosen, metric) = best.expect("non-empty candidate set");
        if metric < current_metric {
            break;
        }
        counts[chosen] += 1;
        total_selected += 1;
        for (s, v) in selected_sum.iter_mut().zip(&columns[chosen]) {
            *s += v;
        }
        current_metric = metric;
        trajectory.push(metric);
    }

    let weights: Vec<f64> =
        counts.iter().map(|&c| c as f64 / total_selected as f64).collect();
    Ok(SelectionResult { weights, trajectory })
}
