use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Two-sided paired t-test outcome over fold-level metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub p_value: f64,
    pub mean_difference: f64,
    /// Zero-variance differences: the t statistic is undefined and the
    /// p-value is reported as 0 (nonzero shift) or 1 (identical vectors).
    pub degenerate: bool,
}

/// Paired two-sided t-test over equal-length fold metric vectors.
pub fn paired_significance(a: &[f64], b: &[f64]) -> Result<PairedTestResult> {
    if a.len() != b.len() {
        return Err(Error::Evaluation("paired test needs equal-length vectors".into()));
    }
    if a.len() < 2 {
        return Err(Error::Evaluation("paired test needs at least 2 folds".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = crate::util::mean(&diffs);
    let sd = crate::util::sample_std(&diffs);
    if sd == 0.0 {
        return Ok(PairedTestResult {
            p_value: if mean == 0.0 { 1.0 } else { 0.0 },
            mean_difference: mean,
            degenerate: true,
        });
    }
    let n = diffs.len() as f64;
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid dof");
    Ok(PairedTestResult {
        p_value: 2.0 * (1.0 - dist.cdf(t.abs())),
        mean_difference: mean,
        degenerate: false,
    })
}
