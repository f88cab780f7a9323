//! Secondary-task procedures: linear-discriminant transfer on a frozen
//! model's output probabilities, and age-residual correlation analysis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{stratified_split, Dataset};
use crate::evaluation::{auc, pearson, ExcludedFold, FittedModel, FoldOutcome, MetricReport};
use crate::util::row_set_digest;
use crate::{Error, Result};

/// One-dimensional two-class linear discriminant with shared variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel1D {
    /// Class-conditional means, class 0 first.
    pub means: [f64; 2],
    /// Class priors; positive, sum to one.
    pub priors: [f64; 2],
    /// Pooled within-class variance (N-2 denominator).
    pub pooled_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorPolicy {
    /// Class frequencies of the fit set.
    Empirical,
    Uniform,
}

impl LdaModel1D {
    pub fn from_parts(means: [f64; 2], priors: [f64; 2], pooled_variance: f64) -> Result<Self> {
        if pooled_variance <= 0.0 || !pooled_variance.is_finite() {
            return Err(Error::Downstream("pooled variance must be positive".into()));
        }
        if priors.iter().any(|&p| p <= 0.0) || (priors[0] + priors[1] - 1.0).abs() > 1e-9 {
            return Err(Error::Downstream("priors must be positive and sum to one".into()));
        }
        Ok(LdaModel1D { means, priors, pooled_variance })
    }

    /// Decision boundary where the two posteriors are equal:
    /// `(mu0 + mu1)/2 + s^2 ln(pi0/pi1) / (mu1 - mu0)`.
    /// Undefined when the class means coincide.
    pub fn threshold(&self) -> Option<f64> {
        let [mu0, mu1] = self.means;
        if mu0 == mu1 {
            return None;
        }
        Some(
            0.5 * (mu0 + mu1)
                + self.pooled_variance * (self.priors[0] / self.priors[1]).ln() / (mu1 - mu0),
        )
    }

    /// Log of the unnormalized posterior score for one class.
    fn log_score(&self, x: f64, class: usize) -> f64 {
        let mu = self.means[class];
        self.priors[class].ln() - (x - mu) * (x - mu) / (2.0 * self.pooled_variance)
    }

    /// Posterior probability of class 1; invariant to any common positive
    /// rescaling of both class likelihoods.
    pub fn posterior(&self, x: f64) -> f64 {
        let s0 = self.log_score(x, 0);
        let s1 = self.log_score(x, 1);
        let m = s0.max(s1);
        let e0 = (s0 - m).exp();
        let e1 = (s1 - m).exp();
        e1 / (e0 + e1)
    }

    pub fn predict(&self, x: f64) -> (u32, f64) {
        let p1 = self.posterior(x);
        (u32::from(p1 >= 0.5), p1)
    }
}

/// Fit the shared-variance discriminant on a scalar covariate.
pub fn lda_fit_1d(covariate: &[f64], labels: &[f64], priors: PriorPolicy) -> Result<LdaModel1D> {
    if covariate.len() != labels.len() {
        return Err(Error::Downstream("covariate/label length mismatch".into()));
    }
    let class0: Vec<f64> = covariate
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 0.0)
        .map(|(x, _)| *x)
        .collect();
    let class1: Vec<f64> = covariate
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1.0)
        .map(|(x, _)| *x)
        .collect();
    if class0.len() < 2 || class1.len() < 2 {
        return Err(Error::Downstream(format!(
            "each class needs at least 2 samples, got {} and {}",
            class0.len(),
            class1.len()
        )));
    }
    let mu0 = crate::util::mean(&class0);
    let mu1 = crate::util::mean(&class1);
    let ss: f64 = class0.iter().map(|x| (x - mu0) * (x - mu0)).sum::<f64>()
        + class1.iter().map(|x| (x - mu1) * (x - mu1)).sum::<f64>();
    let pooled_variance = ss / (covariate.len() - 2) as f64;
    if pooled_variance <= 0.0 {
        return Err(Error::Downstream("degenerate zero pooled variance".into()));
    }
    let priors = match priors {
        PriorPolicy::Uniform => [0.5, 0.5],
        PriorPolicy::Empirical => {
            let n = covariate.len() as f64;
            [class0.len() as f64 / n, class1.len() as f64 / n]
        }
    };
    LdaModel1D::from_parts([mu0, mu1], priors, pooled_variance)
}

/// Transfer evaluation of a frozen primary model on a secondary task: per
/// fold, the discriminant is fitted on `label_fraction` of the secondary
/// labels over the model's probabilities and scored by AUC on the rest.
/// The primary model is never refit (digest-checked).
pub fn secondary_transfer_eval(
    model: &FittedModel,
    secondary: &Dataset,
    label_fraction: f64,
    folds: usize,
    seed: u64,
    priors: PriorPolicy,
) -> Result<MetricReport> {
    if folds < 2 {
        return Err(Error::Downstream("need at least 2 folds".into()));
    }
    let expected_fraction = 1.0 / folds as f64;
    if (label_fraction - expected_fraction).abs() > 1e-9 {
        return Err(Error::Downstream(format!(
            "label_fraction {label_fraction} must equal 1/folds = {expected_fraction}"
        )));
    }
    let digest_before = model.digest();
    let probabilities = model.predict(secondary)?;
    let labels = secondary.labels()?;
    let label_col = secondary.schema().label_column().name.clone();
    let plan = stratified_split(secondary, folds, &label_col, seed)?;
    let fold_indices = plan.fold_indices(secondary)?;

    let mut outcomes = Vec::new();
    let mut excluded = Vec::new();
    for (i, fit_idx) in fold_indices.iter().enumerate() {
        let run = || -> Result<FoldOutcome> {
            let test_idx: Vec<usize> = (0..secondary.n_rows())
                .filter(|r| !fit_idx.contains(r))
                .collect();
            let fit_x: Vec<f64> = fit_idx.iter().map(|&r| probabilities[r]).collect();
            let fit_y: Vec<f64> = fit_idx.iter().map(|&r| labels[r]).collect();
            // A constant covariate has no discriminant; the rank metric
            // still applies (all ties count one half) and the fold is
            // flagged.
            let (test_scores, basis): (Vec<f64>, &str) =
                match lda_fit_1d(&fit_x, &fit_y, priors) {
                    Ok(lda) => (
                        test_idx.iter().map(|&r| lda.posterior(probabilities[r])).collect(),
                        "lda_posterior",
                    ),
                    Err(Error::Downstream(reason))
                        if reason.contains("pooled variance") =>
                    {
                        (
                            test_idx.iter().map(|&r| probabilities[r]).collect(),
                            "degenerate_constant_covariate",
                        )
                    }
                    Err(e) => return Err(e),
                };
            let test_labels: Vec<f64> = test_idx.iter().map(|&r| labels[r]).collect();
            let metric = auc(&test_scores, &test_labels)?;
            let fit_ids: Vec<String> =
                fit_idx.iter().map(|&r| secondary.row_ids()[r].clone()).collect();
            let test_ids: Vec<String> =
                test_idx.iter().map(|&r| secondary.row_ids()[r].clone()).collect();
            Ok(FoldOutcome {
                fold: i,
                metric,
                chosen_alpha: None,
                selection_basis: basis.into(),
                n_train: fit_ids.len(),
                n_test: test_ids.len(),
                selection_digest: row_set_digest(&fit_ids),
                test_digest: row_set_digest(&test_ids),
                test_row_ids: test_ids,
                test_scores,
            })
        };
        match run() {
            Ok(outcome) => outcomes.push(outcome),
            Err(e) => excluded.push(ExcludedFold { fold: i, reason: e.to_string() }),
        }
    }
    if model.digest() != digest_before {
        return Err(Error::Downstream("primary model changed during transfer eval".into()));
    }
    if outcomes.is_empty() {
        return Err(Error::Downstream(format!("every fold excluded: {excluded:?}")));
    }
    let values: Vec<f64> = outcomes.iter().map(|f| f.metric).collect();
    Ok(MetricReport {
        metric_name: "auc".into(),
        source_group: "primary".into(),
        target_group: "secondary".into(),
        target_fraction: label_fraction,
        model: "lda_transfer".into(),
        seed,
        mean: crate::util::mean(&values),
        std: crate::util::sample_std(&values),
        folds: outcomes,
        excluded,
        comparisons: BTreeMap::new(),
        audits_passed: true,
    })
}

/// Predicted/chronological age pair; the residual is their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarRecord {
    pub predicted_age: f64,
    pub chronological_age: f64,
}

impl BarRecord {
    pub fn residual(&self) -> f64 {
        self.predicted_age - self.chronological_age
    }
}

/// One row of the residual-correlation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarCorrelation {
    pub name: String,
    pub r: Option<f64>,
    pub p: Option<f64>,
    /// Expected direction from configuration (+1/-1), never hard-coded.
    pub expected_sign: Option<i8>,
    pub consistent: Option<bool>,
    pub undefined_reason: Option<String>,
}

/// Pearson correlation between the age residual and each named covariate.
/// Zero-variance covariates (or residuals) yield flagged undefined rows.
pub fn bar_analysis(
    records: &[BarRecord],
    covariates: &[(String, Vec<f64>)],
    expected_signs: &BTreeMap<String, i8>,
) -> Result<Vec<BarCorrelation>> {
    if records.len() < 3 {
        return Err(Error::Downstream("need at least 3 records".into()));
    }
    let residuals: Vec<f64> = records.iter().map(BarRecord::residual).collect();
    let mut rows = Vec::with_capacity(covariates.len());
    for (name, values) in covariates {
        if values.len() != records.len() {
            return Err(Error::Downstream(format!(
                "covariate `{name}` has {} values for {} records",
                values.len(),
                records.len()
            )));
        }
        let expected = expected_signs.get(name).copied();
        match pearson(&residuals, values) {
            Ok((r, p)) => {
                let consistent =
                    expected.map(|sign| (r > 0.0 && sign > 0) || (r < 0.0 && sign < 0));
                rows.push(BarCorrelation {
                    name: name.clone(),
                    r: Some(r),
                    p: Some(p),
                    expected_sign: expected,
                    consistent,
                    undefined_reason: None,
                });
            }
            Err(Error::UndefinedMetric(reason)) => rows.push(BarCorrelation {
                name: name.clone(),
                r: None,
                p: None,
                expected_sign: expected,
                consistent: None,
                undefined_reason: Some(reason),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_priors_threshold_at_the_midpoint() {
        let lda = LdaModel1D::from_parts([0.2, 0.8], [0.5, 0.5], 0.04).unwrap();
        assert!((lda.threshold().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn skewed_priors_shift_the_threshold_by_hand() {
        // 0.5 + 0.04 ln(3) / 0.6.
        let lda = LdaModel1D::from_parts([0.2, 0.8], [0.75, 0.25], 0.04).unwrap();
        let expected = 0.5 + 0.04 * 3.0f64.ln() / 0.6;
        assert!((lda.threshold().unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.5732).abs() < 1e-4);
        // The posterior crosses one half exactly at the threshold.
        let t = lda.threshold().unwrap();
        assert!(lda.posterior(t - 1e-9) < 0.5);
        assert!(lda.posterior(t + 1e-9) > 0.5);
    }

    #[test]
    fn fit_recovers_moments_and_rejects_degenerate_input() {
        let x = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let lda = lda_fit_1d(&x, &y, PriorPolicy::Empirical).unwrap();
        assert!((lda.means[0] - 0.2).abs() < 1e-12);
        assert!((lda.means[1] - 0.8).abs() < 1e-12);
        assert_eq!(lda.priors, [0.5, 0.5]);
        // Single-class labels refuse.
        assert!(lda_fit_1d(&x, &[0.0; 6], PriorPolicy::Empirical).is_err());
        // Zero pooled variance refuses.
        assert!(lda_fit_1d(
            &[0.5, 0.5, 0.5, 0.5],
            &[0.0, 0.0, 1.0, 1.0],
            PriorPolicy::Empirical
        )
        .is_err());
    }

    #[test]
    fn posterior_is_invariant_to_common_likelihood_rescaling() {
        // Decisions from unnormalized log scores shifted by a common
        // constant (equivalent to scaling both densities) are unchanged.
        let lda = LdaModel1D::from_parts([0.3, 0.7], [0.6, 0.4], 0.02).unwrap();
        for x in [0.1, 0.4, 0.5, 0.55, 0.9] {
            let s0 = lda.log_score(x, 0);
            let s1 = lda.log_score(x, 1);
            for scale in [1e-6f64, 1.0, 1e6] {
                let p = (s1 + scale.ln()).exp() / ((s0 + scale.ln()).exp() + (s1 + scale.ln()).exp());
                assert!((p - lda.posterior(x)).abs() < 1e-9);
            }
        }
    }

    fn frozen_linear(weight: f64) -> FittedModel {
        use crate::models::{LinearModel, ModelParams, ParamLayout, TrainedModel};
        let mut b = ParamLayout::builder();
        b.push("weight", 1, 1).push("bias", 1, 1);
        let params = ModelParams::new(vec![weight, 0.0], b.build()).unwrap();
        FittedModel::Base(TrainedModel::Linear(LinearModel {
            params,
            task: crate::data::Task::BinaryClassification,
            feature_names: vec!["x0".into()],
            training_curve: vec![],
        }))
    }

    fn secondary_data(n: usize) -> crate::data::Dataset {
        // Probability is monotone in x0, and labels follow x0 exactly.
        let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 - n as f64 / 2.0]).collect();
        let ys: Vec<f64> = (0..n).map(|i| f64::from(i >= n / 2)).collect();
        crate::testutil::classification_dataset("m", &xs, &ys)
    }

    #[test]
    fn perfectly_ordered_probabilities_give_unit_auc() {
        let model = frozen_linear(1.0);
        let report = secondary_transfer_eval(
            &model,
            &secondary_data(30),
            0.2,
            5,
            7,
            PriorPolicy::Empirical,
        )
        .unwrap();
        assert!((report.mean - 1.0).abs() < 1e-12, "mean {}", report.mean);
        assert!(report.folds.iter().all(|f| f.selection_basis == "lda_posterior"));
    }

    #[test]
    fn constant_probabilities_fall_back_to_tied_auc() {
        let model = frozen_linear(0.0);
        let report = secondary_transfer_eval(
            &model,
            &secondary_data(30),
            0.2,
            5,
            7,
            PriorPolicy::Empirical,
        )
        .unwrap();
        assert!((report.mean - 0.5).abs() < 1e-12);
        assert!(report
            .folds
            .iter()
            .all(|f| f.selection_basis == "degenerate_constant_covariate"));
    }

    #[test]
    fn residual_is_prediction_minus_chronological() {
        let r = BarRecord { predicted_age: 73.5, chronological_age: 70.0 };
        assert!((r.residual() - 3.5).abs() < 1e-15);
    }

    #[test]
    fn negated_residual_covariate_correlates_minus_one() {
        let records: Vec<BarRecord> = (0..10)
            .map(|i| BarRecord {
                predicted_age: 70.0 + i as f64 * 0.7,
                chronological_age: 70.0 - i as f64 * 0.3,
            })
            .collect();
        let neg: Vec<f64> = records.iter().map(|r| -r.residual()).collect();
        let mut expected = BTreeMap::new();
        expected.insert("neg".to_string(), -1i8);
        let rows =
            bar_analysis(&records, &[("neg".to_string(), neg)], &expected).unwrap();
        assert!((rows[0].r.unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(rows[0].consistent, Some(true));
    }

    #[test]
    fn zero_residual_flags_every_row_undefined() {
        let records: Vec<BarRecord> = (0..5)
            .map(|i| BarRecord { predicted_age: 60.0 + i as f64, chronological_age: 60.0 + i as f64 })
            .collect();
        let covariate: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let rows = bar_analysis(
            &records,
            &[("c".to_string(), covariate)],
            &BTreeMap::new(),
        )
        .unwrap();
        assert!(rows[0].r.is_none());
        assert!(rows[0].undefined_reason.is_some());
    }

    #[test]
    fn bar_rows_follow_covariate_order() {
        let records: Vec<BarRecord> = (0..6)
            .map(|i| BarRecord {
                predicted_age: 60.0 + (i as f64) * 1.3,
                chronological_age: 60.0 + (i as f64).sin(),
            })
            .collect();
        let c1: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let c2: Vec<f64> = (0..6).map(|i| (i as f64) * -2.0 + 1.0).collect();
        let forward = bar_analysis(
            &records,
            &[("a".into(), c1.clone()), ("b".into(), c2.clone())],
            &BTreeMap::new(),
        )
        .unwrap();
        let reversed = bar_analysis(
            &records,
            &[("b".into(), c2), ("a".into(), c1)],
            &BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(forward[0].name, "a");
        assert_eq!(reversed[1].name, "a");
        assert_eq!(forward[0].r, reversed[1].r);
    }
}
