use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Area under the ROC curve via the rank (Mann-Whitney) formulation; ties
/// count one half. Undefined unless both classes are present.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Evaluation("scores/labels length mismatch".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs both classes in the evaluation set".into(),
        ));
    }
    for (i, &y) in labels.iter().enumerate() {
        if y != 0.0 && y != 1.0 {
            return Err(Error::Evaluation(format!("label at {i} is not 0/1: {y}")));
        }
    }
    // Midranks over the pooled scores.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 =
        labels.iter().zip(&ranks).filter(|(&y, _)| y == 1.0).map(|(_, r)| r).sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Mean absolute error.
pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Evaluation("predictions/targets length mismatch".into()));
    }
    if predictions.is_empty() {
        return Err(Error::Evaluation("mae needs at least one element".into()));
    }
    Ok(predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>()
        / predictions.len() as f64)
}

fn group_indices(groups: &[String]) -> Vec<(String, Vec<usize>)> {
    let mut map: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
    for (i, g) in groups.iter().enumerate() {
        map.entry(g.clone()).or_default().push(i);
    }
    map.into_iter().collect()
}

/// Demographic parity difference: the largest pairwise gap in
/// positive-prediction rates across groups.
pub fn dpd(predictions: &[bool], groups: &[String]) -> Result<f64> {
    if predictions.len() != groups.len() {
        return Err(Error::Evaluation("predictions/groups length mismatch".into()));
    }
    let by_group = group_indices(groups);
    if by_group.len() < 2 {
        return Err(Error::UndefinedMetric("DPD needs at least two groups".into()));
    }
    let rates: Vec<f64> = by_group
        .iter()
        .map(|(_, idx)| {
            idx.iter().filter(|&&i| predictions[i]).count() as f64 / idx.len() as f64
        })
        .collect();
    let max = rates.iter().cloned().fold(f64::MIN, f64::max);
    let min = rates.iter().cloned().fold(f64::MAX, f64::min);
    Ok(max - min)
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GroupExclusion {
    pub group: String,
    pub reason: String,
}

/// Equalized odds difference: the largest pairwise gap in true-positive or
/// false-positive rates. Groups missing a label class are excluded with a
/// record; at least two usable groups are required.
pub fn eod(
    predictions: &[bool],
    labels: &[f64],
    groups: &[String],
) -> Result<(f64, Vec<GroupExclusion>)> {
    if predictions.len() != labels.len() || labels.len() != groups.len() {
        return Err(Error::Evaluation("predictions/labels/groups length mismatch".into()));
    }
    let by_group = group_indices(groups);
    let mut tprs = Vec::new();
    let mut fprs = Vec::new();
    let mut excluded = Vec::new();
    for (name, idx) in &by_group {
        let pos: Vec<usize> = idx.iter().copied().filter(|&i| labels[i] == 1.0).collect();
        let neg: Vec<usize> = idx.iter().copied().filter(|&i| labels[i] == 0.0).collect();
        if pos.is_empty() || neg.is_empty() {
            excluded.push(GroupExclusion {
                group: name.clone(),
                reason: "missing a label class".into(),
            });
            continue;
        }
        tprs.push(pos.iter().filter(|&&i| predictions[i]).count() as f64 / pos.len() as f64);
        fprs.push(neg.iter().filter(|&&i| predictions[i]).count() as f64 / neg.len() as f64);
    }
    if tprs.len() < 2 {
        return Err(Error::UndefinedMetric(
            "EOD needs at least two groups with both classes".into(),
        ));
    }
    let spread = |v: &[f64]| {
        v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
    };
    Ok((spread(&tprs).max(spread(&fprs)), excluded))
}

/// Pearson product-moment correlation with a two-sided p-value from the t
/// distribution with n-2 degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Evaluation("pearson length mismatch".into()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Evaluation("pearson needs at least 3 pairs".into()));
    }
    let mx = crate::util::mean(x);
    let my = crate::util::mean(y);
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("pearson needs nonzero variance".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if 1.0 - r * r <= f64::EPSILON {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok((r, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_perfect_and_tied() {
        let perfect = auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(perfect, 1.0);
        let all_tied = auc(&[0.5; 6], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(all_tied, 0.5);
    }

    #[test]
    fn auc_hand_enumeration() {
        // Pairs: (0.35 > 0.1) yes, (0.35 > 0.4) no, (0.8 > 0.1) yes,
        // (0.8 > 0.4) yes: 3/4.
        let value = auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(value, 0.75);
    }

    #[test]
    fn auc_single_class_is_undefined() {
        let err = auc(&[0.2, 0.4], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(_)));
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let scores = [0.05, 0.9, 0.3, 0.7, 0.3, 0.11];
        let labels = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let base = auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (5.0 * s).tanh()).collect();
        assert_eq!(auc(&squashed, &labels).unwrap(), base);
    }

    #[test]
    fn mae_hand_values() {
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mae(&[5.0], &[2.0]).unwrap(), 3.0);
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dpd_rate_differences() {
        // Rates 3/4 vs 1/4.
        let predictions = [true, true, true, false, true, false, false, false];
        let groups: Vec<String> = ["a"; 4].iter().chain(["b"; 4].iter()).map(|s| s.to_string()).collect();
        assert_eq!(dpd(&predictions, &groups).unwrap(), 0.5);
    }

    #[test]
    fn dpd_three_groups_max_pairwise() {
        // Rates 0.2, 0.5, 0.9 over ten-member groups: spread 0.7.
        let mut predictions = Vec::new();
        let mut groups = Vec::new();
        for (name, rate) in [("a", 2), ("b", 5), ("c", 9)] {
            for i in 0..10 {
                predictions.push(i < rate);
                groups.push(name.to_string());
            }
        }
        assert!((dpd(&predictions, &groups).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn dpd_identical_rates_is_zero() {
        let predictions = [true, false, true, false];
        let groups: Vec<String> =
            ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        assert_eq!(dpd(&predictions, &groups).unwrap(), 0.0);
    }

    #[test]
    fn eod_hand_confusion_counts() {
        // Group a: TPR 0.5 (1 of 2), FPR 0 (0 of 2).
        // Group b: TPR 1.0 (2 of 2), FPR 0.5 (1 of 2).
        // EOD = max(|1.0-0.5|, |0.5-0|) = 0.5.
        let predictions = [true, false, false, false, true, true, true, false];
        let labels = [1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let groups: Vec<String> =
            ["a", "a", "a", "a", "b", "b", "b", "b"].iter().map(|s| s.to_string()).collect();
        let (value, excluded) = eod(&predictions, &labels, &groups).unwrap();
        assert_eq!(value, 0.5);
        assert!(excluded.is_empty());
    }

    #[test]
    fn eod_excludes_single_class_groups() {
        let predictions = [true, false, true, false, true, true];
        let labels = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let groups: Vec<String> =
            ["a", "a", "b", "b", "c", "c"].iter().map(|s| s.to_string()).collect();
        let (_, excluded) = eod(&predictions, &labels, &groups).unwrap();
        assert_eq!(excluded.len(), 1);
        assert_eq!(excluded[0].group, "c");
        // Only one usable group left: undefined.
        let err = eod(
            &predictions[..4],
            &[1.0, 0.0, 1.0, 1.0],
            &groups[..4].to_vec(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(_)));
    }

    #[test]
    fn disparities_live_in_the_unit_interval() {
        use rand::Rng;
        let mut rng = crate::rng::rng_for(3, &[1]);
        for _ in 0..30 {
            let n = rng.random_range(6..40);
            let predictions: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
            let labels: Vec<f64> =
                (0..n).map(|_| f64::from(u8::from(rng.random::<f64>() < 0.5))).collect();
            let groups: Vec<String> = (0..n)
                .map(|_| if rng.random::<f64>() < 0.5 { "a".into() } else { "b".into() })
                .collect();
            if let Ok(v) = dpd(&predictions, &groups) {
                assert!((0.0..=1.0).contains(&v));
            }
            if let Ok((v, _)) = eod(&predictions, &labels, &groups) {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn pearson_affine_and_hand_case() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let (r, p) = pearson(&x, &y).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(p, 0.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let (r, _) = pearson(&x, &neg).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_hand_computation_with_exact_p() {
        // x = [1,2,3], y = [1,3,2]: r = 0.5. With one degree of freedom the
        // t CDF has the closed form 1/2 + atan(t)/pi, and t = 1/sqrt(3)
        // gives a two-sided p of exactly 2/3.
        let (r, p) = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert!((p - 2.0 / 3.0).abs() < 1e-9, "p = {p}");
    }

    #[test]
    fn pearson_zero_variance_is_undefined() {
        let err = pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(_)));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }
}
