mod bounds;
mod mmd;
mod preprocess;
mod report;
mod secondary;
mod synth;
mod train_eval;

pub use bounds::cmd_bounds;
pub use mmd::cmd_mmd;
pub use preprocess::cmd_preprocess;
pub use report::cmd_report;
pub use secondary::cmd_secondary;
pub use synth::cmd_synth;
pub use train_eval::{cmd_adapt, cmd_evaluate, cmd_train};

use tabshift::evaluation::MetricReport;

/// Most frequently chosen alpha across folds; ties resolve to the smallest.
pub(crate) fn alpha_mode(report: &MetricReport) -> Option<f64> {
    let mut counts: Vec<(f64, usize)> = Vec::new();
    for fold in &report.folds {
        let alpha = fold.chosen_alpha?;
        match counts.iter_mut().find(|(a, _)| (*a - alpha).abs() < 1e-12) {
            Some((_, c)) => *c += 1,
            None => counts.push((alpha, 1)),
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.partial_cmp(&a.0).unwrap()))
        .map(|(a, _)| a)
}

/// Figure-layout marker for a target fraction: source-only settings plot as
/// crosses, small-fraction adaptation as circles, train-on-all as lines.
pub(crate) fn fraction_marker(fraction: f64) -> &'static str {
    if fraction == 0.0 {
        "cross"
    } else if fraction >= 0.75 {
        "line"
    } else {
        "circle"
    }
}

/// One flat CSV row per report, matching the figure data layout.
pub(crate) fn summary_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from(
        "source,target,fraction,marker,model,metric,mean,std,n_folds,alpha_mode,seed\n",
    );
    for report in reports {
        let alpha = alpha_mode(report)
            .map(|a| format!("{a}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            report.source_group,
            report.target_group,
            report.target_fraction,
            fraction_marker(report.target_fraction),
            report.model,
            report.metric_name,
            report.mean,
            report.std,
            report.folds.len(),
            alpha,
            report.seed,
        ));
    }
    out
}
