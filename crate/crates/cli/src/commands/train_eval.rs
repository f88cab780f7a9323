use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use tabshift::data::{adaptation_split, Dataset, GroupedDataset, RowSlot, Task};
use tabshift::evaluation::{
    dpd, eod, fit_model, nested_cv, paired_significance, AlphaPolicy, ExperimentSpec,
    MetricReport, ModelSpec,
};
use tabshift::rng::derive_seed;

use super::{alpha_mode, summary_csv};
use crate::blob::{ModelBlob, BLOB_VERSION};
use crate::config::{load_dataset, EvaluationBlock, LoadedConfig};
use crate::manifest::OutputWriter;

struct ExperimentContext {
    data: Dataset,
    model: ModelSpec,
    train: tabshift::models::TrainConfig,
    evaluation: EvaluationBlock,
    attribute: String,
    source: String,
    target: String,
}

fn experiment_context(loaded: &LoadedConfig, same_group: bool) -> Result<ExperimentContext> {
    let data = load_dataset(loaded)?;
    let groups = loaded.config.groups.as_ref().context("requires a `groups` block")?;
    let model = loaded.config.model.clone().context("requires a `model` block")?;
    let train = loaded.config.train.clone().context("requires a `train` block")?;
    let evaluation =
        loaded.config.evaluation.clone().context("requires an `evaluation` block")?;
    if train.task != data.schema().task() {
        bail!("train.task does not match the dataset label column");
    }
    let target = if same_group { groups.source.clone() } else { groups.target.clone() };
    Ok(ExperimentContext {
        data,
        model,
        train,
        evaluation,
        attribute: groups.attribute.clone(),
        source: groups.source.clone(),
        target,
    })
}

fn spec_for_fraction(ctx: &ExperimentContext, fraction: f64) -> ExperimentSpec {
    let alpha_policy = if ctx.source == ctx.target || fraction == 0.0 {
        AlphaPolicy::Fixed { alpha: 0.0 }
    } else {
        ctx.evaluation.alpha_policy
    };
    ExperimentSpec {
        group_attribute: ctx.attribute.clone(),
        source_group: ctx.source.clone(),
        target_group: ctx.target.clone(),
        target_fraction: fraction,
        model: ctx.model.clone(),
        alpha_policy,
        base_train: ctx.train.clone(),
        outer_folds: ctx.evaluation.outer_folds,
        inner_folds: ctx.evaluation.inner_folds,
        seed: ctx.evaluation.seed,
        strict_paper_splits: ctx.evaluation.strict_paper_splits,
        skew_threshold: ctx.evaluation.skew_threshold,
    }
}

fn fraction_tag(fraction: f64) -> String {
    format!("{:03}", (fraction * 100.0).round() as u32)
}

/// Fit the final deployable blob: preprocess on the full training rows
/// (source group plus the sampled target fraction), then fit at `alpha`.
fn final_blob(
    ctx: &ExperimentContext,
    fraction: f64,
    alpha: f64,
    seed: u64,
) -> Result<ModelBlob> {
    let partition = tabshift::data::group_partition(&ctx.data, &ctx.attribute)?;
    let source = partition
        .get(&ctx.source)
        .with_context(|| format!("group `{}` missing", ctx.source))?
        .clone();
    let target_rows = if ctx.source == ctx.target || fraction == 0.0 {
        Dataset::new(source.schema().clone(), vec![], vec![])?
    } else {
        let target = partition
            .get(&ctx.target)
            .with_context(|| format!("group `{}` missing", ctx.target))?
            .clone();
        let pair = GroupedDataset::new(source.clone(), target.clone())?;
        let plan = adaptation_split(&pair, 2, fraction, derive_seed(seed, &[0xB10B]))?;
        let keep: Vec<usize> = target
            .row_ids()
            .iter()
            .enumerate()
            .filter(|(_, id)| matches!(plan.slot(id), Some(RowSlot::Fold(_))))
            .map(|(i, _)| i)
            .collect();
        target.select_rows(&keep)?
    };

    // Preprocess on exactly the rows entering the final fit.
    let mut fit_ids: Vec<String> = source.row_ids().to_vec();
    let mut fit_rows: Vec<Vec<tabshift::data::Cell>> =
        (0..source.n_rows()).map(|r| source.row(r).to_vec()).collect();
    for r in 0..target_rows.n_rows() {
        fit_ids.push(target_rows.row_ids()[r].clone());
        fit_rows.push(target_rows.row(r).to_vec());
    }
    let fit_data = Dataset::new(source.schema().clone(), fit_ids, fit_rows)?;
    let state = tabshift::preprocess::fit(&fit_data, ctx.evaluation.skew_threshold)?;
    let source_pp = tabshift::preprocess::transform(&state, &source)?.data;
    let target_pp = if target_rows.n_rows() > 0 {
        tabshift::preprocess::transform(&state, &target_rows)?.data
    } else {
        Dataset::new(source_pp.schema().clone(), vec![], vec![])?
    };
    let pair = GroupedDataset::new(source_pp, target_pp)?;
    let mut cfg = ctx.train.clone();
    cfg.alpha = if pair.n() == 0 { 0.0 } else { alpha };
    let model = fit_model(&pair, &ctx.model, &cfg, derive_seed(seed, &[0xF17]))?;
    Ok(ModelBlob {
        version: BLOB_VERSION,
        task: ctx.train.task,
        alpha: cfg.alpha,
        preprocessor: state,
        model,
    })
}

fn record_data_inputs(writer: &mut OutputWriter, loaded: &LoadedConfig) -> Result<()> {
    let block = loaded.config.data.as_ref().expect("dataset loaded");
    writer.record_input(&loaded.resolve(&block.csv))?;
    writer.record_input(&loaded.resolve(&block.schema))?;
    Ok(())
}

/// Same-group training: nested cross-validation metrics plus a final model
/// fitted on all rows of the source group.
pub fn cmd_train(loaded: &LoadedConfig, out_dir: &Path) -> Result<()> {
    let ctx = experiment_context(loaded, true)?;
    let spec = spec_for_fraction(&ctx, 0.0);
    let report = nested_cv(&spec, &ctx.data)?;

    let blob = final_blob(&ctx, 0.0, 0.0, ctx.evaluation.seed)?;
    let mut writer = OutputWriter::new(out_dir)?;
    record_data_inputs(&mut writer, loaded)?;
    writer.write("report_train.json", report.to_json()?.as_bytes())?;
    writer.write("model.json", blob.to_json()?.as_bytes())?;
    writer.write("summary.csv", summary_csv(std::slice::from_ref(&report)).as_bytes())?;
    writer.finish(
        "train",
        &loaded.digest,
        serde_json::json!({
            "group": ctx.source,
            "model": ctx.model.name(),
            "seed": ctx.evaluation.seed,
            "metric": report.metric_name,
            "mean": report.mean,
            "std": report.std,
        }),
    )?;
    println!(
        "train: {} on `{}`: {} = {:.4} +/- {:.4}",
        ctx.model.name(),
        ctx.source,
        report.metric_name,
        report.mean,
        report.std
    );
    Ok(())
}

fn run_fractions(ctx: &ExperimentContext) -> Result<Vec<MetricReport>> {
    let mut reports = Vec::new();
    for &fraction in &ctx.evaluation.fractions {
        let spec = spec_for_fraction(ctx, fraction);
        let mut report = nested_cv(&spec, &ctx.data)?;
        // Paired comparison against the first fraction when fold counts
        // align.
        if let Some(baseline) = reports.first() {
            let baseline: &MetricReport = baseline;
            if baseline.folds.len() == report.folds.len() && report.folds.len() >= 2 {
                let a: Vec<f64> = report.folds.iter().map(|f| f.metric).collect();
                let b: Vec<f64> = baseline.folds.iter().map(|f| f.metric).collect();
                let test = paired_significance(&a, &b)?;
                report.comparisons.insert(
                    format!("vs_fraction_{}", baseline.target_fraction),
                    test.p_value,
                );
            }
        }
        reports.push(report);
    }
    Ok(reports)
}

/// Adaptation across the configured target fractions: one report and one
/// final adapted model blob per fraction.
pub fn cmd_adapt(loaded: &LoadedConfig, out_dir: &Path) -> Result<()> {
    let ctx = experiment_context(loaded, false)?;
    if ctx.source == ctx.target {
        bail!("adapt requires distinct source and target groups");
    }
    let reports = run_fractions(&ctx)?;
    let mut writer = OutputWriter::new(out_dir)?;
    record_data_inputs(&mut writer, loaded)?;
    for report in &reports {
        let tag = fraction_tag(report.target_fraction);
        writer.write(&format!("report_frac{tag}.json"), report.to_json()?.as_bytes())?;
        let alpha = alpha_mode(report).unwrap_or(0.0);
        let blob = final_blob(&ctx, report.target_fraction, alpha, ctx.evaluation.seed)?;
        writer.write(&format!("model_frac{tag}.json"), blob.to_json()?.as_bytes())?;
    }
    writer.write("summary.csv", summary_csv(&reports).as_bytes())?;
    let means: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "fraction": r.target_fraction,
                "mean": r.mean,
                "std": r.std,
                "alpha_mode": alpha_mode(r),
            })
        })
        .collect();
    writer.finish(
        "adapt",
        &loaded.digest,
        serde_json::json!({
            "source": ctx.source,
            "target": ctx.target,
            "model": ctx.model.name(),
            "seed": ctx.evaluation.seed,
            "fractions": means,
        }),
    )?;
    for report in &reports {
        println!(
            "adapt: {} -> {} fraction {}: {} = {:.4} +/- {:.4}",
            ctx.source,
            ctx.target,
            report.target_fraction,
            report.metric_name,
            report.mean,
            report.std
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct FairnessFold {
    fold: usize,
    dpd: Option<f64>,
    eod: Option<f64>,
    excluded_groups: Vec<String>,
}

#[derive(Serialize)]
struct FairnessSection {
    fraction: f64,
    attribute: String,
    threshold: f64,
    folds: Vec<FairnessFold>,
    dpd_mean: Option<f64>,
    eod_mean: Option<f64>,
    notes: Vec<String>,
}

fn fairness_for_report(
    ctx: &ExperimentContext,
    report: &MetricReport,
    attribute: &str,
    threshold: f64,
) -> Result<FairnessSection> {
    let mut folds = Vec::new();
    let mut notes = Vec::new();
    if ctx.train.task != Task::BinaryClassification {
        notes.push("fairness disparities are defined for classification only".into());
        return Ok(FairnessSection {
            fraction: report.target_fraction,
            attribute: attribute.to_string(),
            threshold,
            folds,
            dpd_mean: None,
            eod_mean: None,
            notes,
        });
    }
    let labels = ctx.data.labels()?;
    // Disparities may be assessed over any discrete column: a group
    // attribute or a categorical feature.
    let spec = ctx.data.schema().column(attribute)?;
    let vocabulary = spec
        .categories
        .clone()
        .with_context(|| format!("fairness attribute `{attribute}` is not discrete"))?;
    let column = ctx.data.schema().column_index(attribute)?;
    let group_values: Vec<Option<String>> = (0..ctx.data.n_rows())
        .map(|r| {
            ctx.data
                .cell(r, column)
                .as_category()
                .map(|i| vocabulary[i as usize].clone())
        })
        .collect();
    for fold in &report.folds {
        let mut predictions = Vec::new();
        let mut fold_labels = Vec::new();
        let mut groups = Vec::new();
        for (id, score) in fold.test_row_ids.iter().zip(&fold.test_scores) {
            let row = ctx.data.row_index(id)?;
            predictions.push(*score >= threshold);
            fold_labels.push(labels[row]);
            groups.push(
                group_values[row]
                    .clone()
                    .unwrap_or_else(|| tabshift::data::UNKNOWN_CATEGORY.to_string()),
            );
        }
        let dpd_value = dpd(&predictions, &groups).ok();
        let (eod_value, excluded) = match eod(&predictions, &fold_labels, &groups) {
            Ok((v, ex)) => (Some(v), ex.into_iter().map(|e| e.group).collect()),
            Err(_) => (None, vec!["all".into()]),
        };
        folds.push(FairnessFold { fold: fold.fold, dpd: dpd_value, eod: eod_value, excluded_groups: excluded });
    }
    let mean_of = |extract: &dyn Fn(&FairnessFold) -> Option<f64>| -> Option<f64> {
        let values: Vec<f64> = folds.iter().filter_map(extract).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    Ok(FairnessSection {
        fraction: report.target_fraction,
        attribute: attribute.to_string(),
        threshold,
        dpd_mean: mean_of(&|f| f.dpd),
        eod_mean: mean_of(&|f| f.eod),
        folds,
        notes,
    })
}

/// Nested-CV evaluation plus the fairness (DPD/EOD) section.
pub fn cmd_evaluate(loaded: &LoadedConfig, out_dir: &Path) -> Result<()> {
    let same_group = loaded
        .config
        .groups
        .as_ref()
        .map(|g| g.source == g.target)
        .unwrap_or(false);
    let ctx = experiment_context(loaded, same_group)?;
    let reports = run_fractions(&ctx)?;

    let fairness = if let Some(block) = &loaded.config.fairness {
        reports
            .iter()
            .map(|r| fairness_for_report(&ctx, r, &block.attribute, block.threshold))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let mut writer = OutputWriter::new(out_dir)?;
    record_data_inputs(&mut writer, loaded)?;
    for report in &reports {
        let tag = fraction_tag(report.target_fraction);
        writer.write(&format!("report_frac{tag}.json"), report.to_json()?.as_bytes())?;
    }
    #[derive(Serialize)]
    struct Evaluation<'a> {
        reports: &'a [MetricReport],
        fairness: &'a [FairnessSection],
    }
    writer.write_json("evaluation.json", &Evaluation { reports: &reports, fairness: &fairness })?;
    writer.write("summary.csv", summary_csv(&reports).as_bytes())?;
    writer.finish(
        "evaluate",
        &loaded.digest,
        serde_json::json!({
            "source": ctx.source,
            "target": ctx.target,
            "model": ctx.model.name(),
            "seed": ctx.evaluation.seed,
            "fairness_attribute": loaded.config.fairness.as_ref().map(|f| f.attribute.clone()),
        }),
    )?;
    for report in &reports {
        println!(
            "evaluate: fraction {}: {} = {:.4} +/- {:.4}",
            report.target_fraction, report.metric_name, report.mean, report.std
        );
    }
    Ok(())
}
