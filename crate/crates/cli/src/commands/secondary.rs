use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use tabshift::data::{read_csv, read_schema, Cell};
use tabshift::downstream::{bar_analysis, secondary_transfer_eval, BarCorrelation, BarRecord};
use tabshift::evaluation::MetricReport;

use crate::blob::ModelBlob;
use crate::config::LoadedConfig;
use crate::manifest::OutputWriter;

#[derive(Serialize)]
struct SecondaryOutput {
    secondary_tasks: Option<MetricReport>,
    bar_correlations: Option<Vec<BarCorrelationRow>>,
}

#[derive(Serialize)]
struct BarCorrelationRow {
    #[serde(flatten)]
    correlation: BarCorrelation,
    n_used: usize,
}

/// Secondary-task procedures: discriminant transfer of a frozen classifier
/// and age-residual correlations of a frozen regressor.
pub fn cmd_secondary(loaded: &LoadedConfig, out_dir: &Path) -> Result<()> {
    let block = loaded
        .config
        .secondary
        .as_ref()
        .context("secondary requires a `secondary` block")?;
    if block.transfer.is_none() && block.bar.is_none() {
        bail!("secondary needs a `transfer` or `bar` sub-block");
    }
    let mut writer = OutputWriter::new(out_dir)?;

    let transfer_report = if let Some(transfer) = &block.transfer {
        let schema = read_schema(&loaded.resolve(&transfer.schema))?;
        let raw = read_csv(&loaded.resolve(&transfer.csv), &schema)?;
        writer.record_input(&loaded.resolve(&transfer.csv))?;
        writer.record_input(&loaded.resolve(&transfer.model_blob))?;
        let blob = ModelBlob::load(&loaded.resolve(&transfer.model_blob))?;
        let transformed = tabshift::preprocess::transform(&blob.preprocessor, &raw)?.data;
        let report = secondary_transfer_eval(
            &blob.model,
            &transformed,
            transfer.label_fraction,
            transfer.folds,
            transfer.seed,
            transfer.priors,
        )?;
        println!(
            "secondary transfer: auc = {:.4} +/- {:.4} over {} fold(s)",
            report.mean,
            report.std,
            report.folds.len()
        );
        Some(report)
    } else {
        None
    };

    let bar_rows = if let Some(bar) = &block.bar {
        let schema = read_schema(&loaded.resolve(&bar.schema))?;
        let raw = read_csv(&loaded.resolve(&bar.csv), &schema)?;
        writer.record_input(&loaded.resolve(&bar.csv))?;
        writer.record_input(&loaded.resolve(&bar.model_blob))?;
        let blob = ModelBlob::load(&loaded.resolve(&bar.model_blob))?;
        if blob.task != tabshift::data::Task::Regression {
            bail!("bar analysis needs a regression model blob");
        }
        let predicted = blob.predict_raw(&raw)?;
        let chron_col = raw.schema().column_index(&bar.chronological_column)?;
        let mut rows = Vec::new();
        for name in &bar.covariates {
            let cov_col = raw.schema().column_index(name)?;
            // Pairwise deletion: use rows where both the chronological age
            // and the covariate are observed.
            let mut records = Vec::new();
            let mut values = Vec::new();
            for r in 0..raw.n_rows() {
                let (Cell::Number(age), Cell::Number(value)) =
                    (raw.cell(r, chron_col), raw.cell(r, cov_col))
                else {
                    continue;
                };
                records.push(BarRecord { predicted_age: predicted[r], chronological_age: age });
                values.push(value);
            }
            if records.len() < 3 {
                rows.push(BarCorrelationRow {
                    correlation: BarCorrelation {
                        name: name.clone(),
                        r: None,
                        p: None,
                        expected_sign: bar.expected_signs.get(name).copied(),
                        consistent: None,
                        undefined_reason: Some(format!(
                            "only {} usable record(s)",
                            records.len()
                        )),
                    },
                    n_used: records.len(),
                });
                continue;
            }
            let analyzed = bar_analysis(
                &records,
                &[(name.clone(), values)],
                &bar.expected_signs,
            )?;
            rows.push(BarCorrelationRow {
                correlation: analyzed.into_iter().next().expect("one covariate"),
                n_used: records.len(),
            });
        }
        // CSV export of the correlation table.
        let mut csv = String::from("covariate,r,p,expected_sign,consistent,n_used\n");
        for row in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.correlation.name,
                row.correlation.r.map(|v| v.to_string()).unwrap_or_default(),
                row.correlation.p.map(|v| v.to_string()).unwrap_or_default(),
                row.correlation.expected_sign.map(|v| v.to_string()).unwrap_or_default(),
                row.correlation.consistent.map(|v| v.to_string()).unwrap_or_default(),
                row.n_used,
            ));
        }
        writer.write("bar_correlations.csv", csv.as_bytes())?;
        println!("secondary bar: {} covariate row(s)", rows.len());
        Some(rows)
    } else {
        None
    };

    writer.write_json(
        "secondary.json",
        &SecondaryOutput { secondary_tasks: transfer_report, bar_correlations: bar_rows },
    )?;
    writer.finish("secondary", &loaded.digest, serde_json::json!({}))?;
    Ok(())
}
