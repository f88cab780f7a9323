use std::path::Path;

use anyhow::{bail, Context, Result};

use tabshift::evaluation::MetricReport;

use super::summary_csv;
use crate::config::LoadedConfig;
use crate::manifest::{verify_run_dir, OutputWriter};

/// Aggregate reports from previous runs into one flat CSV and verify every
/// run's manifest digests.
pub fn cmd_report(loaded: &LoadedConfig, out_dir: &Path) -> Result<()> {
    let block = loaded.config.report.as_ref().context("report requires a `report` block")?;
    let mut reports: Vec<MetricReport> = Vec::new();
    let mut verification = Vec::new();
    for run in &block.runs {
        let dir = loaded.resolve(run);
        let mismatches = verify_run_dir(&dir)
            .with_context(|| format!("verifying `{}`", dir.display()))?;
        verification.push(serde_json::json!({
            "run": run,
            "digest_mismatches": mismatches,
        }));
        if !mismatches.is_empty() {
            bail!("run `{}` has modified outputs: {mismatches:?}", dir.display());
        }
        let mut entries: Vec<_> = std::fs::read_dir(&dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .map(|n| n.starts_with("report_") && n.ends_with(".json"))
                    .unwrap_or(false)
            })
            .collect();
        entries.sort();
        for path in entries {
            let text = std::fs::read_to_string(&path)?;
            reports.push(MetricReport::from_json(&text)?);
        }
    }
    if reports.is_empty() {
        bail!("no report_*.json files found in the configured runs");
    }

    let mut writer = OutputWriter::new(out_dir)?;
    writer.write("combined.csv", summary_csv(&reports).as_bytes())?;
    writer.write_json("verification.json", &verification)?;
    writer.finish(
        "report",
        &loaded.digest,
        serde_json::json!({ "runs": block.runs, "reports": reports.len() }),
    )?;
    println!("report: combined {} report(s) from {} run(s)", reports.len(), block.runs.len());
    Ok(())
}
