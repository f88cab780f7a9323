use std::path::Path;

use anyhow::Result;

use crate::config::{load_dataset, LoadedConfig};
use crate::manifest::OutputWriter;

/// Fit the preprocessing pipeline on the full dataset and write the
/// transformed CSV plus the fitted state for audit and re-use.
pub fn cmd_preprocess(loaded: &LoadedConfig, out_dir: &Path) -> Result<()> {
    let data = load_dataset(loaded)?;
    let skew = loaded
        .config
        .evaluation
        .as_ref()
        .map(|e| e.skew_threshold)
        .unwrap_or(tabshift::preprocess::DEFAULT_SKEW_THRESHOLD);
    let state = tabshift::preprocess::fit(&data, skew)?;
    let transformed = tabshift::preprocess::transform(&state, &data)?;

    let mut writer = OutputWriter::new(out_dir)?;
    let block = loaded.config.data.as_ref().expect("load_dataset checked");
    writer.record_input(&loaded.resolve(&block.csv))?;
    writer.record_input(&loaded.resolve(&block.schema))?;

    let csv_path = writer.dir().join("transformed.csv");
    tabshift::data::write_csv(&transformed.data, &csv_path)?;
    let bytes = std::fs::read(&csv_path)?;
    writer.write("transformed.csv", &bytes)?;
    writer.write_json("transformed_schema.json", transformed.data.schema())?;
    writer.write("preprocessor.json", state.to_json()?.as_bytes())?;

    writer.finish(
        "preprocess",
        &loaded.digest,
        serde_json::json!({
            "skew_threshold": skew,
            "dropped_columns": state.dropped_columns,
            "indicator_columns": state.indicator_columns,
            "unseen_categories": transformed.unseen_categories,
        }),
    )?;
    println!(
        "preprocess: {} rows, {} indicator column(s), {} dropped",
        transformed.data.n_rows(),
        state.indicator_columns.len(),
        state.dropped_columns.len()
    );
    Ok(())
}
