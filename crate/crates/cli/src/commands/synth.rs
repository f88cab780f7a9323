use std::path::Path;

use anyhow::{Context, Result};

use crate::config::LoadedConfig;
use crate::manifest::OutputWriter;

/// Generate the configured synthetic population and write it as CSV plus
/// schema JSON, consumable by every other subcommand.
pub fn cmd_synth(loaded: &LoadedConfig, out_dir: &Path) -> Result<()> {
    let spec = loaded.config.synth.as_ref().context("synth requires a `synth` block")?;
    let data = tabshift::synthgen::generate(spec)?;
    let mut writer = OutputWriter::new(out_dir)?;

    let csv_path = writer.dir().join("data.csv");
    tabshift::data::write_csv(&data, &csv_path)?;
    // Route through the writer for digest bookkeeping.
    let bytes = std::fs::read(&csv_path)?;
    writer.write("data.csv", &bytes)?;
    writer.write_json("schema.json", data.schema())?;

    let group_sizes: std::collections::BTreeMap<String, usize> =
        tabshift::data::group_partition(&data, "group")?
            .into_iter()
            .map(|(name, d)| (name, d.n_rows()))
            .collect();
    writer.finish(
        "synth",
        &loaded.digest,
        serde_json::json!({
            "seed": spec.seed,
            "rows": data.n_rows(),
            "group_sizes": group_sizes,
        }),
    )?;
    println!("synth: wrote {} rows to {}", data.n_rows(), out_dir.display());
    Ok(())
}
