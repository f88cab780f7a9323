use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use tabshift::data::group_partition;
use tabshift::mmd::{
    build_dendrogram, learn_feature_map, pairwise_mmd, permutation_test, FeatureMapConfig,
};
use tabshift::rng::derive_seed;

use crate::config::{load_dataset, LoadedConfig};
use crate::manifest::OutputWriter;

#[derive(Serialize)]
struct MmdResultRow {
    attribute: String,
    group_a: String,
    group_b: String,
    statistic: f64,
    p_value: f64,
    n_per_side: usize,
    permutations: usize,
}

/// Two-sample shift quantification: learn the multi-head feature map, emit
/// pairwise distance matrices, dendrograms and permutation-test rows.
pub fn cmd_mmd(loaded: &LoadedConfig, out_dir: &Path) -> Result<()> {
    let block = loaded.config.mmd.as_ref().context("mmd requires an `mmd` block")?;
    let raw = load_dataset(loaded)?;

    // Descriptive analysis: preprocess on the full dataset.
    let skew = loaded
        .config
        .evaluation
        .as_ref()
        .map(|e| e.skew_threshold)
        .unwrap_or(tabshift::preprocess::DEFAULT_SKEW_THRESHOLD);
    let state = tabshift::preprocess::fit(&raw, skew)?;
    let data = tabshift::preprocess::transform(&state, &raw)?.data;

    let mut fmap_config = block.feature_map.clone().unwrap_or_default();
    fmap_config.optimizer.seed = derive_seed(block.seed, &[0xF0]);
    let fmap = learn_feature_map(&data, &block.attributes, &fmap_config)?;

    let mut writer = OutputWriter::new(out_dir)?;
    let data_block = loaded.config.data.as_ref().expect("load_dataset checked");
    writer.record_input(&loaded.resolve(&data_block.csv))?;
    writer.record_input(&loaded.resolve(&data_block.schema))?;

    let mut jsonl = String::new();
    let mut attribute_summaries = Vec::new();
    for attribute in &fmap.attributes {
        let pairwise = pairwise_mmd(&data, attribute, &fmap, block.kernel, block.seed)?;
        writer.write(
            &format!("distance_{attribute}.csv"),
            pairwise.matrix.to_csv_string().as_bytes(),
        )?;
        let tree = build_dendrogram(&pairwise.matrix)?;
        writer.write_json(&format!("dendrogram_{attribute}.json"), &tree)?;

        // Permutation tests per unordered group pair, sizes equalized by a
        // seeded subsample of the larger group.
        let partition = group_partition(&data, attribute)?;
        let groups = pairwise.matrix.groups.clone();
        for i in 0..groups.len() {
            for j in (i + 1)..groups.len() {
                let fa = fmap.features(&partition[&groups[i]])?;
                let fb = fmap.features(&partition[&groups[j]])?;
                let n = fa.len().min(fb.len());
                let xs = tabshift::rng::seeded_subsample(
                    &fa,
                    n,
                    block.seed,
                    &[0x22, 0, i as u64, j as u64],
                );
                let ys = tabshift::rng::seeded_subsample(
                    &fb,
                    n,
                    block.seed,
                    &[0x22, 1, i as u64, j as u64],
                );
                let pooled: Vec<Vec<f64>> = xs.iter().chain(ys.iter()).cloned().collect();
                let kernel = block.kernel.resolve(&pooled)?;
                let result = permutation_test(
                    &xs,
                    &ys,
                    &kernel,
                    block.permutations,
                    derive_seed(block.seed, &[0x23, i as u64, j as u64]),
                )?;
                let row = MmdResultRow {
                    attribute: attribute.clone(),
                    group_a: groups[i].clone(),
                    group_b: groups[j].clone(),
                    statistic: result.statistic,
                    p_value: result.p_value,
                    n_per_side: result.n_per_side,
                    permutations: result.permutations,
                };
                jsonl.push_str(&serde_json::to_string(&row)?);
                jsonl.push('\n');
            }
        }
        attribute_summaries.push(serde_json::json!({
            "attribute": attribute,
            "groups": groups,
            "excluded_groups": pairwise.excluded,
        }));
    }
    writer.write("mmd_results.jsonl", jsonl.as_bytes())?;

    writer.finish(
        "mmd",
        &loaded.digest,
        serde_json::json!({
            "statistic": tabshift::mmd::STATISTIC_LABEL,
            "linkage": tabshift::mmd::LINKAGE_LABEL,
            "kernel": block.kernel,
            "permutations": block.permutations,
            "seed": block.seed,
            "feature_dim": fmap.feature_dim(),
            "excluded_attributes": fmap.excluded,
            "attributes": attribute_summaries,
        }),
    )?;
    println!("mmd: analyzed {} attribute(s)", fmap.attributes.len());
    Ok(())
}

/// Default feature-map configuration exposed for documentation purposes.
#[allow(dead_code)]
pub fn default_feature_map() -> FeatureMapConfig {
    FeatureMapConfig::default()
}
