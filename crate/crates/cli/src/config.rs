//! Run configuration shared by every subcommand. The JSON document is
//! validated strictly (unknown fields are rejected) before any work starts;
//! `schema/runconfig.schema.json` documents the same contract.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use tabshift::data::Task;
use tabshift::downstream::PriorPolicy;
use tabshift::evaluation::{AlphaPolicy, ModelSpec};
use tabshift::mmd::{FeatureMapConfig, KernelChoice};
use tabshift::models::TrainConfig;
use tabshift::synthgen::ShiftSpec;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TaskBlock {
    pub kind: Task,
    /// Label column name; must match the schema's label column.
    pub label: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub csv: PathBuf,
    pub schema: PathBuf,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GroupsBlock {
    pub attribute: String,
    pub source: String,
    pub target: String,
}

fn default_outer() -> usize {
    5
}

fn default_inner() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_skew() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationBlock {
    /// Target fractions to evaluate; each produces one report.
    pub fractions: Vec<f64>,
    pub alpha_policy: AlphaPolicy,
    #[serde(default = "default_outer")]
    pub outer_folds: usize,
    #[serde(default = "default_inner")]
    pub inner_folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub strict_paper_splits: bool,
    #[serde(default = "default_skew")]
    pub skew_threshold: f64,
}

fn default_permutations() -> usize {
    tabshift::mmd::DEFAULT_PERMUTATIONS
}

fn default_kernel() -> KernelChoice {
    KernelChoice::RbfMedian
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MmdBlock {
    pub attributes: Vec<String>,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_kernel")]
    pub kernel: KernelChoice,
    #[serde(default)]
    pub feature_map: Option<FeatureMapConfig>,
    #[serde(default)]
    pub seed: u64,
}

fn default_label_fraction() -> f64 {
    0.2
}

fn default_folds() -> usize {
    5
}

fn default_priors() -> PriorPolicy {
    PriorPolicy::Empirical
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TransferBlock {
    pub csv: PathBuf,
    pub schema: PathBuf,
    pub model_blob: PathBuf,
    #[serde(default = "default_label_fraction")]
    pub label_fraction: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_priors")]
    pub priors: PriorPolicy,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BarBlock {
    pub csv: PathBuf,
    pub schema: PathBuf,
    pub model_blob: PathBuf,
    /// Column holding the chronological age.
    pub chronological_column: String,
    /// Covariate columns to correlate with the residual.
    pub covariates: Vec<String>,
    /// Expected correlation direction per covariate (+1 or -1), supplied by
    /// configuration.
    #[serde(default)]
    pub expected_signs: BTreeMap<String, i8>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SecondaryBlock {
    #[serde(default)]
    pub transfer: Option<TransferBlock>,
    #[serde(default)]
    pub bar: Option<BarBlock>,
}

fn default_delta() -> f64 {
    0.05
}

fn default_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    #[serde(default)]
    pub vc_dimension: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Divergence estimate; when absent and data is available, the squared
    /// MMD proxy between the groups is plugged in.
    #[serde(default)]
    pub divergence: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_c")]
    pub constant_c: f64,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessBlock {
    pub attribute: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReportBlock {
    /// Run directories to aggregate and verify.
    pub runs: Vec<PathBuf>,
}

/// Top-level run configuration; commands pick the blocks they need.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub task: Option<TaskBlock>,
    #[serde(default)]
    pub data: Option<DataBlock>,
    #[serde(default)]
    pub groups: Option<GroupsBlock>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub evaluation: Option<EvaluationBlock>,
    #[serde(default)]
    pub mmd: Option<MmdBlock>,
    #[serde(default)]
    pub synth: Option<ShiftSpec>,
    #[serde(default)]
    pub secondary: Option<SecondaryBlock>,
    #[serde(default)]
    pub bounds: Option<BoundsBlock>,
    #[serde(default)]
    pub fairness: Option<FairnessBlock>,
    #[serde(default)]
    pub report: Option<ReportBlock>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Parsed configuration plus the source bytes (digested into manifests).
pub struct LoadedConfig {
    pub config: RunConfig,
    pub digest: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    /// Resolve a path from the config relative to the config file location.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot read config `{}`", path.display()))?;
    let config: RunConfig = serde_json::from_slice(&bytes)
        .with_context(|| format!("config `{}` does not validate", path.display()))?;
    validate(&config)?;
    Ok(LoadedConfig {
        config,
        digest: tabshift::util::sha256_hex(&bytes),
        base_dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
    })
}

fn validate(config: &RunConfig) -> Result<()> {
    if let Some(evaluation) = &config.evaluation {
        for f in &evaluation.fractions {
            if !(0.0..=1.0).contains(f) {
                bail!("evaluation.fractions entry {f} outside [0, 1]");
            }
        }
        if evaluation.fractions.is_empty() {
            bail!("evaluation.fractions must not be empty");
        }
    }
    if let Some(bounds) = &config.bounds {
        if !(bounds.delta > 0.0 && bounds.delta < 1.0) {
            bail!("bounds.delta must lie in (0, 1)");
        }
    }
    if let Some(synth) = &config.synth {
        synth.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    Ok(())
}

/// Load the dataset named by the data block and cross-check it against the
/// task block when present.
pub fn load_dataset(loaded: &LoadedConfig) -> Result<tabshift::data::Dataset> {
    let data = loaded
        .config
        .data
        .as_ref()
        .context("this command requires a `data` block")?;
    let schema = tabshift::data::read_schema(&loaded.resolve(&data.schema))?;
    let dataset = tabshift::data::read_csv(&loaded.resolve(&data.csv), &schema)?;
    if let Some(task) = &loaded.config.task {
        let label = dataset.schema().label_column();
        if label.name != task.label {
            bail!(
                "task.label `{}` does not match the schema label column `{}`",
                task.label,
                label.name
            );
        }
        if dataset.schema().task() != task.kind {
            bail!("task.kind does not match the schema label column");
        }
    }
    Ok(dataset)
}
