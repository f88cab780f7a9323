//! Batch command-line surface wiring the toolkit into complete workflows:
//! synthetic data generation, preprocessing, shift quantification,
//! adaptation experiments, downstream analyses, bound tables and report
//! aggregation. Outputs are written atomically with a provenance manifest.

mod blob;
mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "tabshift",
    version,
    about = "Distribution-shift quantification and weighted-ERM adaptation for tabular data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (JSON; see schema/runconfig.schema.json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides TABSHIFT_OUTPUT_DIR and the config's
    /// output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker-pool width; overrides TABSHIFT_JOBS. Defaults to the logical
    /// core count.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit and apply the preprocessing pipeline to a dataset.
    Preprocess,
    /// Learned-feature two-sample tests, distance matrices and dendrograms.
    Mmd,
    /// Same-group nested cross-validation plus a final fitted model.
    Train,
    /// Source-to-target adaptation across the configured target fractions.
    Adapt,
    /// Adaptation evaluation plus the fairness (DPD/EOD) section.
    Evaluate,
    /// Discriminant transfer and age-residual correlations of frozen models.
    Secondary,
    /// Generate a synthetic shifted population.
    Synth,
    /// Adaptation-bound table and the bound-minimizing alpha.
    Bounds,
    /// Aggregate and verify previous runs into one flat CSV.
    Report,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();

    let jobs = cli
        .jobs
        .or_else(|| std::env::var("TABSHIFT_JOBS").ok().and_then(|v| v.parse().ok()));
    if let Some(jobs) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }

    let config_path =
        cli.config.context("--config <file> is required (see schema/runconfig.schema.json)")?;
    let loaded = config::load_config(&config_path)?;

    let out_dir = cli
        .out
        .or_else(|| std::env::var("TABSHIFT_OUTPUT_DIR").ok().map(PathBuf::from))
        .or_else(|| loaded.config.output_dir.clone().map(|p| loaded.resolve(&p)))
        .context("no output directory: pass --out, set TABSHIFT_OUTPUT_DIR, or set output_dir")?;

    match cli.command {
        Command::Preprocess => commands::cmd_preprocess(&loaded, &out_dir),
        Command::Mmd => commands::cmd_mmd(&loaded, &out_dir),
        Command::Train => commands::cmd_train(&loaded, &out_dir),
        Command::Adapt => commands::cmd_adapt(&loaded, &out_dir),
        Command::Evaluate => commands::cmd_evaluate(&loaded, &out_dir),
        Command::Secondary => commands::cmd_secondary(&loaded, &out_dir),
        Command::Synth => commands::cmd_synth(&loaded, &out_dir),
        Command::Bounds => commands::cmd_bounds(&loaded, &out_dir),
        Command::Report => commands::cmd_report(&loaded, &out_dir),
    }
}
