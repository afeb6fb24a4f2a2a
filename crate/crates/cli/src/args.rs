use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "proxybench",
    version,
    about = "Build proxy datasets and measure how well they predict full-task results"
)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

/// How the fixed train/validation split is drawn. Every command that touches
/// a split must be given the same values.
#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,

    #[arg(long, env = "PROXYBENCH_SEED", default_value_t = 0)]
    pub global_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum KindArg {
    Full,
    RandomAll,
    HalfClasses,
    Quantile,
    FewerEpochs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic gaussian-mixture dataset.
    GenData {
        /// JSON generator parameters.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Train the scoring model and write per-example difficulty.
    Score {
        #[arg(long)]
        data: PathBuf,
        /// Scoring config JSON; defaults to the built-in default config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
    },

    /// Resolve one proxy dataset into a manifest.
    MakeProxy {
        #[arg(long)]
        data: PathBuf,
        /// Difficulty table from `score`; required for quantile proxies.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long)]
        fraction: Option<f64>,
        /// Comma-separated class labels for half_classes (default: half, by seed).
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<usize>>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Epoch budget of the target task.
        #[arg(long, default_value_t = 20)]
        target_epochs: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
    },

    /// Train every (proxy, config) cell, appending to a resumable JSONL file.
    RunGrid {
        #[arg(long)]
        data: PathBuf,
        /// Grid JSON: {"defaults": {...}, "variations": {"field": [values]}}.
        #[arg(long)]
        grid: PathBuf,
        /// Directory of proxy manifests; the full proxy is always added.
        #[arg(long)]
        proxies: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Print the run matrix and total cost without training.
        #[arg(long)]
        dry_run: bool,
        #[command(flatten)]
        split: SplitArgs,
    },

    /// Compute the quality report (plus a `.analysis.json` sidecar).
    Analyze {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `top:F` or `min:T`.
        #[arg(long, default_value = "top:0.5")]
        good_rule: String,
        /// Also compute per-epoch correlation and win rates of full runs.
        #[arg(long)]
        epoch_corr: bool,
        /// `datasets:A,B` or `field:NAME` (the latter needs --grid).
        #[arg(long)]
        consistency: Option<String>,
        #[arg(long)]
        grid: Option<PathBuf>,
    },

    /// Write plot-ready CSVs from a report and its sidecar.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}
