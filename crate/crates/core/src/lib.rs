//! Proxy datasets for cheap hyperparameter search.
//!
//! Build reduced training tasks (difficulty quantiles, class subsets, random
//! samples, shorter epoch budgets), run one-at-a-time hyperparameter grids
//! on them with a small deterministic trainer, and measure how well each
//! proxy's results track the full task.

pub mod dataset;
pub mod difficulty;
pub mod error;
pub mod metrics;
pub mod orchestrator;
pub mod proxy;
pub mod seed;
pub mod trainer;

pub use dataset::{class_filter, load_csv, split, synth_generate, Dataset, Example, SynthSpec};
pub use difficulty::{quantile_slice, score_examples, DifficultyTable};
pub use error::{Error, Result};
pub use metrics::{quality_report, select_good_configs, GoodRule, PairedAccuracies, QualityRow};
pub use orchestrator::{generate_grid, run_matrix, DatasetTask, GridSpec, ResultStore};
pub use proxy::{build_proxy, relative_cost, ProxyKind, ProxyManifest, ProxySpec};
pub use trainer::{train_model, HyperparamConfig, ModelParams, RunRecord, RunStatus};
