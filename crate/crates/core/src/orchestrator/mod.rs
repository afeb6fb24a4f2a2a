//! Hyperparameter grids and the (dataset x proxy x config) run matrix.

mod grid;
mod store;

use std::collections::HashSet;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

pub use grid::{generate_grid, generate_grid_entries, GridEntry, GridSpec};
pub use store::ResultStore;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::proxy::{ProxyKind, ProxyManifest};
use crate::seed;
use crate::trainer::{train_model, HyperparamConfig, RunRecord};

/// One dataset with its fixed split and the proxies resolved against it.
#[derive(Debug, Clone)]
pub struct DatasetTask {
    pub id: String,
    pub train: Dataset,
    pub val: Dataset,
    pub proxies: Vec<ProxyManifest>,
}

/// A single cell of the run matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedRun {
    pub dataset_id: String,
    pub proxy_id: String,
    pub config_id: String,
    pub seed: u64,
    pub epochs: usize,
    pub train_examples: usize,
    pub cost_units: f64,
}

impl PlannedRun {
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.dataset_id, self.proxy_id, self.config_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatrixSummary {
    pub completed: usize,
    pub skipped: usize,
}

/// Seed of one run: a hash of its key and the global seed, so it does not
/// depend on scheduling.
pub fn run_seed(dataset_id: &str, proxy_id: &str, config_id: &str, global_seed: u64) -> u64 {
    seed::hash_parts(&[dataset_id, proxy_id, config_id, &global_seed.to_string()])
}

/// Epoch budget of `config` under `proxy`: fewer-epochs proxies impose their
/// own budget, every other proxy trains for the config's epochs.
pub fn run_epochs(proxy: &ProxyManifest, config: &HyperparamConfig) -> usize {
    match proxy.kind {
        ProxyKind::FewerEpochs { epochs } => epochs,
        _ => config.epochs,
    }
}

fn validate(tasks: &[DatasetTask], grid: &[HyperparamConfig]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("hyperparameter grid is empty"));
    }
    let ids: HashSet<String> = grid.iter().map(|c| c.config_id()).collect();
    if ids.len() != grid.len() {
        return Err(Error::invalid("grid contains duplicate configs"));
    }
    let mut dataset_ids = HashSet::new();
    for task in tasks {
        if !dataset_ids.insert(task.id.as_str()) {
            return Err(Error::invalid(format!("duplicate dataset id {}", task.id)));
        }
        let mut proxy_ids = HashSet::new();
        for proxy in &task.proxies {
            if !proxy_ids.insert(proxy.proxy_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate proxy id {} for dataset {}",
                    proxy.proxy_id, task.id
                )));
            }
        }
    }
    Ok(())
}

/// Every cell of the matrix in dataset, proxy, config order.
pub fn plan(
    tasks: &[DatasetTask],
    grid: &[HyperparamConfig],
    global_seed: u64,
) -> Result<Vec<PlannedRun>> {
    validate(tasks, grid)?;
    let mut cells = Vec::new();
    for task in tasks {
        for proxy in &task.proxies {
            for config in grid {
                let config_id = config.config_id();
                let epochs = run_epochs(proxy, config);
                cells.push(PlannedRun {
                    seed: run_seed(&task.id, &proxy.proxy_id, &config_id, global_seed),
                    dataset_id: task.id.clone(),
                    proxy_id: proxy.proxy_id.clone(),
                    config_id,
                    epochs,
                    train_examples: proxy.train_ids.len(),
                    cost_units: (proxy.train_ids.len() * epochs) as f64,
                });
            }
        }
    }
    Ok(cells)
}

/// Train one cell. The result depends only on the data, the manifest, the
/// config and the global seed.
pub fn run_cell(
    task_id: &str,
    train: &Dataset,
    val: &Dataset,
    proxy: &ProxyManifest,
    config: &HyperparamConfig,
    global_seed: u64,
) -> Result<RunRecord> {
    let config_id = config.config_id();
    let run_config = HyperparamConfig {
        seed: run_seed(task_id, &proxy.proxy_id, &config_id, global_seed),
        epochs: run_epochs(proxy, config),
        ..config.clone()
    };
    let mut record = train_model(train, val, &run_config)?.record;
    record.dataset_id = task_id.to_string();
    record.proxy_id = proxy.proxy_id.clone();
    record.config_id = config_id;
    Ok(record)
}

/// Run every missing cell with up to `parallelism` concurrent trainings,
/// appending results to `store` as they finish. Cells already in the store
/// are skipped, which makes an interrupted matrix resumable.
pub fn run_matrix(
    tasks: &[DatasetTask],
    grid: &[HyperparamConfig],
    parallelism: usize,
    global_seed: u64,
    store: &mut ResultStore,
) -> Result<MatrixSummary> {
    if parallelism == 0 {
        return Err(Error::invalid("parallelism must be at least 1"));
    }
    validate(tasks, grid)?;

    // Resolve proxy subsets once; each is shared by every config.
    let mut subsets = Vec::new();
    for task in tasks {
        for proxy in &task.proxies {
            let train = task.train.subset(&proxy.train_ids)?;
            let val = task.val.subset(&proxy.val_ids)?;
            subsets.push((task, proxy, train, val));
        }
    }

    let mut pending = Vec::new();
    let mut skipped = 0;
    for (i, (task, proxy, _, _)) in subsets.iter().enumerate() {
        for config in grid {
            let key = format!("{}/{}/{}", task.id, proxy.proxy_id, config.config_id());
            if store.contains(&key) {
                skipped += 1;
            } else {
                pending.push((i, config));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let completed = pending.len();
    let shared = Mutex::new(store);
    pool.install(|| {
        pending.par_iter().try_for_each(|&(i, config)| {
            let (task, proxy, train, val) = &subsets[i];
            let record = run_cell(&task.id, train, val, proxy, config, global_seed)?;
            log::info!(
                "{} best_val_acc={:.4} ({} ms)",
                record.key(),
                record.best_val_acc,
                record.wall_ms
            );
            shared.lock().expect("store lock poisoned").append(record)
        })
    })?;
    Ok(MatrixSummary { completed, skipped })
}
