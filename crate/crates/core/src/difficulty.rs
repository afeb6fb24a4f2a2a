//! Per-example difficulty scores and quantile slicing.
//!
//! Slice coordinates run from hardest (0) to easiest (1): `(0.9, 1.0)` is the
//! easiest tenth of the training set and `(0.0, 0.5)` the hardest half.

use std::collections::HashSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::trainer::{HyperparamConfig, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyEntry {
    pub example_id: u64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyTable {
    pub dataset_id: String,
    pub scoring_config_id: String,
    /// One entry per training example, in dataset order.
    pub entries: Vec<DifficultyEntry>,
}

/// Metadata stored next to the CSV table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultySidecar {
    pub dataset_id: String,
    pub scoring_config_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scoring_config: Option<HyperparamConfig>,
}

/// Unsmoothed cross-entropy of every training example under `model`.
pub fn score_examples(
    model: &ModelParams,
    train: &Dataset,
    scoring_config_id: &str,
) -> Result<DifficultyTable> {
    if model.input_dim() != train.feature_dim() || model.output_dim() != train.class_count() {
        return Err(Error::Shape(format!(
            "model maps {} -> {} but dataset has {} features and {} classes",
            model.input_dim(),
            model.output_dim(),
            train.feature_dim(),
            train.class_count()
        )));
    }
    let entries = train
        .examples()
        .iter()
        .map(|ex| {
            Ok(DifficultyEntry {
                example_id: ex.id,
                loss: model.example_loss(ex)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DifficultyTable {
        dataset_id: train.id().to_string(),
        scoring_config_id: scoring_config_id.to_string(),
        entries,
    })
}

impl DifficultyTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ids ordered hardest first: loss descending, ties by ascending id.
    pub fn ranked_ids(&self) -> Vec<u64> {
        let mut order: Vec<&DifficultyEntry> = self.entries.iter().collect();
        order.sort_by(|a, b| {
            b.loss
                .total_cmp(&a.loss)
                .then(a.example_id.cmp(&b.example_id))
        });
        order.into_iter().map(|e| e.example_id).collect()
    }

    pub fn ids(&self) -> HashSet<u64> {
        self.entries.iter().map(|e| e.example_id).collect()
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    /// Write `example_id,loss` CSV plus a JSON sidecar (same stem, `.json`).
    pub fn save(&self, path: &Path, scoring_config: Option<&HyperparamConfig>) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(["example_id", "loss"])?;
        for e in &self.entries {
            writer.write_record([e.example_id.to_string(), format!("{:?}", e.loss)])?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;

        let sidecar = DifficultySidecar {
            dataset_id: self.dataset_id.clone(),
            scoring_config_id: self.scoring_config_id.clone(),
            scoring_config: scoring_config.cloned(),
        };
        let side_path = Self::sidecar_path(path);
        let json = serde_json::to_string_pretty(&sidecar)?;
        std::fs::write(&side_path, json).map_err(|e| Error::io(&side_path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side_path = Self::sidecar_path(path);
        let side_text =
            std::fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let sidecar: DifficultySidecar = serde_json::from_str(&side_text)?;

        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let mut entries = Vec::new();
        for (i, row) in reader.deserialize::<DifficultyEntry>().enumerate() {
            let entry = row.map_err(|e| Error::Parse {
                context: path.display().to_string(),
                row: i + 2,
                message: e.to_string(),
            })?;
            if !(entry.loss.is_finite() && entry.loss >= 0.0) {
                return Err(Error::Parse {
                    context: path.display().to_string(),
                    row: i + 2,
                    message: format!("loss {} is not a finite non-negative number", entry.loss),
                });
            }
            entries.push(entry);
        }
        Ok(Self {
            dataset_id: sidecar.dataset_id,
            scoring_config_id: sidecar.scoring_config_id,
            entries,
        })
    }
}

/// Ids whose hardest-first rank `r` satisfies `floor(lo*N) <= r < floor(hi*N)`,
/// returned in rank order.
pub fn quantile_slice(table: &DifficultyTable, lo: f64, hi: f64) -> Result<Vec<u64>> {
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::invalid(format!(
            "quantile bounds must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})"
        )));
    }
    if table.is_empty() {
        return Err(Error::invalid("difficulty table is empty"));
    }
    let (start, end) = slice_bounds(table.len(), lo, hi);
    Ok(table.ranked_ids()[start..end].to_vec())
}

/// Rank range `[floor(lo*N), floor(hi*N))`, with `hi = 1` mapping to `N`.
pub fn slice_bounds(n: usize, lo: f64, hi: f64) -> (usize, usize) {
    let start = ((lo * n as f64).floor() as usize).min(n);
    let end = if hi >= 1.0 {
        n
    } else {
        ((hi * n as f64).floor() as usize).min(n)
    };
    (start, end.max(start))
}
