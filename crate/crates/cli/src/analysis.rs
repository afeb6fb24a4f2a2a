//! The `.analysis.json` sidecar written by `analyze` and read by `report`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use anyhow::Context;
use proxybench::metrics::{
    consistency_correlation, epoch_correlation, paired_accuracies, pairwise_winrate,
    quality_report, zscore, GoodRule, Metric, PairedAccuracies, QualityRow, TARGET_PROXY,
};
use proxybench::orchestrator::GridEntry;
use proxybench::RunRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSidecar {
    pub good_rule: GoodRule,
    pub scatter: Vec<PairedAccuracies>,
    #[serde(default)]
    pub epochs: Vec<EpochSeries>,
    #[serde(default)]
    pub consistency: Vec<ConsistencyResult>,
}

/// Per-epoch predictiveness of the full-proxy runs of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSeries {
    pub dataset: String,
    pub runs: usize,
    pub correlation: Vec<Option<f64>>,
    pub winrate: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub split: String,
    /// Dataset the comparison was made within, for field splits.
    pub dataset: Option<String>,
    pub metric: Metric,
    pub correlation: Option<f64>,
    pub note: Option<String>,
}

pub fn sidecar_path(report: &Path) -> PathBuf {
    let mut name = report
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".analysis.json");
    report.with_file_name(name)
}

pub fn load(report: &Path) -> anyhow::Result<AnalysisSidecar> {
    let path = sidecar_path(report);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn scatter(records: &[RunRecord]) -> anyhow::Result<Vec<PairedAccuracies>> {
    Ok(paired_accuracies(records, None)?
        .into_iter()
        .map(|(p, _)| p)
        .collect())
}

pub fn epoch_series(records: &[RunRecord]) -> anyhow::Result<Vec<EpochSeries>> {
    let mut by_dataset: BTreeMap<&str, Vec<RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.proxy_id == TARGET_PROXY) {
        by_dataset.entry(&r.dataset_id).or_default().push(r.clone());
    }
    let mut out = Vec::new();
    for (dataset, mut runs) in by_dataset {
        runs.sort_by(|a, b| a.config_id.cmp(&b.config_id));
        let correlation = match epoch_correlation(&runs) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("dataset {dataset}: epoch correlation skipped: {e}");
                continue;
            }
        };
        let winrate = (1..=correlation.len())
            .map(|e| pairwise_winrate(&runs, e).ok())
            .collect();
        out.push(EpochSeries {
            dataset: dataset.to_string(),
            runs: runs.len(),
            correlation,
            winrate,
        });
    }
    Ok(out)
}

/// Parsed `--consistency` argument.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    Datasets(String, String),
    Field(String),
}

impl SplitSpec {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("datasets", rest)) => match rest.split_once(',') {
                Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains(',') => {
                    Ok(SplitSpec::Datasets(a.to_string(), b.to_string()))
                }
                _ => Err(format!("expected datasets:A,B, got {s:?}")),
            },
            Some(("field", name)) if !name.is_empty() => Ok(SplitSpec::Field(name.to_string())),
            _ => Err(format!(
                "consistency split must be datasets:A,B or field:NAME, got {s:?}"
            )),
        }
    }

    fn label(&self) -> String {
        match self {
            SplitSpec::Datasets(a, b) => format!("datasets:{a},{b}"),
            SplitSpec::Field(f) => format!("field:{f}"),
        }
    }
}

fn correlate(
    split: &SplitSpec,
    dataset: Option<&str>,
    a: &[QualityRow],
    b: &[QualityRow],
) -> Vec<ConsistencyResult> {
    Metric::ALL
        .into_iter()
        .map(|metric| {
            let (correlation, note) = match consistency_correlation(a, b, metric) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            ConsistencyResult {
                split: split.label(),
                dataset: dataset.map(str::to_string),
                metric,
                correlation,
                note,
            }
        })
        .collect()
}

/// Consistency of every metric across the two halves of `split`. A field
/// split compares configs varying only that field against configs varying
/// any other field; the default config belongs to both halves.
pub fn consistency(
    split: &SplitSpec,
    rows: &[QualityRow],
    records: &[RunRecord],
    rule: GoodRule,
    grid: Option<&[GridEntry]>,
) -> anyhow::Result<Vec<ConsistencyResult>> {
    match split {
        SplitSpec::Datasets(a, b) => {
            let pick = |d: &str| -> anyhow::Result<Vec<QualityRow>> {
                let picked: Vec<QualityRow> =
                    rows.iter().filter(|r| r.dataset == d).cloned().collect();
                anyhow::ensure!(!picked.is_empty(), "no results for dataset {d:?}");
                Ok(picked)
            };
            Ok(correlate(split, None, &pick(a)?, &pick(b)?))
        }
        SplitSpec::Field(field) => {
            let grid = grid.context("field splits need --grid")?;
            let mut own = HashSet::new();
            let mut other = HashSet::new();
            for entry in grid {
                let id = entry.config.config_id();
                match entry.varied_field.as_deref() {
                    None => {
                        own.insert(id.clone());
                        other.insert(id);
                    }
                    Some(f) if f == field => {
                        own.insert(id);
                    }
                    Some(_) => {
                        other.insert(id);
                    }
                }
            }
            anyhow::ensure!(own.len() > 1, "grid does not vary {field:?}");
            let a = quality_report(records, rule, Some(&own))?;
            let b = quality_report(records, rule, Some(&other))?;
            let datasets: BTreeSet<&str> = a.iter().map(|r| r.dataset.as_str()).collect();
            let mut out = Vec::new();
            for d in datasets {
                let ra: Vec<QualityRow> = a.iter().filter(|r| r.dataset == d).cloned().collect();
                let rb: Vec<QualityRow> = b.iter().filter(|r| r.dataset == d).cloned().collect();
                out.extend(correlate(split, Some(d), &ra, &rb));
            }
            Ok(out)
        }
    }
}

/// Scatter rows with within-series z-scores (empty when undefined).
pub fn scatter_rows(series: &PairedAccuracies) -> Vec<[String; 7]> {
    let z = |v: &[f64]| zscore(v).ok();
    let (zp, zt) = (z(&series.proxy), z(&series.target));
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    (0..series.len())
        .map(|i| {
            [
                series.dataset_id.clone(),
                series.proxy_id.clone(),
                series.config_ids[i].clone(),
                format!("{:?}", series.proxy[i]),
                format!("{:?}", series.target[i]),
                fmt(zp.as_ref().map(|v| v[i])),
                fmt(zt.as_ref().map(|v| v[i])),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_spec_parsing() {
        assert_eq!(
            SplitSpec::parse("datasets:a,b").unwrap(),
            SplitSpec::Datasets("a".into(), "b".into())
        );
        assert_eq!(
            SplitSpec::parse("field:learning_rate").unwrap(),
            SplitSpec::Field("learning_rate".into())
        );
        assert!(SplitSpec::parse("datasets:a").is_err());
        assert!(SplitSpec::parse("datasets:a,b,c").is_err());
        assert!(SplitSpec::parse("field:").is_err());
        assert!(SplitSpec::parse("seed:1").is_err());
    }

    #[test]
    fn sidecar_sits_next_to_report() {
        assert_eq!(
            sidecar_path(Path::new("out/q.csv")),
            PathBuf::from("out/q.csv.analysis.json")
        );
    }
}
