//! Per-strategy proxy quality: r², Spearman over good configs, and the
//! cost-adjusted residual.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lasso::{lasso_cv, LassoFit};
use super::stats::{r2_no_intercept, spearman, zscore};
use crate::error::{Error, Result};
use crate::trainer::RunRecord;

pub const TARGET_PROXY: &str = "full";
pub const REPORT_COLUMNS: [&str; 7] = [
    "strategy",
    "dataset",
    "r2",
    "spearman_good",
    "cost_adjusted",
    "relative_cost",
    "n_configs",
];
pub const MIN_CONFIGS: usize = 3;
pub const MIN_STRATEGIES: usize = 5;

/// Best validation accuracies of the same configs on a proxy and on the
/// target, aligned by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedAccuracies {
    pub dataset_id: String,
    pub proxy_id: String,
    pub config_ids: Vec<String>,
    pub proxy: Vec<f64>,
    pub target: Vec<f64>,
}

impl PairedAccuracies {
    pub fn new(
        dataset_id: impl Into<String>,
        proxy_id: impl Into<String>,
        config_ids: Vec<String>,
        proxy: Vec<f64>,
        target: Vec<f64>,
    ) -> Result<Self> {
        if config_ids.len() != proxy.len() || proxy.len() != target.len() {
            return Err(Error::Shape(format!(
                "paired accuracies have {} ids, {} proxy and {} target values",
                config_ids.len(),
                proxy.len(),
                target.len()
            )));
        }
        if proxy
            .iter()
            .chain(&target)
            .any(|a| !(0.0..=1.0).contains(a))
        {
            return Err(Error::invalid("accuracies must lie in [0, 1]"));
        }
        if config_ids.iter().collect::<HashSet<_>>().len() != config_ids.len() {
            return Err(Error::invalid("duplicate config id in paired accuracies"));
        }
        Ok(Self {
            dataset_id: dataset_id.into(),
            proxy_id: proxy_id.into(),
            config_ids,
            proxy,
            target,
        })
    }

    pub fn len(&self) -> usize {
        self.config_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.config_ids.is_empty()
    }

    fn pick(&self, indices: &[usize]) -> (Vec<f64>, Vec<f64>) {
        (
            indices.iter().map(|&i| self.proxy[i]).collect(),
            indices.iter().map(|&i| self.target[i]).collect(),
        )
    }
}

/// Which configs count as good when computing the rank metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum GoodRule {
    /// The `ceil(f * n)` configs with the highest proxy accuracy.
    TopFraction(f64),
    /// Configs whose proxy accuracy is at least the threshold.
    MinAccuracy(f64),
}

impl Default for GoodRule {
    fn default() -> Self {
        GoodRule::TopFraction(0.5)
    }
}

impl GoodRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GoodRule::TopFraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::invalid(format!("top fraction {f} outside (0, 1]")))
            }
            GoodRule::MinAccuracy(t) if !t.is_finite() => {
                Err(Error::invalid("minimum accuracy must be finite"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for GoodRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoodRule::TopFraction(v) => write!(f, "top:{v}"),
            GoodRule::MinAccuracy(v) => write!(f, "min:{v}"),
        }
    }
}

impl FromStr for GoodRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("good rule {s:?} is not kind:value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("good rule value {value:?} is not a number")))?;
        let rule = match kind.trim() {
            "top" => GoodRule::TopFraction(value),
            "min" => GoodRule::MinAccuracy(value),
            other => return Err(Error::invalid(format!("unknown good rule {other:?}"))),
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// Indices (ascending) of the good configs under `rule`.
pub fn select_good_configs(paired: &PairedAccuracies, rule: GoodRule) -> Result<Vec<usize>> {
    rule.validate()?;
    let n = paired.len();
    let mut chosen: Vec<usize> = match rule {
        GoodRule::TopFraction(f) => {
            let keep = ((f * n as f64).ceil() as usize).min(n);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                paired.proxy[b]
                    .total_cmp(&paired.proxy[a])
                    .then_with(|| paired.config_ids[a].cmp(&paired.config_ids[b]))
            });
            order.truncate(keep);
            order
        }
        GoodRule::MinAccuracy(t) => (0..n).filter(|&i| paired.proxy[i] >= t).collect(),
    };
    if chosen.len() < 2 {
        return Err(Error::TooFewGood {
            selected: chosen.len(),
        });
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// r² of the through-origin regression of z-scored target on z-scored proxy
/// accuracies.
pub fn proxy_r2(paired: &PairedAccuracies) -> Result<f64> {
    let (_, r2) = r2_no_intercept(&zscore(&paired.proxy)?, &zscore(&paired.target)?)?;
    Ok(r2)
}

/// Spearman correlation of proxy and target accuracy over the good configs.
pub fn spearman_good(paired: &PairedAccuracies, rule: GoodRule) -> Result<f64> {
    let good = select_good_configs(paired, rule)?;
    let (p, t) = paired.pick(&good);
    spearman(&p, &t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub strategy: String,
    pub cost: f64,
    pub quality: f64,
}

#[derive(Debug, Clone)]
pub struct CostAdjustOptions {
    pub max_degree: usize,
    /// `None` uses the default path; `Some(vec![0.0])` forces least squares.
    pub lambda_grid: Option<Vec<f64>>,
    pub folds: usize,
}

impl Default for CostAdjustOptions {
    fn default() -> Self {
        Self {
            max_degree: 3,
            lambda_grid: None,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostAdjustment {
    pub degree: usize,
    pub fit: LassoFit,
    /// `quality - fit(cost)`, in input order.
    pub residuals: Vec<f64>,
}

fn powers(cost: f64, degree: usize) -> Vec<f64> {
    (1..=degree).map(|k| cost.powi(k as i32)).collect()
}

/// Regress quality on a polynomial in cost and return the residuals.
///
/// Terms `cost, cost², ...` are added one at a time; the first degree whose
/// newest coefficient the cross-validated Lasso sets to zero is rejected and
/// the previous fit kept.
pub fn cost_adjusted_quality(
    points: &[CostPoint],
    opts: &CostAdjustOptions,
) -> Result<CostAdjustment> {
    if points.len() < MIN_STRATEGIES {
        return Err(Error::invalid(format!(
            "cost adjustment needs at least {MIN_STRATEGIES} strategies, got {}",
            points.len()
        )));
    }
    if opts.max_degree == 0 {
        return Err(Error::invalid("max degree must be at least 1"));
    }
    let y: Vec<f64> = points.iter().map(|p| p.quality).collect();
    let mut accepted: Option<(usize, LassoFit)> = None;
    for degree in 1..=opts.max_degree {
        let x: Vec<Vec<f64>> = points.iter().map(|p| powers(p.cost, degree)).collect();
        let fit = lasso_cv(&x, &y, opts.lambda_grid.as_deref(), opts.folds)?.fit;
        if degree > 1 && fit.coefficients[degree - 1] == 0.0 {
            break;
        }
        accepted = Some((degree, fit));
    }
    let (degree, fit) = accepted.expect("degree 1 is always accepted");
    let residuals = points
        .iter()
        .map(|p| p.quality - fit.predict(&powers(p.cost, degree)))
        .collect();
    Ok(CostAdjustment {
        degree,
        fit,
        residuals,
    })
}

/// One row of the quality report. Statistics that cannot be computed are NaN
/// (written as empty CSV fields).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub strategy: String,
    pub dataset: String,
    pub r2: f64,
    pub spearman_good: f64,
    pub cost_adjusted: f64,
    pub relative_cost: f64,
    pub n_configs: usize,
}

/// Group records into proxy/target pairs per (dataset, proxy), optionally
/// restricted to a set of config ids. The target is the `full` proxy; its own
/// pairing is included. Output is sorted by dataset then proxy id.
pub fn paired_accuracies(
    records: &[RunRecord],
    configs: Option<&HashSet<String>>,
) -> Result<Vec<(PairedAccuracies, f64)>> {
    let mut by_dataset: BTreeMap<&str, BTreeMap<&str, Vec<&RunRecord>>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.key()) {
            return Err(Error::DuplicateKey(r.key()));
        }
        if configs.is_some_and(|c| !c.contains(&r.config_id)) {
            continue;
        }
        by_dataset
            .entry(&r.dataset_id)
            .or_default()
            .entry(&r.proxy_id)
            .or_default()
            .push(r);
    }

    let mut out = Vec::new();
    for (dataset, proxies) in by_dataset {
        let Some(target_runs) = proxies.get(TARGET_PROXY) else {
            log::warn!("dataset {dataset} has no {TARGET_PROXY} runs; skipped");
            continue;
        };
        let target: HashMap<&str, &RunRecord> = target_runs
            .iter()
            .map(|r| (r.config_id.as_str(), *r))
            .collect();
        for (proxy_id, runs) in &proxies {
            let mut runs: Vec<&&RunRecord> = runs
                .iter()
                .filter(|r| target.contains_key(r.config_id.as_str()))
                .collect();
            runs.sort_by(|a, b| a.config_id.cmp(&b.config_id));
            let (mut proxy_cost, mut target_cost) = (0.0, 0.0);
            for r in &runs {
                proxy_cost += r.cost_units;
                target_cost += target[r.config_id.as_str()].cost_units;
            }
            let relative = if runs.is_empty() {
                f64::NAN
            } else {
                proxy_cost / target_cost
            };
            let paired = PairedAccuracies::new(
                dataset,
                *proxy_id,
                runs.iter().map(|r| r.config_id.clone()).collect(),
                runs.iter().map(|r| r.best_val_acc).collect(),
                runs.iter()
                    .map(|r| target[r.config_id.as_str()].best_val_acc)
                    .collect(),
            )?;
            out.push((paired, relative));
        }
    }
    Ok(out)
}

fn or_nan(value: Result<f64>, what: &str, paired: &PairedAccuracies) -> f64 {
    value.unwrap_or_else(|e| {
        log::warn!(
            "{}/{}: {what} undefined: {e}",
            paired.dataset_id,
            paired.proxy_id
        );
        f64::NAN
    })
}

/// Quality rows for every (dataset, proxy) in `records`, with the cost
/// adjustment fitted per dataset over the strategies whose r² is defined.
pub fn quality_report(
    records: &[RunRecord],
    rule: GoodRule,
    configs: Option<&HashSet<String>>,
) -> Result<Vec<QualityRow>> {
    rule.validate()?;
    let mut rows: Vec<QualityRow> = paired_accuracies(records, configs)?
        .into_iter()
        .map(|(paired, relative_cost)| {
            let enough = paired.len() >= MIN_CONFIGS;
            QualityRow {
                r2: if enough {
                    or_nan(proxy_r2(&paired), "r2", &paired)
                } else {
                    f64::NAN
                },
                spearman_good: if enough {
                    or_nan(spearman_good(&paired, rule), "spearman", &paired)
                } else {
                    f64::NAN
                },
                cost_adjusted: f64::NAN,
                relative_cost,
                n_configs: paired.len(),
                strategy: paired.proxy_id,
                dataset: paired.dataset_id,
            }
        })
        .collect();

    let datasets: Vec<String> = rows
        .iter()
        .map(|r| r.dataset.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for dataset in datasets {
        let idx: Vec<usize> = (0..rows.len())
            .filter(|&i| {
                rows[i].dataset == dataset
                    && rows[i].r2.is_finite()
                    && rows[i].relative_cost.is_finite()
            })
            .collect();
        if idx.len() < MIN_STRATEGIES {
            log::warn!(
                "dataset {dataset}: {} strategies with defined r2, cost adjustment needs {MIN_STRATEGIES}",
                idx.len()
            );
            continue;
        }
        let points: Vec<CostPoint> = idx
            .iter()
            .map(|&i| CostPoint {
                strategy: rows[i].strategy.clone(),
                cost: rows[i].relative_cost,
                quality: rows[i].r2,
            })
            .collect();
        match cost_adjusted_quality(&points, &CostAdjustOptions::default()) {
            Ok(adj) => {
                for (&i, res) in idx.iter().zip(adj.residuals) {
                    rows[i].cost_adjusted = res;
                }
            }
            Err(e) => log::warn!("dataset {dataset}: cost adjustment failed: {e}"),
        }
    }
    Ok(rows)
}

fn fmt_field(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

pub fn write_report_to<W: Write>(rows: &[QualityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.dataset.clone(),
            fmt_field(r.r2),
            fmt_field(r.spearman_good),
            fmt_field(r.cost_adjusted),
            fmt_field(r.relative_cost),
            r.n_configs.to_string(),
        ])?;
    }
    w.flush()
        .map_err(|e| Error::invalid(format!("writing report: {e}")))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<QualityRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != REPORT_COLUMNS {
        return Err(Error::Parse {
            context: path.display().to_string(),
            row: 1,
            message: format!("expected columns {}", REPORT_COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse_err = |message: String| Error::Parse {
            context: path.display().to_string(),
            row: i + 2,
            message,
        };
        let num = |j: usize| -> Result<f64> {
            let s = rec.get(j).unwrap_or("");
            if s.is_empty() {
                Ok(f64::NAN)
            } else {
                s.parse()
                    .map_err(|_| parse_err(format!("bad number {s:?}")))
            }
        };
        rows.push(QualityRow {
            strategy: rec.get(0).unwrap_or("").to_string(),
            dataset: rec.get(1).unwrap_or("").to_string(),
            r2: num(2)?,
            spearman_good: num(3)?,
            cost_adjusted: num(4)?,
            relative_cost: num(5)?,
            n_configs: rec
                .get(6)
                .unwrap_or("")
                .parse()
                .map_err(|_| parse_err("bad n_configs".into()))?,
        });
    }
    Ok(rows)
}
