//! Cross-setting consistency and intermediate-epoch predictiveness.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::quality::QualityRow;
use super::stats::pearson;
use crate::error::{Error, Result};
use crate::trainer::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    R2,
    SpearmanGood,
    CostAdjusted,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::R2, Metric::SpearmanGood, Metric::CostAdjusted];

    pub fn value(&self, row: &QualityRow) -> f64 {
        match self {
            Metric::R2 => row.r2,
            Metric::SpearmanGood => row.spearman_good,
            Metric::CostAdjusted => row.cost_adjusted,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::R2 => "r2",
            Metric::SpearmanGood => "spearman_good",
            Metric::CostAdjusted => "cost_adjusted",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric {s:?}")))
    }
}

/// Pearson correlation of `metric` across strategies present (with a defined
/// value) in both settings.
pub fn consistency_correlation(a: &[QualityRow], b: &[QualityRow], metric: Metric) -> Result<f64> {
    let lookup: HashMap<&str, f64> = b
        .iter()
        .map(|r| (r.strategy.as_str(), metric.value(r)))
        .collect();
    if lookup.len() != b.len() {
        return Err(Error::invalid("duplicate strategy within one setting"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut strategies: Vec<&QualityRow> = a.iter().collect();
    strategies.sort_by(|x, y| x.strategy.cmp(&y.strategy));
    for row in strategies {
        let x = metric.value(row);
        if let Some(&y) = lookup.get(row.strategy.as_str()) {
            if x.is_finite() && y.is_finite() {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    if xs.len() < 3 {
        return Err(Error::invalid(format!(
            "consistency needs at least 3 shared strategies with defined {metric}, got {}",
            xs.len()
        )));
    }
    pearson(&xs, &ys)
}

fn check_epochs(records: &[RunRecord], min: usize) -> Result<usize> {
    if records.len() < min {
        return Err(Error::invalid(format!(
            "need at least {min} records, got {}",
            records.len()
        )));
    }
    let epochs = records[0].epoch_val_acc.len();
    if records.iter().any(|r| r.epoch_val_acc.len() != epochs) {
        return Err(Error::Shape("records have differing epoch counts".into()));
    }
    Ok(epochs)
}

/// For each epoch, the Pearson correlation across runs between accuracy after
/// that epoch and best accuracy. Epochs where either side is constant are
/// `None`.
pub fn epoch_correlation(records: &[RunRecord]) -> Result<Vec<Option<f64>>> {
    let epochs = check_epochs(records, 3)?;
    let best: Vec<f64> = records.iter().map(|r| r.best_val_acc).collect();
    Ok((0..epochs)
        .map(|e| {
            let at: Vec<f64> = records.iter().map(|r| r.epoch_val_acc[e]).collect();
            match pearson(&at, &best) {
                Ok(r) => Some(r),
                Err(Error::Degenerate(_)) => None,
                Err(err) => {
                    log::warn!("epoch {}: {err}", e + 1);
                    None
                }
            }
        })
        .collect())
}

/// Fraction of unordered pairs, untied on both sides, whose order under `at`
/// agrees with their order under `finals`.
pub fn winrate(at: &[f64], finals: &[f64]) -> Result<f64> {
    if at.len() != finals.len() {
        return Err(Error::invalid("win rate inputs differ in length"));
    }
    if at.len() < 2 {
        return Err(Error::invalid("win rate needs at least two runs"));
    }
    let (mut agree, mut total) = (0usize, 0usize);
    for i in 0..at.len() {
        for j in i + 1..at.len() {
            let a = at[i].partial_cmp(&at[j]);
            let b = finals[i].partial_cmp(&finals[j]);
            match (a, b) {
                (Some(a), Some(b)) if a.is_ne() && b.is_ne() => {
                    total += 1;
                    if a == b {
                        agree += 1;
                    }
                }
                _ => {}
            }
        }
    }
    if total == 0 {
        return Err(Error::Degenerate("every pair is tied".into()));
    }
    Ok(agree as f64 / total as f64)
}

/// Win rate of accuracy after `epoch` (1-based) against best accuracy.
pub fn pairwise_winrate(records: &[RunRecord], epoch: usize) -> Result<f64> {
    let epochs = check_epochs(records, 2)?;
    if epoch == 0 || epoch > epochs {
        return Err(Error::invalid(format!(
            "epoch {epoch} outside 1..={epochs}"
        )));
    }
    let at: Vec<f64> = records.iter().map(|r| r.epoch_val_acc[epoch - 1]).collect();
    let best: Vec<f64> = records.iter().map(|r| r.best_val_acc).collect();
    winrate(&at, &best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::RunStatus;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn row(strategy: &str, r2: f64) -> QualityRow {
        QualityRow {
            strategy: strategy.into(),
            dataset: "d".into(),
            r2,
            spearman_good: f64::NAN,
            cost_adjusted: f64::NAN,
            relative_cost: 0.5,
            n_configs: 4,
        }
    }

    fn record(accs: Vec<f64>) -> RunRecord {
        RunRecord {
            dataset_id: "d".into(),
            proxy_id: "full".into(),
            config_id: String::new(),
            seed: 0,
            best_val_acc: accs.iter().cloned().fold(f64::MIN, f64::max),
            epoch_val_acc: accs,
            cost_units: 1.0,
            wall_ms: 0,
            status: RunStatus::Ok,
        }
    }

    #[test]
    fn consistency_examples() {
        let a = vec![row("w", 0.1), row("x", 0.5), row("y", 0.2), row("z", 0.9)];
        assert_relative_eq!(
            consistency_correlation(&a, &a, Metric::R2).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let neg: Vec<QualityRow> = a.iter().map(|r| row(&r.strategy, -r.r2)).collect();
        assert_relative_eq!(
            consistency_correlation(&a, &neg, Metric::R2).unwrap(),
            -1.0,
            epsilon = 1e-12
        );

        // hand-computed: x = [.1,.5,.2,.9], y = [.3,.4,.1,.8]
        // means .425, .4; Sxy = .29, Sxx = .3875, Syy = .26
        let b = vec![
            row("z", 0.8),
            row("y", 0.1),
            row("x", 0.4),
            row("w", 0.3),
            row("extra", 0.0),
        ];
        let expected = 0.29 / (0.3875f64 * 0.26).sqrt();
        assert_relative_eq!(
            consistency_correlation(&a, &b, Metric::R2).unwrap(),
            expected,
            epsilon = 1e-12
        );

        assert!(consistency_correlation(&a[..2], &a, Metric::R2).is_err());
        assert!(consistency_correlation(&a, &a, Metric::SpearmanGood).is_err());
    }

    #[test]
    fn winrate_examples() {
        assert_eq!(winrate(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(winrate(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
        assert_relative_eq!(
            winrate(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(),
            2.0 / 3.0
        );
        // the tied pair (0, 1) is excluded
        assert_eq!(winrate(&[1.0, 1.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!(winrate(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn epoch_correlation_examples() {
        let records = vec![
            record(vec![0.3, 0.2]),
            record(vec![0.5, 0.4]),
            record(vec![0.6, 0.55]),
            record(vec![0.1, 0.1]),
        ];
        let corr = epoch_correlation(&records).unwrap();
        assert_relative_eq!(corr[0].unwrap(), 1.0, epsilon = 1e-12);
        assert!(corr[1].unwrap() <= 1.0 && corr[1].unwrap() > 0.9);

        let flat = vec![
            record(vec![0.5, 0.6]),
            record(vec![0.5, 0.7]),
            record(vec![0.5, 0.8]),
        ];
        let corr = epoch_correlation(&flat).unwrap();
        assert_eq!(corr[0], None);
        assert!(corr[1].is_some());

        assert!(epoch_correlation(&flat[..2]).is_err());
        let ragged = vec![record(vec![0.1]), record(vec![0.1, 0.2]), record(vec![0.3])];
        assert!(epoch_correlation(&ragged).is_err());

        assert_eq!(pairwise_winrate(&records, 1).unwrap(), 1.0);
        assert!(pairwise_winrate(&records, 0).is_err());
        assert!(pairwise_winrate(&records, 3).is_err());
    }

    #[test]
    fn independent_first_epoch_is_uncorrelated() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let records: Vec<RunRecord> = (0..2000)
            .map(|_| {
                let first: f64 = rng.random_range(0.0..0.5);
                let last: f64 = rng.random_range(0.5..1.0);
                record(vec![first, last])
            })
            .collect();
        let corr = epoch_correlation(&records).unwrap();
        assert!(corr[0].unwrap().abs() < 0.2, "{corr:?}");
        assert_relative_eq!(corr[1].unwrap(), 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn winrate_affine_invariant(at in proptest::collection::vec(0.0f64..1.0, 2..20),
                                    fin in proptest::collection::vec(0.0f64..1.0, 20),
                                    a in 0.1f64..10.0, b in -5.0f64..5.0,
                                    c in 0.1f64..10.0, d in -5.0f64..5.0) {
            let fin = &fin[..at.len()];
            // round so the affine images keep exactly the same ties
            let at: Vec<f64> = at.iter().map(|v| (v * 8.0).round()).collect();
            let fin: Vec<f64> = fin.iter().map(|v| (v * 8.0).round()).collect();
            if let Ok(base) = winrate(&at, &fin) {
                let ta: Vec<f64> = at.iter().map(|v| a * v + b).collect();
                let tf: Vec<f64> = fin.iter().map(|v| c * v + d).collect();
                prop_assert_eq!(winrate(&ta, &tf).unwrap(), base);
            }
        }
    }
}
