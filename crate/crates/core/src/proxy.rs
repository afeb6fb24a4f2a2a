//! Proxy construction: resolve a [`ProxySpec`] into the concrete train and
//! validation ids, epoch budget and relative cost of one proxy task.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_filter, Dataset};
use crate::difficulty::{quantile_slice, DifficultyTable};
use crate::error::{Error, Result};
use crate::seed;

/// Proxy creation strategy. Serializes as `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ProxyKind {
    Full,
    RandomAll {
        fraction: f64,
    },
    /// `classes = None` picks `ceil(K/2)` classes by seed.
    HalfClasses {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<BTreeSet<usize>>,
        fraction: f64,
    },
    Quantile {
        lo: f64,
        hi: f64,
    },
    FewerEpochs {
        epochs: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySpec {
    #[serde(flatten)]
    pub kind: ProxyKind,
    pub seed: u64,
}

impl ProxySpec {
    pub fn new(kind: ProxyKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn full() -> Self {
        Self::new(ProxyKind::Full, 0)
    }
}

impl ProxyKind {
    fn validate(&self, target_epochs: usize) -> Result<()> {
        let check_fraction = |f: f64| {
            if f > 0.0 && f <= 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "fraction must lie in (0, 1], got {f}"
                )))
            }
        };
        match self {
            ProxyKind::Full => Ok(()),
            ProxyKind::RandomAll { fraction } => check_fraction(*fraction),
            ProxyKind::HalfClasses { classes, fraction } => {
                if classes.as_ref().is_some_and(|c| c.is_empty()) {
                    return Err(Error::invalid("half_classes class set is empty"));
                }
                check_fraction(*fraction)
            }
            ProxyKind::Quantile { lo, hi } => {
                if 0.0 <= *lo && lo < hi && *hi <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "quantile bounds must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})"
                    )))
                }
            }
            ProxyKind::FewerEpochs { epochs } => {
                if *epochs >= 1 && *epochs < target_epochs {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "fewer_epochs needs 1 <= epochs < {target_epochs}, got {epochs}"
                    )))
                }
            }
        }
    }
}

/// A fully resolved proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyManifest {
    pub proxy_id: String,
    #[serde(flatten)]
    pub kind: ProxyKind,
    pub seed: u64,
    pub train_ids: Vec<u64>,
    pub val_ids: Vec<u64>,
    pub epochs: usize,
    pub relative_cost: f64,
}

impl ProxyManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn is_full(&self) -> bool {
        matches!(self.kind, ProxyKind::Full)
    }
}

fn fmt_fraction(f: f64) -> String {
    format!("{f:?}")
}

/// Default proxy id, following the `hard-lo-hi` naming for difficulty slices.
pub fn proxy_id(kind: &ProxyKind, resolved_classes: Option<&BTreeSet<usize>>) -> String {
    match kind {
        ProxyKind::Full => "full".to_string(),
        ProxyKind::RandomAll { fraction } => format!("random-{}", fmt_fraction(*fraction)),
        ProxyKind::HalfClasses { fraction, .. } => {
            let classes = resolved_classes
                .map(|c| {
                    c.iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join("_")
                })
                .unwrap_or_default();
            format!("classes-{classes}-{}", fmt_fraction(*fraction))
        }
        ProxyKind::Quantile { lo, hi } => {
            format!("hard-{}-{}", fmt_fraction(*lo), fmt_fraction(*hi))
        }
        ProxyKind::FewerEpochs { epochs } => format!("ep{epochs}"),
    }
}

fn sample_ids(ids: &[u64], fraction: f64, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    let k = (fraction * ids.len() as f64).ceil() as usize;
    if k == 0 {
        return Err(Error::invalid(format!(
            "fraction {fraction} of {} examples selects nothing",
            ids.len()
        )));
    }
    let k = k.min(ids.len());
    let mut picked: Vec<u64> = sample(rng, ids.len(), k)
        .into_iter()
        .map(|i| ids[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Resolve `spec` against the fixed train/validation split. Quantile proxies
/// need the difficulty table of `train`.
pub fn build_proxy(
    train: &Dataset,
    val: &Dataset,
    spec: &ProxySpec,
    table: Option<&DifficultyTable>,
    target_epochs: usize,
) -> Result<ProxyManifest> {
    spec.kind.validate(target_epochs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, "proxy", 0));
    let all_train = train.ids();
    let all_val = val.ids();
    let mut resolved_classes = None;

    let (train_ids, val_ids, epochs) = match &spec.kind {
        ProxyKind::Full => (all_train, all_val, target_epochs),
        ProxyKind::FewerEpochs { epochs } => (all_train, all_val, *epochs),
        ProxyKind::RandomAll { fraction } => (
            sample_ids(&all_train, *fraction, &mut rng)?,
            all_val,
            target_epochs,
        ),
        ProxyKind::HalfClasses { classes, fraction } => {
            let classes = match classes {
                Some(c) => c.clone(),
                None => {
                    let k = train.class_count();
                    sample(&mut rng, k, k.div_ceil(2)).into_iter().collect()
                }
            };
            let kept_train = class_filter(train, &classes)?;
            let kept_val = class_filter(val, &classes)?;
            if kept_val.is_empty() {
                return Err(Error::invalid("class set leaves no validation examples"));
            }
            let ids = sample_ids(&kept_train.ids(), *fraction, &mut rng)?;
            resolved_classes = Some(classes);
            (ids, kept_val.ids(), target_epochs)
        }
        ProxyKind::Quantile { lo, hi } => {
            let table = table
                .ok_or_else(|| Error::invalid("quantile proxies require a difficulty table"))?;
            let train_set: HashSet<u64> = all_train.iter().copied().collect();
            if table.ids() != train_set {
                return Err(Error::invalid(
                    "difficulty table does not cover exactly the training examples",
                ));
            }
            let mut ids = quantile_slice(table, *lo, *hi)?;
            if ids.is_empty() {
                return Err(Error::invalid(format!(
                    "quantile ({lo}, {hi}) of {} examples selects nothing",
                    table.len()
                )));
            }
            ids.sort_unstable();
            (ids, all_val, target_epochs)
        }
    };

    let mut manifest = ProxyManifest {
        proxy_id: proxy_id(&spec.kind, resolved_classes.as_ref()),
        kind: match (&spec.kind, resolved_classes) {
            (ProxyKind::HalfClasses { fraction, .. }, Some(c)) => ProxyKind::HalfClasses {
                classes: Some(c),
                fraction: *fraction,
            },
            (kind, _) => kind.clone(),
        },
        seed: spec.seed,
        train_ids,
        val_ids,
        epochs,
        relative_cost: 0.0,
    };
    manifest.relative_cost = relative_cost(&manifest, train.len(), target_epochs)?;
    Ok(manifest)
}

/// Example-epochs of the proxy over example-epochs of the target task.
pub fn relative_cost(
    manifest: &ProxyManifest,
    full_train_size: usize,
    target_epochs: usize,
) -> Result<f64> {
    if full_train_size == 0 || target_epochs == 0 {
        return Err(Error::invalid("relative cost needs positive sizes"));
    }
    let proxy = (manifest.train_ids.len() * manifest.epochs) as f64;
    let target = (full_train_size * target_epochs) as f64;
    Ok(proxy / target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, Example};
    use crate::difficulty::DifficultyEntry;

    /// Balanced 10-class data: 1000 train and 500 validation examples.
    fn balanced() -> (Dataset, Dataset) {
        let make = |offset: u64, n: u64, id: &str| {
            let examples = (0..n)
                .map(|i| Example {
                    id: offset + i,
                    features: vec![i as f64],
                    label: (i % 10) as usize,
                })
                .collect();
            Dataset::new(id, 10, 1, examples).unwrap()
        };
        (make(0, 1000, "b"), make(1000, 500, "b"))
    }

    fn table_for(train: &Dataset) -> DifficultyTable {
        DifficultyTable {
            dataset_id: train.id().into(),
            scoring_config_id: "c".into(),
            entries: train
                .examples()
                .iter()
                .map(|e| DifficultyEntry {
                    example_id: e.id,
                    loss: ((e.id * 7919) % 1000) as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn random_tenth() {
        let (train, val) = balanced();
        let spec = ProxySpec::new(ProxyKind::RandomAll { fraction: 0.1 }, 5);
        let m = build_proxy(&train, &val, &spec, None, 20).unwrap();
        assert_eq!(m.train_ids.len(), 100);
        assert_eq!(m.val_ids, val.ids());
        assert_eq!(m.relative_cost, 0.1);
        assert_eq!(m.proxy_id, "random-0.1");
        assert_eq!(build_proxy(&train, &val, &spec, None, 20).unwrap(), m);
        let other = build_proxy(&train, &val, &ProxySpec { seed: 6, ..spec }, None, 20).unwrap();
        assert_ne!(other.train_ids, m.train_ids);
    }

    #[test]
    fn half_classes_counts() {
        let (train, val) = balanced();
        let classes: BTreeSet<usize> = (0..5).collect();
        let spec = ProxySpec::new(
            ProxyKind::HalfClasses {
                classes: Some(classes.clone()),
                fraction: 1.0,
            },
            0,
        );
        let m = build_proxy(&train, &val, &spec, None, 20).unwrap();
        assert_eq!(m.train_ids.len(), 500);
        assert_eq!(m.val_ids.len(), 250);
        assert_eq!(m.relative_cost, 0.5);
        let label = |id: u64| (id % 10) as usize;
        assert!(m
            .train_ids
            .iter()
            .chain(&m.val_ids)
            .all(|&id| classes.contains(&label(id))));
    }

    #[test]
    fn half_classes_picks_classes_by_seed() {
        let (train, val) = balanced();
        let spec = ProxySpec::new(
            ProxyKind::HalfClasses {
                classes: None,
                fraction: 0.5,
            },
            9,
        );
        let m = build_proxy(&train, &val, &spec, None, 20).unwrap();
        let ProxyKind::HalfClasses {
            classes: Some(c), ..
        } = &m.kind
        else {
            panic!("classes not resolved");
        };
        assert_eq!(c.len(), 5);
        assert_eq!(m.train_ids.len(), 250);
        assert_eq!(m.relative_cost, 0.25);
    }

    #[test]
    fn quantile_matches_slice() {
        let (train, val) = balanced();
        let table = table_for(&train);
        let spec = ProxySpec::new(ProxyKind::Quantile { lo: 0.9, hi: 1.0 }, 0);
        let m = build_proxy(&train, &val, &spec, Some(&table), 20).unwrap();
        // brute force: the 100 lowest losses
        let mut by_loss: Vec<&DifficultyEntry> = table.entries.iter().collect();
        by_loss.sort_by(|a, b| {
            a.loss
                .total_cmp(&b.loss)
                .then(b.example_id.cmp(&a.example_id))
        });
        let mut expected: Vec<u64> = by_loss[..100].iter().map(|e| e.example_id).collect();
        expected.sort_unstable();
        assert_eq!(m.train_ids, expected);
        assert_eq!(m.relative_cost, 0.1);
        assert_eq!(m.proxy_id, "hard-0.9-1.0");
        assert!(build_proxy(&train, &val, &spec, None, 20).is_err());
    }

    #[test]
    fn cost_accounting() {
        let (train, val) = balanced();
        let full = build_proxy(&train, &val, &ProxySpec::full(), None, 20).unwrap();
        assert_eq!(full.relative_cost, 1.0);
        assert_eq!(full.epochs, 20);
        let ep1 = build_proxy(
            &train,
            &val,
            &ProxySpec::new(ProxyKind::FewerEpochs { epochs: 1 }, 0),
            None,
            20,
        )
        .unwrap();
        assert_eq!(ep1.relative_cost, 0.05);
        assert_eq!(ep1.epochs, 1);
        assert!(build_proxy(
            &train,
            &val,
            &ProxySpec::new(ProxyKind::FewerEpochs { epochs: 20 }, 0),
            None,
            20
        )
        .is_err());
    }

    #[test]
    fn rejects_bad_fractions_and_empty_selections() {
        let (train, val) = balanced();
        for f in [0.0, 1.5, -0.1] {
            let spec = ProxySpec::new(ProxyKind::RandomAll { fraction: f }, 0);
            assert!(build_proxy(&train, &val, &spec, None, 20).is_err());
        }
        let tiny = train.subset(&[0, 1, 2]).unwrap();
        let table = table_for(&tiny);
        let spec = ProxySpec::new(ProxyKind::Quantile { lo: 0.0, hi: 0.2 }, 0);
        assert!(build_proxy(&tiny, &val, &spec, Some(&table), 20).is_err());
    }

    #[test]
    fn manifest_json_shape() {
        let (train, _) = balanced();
        let d = crate::dataset::Dataset::new("x", 10, 1, train.examples()[..40].to_vec()).unwrap();
        let (t, v) = split(&d, 0.25, 0).unwrap();
        let m = build_proxy(
            &t,
            &v,
            &ProxySpec::new(ProxyKind::Quantile { lo: 0.0, hi: 0.5 }, 3),
            Some(&table_for(&t)),
            20,
        )
        .unwrap();
        let json: serde_json::Value = serde_json::to_value(&m).unwrap();
        for key in [
            "proxy_id",
            "kind",
            "params",
            "seed",
            "train_ids",
            "val_ids",
            "epochs",
            "relative_cost",
        ] {
            assert!(json.get(key).is_some(), "missing {key}: {json}");
        }
        assert_eq!(json["kind"], "quantile");
        assert_eq!(json["params"]["lo"], 0.0);
        let back: ProxyManifest = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);

        let full = build_proxy(&t, &v, &ProxySpec::full(), None, 20).unwrap();
        let json = serde_json::to_string(&full).unwrap();
        assert_eq!(serde_json::from_str::<ProxyManifest>(&json).unwrap(), full);
    }

    proptest::proptest! {
        #[test]
        fn cost_monotone_in_fraction(a in 0.01f64..1.0, b in 0.01f64..1.0) {
            let (train, val) = balanced();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let m_lo = build_proxy(&train, &val, &ProxySpec::new(ProxyKind::RandomAll { fraction: lo }, 1), None, 20).unwrap();
            let m_hi = build_proxy(&train, &val, &ProxySpec::new(ProxyKind::RandomAll { fraction: hi }, 1), None, 20).unwrap();
            proptest::prop_assert!(m_lo.relative_cost <= m_hi.relative_cost);
        }
    }
}
