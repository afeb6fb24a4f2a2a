//! Labeled feature-vector datasets: CSV loading, synthetic generation,
//! stratified splitting and class filtering.
//!
//! Example ids are assigned once (row order for CSV, generation order for
//! synthetic data) and carried through every subset, so any derived dataset
//! can be traced back to rows of its source.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    id: String,
    class_count: usize,
    feature_dim: usize,
    examples: Vec<Example>,
}

impl Dataset {
    /// Build a dataset, checking labels, feature lengths, finiteness and id
    /// uniqueness.
    pub fn new(
        id: impl Into<String>,
        class_count: usize,
        feature_dim: usize,
        examples: Vec<Example>,
    ) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::invalid("class_count must be positive"));
        }
        if feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be positive"));
        }
        let mut seen = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if ex.label >= class_count {
                return Err(Error::invalid(format!(
                    "example {} has label {} outside [0, {class_count})",
                    ex.id, ex.label
                )));
            }
            if ex.features.len() != feature_dim {
                return Err(Error::invalid(format!(
                    "example {} has {} features, expected {feature_dim}",
                    ex.id,
                    ex.features.len()
                )));
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("features of example {}", ex.id)));
            }
            if !seen.insert(ex.id) {
                return Err(Error::invalid(format!("duplicate example id {}", ex.id)));
            }
        }
        Ok(Self {
            id: id.into(),
            class_count,
            feature_dim,
            examples,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.examples.iter().map(|e| e.id).collect()
    }

    /// Number of examples per class, indexed by label.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for ex in &self.examples {
            counts[ex.label] += 1;
        }
        counts
    }

    /// Examples whose id is in `ids`, in this dataset's order. Unknown ids are
    /// an error so that manifests built against another dataset are caught.
    pub fn subset(&self, ids: &[u64]) -> Result<Dataset> {
        let wanted: HashSet<u64> = ids.iter().copied().collect();
        let examples: Vec<Example> = self
            .examples
            .iter()
            .filter(|e| wanted.contains(&e.id))
            .cloned()
            .collect();
        if examples.len() != wanted.len() {
            let present: HashSet<u64> = examples.iter().map(|e| e.id).collect();
            let missing = wanted.iter().find(|id| !present.contains(id)).copied();
            return Err(Error::invalid(format!(
                "example id {} not present in dataset {}",
                missing.unwrap_or_default(),
                self.id
            )));
        }
        Ok(self.derived(self.id.clone(), examples))
    }

    fn derived(&self, id: String, examples: Vec<Example>) -> Dataset {
        Dataset {
            id,
            class_count: self.class_count,
            feature_dim: self.feature_dim,
            examples,
        }
    }

    /// Write as `label,f0,...,fD-1` rows without a header. Floats use the
    /// shortest representation that parses back to the same value.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_csv_to(&mut out)
            .map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        for ex in &self.examples {
            write!(out, "{}", ex.label)?;
            for v in &ex.features {
                write!(out, ",{v:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Load a dataset from `label,f0,f1,...` rows. A first row whose first cell
/// is not numeric is treated as a header. The dataset id is the file stem.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    parse_csv(&id, &text, &path.display().to_string())
}

/// Parse CSV text. `context` names the source in error messages; row numbers
/// are 1-based line numbers in the input.
pub fn parse_csv(id: &str, text: &str, context: &str) -> Result<Dataset> {
    let parse_err = |row: usize, message: String| Error::Parse {
        context: context.to_string(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut examples = Vec::new();
    let mut feature_dim: Option<usize> = None;
    let mut max_label = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(idx + 1, |p| p.line() as usize);
            parse_err(row, e.to_string())
        })?;
        let row = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let first = record.get(0).unwrap_or("");
        if idx == 0 && first.parse::<f64>().is_err() {
            // header
            continue;
        }
        let label: usize = first.parse().map_err(|_| {
            parse_err(
                row,
                format!("label {first:?} is not a non-negative integer"),
            )
        })?;
        let features = record
            .iter()
            .skip(1)
            .map(|cell| {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(row, format!("feature {cell:?} is not a number")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(row, format!("feature {cell:?} is not finite")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        match feature_dim {
            None if features.is_empty() => {
                return Err(parse_err(row, "row has no features".into()));
            }
            None => feature_dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(parse_err(
                    row,
                    format!("row has {} features, expected {d}", features.len()),
                ));
            }
            Some(_) => {}
        }
        max_label = max_label.max(label);
        examples.push(Example {
            id: examples.len() as u64,
            features,
            label,
        });
    }
    let Some(feature_dim) = feature_dim else {
        return Err(Error::invalid(format!("{context}: no rows")));
    };
    Dataset::new(id, max_label + 1, feature_dim, examples)
}

/// Parameters of the synthetic gaussian-mixture generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub class_count: usize,
    pub feature_dim: usize,
    pub examples_per_class: usize,
    /// Norm of every class mean.
    pub class_separation: f64,
    /// Per-example noise scales are drawn uniformly from `[noise_lo, noise_hi]`.
    pub noise_lo: f64,
    pub noise_hi: f64,
    pub label_flip_fraction: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::invalid("class_count must be at least 2"));
        }
        if self.feature_dim == 0 || self.examples_per_class == 0 {
            return Err(Error::invalid(
                "feature_dim and examples_per_class must be positive",
            ));
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return Err(Error::invalid("class_separation must be a positive number"));
        }
        if !(self.noise_lo >= 0.0 && self.noise_lo <= self.noise_hi && self.noise_hi.is_finite()) {
            return Err(Error::invalid(
                "noise range must satisfy 0 <= noise_lo <= noise_hi",
            ));
        }
        if !(0.0..1.0).contains(&self.label_flip_fraction) {
            return Err(Error::invalid("label_flip_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn dataset_id(&self) -> String {
        format!("synth-k{}-s{}", self.class_count, self.seed)
    }

    /// Mean of class `c`: a seeded gaussian direction rescaled to norm
    /// `class_separation`.
    pub fn class_mean(&self, class: usize) -> Vec<f64> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed::derive(self.seed, "class-mean", class as u64));
        loop {
            let dir: Vec<f64> = (0..self.feature_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return dir
                    .into_iter()
                    .map(|v| v / norm * self.class_separation)
                    .collect();
            }
        }
    }
}

/// Generate `class_count * examples_per_class` examples. Ids run in class-major
/// order; a seeded `label_flip_fraction` of them receive a uniformly chosen
/// wrong label.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let means: Vec<Vec<f64>> = (0..spec.class_count).map(|c| spec.class_mean(c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, "examples", 0));
    let total = spec.class_count * spec.examples_per_class;
    let mut examples = Vec::with_capacity(total);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..spec.examples_per_class {
            let sigma = if spec.noise_hi > spec.noise_lo {
                rng.random_range(spec.noise_lo..=spec.noise_hi)
            } else {
                spec.noise_lo
            };
            let features = mean
                .iter()
                .map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            examples.push(Example {
                id: examples.len() as u64,
                features,
                label: class,
            });
        }
    }

    let flips = (spec.label_flip_fraction * total as f64).round() as usize;
    if flips > 0 {
        let mut flip_rng = ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, "flips", 0));
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut flip_rng);
        for &i in &order[..flips] {
            let ex = &mut examples[i];
            let offset = flip_rng.random_range(1..spec.class_count);
            ex.label = (ex.label + offset) % spec.class_count;
        }
    }
    Dataset::new(
        spec.dataset_id(),
        spec.class_count,
        spec.feature_dim,
        examples,
    )
}

/// Ids of the examples whose label was changed by the generator.
pub fn flipped_ids(spec: &SynthSpec, data: &Dataset) -> Vec<u64> {
    data.examples()
        .iter()
        .filter(|e| e.id as usize / spec.examples_per_class != e.label)
        .map(|e| e.id)
        .collect()
}

/// Stratified train/validation split. Each class contributes its
/// proportional share of validation examples (largest-remainder rounding so
/// totals match `round(val_fraction * n)`); every class present must get at
/// least one validation example.
pub fn split(d: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid("val_fraction must lie in (0, 1)"));
    }
    let mut by_class: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for ex in d.examples() {
        by_class.entry(ex.label).or_default().push(ex.id);
    }
    let present = by_class.len();
    if val_fraction * (d.len() as f64) < present as f64 {
        return Err(Error::invalid(format!(
            "dataset of {} examples is too small to stratify {present} classes at val_fraction {val_fraction}",
            d.len()
        )));
    }

    let total_val = (val_fraction * d.len() as f64).round() as usize;
    let quotas: Vec<(usize, f64)> = by_class
        .iter()
        .map(|(&c, ids)| (c, val_fraction * ids.len() as f64))
        .collect();
    let mut alloc: BTreeMap<usize, usize> = quotas
        .iter()
        .map(|&(c, q)| (c, q.floor() as usize))
        .collect();
    let assigned: usize = alloc.values().sum();
    let mut by_remainder: Vec<(usize, f64)> =
        quotas.iter().map(|&(c, q)| (c, q - q.floor())).collect();
    by_remainder.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(c, _) in by_remainder.iter().take(total_val.saturating_sub(assigned)) {
        *alloc.get_mut(&c).expect("class present") += 1;
    }
    if let Some((&c, _)) = alloc.iter().find(|(_, &n)| n == 0) {
        return Err(Error::invalid(format!(
            "class {c} receives no validation examples at val_fraction {val_fraction}"
        )));
    }

    let mut val_ids = HashSet::new();
    for (c, ids) in &by_class {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, "split", *c as u64));
        let mut shuffled = ids.clone();
        shuffled.shuffle(&mut rng);
        val_ids.extend(shuffled.into_iter().take(alloc[c]));
    }
    let (val, train): (Vec<Example>, Vec<Example>) = d
        .examples()
        .iter()
        .cloned()
        .partition(|e| val_ids.contains(&e.id));
    Ok((d.derived(d.id.clone(), train), d.derived(d.id.clone(), val)))
}

/// Keep only examples whose label is in `classes`. Labels are not
/// renumbered and `class_count` is unchanged.
pub fn class_filter(d: &Dataset, classes: &BTreeSet<usize>) -> Result<Dataset> {
    if classes.is_empty() {
        return Err(Error::invalid("class set is empty"));
    }
    if let Some(&bad) = classes.iter().find(|&&c| c >= d.class_count) {
        return Err(Error::invalid(format!(
            "unknown class id {bad} for a {}-class dataset",
            d.class_count
        )));
    }
    let examples = d
        .examples()
        .iter()
        .filter(|e| classes.contains(&e.label))
        .cloned()
        .collect();
    Ok(d.derived(d.id.clone(), examples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(k: usize, per_class: usize) -> SynthSpec {
        SynthSpec {
            class_count: k,
            feature_dim: 8,
            examples_per_class: per_class,
            class_separation: 3.0,
            noise_lo: 0.5,
            noise_hi: 1.5,
            label_flip_fraction: 0.0,
            seed: 7,
        }
    }

    #[test]
    fn csv_three_rows() {
        let d = parse_csv("t", "0,1.5,2\n1,3,4\n0,5,6\n", "t.csv").unwrap();
        assert_eq!(d.class_count(), 2);
        assert_eq!(d.feature_dim(), 2);
        assert_eq!(d.len(), 3);
        assert_eq!(d.ids(), vec![0, 1, 2]);
        assert_eq!(d.examples()[0].features, vec![1.5, 2.0]);
    }

    #[test]
    fn csv_header_is_skipped() {
        let d = parse_csv("t", "label,a,b\n2,1,2\n", "t.csv").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.class_count(), 3);
        assert_eq!(d.examples()[0].id, 0);
    }

    #[test]
    fn csv_errors() {
        let err = parse_csv("t", "", "t.csv").unwrap_err();
        assert!(err.to_string().contains("no rows"), "{err}");

        let err = parse_csv("t", "0,1,2,3\n1,1,2\n", "t.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");

        let err = parse_csv("t", "0,1\n1.5,2\n", "t.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");

        let err = parse_csv("t", "0,1\n1,NaN\n", "t.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");

        let err = parse_csv("t", "0,1\n1,inf\n", "t.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");

        assert!(matches!(
            load_csv(Path::new("/nonexistent/x.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn csv_write_read_round_trip() {
        let d = synth_generate(&spec(3, 5)).unwrap();
        let mut buf = Vec::new();
        d.write_csv_to(&mut buf).unwrap();
        let back = parse_csv(d.id(), std::str::from_utf8(&buf).unwrap(), "mem").unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn synth_counts_and_determinism() {
        let s = spec(10, 100);
        let a = synth_generate(&s).unwrap();
        assert_eq!(a.len(), 1000);
        assert_eq!(a.class_count(), 10);
        let b = synth_generate(&s).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.examples().iter().zip(b.examples()) {
            for (u, v) in x.features.iter().zip(&y.features) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn synth_zero_noise_equals_means() {
        let mut s = spec(4, 5);
        s.noise_lo = 0.0;
        s.noise_hi = 0.0;
        let d = synth_generate(&s).unwrap();
        for ex in d.examples() {
            let mean = s.class_mean(ex.label);
            assert_eq!(ex.features, mean);
            let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - s.class_separation).abs() < 1e-12);
        }
    }

    #[test]
    fn synth_zero_noise_is_linearly_separable() {
        // Nearest-mean is a linear classifier: argmax_c (m_c . x - |m_c|^2 / 2).
        let mut s = spec(10, 20);
        s.noise_lo = 0.0;
        s.noise_hi = 1e-9;
        let d = synth_generate(&s).unwrap();
        let means: Vec<Vec<f64>> = (0..10).map(|c| s.class_mean(c)).collect();
        for ex in d.examples() {
            let score = |m: &Vec<f64>| {
                m.iter().zip(&ex.features).map(|(a, b)| a * b).sum::<f64>()
                    - 0.5 * m.iter().map(|v| v * v).sum::<f64>()
            };
            let best = (0..10)
                .max_by(|&a, &b| score(&means[a]).total_cmp(&score(&means[b])))
                .unwrap();
            assert_eq!(best, ex.label);
        }
    }

    #[test]
    fn synth_flips_labels() {
        let mut s = spec(5, 40);
        s.label_flip_fraction = 0.1;
        let d = synth_generate(&s).unwrap();
        assert_eq!(flipped_ids(&s, &d).len(), 20);
    }

    #[test]
    fn synth_rejects_bad_spec() {
        let mut s = spec(3, 3);
        s.noise_lo = 2.0;
        assert!(synth_generate(&s).is_err());
        let mut s = spec(3, 3);
        s.label_flip_fraction = 1.0;
        assert!(synth_generate(&s).is_err());
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let d = synth_generate(&spec(10, 100)).unwrap();
        let (train, val) = split(&d, 0.1, 3).unwrap();
        assert_eq!(train.len(), 900);
        assert_eq!(val.len(), 100);
        for n in val.class_histogram() {
            assert!((9..=11).contains(&n), "{n}");
        }
        let (train2, val2) = split(&d, 0.1, 3).unwrap();
        assert_eq!(train, train2);
        assert_eq!(val, val2);
    }

    #[test]
    fn split_uneven_classes_within_one() {
        let examples = (0..97)
            .map(|i| Example {
                id: i,
                features: vec![i as f64],
                label: (i % 3) as usize,
            })
            .collect();
        let d = Dataset::new("u", 3, 1, examples).unwrap();
        let (_, val) = split(&d, 0.23, 0).unwrap();
        assert_eq!(val.len(), 22);
        let hist = d.class_histogram();
        for (c, n) in val.class_histogram().into_iter().enumerate() {
            let share = 0.23 * hist[c] as f64;
            assert!((n as f64 - share).abs() <= 1.0);
        }
    }

    #[test]
    fn split_too_small_errors() {
        let d = synth_generate(&spec(10, 10)).unwrap();
        assert!(split(&d, 0.05, 0).is_err());
    }

    #[test]
    fn class_filter_cases() {
        let d = synth_generate(&spec(10, 100)).unwrap();
        let keep: BTreeSet<usize> = (0..5).collect();
        let f = class_filter(&d, &keep).unwrap();
        assert_eq!(f.len(), 500);
        assert_eq!(f.class_count(), 10);
        let all: BTreeSet<usize> = (0..10).collect();
        assert_eq!(class_filter(&d, &all).unwrap(), d);
        assert!(class_filter(&d, &BTreeSet::from([11])).is_err());
        assert!(class_filter(&d, &BTreeSet::new()).is_err());
    }

    #[test]
    fn subset_rejects_foreign_ids() {
        let d = synth_generate(&spec(2, 3)).unwrap();
        assert_eq!(d.subset(&[0, 4]).unwrap().len(), 2);
        assert!(d.subset(&[0, 99]).is_err());
    }

    proptest! {
        #[test]
        fn split_recovers_ids(seed in 0u64..1000, frac in 0.2f64..0.8) {
            let d = synth_generate(&spec(4, 10)).unwrap();
            let (train, val) = split(&d, frac, seed).unwrap();
            let mut ids: Vec<u64> = train.ids().into_iter().chain(val.ids()).collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, d.ids());
        }

        #[test]
        fn class_filter_composes(a in proptest::collection::btree_set(0usize..6, 1..6),
                                 b in proptest::collection::btree_set(0usize..6, 1..6)) {
            let d = synth_generate(&spec(6, 4)).unwrap();
            let twice = class_filter(&class_filter(&d, &a).unwrap(), &b).unwrap();
            let inter: BTreeSet<usize> = a.intersection(&b).copied().collect();
            let expected = if inter.is_empty() {
                Vec::new()
            } else {
                class_filter(&d, &inter).unwrap().ids()
            };
            prop_assert_eq!(twice.ids(), expected);
        }
    }
}
