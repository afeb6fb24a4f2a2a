use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use proxybench::difficulty::{score_examples, DifficultyTable};
use proxybench::metrics::{quality_report, read_report, write_report_to, GoodRule};
use proxybench::orchestrator::{
    generate_grid_entries, plan, run_matrix, DatasetTask, GridSpec, ResultStore,
};
use proxybench::proxy::{build_proxy, ProxyKind, ProxyManifest, ProxySpec};
use proxybench::trainer::{train_model, HyperparamConfig, RunStatus};
use proxybench::{load_csv, split, synth_generate, Dataset, SynthSpec};

use crate::analysis::{self, AnalysisSidecar, SplitSpec};
use crate::args::{Command, KindArg, SplitArgs};
use crate::staging::{write_text, Staging};
use crate::{usage, Outcome};

pub fn dispatch(command: Command) -> Outcome {
    match command {
        Command::GenData { spec, out } => gen_data(&spec, &out),
        Command::Score {
            data,
            config,
            out,
            split,
        } => score(&data, config.as_deref(), &out, &split),
        Command::MakeProxy {
            data,
            scores,
            kind,
            lo,
            hi,
            fraction,
            classes,
            epochs,
            seed,
            target_epochs,
            out,
            split,
        } => {
            let kind = proxy_kind(kind, lo, hi, fraction, classes, epochs)?;
            if matches!(kind, ProxyKind::Quantile { .. }) && scores.is_none() {
                return usage("--kind quantile requires --scores");
            }
            make_proxy(
                &data,
                scores.as_deref(),
                kind,
                seed,
                target_epochs,
                &out,
                &split,
            )
        }
        Command::RunGrid {
            data,
            grid,
            proxies,
            out,
            parallel,
            dry_run,
            split,
        } => run_grid(
            &data,
            &grid,
            proxies.as_deref(),
            &out,
            parallel,
            dry_run,
            &split,
        ),
        Command::Analyze {
            results,
            out,
            good_rule,
            epoch_corr,
            consistency,
            grid,
        } => analyze(
            &results,
            &out,
            &good_rule,
            epoch_corr,
            consistency.as_deref(),
            grid.as_deref(),
        ),
        Command::Report { report, out } => report_cmd(&report, &out),
    }
}

fn distinct(inputs: &[&Path], outputs: &[&Path]) -> Outcome {
    for o in outputs {
        if inputs.iter().any(|i| i == o) {
            return usage(format!("output {} is also an input", o.display()));
        }
    }
    let unique: BTreeSet<&Path> = outputs.iter().copied().collect();
    if unique.len() != outputs.len() {
        return usage("output paths must be distinct");
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_split(data: &Path, args: &SplitArgs) -> Outcome<(Dataset, Dataset)> {
    if !(args.val_fraction > 0.0 && args.val_fraction < 1.0) {
        return usage(format!(
            "--val-fraction must lie in (0, 1), got {}",
            args.val_fraction
        ));
    }
    let dataset = load_csv(data)?;
    Ok(split(&dataset, args.val_fraction, args.global_seed)?)
}

fn gen_data(spec_path: &Path, out: &Path) -> Outcome {
    distinct(&[spec_path], &[out])?;
    let spec: SynthSpec = read_json(spec_path)?;
    let data = synth_generate(&spec)?;
    let mut staging = Staging::near(out)?;
    let staged = staging.file(out);
    data.write_csv(&staged)?;
    staging.commit()?;
    log::info!("wrote {} examples to {}", data.len(), out.display());
    Ok(())
}

fn score(data: &Path, config: Option<&Path>, out: &Path, args: &SplitArgs) -> Outcome {
    let sidecar = DifficultyTable::sidecar_path(out);
    if sidecar == out {
        return usage("--out must not have a .json extension (the sidecar uses it)");
    }
    let mut inputs = vec![data];
    inputs.extend(config);
    distinct(&inputs, &[out, &sidecar])?;
    let cfg = match config {
        Some(path) => {
            let cfg: HyperparamConfig = read_json(path)?;
            cfg.validate()?;
            cfg
        }
        None => HyperparamConfig {
            seed: args.global_seed,
            ..HyperparamConfig::default()
        },
    };
    let (train, val) = load_split(data, args)?;
    let run = train_model(&train, &val, &cfg)?;
    if run.record.status == RunStatus::Diverged {
        log::warn!("scoring run diverged; difficulty reflects the last finite model");
    }
    let table = score_examples(&run.params, &train, &cfg.config_id())?;

    let mut staging = Staging::near(out)?;
    let staged = staging.file(out);
    table.save(&staged, Some(&cfg))?;
    staging.adopt(DifficultyTable::sidecar_path(&staged), &sidecar);
    staging.commit()?;
    log::info!(
        "scored {} examples (scoring model best val acc {:.4})",
        table.len(),
        run.record.best_val_acc
    );
    Ok(())
}

fn proxy_kind(
    kind: KindArg,
    lo: Option<f64>,
    hi: Option<f64>,
    fraction: Option<f64>,
    classes: Option<Vec<usize>>,
    epochs: Option<usize>,
) -> Outcome<ProxyKind> {
    let given = [
        ("--lo", lo.is_some()),
        ("--hi", hi.is_some()),
        ("--fraction", fraction.is_some()),
        ("--classes", classes.is_some()),
        ("--epochs", epochs.is_some()),
    ];
    let name = kind
        .to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default();
    let allowed: &[&str] = match kind {
        KindArg::Full => &[],
        KindArg::RandomAll => &["--fraction"],
        KindArg::HalfClasses => &["--fraction", "--classes"],
        KindArg::Quantile => &["--lo", "--hi"],
        KindArg::FewerEpochs => &["--epochs"],
    };
    if let Some((flag, _)) = given.iter().find(|(f, set)| *set && !allowed.contains(f)) {
        return usage(format!("{flag} does not apply to --kind {name}"));
    }
    let need = |v: Option<f64>, flag: &str| match v {
        Some(v) => Ok(v),
        None => usage(format!("--kind {name} requires {flag}")),
    };
    Ok(match kind {
        KindArg::Full => ProxyKind::Full,
        KindArg::RandomAll => ProxyKind::RandomAll {
            fraction: need(fraction, "--fraction")?,
        },
        KindArg::HalfClasses => ProxyKind::HalfClasses {
            classes: classes.map(|c| c.into_iter().collect()),
            fraction: fraction.unwrap_or(1.0),
        },
        KindArg::Quantile => ProxyKind::Quantile {
            lo: need(lo, "--lo")?,
            hi: need(hi, "--hi")?,
        },
        KindArg::FewerEpochs => match epochs {
            Some(epochs) => ProxyKind::FewerEpochs { epochs },
            None => return usage("--kind fewer_epochs requires --epochs"),
        },
    })
}

fn make_proxy(
    data: &Path,
    scores: Option<&Path>,
    kind: ProxyKind,
    seed: u64,
    target_epochs: usize,
    out: &Path,
    args: &SplitArgs,
) -> Outcome {
    let mut inputs = vec![data];
    inputs.extend(scores);
    distinct(&inputs, &[out])?;
    let (train, val) = load_split(data, args)?;
    let table = match (&kind, scores) {
        (ProxyKind::Quantile { .. }, Some(path)) => {
            let table = DifficultyTable::load(path)?;
            if table.dataset_id != train.id() {
                log::warn!(
                    "difficulty table was computed for {:?}, dataset is {:?}",
                    table.dataset_id,
                    train.id()
                );
            }
            Some(table)
        }
        _ => None,
    };
    let manifest = build_proxy(
        &train,
        &val,
        &ProxySpec::new(kind, seed),
        table.as_ref(),
        target_epochs,
    )?;
    let mut staging = Staging::near(out)?;
    let staged = staging.file(out);
    manifest.save(&staged)?;
    staging.commit()?;
    log::info!(
        "{}: {} train examples, relative cost {}",
        manifest.proxy_id,
        manifest.train_ids.len(),
        manifest.relative_cost
    );
    Ok(())
}

fn load_manifests(dir: &Path) -> anyhow::Result<Vec<ProxyManifest>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .with_context(|| format!("reading {}", dir.display()))?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths
        .iter()
        .map(|p| {
            ProxyManifest::load(p).with_context(|| format!("loading manifest {}", p.display()))
        })
        .collect()
}

fn run_grid(
    data: &Path,
    grid_path: &Path,
    proxies_dir: Option<&Path>,
    out: &Path,
    parallel: usize,
    dry_run: bool,
    args: &SplitArgs,
) -> Outcome {
    if parallel == 0 {
        return usage("--parallel must be at least 1");
    }
    distinct(&[data, grid_path], &[out])?;
    let spec: GridSpec = read_json(grid_path)?;
    let grid: Vec<HyperparamConfig> = generate_grid_entries(&spec)?
        .into_iter()
        .map(|e| e.config)
        .collect();
    let (train, val) = load_split(data, args)?;

    let mut manifests = match proxies_dir {
        Some(dir) => load_manifests(dir)?,
        None => Vec::new(),
    };
    if !manifests.iter().any(ProxyManifest::is_full) {
        let full = build_proxy(&train, &val, &ProxySpec::full(), None, spec.defaults.epochs)?;
        manifests.insert(0, full);
    }
    for m in &manifests {
        train
            .subset(&m.train_ids)
            .and_then(|_| val.subset(&m.val_ids))
            .with_context(|| {
                format!("proxy {} does not match this dataset and split", m.proxy_id)
            })?;
    }
    let tasks = [DatasetTask {
        id: train.id().to_string(),
        train,
        val,
        proxies: manifests,
    }];

    if dry_run {
        let cells = plan(&tasks, &grid, args.global_seed)?;
        println!("key\tepochs\ttrain_examples\tcost_units\tseed");
        let mut total = 0.0;
        for c in &cells {
            println!(
                "{}\t{}\t{}\t{}\t{}",
                c.key(),
                c.epochs,
                c.train_examples,
                c.cost_units,
                c.seed
            );
            total += c.cost_units;
        }
        println!(
            "# {} runs, {} cost units (example-epochs)",
            cells.len(),
            total
        );
        return Ok(());
    }

    let mut store = ResultStore::open(out)?;
    let summary = run_matrix(&tasks, &grid, parallel, args.global_seed, &mut store)?;
    log::info!(
        "{} runs completed, {} already present in {}",
        summary.completed,
        summary.skipped,
        out.display()
    );
    Ok(())
}

fn analyze(
    results: &Path,
    out: &Path,
    good_rule: &str,
    epoch_corr: bool,
    consistency: Option<&str>,
    grid_path: Option<&Path>,
) -> Outcome {
    let rule: GoodRule = match good_rule.parse() {
        Ok(r) => r,
        Err(e) => return usage(format!("--good-rule: {e}")),
    };
    let split = match consistency.map(SplitSpec::parse).transpose() {
        Ok(s) => s,
        Err(e) => return usage(format!("--consistency: {e}")),
    };
    if matches!(split, Some(SplitSpec::Field(_))) && grid_path.is_none() {
        return usage("--consistency field:NAME requires --grid");
    }
    let sidecar_path = analysis::sidecar_path(out);
    let mut inputs = vec![results];
    inputs.extend(grid_path);
    distinct(&inputs, &[out, &sidecar_path])?;

    let records = ResultStore::load(results)?.into_records();
    if records.is_empty() {
        return Err(anyhow::anyhow!("{} holds no results", results.display()).into());
    }
    let rows = quality_report(&records, rule, None)?;
    let entries = match grid_path {
        Some(p) => Some(generate_grid_entries(&read_json(p)?)?),
        None => None,
    };
    let sidecar = AnalysisSidecar {
        good_rule: rule,
        scatter: analysis::scatter(&records)?,
        epochs: if epoch_corr {
            analysis::epoch_series(&records)?
        } else {
            Vec::new()
        },
        consistency: match &split {
            Some(s) => analysis::consistency(s, &rows, &records, rule, entries.as_deref())?,
            None => Vec::new(),
        },
    };

    let mut staging = Staging::near(out)?;
    let staged = staging.file(out);
    let file =
        std::fs::File::create(&staged).with_context(|| format!("writing {}", out.display()))?;
    write_report_to(&rows, file)?;
    write_text(
        &mut staging,
        &sidecar_path,
        &(serde_json::to_string_pretty(&sidecar)? + "\n"),
    )?;
    staging.commit()?;
    log::info!("{} strategies written to {}", rows.len(), out.display());
    Ok(())
}

fn csv_text<const N: usize>(
    header: [&str; N],
    rows: impl IntoIterator<Item = [String; N]>,
) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn report_cmd(report: &Path, out_dir: &Path) -> Outcome {
    let rows = read_report(report)?;
    let sidecar = analysis::load(report)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let quality = csv_text(
        [
            "dataset",
            "strategy",
            "relative_cost",
            "r2",
            "spearman_good",
            "cost_adjusted",
            "n_configs",
        ],
        rows.iter().map(|r| {
            [
                r.dataset.clone(),
                r.strategy.clone(),
                num(r.relative_cost),
                num(r.r2),
                num(r.spearman_good),
                num(r.cost_adjusted),
                r.n_configs.to_string(),
            ]
        }),
    )?;
    let scatter = csv_text(
        [
            "dataset",
            "strategy",
            "config_id",
            "proxy_acc",
            "target_acc",
            "proxy_z",
            "target_z",
        ],
        sidecar.scatter.iter().flat_map(analysis::scatter_rows),
    )?;
    let epochs = csv_text(
        ["dataset", "epoch", "pearson", "winrate"],
        sidecar.epochs.iter().flat_map(|s| {
            s.correlation
                .iter()
                .zip(&s.winrate)
                .enumerate()
                .map(|(e, (c, w))| [s.dataset.clone(), (e + 1).to_string(), opt(*c), opt(*w)])
        }),
    )?;

    let mut staging = Staging::near(&out_dir.join("quality_vs_cost.csv"))?;
    write_text(&mut staging, &out_dir.join("quality_vs_cost.csv"), &quality)?;
    write_text(&mut staging, &out_dir.join("scatter.csv"), &scatter)?;
    write_text(
        &mut staging,
        &out_dir.join("epoch_correlation.csv"),
        &epochs,
    )?;
    staging.commit()?;
    Ok(())
}
