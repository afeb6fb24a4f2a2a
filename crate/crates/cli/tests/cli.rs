use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proxybench::orchestrator::ResultStore;
use proxybench::RunRecord;

const SPEC: &str = r#"{"class_count":10,"feature_dim":6,"examples_per_class":30,"class_separation":1.5,
"noise_lo":0.5,"noise_hi":1.5,"label_flip_fraction":0.05,"seed":4}"#;

const GRID: &str = r#"{"defaults":{"depth":"default","learning_rate":0.003,"stem_width_1":12,
"stem_width_2":12,"augment_prob":0.5,"optimizer":"adam","label_smoothing":true,"epochs":3,
"batch_size":32,"seed":0},
"variations":{"learning_rate":[0.001,0.01,0.03],"optimizer":["sgd","rmsprop"],
"depth":["small","large"],"stem_width_1":[4,24]}}"#;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_proxybench"));
    cmd.env_remove("PROXYBENCH_SEED");
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn proxybench")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Dataset, scores, three proxy manifests and a 10-config grid.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("spec.json"), SPEC).unwrap();
    std::fs::write(d.join("grid.json"), GRID).unwrap();
    std::fs::create_dir(d.join("proxies")).unwrap();
    ok(d, &["gen-data", "--spec", "spec.json", "--out", "data.csv"]);
    ok(d, &["score", "--data", "data.csv", "--out", "scores.csv"]);
    ok(
        d,
        &[
            "make-proxy",
            "--data",
            "data.csv",
            "--kind",
            "random_all",
            "--fraction",
            "0.5",
            "--target-epochs",
            "3",
            "--out",
            "proxies/random.json",
        ],
    );
    ok(
        d,
        &[
            "make-proxy",
            "--data",
            "data.csv",
            "--scores",
            "scores.csv",
            "--kind",
            "quantile",
            "--lo",
            "0.5",
            "--hi",
            "1.0",
            "--target-epochs",
            "3",
            "--out",
            "proxies/easy.json",
        ],
    );
    ok(
        d,
        &[
            "make-proxy",
            "--data",
            "data.csv",
            "--kind",
            "fewer_epochs",
            "--epochs",
            "1",
            "--target-epochs",
            "3",
            "--out",
            "proxies/ep1.json",
        ],
    );
    dir
}

fn run_grid(d: &Path, out: &str, parallel: &str) {
    ok(
        d,
        &[
            "run-grid",
            "--data",
            "data.csv",
            "--grid",
            "grid.json",
            "--proxies",
            "proxies",
            "--out",
            out,
            "--parallel",
            parallel,
        ],
    );
}

fn without_wall(path: &Path) -> Vec<RunRecord> {
    let mut records: Vec<RunRecord> = ResultStore::load(path)
        .unwrap()
        .into_records()
        .into_iter()
        .map(|r| RunRecord { wall_ms: 0, ..r })
        .collect();
    records.sort_by_key(|r| r.key());
    records
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn full_pipeline_reports_every_strategy() {
    let dir = workspace();
    let d = dir.path();
    run_grid(d, "results.jsonl", "4");
    assert_eq!(
        ResultStore::load(&d.join("results.jsonl")).unwrap().len(),
        40
    );

    ok(
        d,
        &[
            "analyze",
            "--results",
            "results.jsonl",
            "--out",
            "report.csv",
            "--epoch-corr",
            "--consistency",
            "field:learning_rate",
            "--grid",
            "grid.json",
        ],
    );
    let report = read(d.join("report.csv"));
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(
        lines[0],
        "strategy,dataset,r2,spearman_good,cost_adjusted,relative_cost,n_configs"
    );
    assert_eq!(lines.len(), 5, "{report}");
    let strategies: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(strategies, ["ep1", "full", "hard-0.5-1.0", "random-0.5"]);
    assert!(
        lines[1].ends_with(&format!(",{},10", 1.0 / 3.0)),
        "{report}"
    );

    ok(d, &["report", "--report", "report.csv", "--out", "plots"]);
    assert_eq!(read(d.join("plots/quality_vs_cost.csv")).lines().count(), 5);
    assert_eq!(
        read(d.join("plots/scatter.csv")).lines().count(),
        1 + 4 * 10
    );
    let epochs = read(d.join("plots/epoch_correlation.csv"));
    assert_eq!(epochs.lines().count(), 1 + 3, "{epochs}");

    // same inputs, same bytes
    let first = (
        read(d.join("report.csv")),
        read(d.join("report.csv.analysis.json")),
    );
    ok(
        d,
        &[
            "analyze",
            "--results",
            "results.jsonl",
            "--out",
            "report.csv",
            "--epoch-corr",
            "--consistency",
            "field:learning_rate",
            "--grid",
            "grid.json",
        ],
    );
    assert_eq!(
        first,
        (
            read(d.join("report.csv")),
            read(d.join("report.csv.analysis.json"))
        )
    );
    let leftovers: Vec<_> = std::fs::read_dir(d)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".proxybench-"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn interrupted_grid_resumes_to_identical_results() {
    let dir = workspace();
    let d = dir.path();
    run_grid(d, "reference.jsonl", "1");

    // keep 7 complete lines and half of the 8th
    let text = read(d.join("reference.jsonl"));
    let lines: Vec<&str> = text.lines().collect();
    let mut partial: String = lines[..7].iter().map(|l| format!("{l}\n")).collect();
    partial.push_str(&lines[7][..lines[7].len() / 2]);
    std::fs::write(d.join("resumed.jsonl"), partial).unwrap();

    run_grid(d, "resumed.jsonl", "3");
    assert_eq!(
        without_wall(&d.join("resumed.jsonl")),
        without_wall(&d.join("reference.jsonl"))
    );
    // a second rerun has nothing left to do
    run_grid(d, "resumed.jsonl", "3");
    assert_eq!(read(d.join("resumed.jsonl")).lines().count(), 40);
}

#[test]
fn usage_and_runtime_exit_codes() {
    let dir = workspace();
    let d = dir.path();
    let code = |args: &[&str]| run(d, args).status.code();

    let out = run(
        d,
        &[
            "make-proxy",
            "--data",
            "data.csv",
            "--kind",
            "quantile",
            "--lo",
            "0.9",
            "--hi",
            "1.0",
            "--out",
            "q.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--scores"));
    assert!(!d.join("q.json").exists());

    assert_eq!(code(&["frobnicate"]), Some(1));
    assert_eq!(
        code(&[
            "make-proxy",
            "--data",
            "data.csv",
            "--kind",
            "random_all",
            "--out",
            "r.json"
        ]),
        Some(1)
    );
    assert_eq!(
        code(&[
            "make-proxy",
            "--data",
            "data.csv",
            "--kind",
            "full",
            "--lo",
            "0.1",
            "--out",
            "r.json"
        ]),
        Some(1)
    );
    assert_eq!(
        code(&[
            "analyze",
            "--results",
            "x.jsonl",
            "--out",
            "r.csv",
            "--good-rule",
            "best:3"
        ]),
        Some(1)
    );
    assert_eq!(
        code(&[
            "analyze",
            "--results",
            "x.jsonl",
            "--out",
            "r.csv",
            "--consistency",
            "field:depth"
        ]),
        Some(1)
    );
    assert_eq!(
        code(&[
            "run-grid",
            "--data",
            "data.csv",
            "--grid",
            "grid.json",
            "--out",
            "data.csv"
        ]),
        Some(1)
    );
    assert_eq!(code(&["--help"]), Some(0));

    assert_eq!(
        code(&["score", "--data", "missing.csv", "--out", "s.csv"]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "make-proxy",
            "--data",
            "data.csv",
            "--kind",
            "random_all",
            "--fraction",
            "1e-9",
            "--out",
            "r.json"
        ]),
        Some(0)
    );
    std::fs::write(d.join("bad.jsonl"), "{\"not\": \"a record\"}\n").unwrap();
    assert_eq!(
        code(&["analyze", "--results", "bad.jsonl", "--out", "r.csv"]),
        Some(2)
    );
    assert!(!d.join("r.csv").exists());
}

#[test]
fn dry_run_plans_without_training_and_honours_seed_env() {
    let dir = workspace();
    let d = dir.path();
    let with_proxies = [
        "run-grid",
        "--data",
        "data.csv",
        "--grid",
        "grid.json",
        "--proxies",
        "proxies",
        "--out",
        "plan.jsonl",
        "--dry-run",
    ];
    let planned = String::from_utf8(ok(d, &with_proxies).stdout).unwrap();
    assert_eq!(planned.lines().count(), 1 + 40 + 1);
    assert!(planned.lines().last().unwrap().contains("40 runs"));
    assert!(!d.join("plan.jsonl").exists());

    // manifests are tied to the split, so vary the seed with the full proxy only
    let args = [
        "run-grid",
        "--data",
        "data.csv",
        "--grid",
        "grid.json",
        "--out",
        "plan.jsonl",
        "--dry-run",
    ];
    let plain = String::from_utf8(ok(d, &args).stdout).unwrap();
    assert!(plain.lines().last().unwrap().contains("10 runs"));

    let mut flagged = args.to_vec();
    flagged.extend(["--global-seed", "5"]);
    let by_flag = ok(d, &flagged).stdout;
    let by_env = bin()
        .current_dir(d)
        .args(args)
        .env("PROXYBENCH_SEED", "5")
        .output()
        .unwrap()
        .stdout;
    assert_eq!(by_flag, by_env);
    assert_ne!(by_flag, plain.into_bytes());
}
