use std::path::Path;
use std::process::{Command, Output};

fn tidybench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tidybench")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tidybench(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthetic data plus a small train split.
fn workspace(dir: &Path) {
    ok(&["synth", "--out", p(dir), "--seed", "3", "--dim", "8"]);
    let eps = dir.join("eps");
    ok(&[
        "gen", "--scene", p(&dir.join("scenes")), "--prefs", p(&dir.join("prefs.json")), "--catalog", p(&dir.join("catalog.json")),
        "--counts", "train=24", "--seed", "3", "--out", p(&eps),
    ]);
}

fn run(dir: &Path, out: &str, extra: &[&str]) -> String {
    let mut args = vec![
        "run".to_string(),
        "--scene".into(),
        p(&dir.join("scenes")).into(),
        "--episodes".into(),
        p(&dir.join("eps/train.jsonl")).into(),
        "--prefs".into(),
        p(&dir.join("prefs.json")).into(),
        "--out".into(),
        p(&dir.join(out)).into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![("results.jsonl".to_string(), std::fs::read(dir.join("results.jsonl")).unwrap())];
    let mut traj: Vec<_> = std::fs::read_dir(dir.join("trajectories")).unwrap().map(|e| e.unwrap().path()).collect();
    traj.sort();
    for t in traj {
        out.push((t.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&t).unwrap()));
    }
    out
}

#[test]
fn serial_and_parallel_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path());
    let args = ["--ranker", "random", "--explore", "frontier", "--seed", "11"];
    run(dir.path(), "serial", &[&args[..], &["--jobs", "1"]].concat());
    run(dir.path(), "parallel", &[&args[..], &["--jobs", "8"]].concat());
    run(dir.path(), "again", &[&args[..], &["--jobs", "8"]].concat());
    let serial = read_tree(&dir.path().join("serial"));
    assert_eq!(serial.len(), 25);
    assert_eq!(serial, read_tree(&dir.path().join("parallel")));
    assert_eq!(serial, read_tree(&dir.path().join("again")));
}

#[test]
fn oracle_run_reports_perfect_scores_and_report_has_one_row_per_file() {
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path());
    let table = run(dir.path(), "oo", &["--ranker", "oracle", "--explore", "oracle"]);
    let row = table.lines().nth(1).unwrap();
    let cells: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cells[0], "oracle+oracle");
    for (k, name) in [(2, "ES"), (3, "OS"), (7, "MOC"), (8, "PPE")] {
        assert_eq!(cells[k], "1.00±0.00", "{name} in {row}");
    }
    run(dir.path(), "of", &["--ranker", "oracle", "--explore", "frontier"]);
    run(dir.path(), "ro", &["--ranker", "random", "--explore", "oracle"]);
    run(dir.path(), "rf", &["--ranker", "random", "--explore", "frontier"]);
    let files: Vec<String> = ["oo", "of", "ro", "rf"].iter().map(|d| p(&dir.path().join(d).join("results.jsonl")).to_string()).collect();
    let csv = dir.path().join("report.csv");
    let prefs = dir.path().join("prefs.json");
    let mut args = vec!["report", "--prefs", p(&prefs), "--es-at-k", "3", "--out", p(&csv)];
    args.extend(files.iter().map(String::as_str));
    let text = ok(&args);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with("ES@K")).collect();
    assert_eq!(rows.len(), 5, "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("ES@K")).count(), 4);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 5);
}

#[test]
fn ranker_training_and_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path());
    let model_dir = dir.path().join("model");
    let out = ok(&[
        "train-ranker", "--prefs", p(&dir.path().join("prefs.json")), "--embeddings", p(&dir.path().join("embeddings.txt")),
        "--catalog", p(&dir.path().join("catalog.json")), "--epochs", "20", "--hidden", "16", "--output", "16", "--out", p(&model_dir),
    ]);
    assert!(out.contains("s_L = "), "{out}");
    for f in ["model.json", "train_log.json", "calibration.json"] {
        assert!(model_dir.join(f).exists(), "{f}");
    }
    let eval = ok(&[
        "eval-ranker", "--prefs", p(&dir.path().join("prefs.json")), "--catalog", p(&dir.path().join("catalog.json")),
        "--embeddings", p(&dir.path().join("embeddings.txt")), "--model", p(&model_dir.join("model.json")),
    ]);
    assert_eq!(eval.lines().count(), 4, "{eval}");
    let oracle = ok(&["eval-ranker", "--prefs", p(&dir.path().join("prefs.json")), "--catalog", p(&dir.path().join("catalog.json")), "--ranker", "oracle"]);
    assert!(oracle.lines().skip(1).all(|l| l.contains("1.000")), "{oracle}");
    run(dir.path(), "emb", &["--ranker", "embedding", "--embeddings", p(&dir.path().join("embeddings.txt")), "--model", p(&model_dir.join("model.json")), "--jobs", "4"]);
}

#[test]
fn agreement_prints_both_kappas() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", p(dir.path()), "--scenes", "3", "--objects", "16", "--agreement", "1.0"]);
    let per_object = dir.path().join("kappa.csv");
    let out = ok(&["agreement", "--prefs", p(&dir.path().join("annotations.csv")), "--out", p(&per_object)]);
    assert!(out.contains("kappa (correct/misplaced/implausible): 1.0000"), "{out}");
    assert_eq!(std::fs::read_to_string(per_object).unwrap().lines().count(), 17);
}

#[test]
fn bad_flags_fail_and_name_the_flag() {
    let out = tidybench(&["run", "--ranker", "psychic", "--scene", "x", "--episodes", "y", "--prefs", "z", "--out", "w"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--ranker"));
    let out = tidybench(&["run", "--scene", "/nonexistent.json", "--episodes", "y", "--prefs", "z", "--out", "w"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--scene"));
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path());
    let out = tidybench(&[
        "run", "--scene", p(&dir.path().join("scenes")), "--episodes", p(&dir.path().join("eps/train.jsonl")), "--prefs",
        p(&dir.path().join("prefs.json")), "--ranker", "embedding", "--out", p(&dir.path().join("x")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--embeddings"));
}
