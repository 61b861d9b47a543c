use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use equisig::backtest::{read_trade_log_csv, BacktestReport};
use equisig::evaluation::{read_metrics_csv, EvaluationReport};
use equisig::pca::{read_ranking_csv, read_variance_csv};
use equisig::transform::read_dataset_csv;
use equisig::{ModelDocument, PcaRanking};

fn equisig(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_equisig"));
    cmd.args(args).env_remove("EQUISIG_OUT");
    if let Some(dir) = env_out {
        cmd.env("EQUISIG_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn synth(dir: &Path) -> PathBuf {
    let data = dir.join("market.csv");
    let out = equisig(
        &[
            "synth",
            "--output",
            data.to_str().unwrap(),
            "--tickers",
            "4",
            "--days",
            "140",
        ],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_writes_parseable_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out_dir = dir.path().join("out");
    let out = equisig(&["pipeline", "--data", s(&data), "--out", s(&out_dir)], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    for stage in ["[transform]", "[evaluate]", "[rank]", "[select]", "[backtest]"] {
        assert!(stdout.contains(stage), "{stdout}");
    }

    let open = |name: &str| fs::File::open(out_dir.join(name)).unwrap();
    let ds = read_dataset_csv(open("dataset.csv")).unwrap();
    assert_eq!(ds.n_features(), 28);
    assert_eq!(read_metrics_csv(open("metrics.csv")).unwrap().len(), 10);
    assert_eq!(read_metrics_csv(open("metrics_selected.csv")).unwrap().len(), 10);
    let reports: Vec<EvaluationReport> =
        serde_json::from_str(&fs::read_to_string(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(reports[0].horizons.len(), 10);
    assert_eq!(read_ranking_csv(open("ranking.csv")).unwrap().len(), 28);
    assert_eq!(read_variance_csv(open("variance.csv")).unwrap().len(), 28);
    let ranking: PcaRanking = serde_json::from_str(&fs::read_to_string(out_dir.join("ranking.json")).unwrap()).unwrap();
    let selected = fs::read_to_string(out_dir.join("selected_features.txt")).unwrap();
    assert_eq!(selected.lines().collect::<Vec<_>>(), ranking.selected);
    let model = ModelDocument::from_json(&fs::read_to_string(out_dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(model.horizon, 10);
    for t in ["TK00", "TK01", "TK02", "TK03"] {
        let trades = read_trade_log_csv(open(&format!("trades_{t}.csv"))).unwrap();
        let report: BacktestReport =
            serde_json::from_str(&fs::read_to_string(out_dir.join(format!("backtest_{t}.json"))).unwrap()).unwrap();
        assert_eq!(trades, report.trades);
    }
    let run = fs::read_to_string(out_dir.join("run.json")).unwrap();
    assert!(run.contains("\"split_seed\": 42"));
}

#[test]
fn pipeline_matches_individual_commands() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let whole = dir.path().join("whole");
    let steps = dir.path().join("steps");
    assert!(equisig(
        &["pipeline", "--data", s(&data), "--out", s(&whole), "--seed", "5"],
        None
    )
    .status
    .success());
    for cmd in ["transform", "evaluate", "rank", "backtest"] {
        let out = equisig(&[cmd, "--data", s(&data), "--out", s(&steps), "--seed", "5"], None);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let mut compared = 0;
    for entry in fs::read_dir(&steps).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(steps.join(&name)).unwrap(),
            fs::read(whole.join(&name)).unwrap(),
            "{name:?} differs"
        );
        compared += 1;
    }
    assert!(compared >= 13);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let env_dir = dir.path().join("from-env");
    let out = equisig(&["transform", "--data", s(&data)], Some(&env_dir));
    assert!(out.status.success());
    assert!(env_dir.join("dataset.csv").is_file());

    let flag_dir = dir.path().join("from-flag");
    let out = equisig(
        &["transform", "--data", s(&data), "--out", s(&flag_dir)],
        Some(&env_dir),
    );
    assert!(out.status.success());
    assert!(flag_dir.join("dataset.csv").is_file());
}

#[test]
fn by_sector_emits_one_block_per_sector() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out_dir = dir.path().join("out");
    let out = equisig(
        &["evaluate", "--data", s(&data), "--out", s(&out_dir), "--by-sector"],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_metrics_csv(fs::File::open(out_dir.join("metrics.csv")).unwrap()).unwrap();
    let sectors: std::collections::BTreeSet<_> = rows.iter().map(|r| r.sector.clone()).collect();
    assert!(sectors.contains("ALL"));
    assert!(sectors.len() >= 2);
    assert_eq!(rows.len() % 10, 0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = equisig(&["frobnicate"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frobnicate"));

    let missing = dir.path().join("nope.csv");
    let out = equisig(&["evaluate", "--data", s(&missing), "--out", s(dir.path())], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));

    let out = equisig(
        &["evaluate", "--data", "x.csv", "--trees", "0", "--out", s(dir.path())],
        None,
    );
    assert_eq!(out.status.code(), Some(1));

    let out = equisig(&["evaluate"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--data"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "date,ticker\n2020-01-01,A\n").unwrap();
    let out = equisig(&["transform", "--data", s(&bad), "--out", s(dir.path())], None);
    assert_eq!(out.status.code(), Some(2));

    let data = synth(dir.path());
    let blocker = dir.path().join("file-not-dir");
    fs::write(&blocker, "x").unwrap();
    let out = equisig(
        &["transform", "--data", s(&data), "--out", s(&blocker.join("sub"))],
        None,
    );
    assert_eq!(out.status.code(), Some(2));

    let out = equisig(&["--help"], None);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn constant_input_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    // a dataset whose features never vary has no variance to decompose
    let ds_path = dir.path().join("flat.csv");
    let ds_out = dir.path().join("ds");
    assert!(equisig(&["transform", "--data", s(&data), "--out", s(&ds_out)], None)
        .status
        .success());
    let ds_text = fs::read_to_string(ds_out.join("dataset.csv")).unwrap();
    let mut ds_lines = ds_text.lines();
    let mut flat = vec![ds_lines.next().unwrap().to_string()];
    for line in ds_lines {
        let cells: Vec<&str> = line.split(',').collect();
        let mut row: Vec<String> = cells[..2].iter().map(|c| c.to_string()).collect();
        row.extend((0..28).map(|_| "1".to_string()));
        row.extend(cells[30..].iter().map(|c| c.to_string()));
        flat.push(row.join(","));
    }
    fs::write(&ds_path, flat.join("\n") + "\n").unwrap();
    let out = equisig(&["rank", "--data", s(&ds_path), "--out", s(dir.path())], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
