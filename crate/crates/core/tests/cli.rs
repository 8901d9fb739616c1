use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use frontier_lab::harness::config::ExperimentParams;
use frontier_lab::harness::ExperimentConfig;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frontier-lab"))
        .args(args)
        .env("FRONTIER_LAB_THREADS", "2")
        .output()
        .unwrap()
}

fn only_run_dir(root: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

#[test]
fn passing_run_exits_zero_and_stamps_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(&["cancellation", "--reps", "3", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[PASS] criterion 7 sign_agreement_rate"));

    let dir = only_run_dir(tmp.path());
    let mut cfg = ExperimentConfig::default_for("cancellation").unwrap();
    cfg.repetitions = 3;
    let hash = cfg.hash();
    assert_eq!(dir.file_name().unwrap().to_str().unwrap(), format!("cancellation-{}", &hash[..16]));
    let mut kinds = Vec::new();
    for f in fs::read_dir(&dir).unwrap() {
        let f = f.unwrap().path();
        let text = fs::read_to_string(&f).unwrap();
        let ext = f.extension().unwrap().to_str().unwrap().to_string();
        match ext.as_str() {
            "csv" => assert_eq!(text.lines().next().unwrap(), format!("# config_hash={hash}")),
            "svg" => assert!(text.contains(&format!("config_hash={hash}"))),
            "json" => {
                let v: serde_json::Value = serde_json::from_str(&text).unwrap();
                let stamped = v.get("config_hash").and_then(|h| h.as_str()) == Some(hash.as_str());
                assert!(stamped || ExperimentConfig::from_json(&text).unwrap().hash() == hash, "{}", f.display());
            }
            other => panic!("unexpected output {other}"),
        }
        kinds.push(ext);
    }
    for ext in ["csv", "svg", "json"] {
        assert!(kinds.iter().any(|k| k == ext));
    }
}

#[test]
fn failing_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(&["cancellation", "--b-z", "1", "--reps", "2", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL]"));
}

#[test]
fn usage_and_data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_str().unwrap();
    let missing = tmp.path().join("nope.csv");
    let degenerate = data("equal_mean_prices.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec!["cancellation", "--no-such-flag"],
        vec!["calibration", "--seed", "abc"],
        vec!["attenuation", "--normalization", "sideways", "--out", root],
        vec!["real-data-frontier", "--out", root],
        vec!["real-data-frontier", "--csv", missing.to_str().unwrap(), "--out", root],
        vec!["real-data-frontier", "--csv", degenerate.to_str().unwrap(), "--n-days", "299", "--out", root],
        vec!["real-data-frontier", "--csv", degenerate.to_str().unwrap(), "--n-days", "5000", "--out", root],
        vec!["render", "--report", missing.to_str().unwrap()],
    ];
    for args in cases {
        let out = cli(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default_for("calibration").unwrap();
    cfg.seed = 7;
    let path = tmp.path().join("cfg.json");
    fs::write(&path, cfg.canonical_json()).unwrap();
    let out_root = tmp.path().join("runs");
    let out = cli(&[
        "calibration",
        "--config",
        path.to_str().unwrap(),
        "--seed",
        "9",
        "--powers",
        "0.5,1,2",
        "--out",
        out_root.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    cfg.seed = 9;
    if let ExperimentParams::Calibration(s) = &mut cfg.params {
        s.powers = vec![0.5, 1.0, 2.0];
    }
    let dir = only_run_dir(&out_root);
    assert!(dir.ends_with(cfg.run_dir_name()));
    let written = ExperimentConfig::load(&dir.join("config.json")).unwrap();
    assert_eq!(written.seed, 9);
    assert_eq!(written.hash(), cfg.hash());
}

#[test]
fn config_for_another_experiment_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cfg.json");
    fs::write(&path, ExperimentConfig::default_for("alignment").unwrap().canonical_json()).unwrap();
    let out = cli(&["calibration", "--config", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn render_reproduces_the_written_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    assert!(cli(&["alignment", "--out", runs.to_str().unwrap()]).status.success());
    let dir = only_run_dir(&runs);
    let again = tmp.path().join("again");
    let out = cli(&["render", "--report", dir.join("report.json").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(out.status.success());
    let mut count = 0;
    for f in fs::read_dir(&again).unwrap() {
        let f = f.unwrap().path();
        assert_eq!(fs::read(&f).unwrap(), fs::read(dir.join(f.file_name().unwrap())).unwrap());
        count += 1;
    }
    assert!(count >= 2);

    let single = tmp.path().join("single");
    let out = cli(&[
        "render",
        "--report",
        dir.join("report.json").to_str().unwrap(),
        "--kind",
        "alignment-sharpe",
        "--out",
        single.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_dir(&single).unwrap().count(), 1);
    let bad = cli(&["render", "--report", dir.join("report.json").to_str().unwrap(), "--kind", "pie"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bundled_fixtures_match_the_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let walk = tmp.path().join("walk.csv");
    assert!(cli(&["fixture", "--out", walk.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(&walk).unwrap(), fs::read(data("synthetic_prices.csv")).unwrap());

    let flat = tmp.path().join("flat.csv");
    let out = cli(&["fixture", "--out", flat.to_str().unwrap(), "--tickers", "5", "--days", "300", "--equal-means"]);
    assert!(out.status.success());
    assert_eq!(fs::read(&flat).unwrap(), fs::read(data("equal_mean_prices.csv")).unwrap());
}

#[test]
fn real_data_run_reports_the_input_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = data("synthetic_prices.csv");
    let out = cli(&["real-data-frontier", "--csv", csv.to_str().unwrap(), "--n-assets", "4", "--n-days", "500", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(only_run_dir(tmp.path()).join("report.json")).unwrap()).unwrap();
    let digest = report["summary"]["data_sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert_eq!(report["summary"]["n_assets"], 4);
    assert_eq!(report["summary"]["n_days"], 500);
}

#[test]
fn lagged_logistic_signal_drives_a_convex_frontier() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = data("synthetic_prices.csv");
    let out = cli(&["real-data-frontier", "--csv", csv.to_str().unwrap(), "--signal", "lagged-logistic", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(only_run_dir(tmp.path()).join("report.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["signal"], "lagged-logistic");
    let bad = cli(&["real-data-frontier", "--csv", csv.to_str().unwrap(), "--signal", "oracle", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}
