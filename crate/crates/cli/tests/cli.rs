use std::path::Path;
use std::process::{Command, Output};

use chrono::NaiveDate;
use quake_hmm::simulation::simulate;
use quake_hmm::{presets, EvalConfig, HmmParams64, SimConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quake-hmm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Writes the two-state parameters and a catalog drawn from them.
fn setup(dir: &Path, n_events: usize) {
    let p: HmmParams64 = presets::two_state();
    std::fs::write(dir.join("params.json"), serde_json::to_string(&p).unwrap()).unwrap();
    let sim = simulate(&SimConfig { epoch: date(1980, 1, 1), ..SimConfig::new(p, n_events, 7) }).unwrap();
    std::fs::write(dir.join("catalog.csv"), sim.to_csv()).unwrap();
}

#[test]
fn missing_catalog_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = run(&["fit", "--catalog", s(&missing), "--n-states", "2", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 10);
    let params = dir.path().join("params.json");
    let (a, b, one) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("one.csv"));
    for out in [&a, &b] {
        let o =
            run(&["simulate", "--params", s(&params), "--n-events", "600", "--seed", "42", "--out", s(out), "--quiet"]);
        assert!(o.status.success());
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.lines().next().unwrap().contains("true_state"));
    assert_eq!(text.lines().count(), 601);

    let o = run(&["simulate", "--params", s(&params), "--n-events", "1", "--out", s(&one), "--quiet"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&one).unwrap().lines().count(), 2);
}

#[test]
fn fit_writes_sorted_params() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 600);
    let cat = dir.path().join("catalog.csv");
    let o = run(&["fit", "--catalog", s(&cat), "--n-states", "2", "--out-dir", s(dir.path()), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p: HmmParams64 =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("params.json")).unwrap()).unwrap();
    assert!(p.lambda[0] < p.lambda[1]);
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.lines().count() > 2);
    assert!(dir.path().join("fit.json").exists());

    let one = dir.path().join("one");
    let o = run(&["fit", "--catalog", s(&cat), "--n-states", "1", "--out-dir", s(&one), "--quiet"]);
    assert!(o.status.success());
    let p: HmmParams64 = serde_json::from_str(&std::fs::read_to_string(one.join("params.json")).unwrap()).unwrap();
    let (c, _) = quake_hmm::catalog::load_catalog(&cat, 4.0).unwrap();
    let obs = quake_hmm::catalog::to_observations::<f64>(&c).unwrap();
    let mean = obs.interevent_times.iter().sum::<f64>() / obs.len() as f64;
    assert!((p.lambda[0] - mean).abs() < 1e-9 * mean);
}

#[test]
fn forecast_prints_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 50);
    let (params, cat) = (dir.path().join("params.json"), dir.path().join("catalog.csv"));
    // Long after the last event the long-wait state dominates.
    let o =
        run(&["forecast", "--params", s(&params), "--catalog", s(&cat), "--date", "2100-01-01", "--horizons", "1,100"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("t=49 w="));
    assert!(text.contains("d=[0.000000, 1.000000]"));
    assert!(text.contains("N=1 P=0.046288"));
    assert!(text.contains("N=100 P=0.991256"));

    let o = run(&["forecast", "--params", s(&params), "--catalog", s(&cat), "--date", "1970-01-01"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn evaluate_single_horizon() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 400);
    let mut config = EvalConfig::new(date(1982, 6, 16), date(1984, 6, 15));
    config.horizons = vec![1.0];
    let eval = dir.path().join("eval.json");
    std::fs::write(&eval, serde_json::to_string(&config).unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "evaluate",
        "--params",
        s(&dir.path().join("params.json")),
        "--catalog",
        s(&dir.path().join("catalog.csv")),
        "--eval-config",
        s(&eval),
        "--out-dir",
        s(&out),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> =
        std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["daily_forecasts.csv", "manifest.json", "sorted_N1.csv", "summary.txt", "summary_N1.csv"]);
    let summary = std::fs::read_to_string(out.join("summary_N1.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "evaluate");
    assert_eq!(manifest["input_digests"]["catalog"].as_str().unwrap().len(), 64);

    let early = EvalConfig::new(date(1979, 1, 1), date(1979, 2, 1));
    std::fs::write(&eval, serde_json::to_string(&early).unwrap()).unwrap();
    let o = run(&[
        "evaluate",
        "--params",
        s(&dir.path().join("params.json")),
        "--catalog",
        s(&dir.path().join("catalog.csv")),
        "--eval-config",
        s(&eval),
        "--out-dir",
        s(&out),
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn regions_writes_partition() {
    let dir = tempfile::tempdir().unwrap();
    let cat = dir.path().join("cat.csv");
    let mut csv = String::from("date,time,magnitude,latitude,longitude\n");
    for i in 0..40 {
        let u = i as f64 / 10.0 - 2.0;
        csv.push_str(&format!(
            "2000-01-{:02},00:00:00,4.5,{:.4},{:.4}\n",
            i % 28 + 1,
            35.0 + 0.5 * u + 0.1 * (i % 3) as f64,
            -118.0 + u
        ));
    }
    std::fs::write(&cat, csv).unwrap();
    let out = dir.path().join("partition.json");
    let o = run(&["regions", "--catalog", s(&cat), "--mode", "north-south", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p: quake_hmm::RegionPartition = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(p.n_regions(), 2);
    assert!(p.axis[0] > 0.0);
}

#[test]
fn version_flag() {
    let o = run(&["--version"]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains(env!("CARGO_PKG_VERSION")));
}
