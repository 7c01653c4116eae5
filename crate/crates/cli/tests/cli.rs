use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str], paths: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_latentmpc"));
    cmd.args(args);
    for p in paths {
        cmd.arg(p);
    }
    cmd.output().expect("spawn latentmpc")
}

fn run(cmd: &[&str], paths: &[&Path]) -> Output {
    let out = bin(cmd, paths);
    assert!(out.status.success(), "{cmd:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn manifest(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("m.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn simulate_into(manifest: &Path, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_latentmpc"));
    cmd.arg("simulate").arg("--manifest").arg(manifest).arg("--out").arg(out);
    cmd.output().unwrap()
}

const BENCH_ONLY: &str = "days = 1\n[[scenario]]\nlabel = \"benchmark\"\ncontroller = \"benchmark\"\n";

#[test]
fn identify_recovers_a_stable_envelope_from_synthetic_telemetry() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let out = dir.path().join("fit");
    run(&["synth", "--days", "30", "--out"], &[&csv]);
    run(&["identify", "--out"], &[&out, &csv]);
    let fit = json(&out.join("envelope_fit.json"));
    let alpha = fit["alpha"].as_f64().unwrap();
    assert!(alpha > 0.0 && alpha < 1.0, "alpha {alpha}");
    assert!(fit["r_eff"].as_f64().unwrap() > 0.0);
    assert_eq!(fit["frozen"], Value::Bool(false));
    assert!(out.join("residuals.csv").exists());
}

#[test]
fn identify_echoes_frozen_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let out = dir.path().join("fit");
    run(&["synth", "--days", "5", "--out"], &[&csv]);
    run(&["identify", "--frozen-params", "--out"], &[&out, &csv]);
    let fit = json(&out.join("envelope_fit.json"));
    assert_eq!(fit["alpha"].as_f64(), Some(0.77));
    assert_eq!(fit["r_eff"].as_f64(), Some(0.42));
    assert_eq!(fit["frozen"], Value::Bool(true));
}

#[test]
fn identify_rejects_empty_telemetry_with_input_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    std::fs::write(&csv, "").unwrap();
    let out = bin(&["identify", "--out"], &[&dir.path().join("fit"), &csv]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn one_day_benchmark_run_has_a_single_daily_row() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), BENCH_ONLY);
    let out = dir.path().join("res");
    let o = simulate_into(&m, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let daily = std::fs::read_to_string(out.join("benchmark/daily_summary.csv")).unwrap();
    assert_eq!(daily.lines().count(), 2, "{daily}");
    let cmp = json(&out.join("comparison.json"));
    assert_eq!(cmp["columns"].as_array().unwrap().len(), 1);
    assert!(!out.join("models.json").exists());
    let status = json(&out.join("status.json"));
    assert_eq!(status[0]["status"], "ok");
}

#[test]
fn same_manifest_twice_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), BENCH_ONLY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(simulate_into(&m, &a).status.success());
    assert!(simulate_into(&m, &b).status.success());
    for f in ["comparison.json", "status.json", "manifest.json", "benchmark/telemetry.csv", "benchmark/daily_summary.csv", "benchmark/summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn four_scenario_manifest_populates_four_columns_and_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(
        dir.path(),
        r#"
days = 2
[training]
days = 6
[[scenario]]
label = "benchmark"
controller = "benchmark"
[[scenario]]
label = "latent_cost"
controller = "mpc_latent"
[[scenario]]
label = "sensible_limit"
controller = "mpc_sensible"
mode = "power_limit"
[[scenario]]
label = "latent_limit"
controller = "mpc_latent"
mode = "power_limit"
"#,
    );
    let out = dir.path().join("res");
    let o = simulate_into(&m, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cmp = json(&out.join("comparison.json"));
    let labels: Vec<&str> = cmp["columns"].as_array().unwrap().iter().map(|c| c["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["benchmark", "latent_cost", "sensible_limit", "latent_limit"]);
    assert!(out.join("models.json").exists());
    assert!(out.join("latent_cost/tuned_prices.csv").exists());

    run(&["report"], &[&out]);
    let report = json(&out.join("report/report.json"));
    assert!(report["latent_beats_sensible_on_violations"].is_boolean());
    for f in ["daily.csv", "energy_vs_delta_t.csv", "hourly_power_profile.csv", "indoor_temperature.csv", "violation_histogram.csv"] {
        let text = std::fs::read_to_string(out.join("report").join(f)).unwrap();
        assert!(text.lines().count() > 1, "{f} is empty");
    }
    // two days are too few for a slope fit: the report says so instead of guessing
    assert!(out.join("report/cumulative_savings.csv").exists());
    assert_eq!(report["savings"].as_array().unwrap().len(), 0);
    let notes = report["footnotes"].to_string();
    assert!(notes.contains("latent_cost: savings not estimated"), "{notes}");
}

#[test]
fn filters_keep_the_benchmark_and_matching_arms() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(
        dir.path(),
        "days = 1\n[training]\ndays = 4\n[[scenario]]\nlabel = \"b\"\ncontroller = \"benchmark\"\n\
         [[scenario]]\nlabel = \"s\"\ncontroller = \"mpc_sensible\"\n[[scenario]]\nlabel = \"l\"\ncontroller = \"mpc_latent\"\n",
    );
    let out = dir.path().join("res");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_latentmpc"));
    let o = cmd.arg("simulate").arg("--manifest").arg(&m).arg("--out").arg(&out).args(["--formulation", "latent"]).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cmp = json(&out.join("comparison.json"));
    let labels: Vec<&str> = cmp["columns"].as_array().unwrap().iter().map(|c| c["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["b", "l"]);
}

#[test]
fn failed_training_exits_nonzero_and_keeps_status() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), "days = 1\n[training]\ndays = 1\n[[scenario]]\nlabel = \"l\"\ncontroller = \"mpc_latent\"\n");
    let out = dir.path().join("res");
    let o = simulate_into(&m, &out);
    assert!(matches!(o.status.code(), Some(2) | Some(3)), "{:?}", o.status);
    assert!(out.join("status.json").exists());
    assert!(!out.join("comparison.json").exists());
}

#[test]
fn missing_or_malformed_manifest_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate_into(&dir.path().join("nope.toml"), &dir.path().join("res"));
    assert_eq!(o.status.code(), Some(2));
    let m = manifest(dir.path(), "[[scenario]]\nlabel = \"x\"\ncontroller = \"thermostat\"\n");
    assert_eq!(simulate_into(&m, &dir.path().join("res")).status.code(), Some(2));
}

#[test]
fn report_with_reference_constants_reproduces_the_headline_interval() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), BENCH_ONLY);
    let out = dir.path().join("res");
    assert!(simulate_into(&m, &out).status.success());
    run(&["report", "--paper-constants", "--samples", "200000"], &[&out]);
    let report = json(&out.join("report/report.json"));
    let s = &report["savings"][0];
    let mean = s["mean_pct"].as_f64().unwrap();
    assert!((mean - 14.0).abs() <= 1.0, "{mean}");
    assert!((s["lower_pct"].as_f64().unwrap() - 7.0).abs() <= 1.0);
    assert!((s["upper_pct"].as_f64().unwrap() - 21.0).abs() <= 1.0);
}

#[test]
fn report_on_an_empty_directory_lists_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["report"], &[dir.path()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("comparison.json"));
}

#[test]
fn hot_humid_week_report_records_the_violation_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let m = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests/hot_humid_week.toml");
    let out = dir.path().join("res");
    let o = simulate_into(&m, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    run(&["report"], &[&out]);
    let report = json(&out.join("report/report.json"));
    assert_eq!(report["latent_beats_sensible_on_violations"], Value::Bool(true));
    let notes: Vec<&str> = report["footnotes"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(notes.iter().any(|n| n.starts_with("violation ordering latent < sensible holds")), "{notes:?}");
}
