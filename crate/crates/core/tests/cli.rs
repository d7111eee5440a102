use std::path::Path;
use std::process::{Command, Output};

use cellfree_fl::fl_engine::Dataset;
use cellfree_fl::quantizer::wire;
use serde_json::Value;

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellfree-fl"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn quantize_writes_payload_and_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("v.csv"), "0.8, -0.1\n0.05, -0.9\n").unwrap();
    let out = cli(&["quantize", "v.csv", "--lambda", "0.2", "--bits", "3", "--out", "q"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let side = json_file(&tmp.path().join("q/payload.json"));
    assert_eq!(side["d"], 4);
    assert_eq!(side["high_count"], 2);
    assert_eq!(side["payload_bits"], 40);
    let bytes = std::fs::read(tmp.path().join("q/payload.bin")).unwrap();
    assert_eq!(bytes.len() as u64, side["wire_bytes"].as_u64().unwrap());
    let q = wire::from_bytes(&bytes).unwrap();
    assert_eq!((q.dim, q.high_count, q.payload_bits), (4, 2, 40));

    // Refuses to overwrite, then succeeds with --force.
    let again = cli(&["quantize", "v.csv", "--out", "q"], tmp.path());
    assert_eq!(again.status.code(), Some(1));
    let forced = cli(&["quantize", "v.csv", "--out", "q", "--force"], tmp.path());
    assert!(forced.status.success());
}

#[test]
fn quantize_rejects_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.csv"), "1, nope\n").unwrap();
    let out = cli(&["quantize", "bad.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(tmp.path().join("ok.csv"), "1, 2\n").unwrap();
    let out = cli(&["--json-errors", "quantize", "ok.csv", "--lambda", "1.5"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["issues"][0]["key"], "--lambda");
}

#[test]
fn powerctl_single_user_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = r#"{"A_bar":[10.0],"B_bar":[0.5],"B_tilde":[[0.0]],"I_M":[1.5],"bits":[1000],"B_tau":1e6}"#;
    std::fs::write(tmp.path().join("p.json"), problem).unwrap();
    let out = cli(&["powerctl", "p.json"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sol: Value = serde_json::from_slice(&out.stdout).unwrap();
    let closed = 1e6 * (1.0f64 + 10.0 / 2.0).log2() / 1000.0;
    let eta = sol["eta_star"].as_f64().unwrap();
    assert!((eta - closed).abs() <= sol["eps_b"].as_f64().unwrap());
    assert_eq!(sol["feasible"], true);

    let out = cli(&["powerctl", "p.json", "--out", "s.json"], tmp.path());
    assert!(out.status.success());
    assert_eq!(json_file(&tmp.path().join("s.json"))["eta_star"], sol["eta_star"]);
}

#[test]
fn powerctl_rejects_malformed_problem() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("p.json"), r#"{"A_bar":[1.0],"bits":[10]}"#).unwrap();
    assert_eq!(cli(&["powerctl", "p.json"], tmp.path()).status.code(), Some(2));
    std::fs::write(
        tmp.path().join("q.json"),
        r#"{"A_bar":[1.0,2.0],"B_bar":[0.0],"B_tilde":[[0.0]],"I_M":[1.0],"bits":[10],"B_tau":1.0}"#,
    )
    .unwrap();
    assert_eq!(cli(&["powerctl", "q.json"], tmp.path()).status.code(), Some(2));
}

#[test]
fn gen_data_csv_reloads() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(
        &["gen-data", "--set", "training.dataset.n_train=120", "--set", "training.dataset.n_test=30", "--out", "d"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let train = Dataset::from_csv(std::fs::File::open(tmp.path().join("d/train.csv")).unwrap(), "train").unwrap();
    let test = Dataset::from_csv(std::fs::File::open(tmp.path().join("d/test.csv")).unwrap(), "test").unwrap();
    assert_eq!((train.len(), test.len()), (120, 30));
    assert_eq!(train.num_features, 20);
}

#[test]
fn simulate_from_generated_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = cli(&["gen-data", "--set", "training.dataset.n_train=400", "--out", "d"], tmp.path());
    assert!(gen.status.success());
    std::fs::write(
        tmp.path().join("run.toml"),
        "rounds = 3\n[network]\nnum_users = 4\n[training.dataset]\nsource = \"csv\"\npath = \"d/train.csv\"\ntest_path = \"d/test.csv\"\n",
    )
    .unwrap();
    let out = cli(&["simulate", "--config", "run.toml", "--out", "o", "--emit-plot-data"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json_file(&tmp.path().join("o/summary.json"));
    assert_eq!(summary["rounds_run"], 3);
    let metrics = std::fs::read_to_string(tmp.path().join("o/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 3 * 4);
    assert!(tmp.path().join("o/accuracy_vs_latency.csv").exists());

    // The saved config reproduces the run.
    let rerun = cli(&["simulate", "--config", "o/config.toml", "--out", "o2"], tmp.path());
    assert!(rerun.status.success(), "{}", String::from_utf8_lossy(&rerun.stderr));
    let again = std::fs::read_to_string(tmp.path().join("o2/metrics.csv")).unwrap();
    assert_eq!(again, metrics);
}

#[test]
fn compare_writes_matrices() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(
        &[
            "compare",
            "--set",
            "rounds=4",
            "--set",
            "latency.budget_s=1.2",
            "--arms",
            "mixed+optimal,mixed+full,topq-0.05-10+optimal",
            "--out",
            "c",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json_file(&tmp.path().join("c/compare.json"));
    assert_eq!(report["arms"].as_array().unwrap().len(), 3);
    assert_eq!(report["dominance_violations"].as_array().unwrap().len(), 0);
    let matrix = std::fs::read_to_string(tmp.path().join("c/tmax_matrix.csv")).unwrap();
    assert_eq!(matrix.lines().next().unwrap(), "power,mixed,topq-0.05-10");
}

#[test]
fn config_errors_name_keys_and_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "[network]\ntau_p = 500\n").unwrap();
    let out = cli(&["--json-errors", "simulate", "--config", "c.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["issues"][0]["key"], "network.tau_p");
    assert!(!tmp.path().join("out").exists());
}
