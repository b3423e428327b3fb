use std::path::Path;
use std::process::{Command, Output};

fn stsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    std::fs::write(
        &path,
        r#"{ "model": { "blocks": 1, "batch_size": 2 }, "sparsity": { "samples": 8, "width": 16 } }"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn print_config_emits_defaults() {
    let out = stsim(&["print-config"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["model"]["d_model"], 512);
    assert_eq!(v["dataflow"], "OS_C");
}

#[test]
fn simulate_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let a = stsim(&["simulate", "--config", &cfg, "--output", json.to_str().unwrap()]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["reports"][0]["dataflow"], "OS_C");
    let b = stsim(&[
        "simulate", "--config", &cfg, "--format", "csv", "--dataflow", "WS_K", "--output",
        csv.to_str().unwrap(),
    ]);
    assert!(b.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("dataflow,phase,stage_label,operator_class,metric,value\n"));
    assert!(text.lines().skip(1).all(|l| l.starts_with("WS_K,")));
}

#[test]
fn sweep_ranks_nine_dataflows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = stsim(&["sweep", "--config", &cfg]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["reports"].as_array().unwrap().len(), 9);
    assert_eq!(v["ranking"]["by_energy"].as_array().unwrap().len(), 9);
}

#[test]
fn invalid_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{ "model": { "d_model": 500 } }"#).unwrap();
    let out = stsim(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("d_model"));
}

#[test]
fn unknown_dataflow_exits_3() {
    let out = stsim(&["simulate", "--dataflow", "XS_Q"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gradcheck_passes_and_corruption_fails() {
    let ok = stsim(&["gradcheck", "--seed", "3"]);
    assert_eq!(ok.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(v["passed"], true);
    let bad = stsim(&["gradcheck", "--corrupt"]);
    assert_eq!(bad.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("FAIL"));
}

#[test]
fn unwritable_output_exits_6() {
    let out = stsim(&["print-config", "--output", "/nonexistent/dir/cfg.json"]);
    assert_eq!(out.status.code(), Some(6));
    let sim = stsim(&["simulate", "--output", "/nonexistent/dir/r.json"]);
    assert_eq!(sim.status.code(), Some(6));
}

#[test]
fn missing_config_file_exits_6() {
    let out = stsim(&["simulate", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(6));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = stsim(&["simulate", "--config", &cfg, "--seed", "11"]);
    let b = stsim(&["simulate", "--config", &cfg, "--seed", "11"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = stsim(&["simulate", "--config", &cfg, "--seed", "12"]);
    assert_ne!(a.stdout, c.stdout);
}
