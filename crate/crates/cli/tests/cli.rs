use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flexbeam"))
}

#[test]
fn print_config_reflects_overrides() {
    let out = bin()
        .args(["sweep-power", "--seeds", "3", "--seed", "7", "--print-config"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["num_seeds"], 3);
    assert_eq!(v["master_seed"], 7);
    assert_eq!(v["sweep"]["variable"], "power_dbm");
}

#[test]
fn bad_config_exits_with_two() {
    let dir = std::env::temp_dir().join(format!("flexbeam-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(&path, r#"{"num_seeds": 0, "bogus": 1}"#).unwrap();
    let out = bin().args(["sweep-power", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(&path, r#"{"sweep": {"variable": "comm_weight", "values": [0.5]}}"#).unwrap();
    let out = bin().args(["sweep-power", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn run_prints_metrics() {
    let out = bin()
        .args(["run", "--algorithm", "BF-FPA", "--antennas", "4", "--value", "20"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_antennas"], 4);
    assert_eq!(v["positions"].as_array().unwrap().len(), 4);
    assert!(v["metrics"].is_object());
}

#[test]
fn unknown_algorithm_is_a_config_error() {
    let out = bin().args(["run", "--algorithm", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
