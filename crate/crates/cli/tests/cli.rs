use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gk-blowup")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn template_is_a_valid_config() {
    let out = gk(&["print-config-template"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["atlas"]["r1"], 0.45);

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &text);
    let out_dir = dir.path().join("out");
    let out = gk(&["verify", "--stage", "model", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn reversed_radii_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"atlas": {"r0": 0.5, "r1": 0.45, "r2": 0.7}}"#);
    let out = gk(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("atlas.r0") && err.contains("r1"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_fields_and_bad_json_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for text in [r#"{"flow": {"stride": 1}}"#, "{not json"] {
        let cfg = write_config(dir.path(), text);
        let out = gk(&["run", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{text}");
    }
    let out = gk(&["run", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_stage_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gk(&["verify", "--stage", "blowup", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown stage"));
}

#[test]
fn missing_stage_flag_is_a_usage_error() {
    let out = gk(&["verify"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("lift");
    let out = gk(&["verify", "--stage", "lift", "--seed", "11", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("lift.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], "1");
    assert_eq!(json["config"]["seed"], 11);
    assert_eq!(json["verdict"], "pass");
    let header = fs::read_to_string(out_dir.join("lift_degeneracy.csv")).unwrap();
    assert!(header.starts_with("chart,coord1,coord2,coord3,coord4,min_eig,res_brane,res_nijenhuis,res_gk,notes\n"));
}

#[test]
fn oversized_time_grid_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"flow": {"t_grid": [0.5]}}"#);
    let out_dir = dir.path().join("out");
    let out = gk(&["verify", "--stage", "positivity", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("no (c, t) certified") && stdout.contains("verdict: fail"), "{stdout}");
    assert!(out_dir.join("positivity.json").exists());
    assert!(out_dir.join("positivity_positivity.csv").exists());
}
