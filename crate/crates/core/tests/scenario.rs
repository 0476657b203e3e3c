use std::fs;

use gk_blowup::scenario::{
    csv_name, run_scenario, verify_only, RunConfig, RunError, Stage, Verdict, CSV_HEADER,
};

fn config_in(dir: &tempfile::TempDir) -> RunConfig {
    RunConfig { output_dir: dir.path().to_path_buf(), ..RunConfig::default() }
}

#[test]
fn positivity_stage_matches_the_full_run() {
    let full_dir = tempfile::tempdir().unwrap();
    let full = run_scenario(&config_in(&full_dir)).unwrap();
    assert_eq!(full.schema_version, "1");
    assert_eq!(full.stages.len(), 5);

    let stage_dir = tempfile::tempdir().unwrap();
    let single = verify_only(&config_in(&stage_dir), "positivity").unwrap();
    assert_eq!(single.stages.len(), 1);
    let a = &full.stage(Stage::Positivity).unwrap().scans[0];
    let b = &single.stage(Stage::Positivity).unwrap().scans[0];
    let (ma, mb) = (a.summary.global_min_eig.unwrap(), b.summary.global_min_eig.unwrap());
    assert_eq!(ma.to_bits(), mb.to_bits());
    assert_eq!(full.certified, single.certified);

    let name = csv_name(Stage::Positivity, a);
    let x = fs::read(full_dir.path().join(&name)).unwrap();
    let y = fs::read(stage_dir.path().join(&name)).unwrap();
    assert_eq!(x, y);
    assert!(stage_dir.path().join("positivity.json").exists());
    assert!(full_dir.path().join("report.json").exists());
}

#[test]
fn model_stage_writes_only_model_tables() {
    let dir = tempfile::tempdir().unwrap();
    let r = verify_only(&config_in(&dir), "model").unwrap();
    assert_eq!(r.stages.len(), 1);
    assert_eq!(r.stages[0].stage, Stage::Model);
    assert!(r.stages[0].pass);
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["model.json", "model_brane_step.csv", "model_model.csv"]);
    let text = fs::read_to_string(dir.path().join("model_model.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(lines.count(), 256);
}

#[test]
fn convergence_stage_reports_the_halving_table() {
    let dir = tempfile::tempdir().unwrap();
    let r = verify_only(&config_in(&dir), "convergence").unwrap();
    let conv = r.stages[0].convergence.as_ref().unwrap();
    let ts: Vec<f64> = conv.rows.iter().map(|row| row.t).collect();
    assert_eq!(ts, [-0.08, -0.04, -0.02]);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("convergence.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], "1");
    assert_eq!(json["stages"][0]["convergence"]["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn unknown_stage_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let err = verify_only(&config_in(&dir), "blowup").unwrap_err();
    assert!(matches!(err, RunError::UnknownStage(ref s) if s == "blowup"));
}

#[test]
fn invalid_radii_name_the_field() {
    let cfg = RunConfig {
        atlas: gk_blowup::scenario::AtlasSection { r0: 0.5, r1: 0.45, r2: 0.7 },
        ..RunConfig::default()
    };
    match run_scenario(&cfg) {
        Err(RunError::ConfigInvalid(e)) => {
            assert_eq!(e.path, "atlas.r0");
            assert!(e.to_string().contains("r1"));
        }
        other => panic!("expected ConfigInvalid, got {other:?}"),
    }
}

fn large_time_run(t: f64) -> (gk_blowup::scenario::RunReport, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config_in(&dir);
    cfg.flow.t_grid = vec![t];
    (verify_only(&cfg, "positivity").unwrap(), dir)
}

#[test]
fn oversized_time_fails_with_diagnostics() {
    let (r, dir) = large_time_run(0.5);
    assert_eq!(r.verdict, Verdict::Fail);
    assert!(r.certified.is_none());
    let st = &r.stages[0];
    assert!(st.search.as_ref().unwrap().matrix.iter().all(|e| !e.pass));
    let text = fs::read_to_string(dir.path().join(csv_name(Stage::Positivity, &st.scans[0]))).unwrap();
    assert!(text.lines().count() > 1);
}

#[test]
fn flows_leaving_the_region_are_recorded() {
    let (r, _dir) = large_time_run(2.0);
    let matrix = &r.stages[0].search.as_ref().unwrap().matrix;
    let escaped = matrix.iter().find(|e| e.failures > 0).expect("some flow leaves r < r2");
    assert!(escaped.first_failure.as_deref().unwrap().contains("LeftDomain"));
    assert_eq!(r.verdict, Verdict::Fail);
}

/// At `|t| = 0.5` the flow moves points by at most `c|t|/2 = 0.1` (largest
/// searched `c`), which does not carry any certification-grid point past `r2`.
#[test]
#[ignore = "no grid point leaves r < r2 at |t| = 0.5 with the default radii"]
fn half_unit_time_leaves_the_region() {
    let (r, _dir) = large_time_run(0.5);
    let matrix = &r.stages[0].search.as_ref().unwrap().matrix;
    assert!(matrix.iter().any(|e| e.first_failure.as_deref().is_some_and(|f| f.contains("LeftDomain"))));
}
