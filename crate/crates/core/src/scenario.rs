//! End-to-end runs from a JSON config: build the model, blow it up, deform,
//! certify, and write a JSON report plus flat CSV tables.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blowup::{lift_model, BlownUpStructure, Chart, PotentialSpec};
use crate::calculus::{ChartDomain, DerivConfig};
use crate::flow::FlowConfig;
use crate::model::{box_lattice, make_local_model, BiHermitianModel, ModelCalibration};
use crate::tensor::{Tolerances, Q_CALIBRATION};
use crate::verify::{
    brane_step_study, calibrate_dc_sign, convergence_points, convergence_study, degeneracy_check,
    kahler_slot_check, lift_consistency, model_scan, negative_control_nijenhuis, parameter_search,
    positivity_points, pullback_check, residual_suite, sample_points, scaling_check, z_check, Check,
    ConvergenceReport, DcCalibration, PointRecord, ScalingReport, ScanReport, SearchReport,
    VerifyContext,
};

pub const SCHEMA_VERSION: &str = "1";
pub const CSV_HEADER: [&str; 10] = [
    "chart", "coord1", "coord2", "coord3", "coord4", "min_eig", "res_brane", "res_nijenhuis", "res_gk",
    "notes",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Requested flow time; its sign is recalibrated.
    pub t0: f64,
    /// Half-width of the model's chart box.
    pub half_width: f64,
    /// Flow step used to build `F_{t0}`.
    pub step: f64,
    /// Coarse step of the step-halving study.
    pub study_step: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { t0: 0.05, half_width: 1.2, step: 1e-3, study_step: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtlasSection {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl Default for AtlasSection {
    fn default() -> Self {
        let p = PotentialSpec::default();
        AtlasSection { r0: p.r0, r1: p.r1, r2: p.r2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSection {
    /// Searched in order, largest first.
    pub c_grid: Vec<f64>,
    /// Values of `c0` for the halving implication inside `U_E`.
    pub scaling_c: Vec<f64>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        PotentialSection {
            c_grid: vec![0.4, 0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625],
            scaling_c: vec![0.4, 0.2, 0.1, 0.05, 0.025],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub step: f64,
    pub max_steps: usize,
    /// Deformation times searched for each `c`.
    pub t_grid: Vec<f64>,
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection { step: 1e-2, max_steps: 100_000, t_grid: vec![-0.08, 0.08, -0.04, 0.04, -0.02, 0.02] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub model_points_per_axis: usize,
    pub model_half_width: f64,
    pub positivity_chart0: [usize; 4],
    pub positivity_chart1: [usize; 4],
    pub divisor_points: usize,
    pub off_divisor_points: usize,
    pub overlap_points: usize,
    pub round_trips: usize,
    pub annulus_points: usize,
    pub class_points: usize,
    /// Minimum distance from E for sampled points that must avoid it.
    pub margin: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            model_points_per_axis: 4,
            model_half_width: 1.0,
            positivity_chart0: [7, 7, 9, 9],
            positivity_chart1: [9, 9, 5, 5],
            divisor_points: 64,
            off_divisor_points: 256,
            overlap_points: 100,
            round_trips: 1000,
            annulus_points: 48,
            class_points: 50,
            margin: 1e-3,
        }
    }
}

/// Parameters of the standalone residual probe of the deformed structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeformSection {
    pub c: f64,
    pub t: f64,
}

impl Default for DeformSection {
    fn default() -> Self {
        DeformSection { c: 0.025, t: -0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub c: f64,
    /// Each entry half the previous one.
    pub t_grid: Vec<f64>,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection { c: 0.1, t_grid: vec![-0.08, -0.04, -0.02] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub atlas: AtlasSection,
    pub potential: PotentialSection,
    pub flow: FlowSection,
    pub grids: GridSection,
    pub deform: DeformSection,
    pub convergence: ConvergenceSection,
    pub tolerances: Tolerances,
    pub derivatives: DerivConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSection::default(),
            atlas: AtlasSection::default(),
            potential: PotentialSection::default(),
            flow: FlowSection::default(),
            grids: GridSection::default(),
            deform: DeformSection::default(),
            convergence: ConvergenceSection::default(),
            tolerances: Tolerances::default(),
            derivatives: DerivConfig::default(),
            output_dir: PathBuf::from("gk-blowup-out"),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// Dotted field path, or `<json>` for parse errors.
    pub path: String,
    pub message: String,
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), message: message.into() }
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("{v} must be positive and finite")))
    }
}

fn nonzero_times(path: &str, ts: &[f64]) -> Result<(), ConfigError> {
    if ts.is_empty() {
        return Err(invalid(path, "must not be empty"));
    }
    match ts.iter().position(|t| *t == 0.0 || !t.is_finite()) {
        Some(k) => Err(invalid(&format!("{path}[{k}]"), format!("{} must be finite and nonzero", ts[k]))),
        None => Ok(()),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| invalid("<json>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn template_json() -> String {
        serde_json::to_string_pretty(&RunConfig::default()).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        if m.t0 == 0.0 || !m.t0.is_finite() {
            return Err(invalid("model.t0", format!("{} must be finite and nonzero", m.t0)));
        }
        positive("model.half_width", m.half_width)?;
        positive("model.step", m.step)?;
        positive("model.study_step", m.study_step)?;

        let a = &self.atlas;
        positive("atlas.r0", a.r0)?;
        positive("atlas.r1", a.r1)?;
        positive("atlas.r2", a.r2)?;
        if a.r0 >= a.r1 {
            return Err(invalid("atlas.r0", format!("r0 = {} must be below r1 = {}", a.r0, a.r1)));
        }
        if a.r1 >= a.r2 {
            return Err(invalid("atlas.r1", format!("r1 = {} must be below r2 = {}", a.r1, a.r2)));
        }
        if m.half_width < a.r2 {
            return Err(invalid(
                "model.half_width",
                format!("{} must be at least r2 = {} so the lift covers r < r2", m.half_width, a.r2),
            ));
        }

        if self.potential.c_grid.is_empty() {
            return Err(invalid("potential.c_grid", "must not be empty"));
        }
        for (k, c) in self.potential.c_grid.iter().enumerate() {
            positive(&format!("potential.c_grid[{k}]"), *c)?;
        }
        for (k, c) in self.potential.scaling_c.iter().enumerate() {
            positive(&format!("potential.scaling_c[{k}]"), *c)?;
        }

        positive("flow.step", self.flow.step)?;
        if self.flow.max_steps == 0 {
            return Err(invalid("flow.max_steps", "must be at least 1"));
        }
        nonzero_times("flow.t_grid", &self.flow.t_grid)?;

        let g = &self.grids;
        if g.model_points_per_axis < 2 {
            return Err(invalid("grids.model_points_per_axis", "must be at least 2"));
        }
        positive("grids.model_half_width", g.model_half_width)?;
        if g.model_half_width > m.half_width {
            return Err(invalid("grids.model_half_width", "must not exceed model.half_width"));
        }
        for (name, counts) in [("grids.positivity_chart0", g.positivity_chart0), ("grids.positivity_chart1", g.positivity_chart1)] {
            if let Some(k) = counts.iter().position(|n| *n < 2) {
                return Err(invalid(&format!("{name}[{k}]"), "must be at least 2"));
            }
        }
        for (name, n) in [
            ("grids.divisor_points", g.divisor_points),
            ("grids.off_divisor_points", g.off_divisor_points),
            ("grids.overlap_points", g.overlap_points),
            ("grids.annulus_points", g.annulus_points),
            ("grids.class_points", g.class_points),
        ] {
            if n == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        positive("grids.margin", g.margin)?;

        positive("deform.c", self.deform.c)?;
        nonzero_times("deform.t", &[self.deform.t])?;
        positive("convergence.c", self.convergence.c)?;
        let ts = &self.convergence.t_grid;
        nonzero_times("convergence.t_grid", ts)?;
        if ts.len() < 2 {
            return Err(invalid("convergence.t_grid", "needs at least two times"));
        }
        for k in 1..ts.len() {
            if (ts[k] - 0.5 * ts[k - 1]).abs() > 1e-12 * ts[k - 1].abs() {
                return Err(invalid(&format!("convergence.t_grid[{k}]"), "each time must halve the previous one"));
            }
        }

        let t = &self.tolerances;
        positive("tolerances.algebraic", t.algebraic)?;
        positive("tolerances.derived", t.derived)?;
        positive("tolerances.discretization", t.discretization)?;
        self.derivatives.validate().map_err(|e| invalid("derivatives", e.to_string()))?;
        Ok(())
    }

    pub fn potential_spec(&self, c: f64) -> PotentialSpec {
        PotentialSpec { c, r0: self.atlas.r0, r1: self.atlas.r1, r2: self.atlas.r2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Model,
    Lift,
    Deform,
    Positivity,
    Convergence,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Model, Stage::Lift, Stage::Deform, Stage::Positivity, Stage::Convergence];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Model => "model",
            Stage::Lift => "lift",
            Stage::Deform => "deform",
            Stage::Positivity => "positivity",
            Stage::Convergence => "convergence",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, RunError> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| RunError::UnknownStage(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    ConfigInvalid(#[from] ConfigError),
    #[error("unknown stage `{0}`; expected one of model, lift, deform, positivity, convergence")]
    UnknownStage(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot write CSV {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// Every empirically chosen sign and factor of the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationLog {
    /// Smallest eigenvalue of the derived metric in the Kähler case; positive
    /// means the forms are applied in the stated slot order.
    pub kahler_min_eig: f64,
    pub application_slot_flipped: bool,
    pub poisson_factor: f64,
    pub dc: DcCalibration,
    pub model: Option<ModelCalibration>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: Stage,
    pub pass: bool,
    /// Set when the stage could not run at all.
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub scans: Vec<ScanReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceReport>,
}

impl StageReport {
    fn new(stage: Stage) -> Self {
        StageReport {
            stage,
            pass: false,
            error: None,
            checks: Vec::new(),
            scans: Vec::new(),
            search: None,
            scaling: None,
            convergence: None,
        }
    }

    fn failed(stage: Stage, error: String) -> Self {
        StageReport { error: Some(error), ..StageReport::new(stage) }
    }

    fn finish(mut self) -> Self {
        self.pass = self.error.is_none()
            && self.checks.iter().all(|c| c.pass)
            && self.scans.iter().all(|s| s.summary.pass)
            && self.convergence.as_ref().is_none_or(|c| c.pass);
        self
    }

    pub fn scan(&self, name: &str) -> Option<&ScanReport> {
        self.scans.iter().find(|s| s.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: &'static str,
    pub config: RunConfig,
    pub calibration: CalibrationLog,
    pub stages: Vec<StageReport>,
    /// First `(c, t)` whose positivity scan passed.
    pub certified: Option<[f64; 2]>,
    pub verdict: Verdict,
}

impl RunReport {
    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

/// Model, lifted structure and calibration shared by all stages.
pub struct Pipeline {
    pub config: RunConfig,
    pub ctx: VerifyContext,
    pub calibration: CalibrationLog,
    built: Result<(BiHermitianModel, BlownUpStructure), String>,
}

impl Pipeline {
    pub fn build(config: &RunConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let m = &config.model;
        let domain = ChartDomain::cube("model", m.half_width);
        let model_flow = FlowConfig {
            step: m.step,
            max_steps: config.flow.max_steps,
            guard: ChartDomain::cube("model guard", 1.25 * m.half_width),
        };
        let ctx = VerifyContext {
            deriv: config.derivatives,
            tol: config.tolerances,
            flow: FlowConfig { step: config.flow.step, max_steps: config.flow.max_steps, ..FlowConfig::default() },
        };
        let samples = [[0.3, -0.2, 0.5, 0.1], [-0.6, 0.4, 0.2, -0.7], [0.8, 0.1, -0.3, 0.6]];
        let coarse = model_flow.with_step(config.model.study_step);
        let dc = calibrate_dc_sign(m.t0, &domain, &coarse, &config.derivatives, &samples);
        let kahler_min_eig = kahler_slot_check();
        let built = make_local_model(m.t0, domain, &model_flow, dc.chosen)
            .map_err(|e| format!("building the local model: {e}"))
            .and_then(|(model, cal)| {
                let s = lift_model(model.clone(), config.potential_spec(config.potential.c_grid[0]))
                    .map_err(|e| format!("lifting the model: {e}"))?;
                Ok((model, s, cal))
            });
        let (built, model_cal) = match built {
            Ok((model, s, cal)) => (Ok((model, s)), Some(cal)),
            Err(e) => (Err(e), None),
        };
        let calibration = CalibrationLog {
            kahler_min_eig,
            application_slot_flipped: kahler_min_eig <= 0.0,
            poisson_factor: Q_CALIBRATION,
            dc,
            model: model_cal,
        };
        Ok(Pipeline { config: config.clone(), ctx, calibration, built })
    }

    pub fn model(&self) -> Result<&BiHermitianModel, String> {
        self.built.as_ref().map(|b| &b.0).map_err(Clone::clone)
    }

    pub fn structure(&self, c: f64) -> Result<BlownUpStructure, String> {
        let (_, s) = self.built.as_ref().map_err(Clone::clone)?;
        s.with_spec(self.config.potential_spec(c)).map_err(|e| e.to_string())
    }

    pub fn run_stage(&self, stage: Stage) -> StageReport {
        let out = match stage {
            Stage::Model => self.model_stage(),
            Stage::Lift => self.lift_stage(),
            Stage::Deform => self.deform_stage(),
            Stage::Positivity => self.positivity_stage(),
            Stage::Convergence => self.convergence_stage(),
        };
        out.unwrap_or_else(|e| StageReport::failed(stage, e)).finish()
    }

    fn model_stage(&self) -> Result<StageReport, String> {
        let model = self.model()?;
        let g = &self.config.grids;
        let pts = box_lattice(&ChartDomain::cube("model grid", g.model_half_width), g.model_points_per_axis);
        let mut st = StageReport::new(Stage::Model);
        st.scans.push(model_scan(model, &pts, &self.ctx));
        st.scans.push(brane_step_study(model, &pts, self.config.model.study_step, &self.ctx));
        let neg = negative_control_nijenhuis(&model.domain, &pts, &self.ctx.deriv).map_err(|e| e.to_string())?;
        st.checks.push(Check::at_least("negative_control_nijenhuis", neg, 1e-3));
        st.checks.push(Check::above("kahler_min_eig", self.calibration.kahler_min_eig, 0.0));
        Ok(st)
    }

    fn lift_stage(&self) -> Result<StageReport, String> {
        let s = self.structure(self.config.potential.c_grid[0])?;
        let (g, seed, r2) = (&self.config.grids, self.config.seed, self.config.atlas.r2);
        let mut on_e = sample_points(seed, 1, g.divisor_points, [0.0, r2], 0.0, true);
        for (chart, p) in on_e.iter_mut() {
            for k in chart.divisor_slots() {
                p[k] = 0.0;
            }
        }
        let off_e = sample_points(seed, 2, g.off_divisor_points, [0.0, 0.9 * r2], g.margin, true);
        let mut st = StageReport::new(Stage::Lift);
        st.scans.push(degeneracy_check(&s, &on_e, &self.ctx));
        st.scans.push(pullback_check(&s, &off_e, &self.ctx));
        st.scans.push(lift_consistency(seed, g.overlap_points, g.round_trips, &self.ctx));
        Ok(st)
    }

    fn deform_stage(&self) -> Result<StageReport, String> {
        let d = &self.config.deform;
        let s = self.structure(d.c)?;
        let (g, seed, a) = (&self.config.grids, self.config.seed, &self.config.atlas);
        let annulus = sample_points(seed, 3, g.annulus_points, [a.r0, 0.9 * a.r2], g.margin, true);
        let class: Vec<[f64; 4]> = sample_points(seed, 4, g.class_points, [a.r1, a.r2], g.margin, false)
            .into_iter()
            .map(|(_, p)| p)
            .collect();
        let mut st = StageReport::new(Stage::Deform);
        st.scans.push(residual_suite(&s, d.t, &annulus, &self.ctx));
        st.scans.push(z_check(&s.spec, &class, &self.ctx));
        Ok(st)
    }

    fn positivity_stage(&self) -> Result<StageReport, String> {
        let base = self.structure(self.config.potential.c_grid[0])?;
        let g = &self.config.grids;
        let pts = positivity_points(&base.spec, g.positivity_chart0, g.positivity_chart1).map_err(|e| e.to_string())?;
        let mut search = parameter_search(&base, &self.config.potential.c_grid, &self.config.flow.t_grid, &pts, &self.ctx)
            .map_err(|e| e.to_string())?;
        let mut st = StageReport::new(Stage::Positivity);
        st.checks.push(Check::holds("certified", search.certified.is_some()));
        if let Some([_, t]) = search.certified {
            let sc = scaling_check(&base, t, &self.config.potential.scaling_c, &pts, &self.ctx)
                .map_err(|e| e.to_string())?;
            st.checks.push(Check::at_least("scaling_antecedents", sc.antecedents as f64, 1.0));
            st.checks.push(Check::holds("scaling_implication", sc.implication_holds));
            st.scaling = Some(sc);
        }
        if let Some(scan) = search.scan.take() {
            st.scans.push(scan);
        }
        st.search = Some(search);
        Ok(st)
    }

    fn convergence_stage(&self) -> Result<StageReport, String> {
        let s = self.structure(self.config.convergence.c)?;
        let pts = convergence_points(&s.spec);
        let mut report = convergence_study(&s, &self.config.convergence.t_grid, &pts, &self.ctx);
        let mut st = StageReport::new(Stage::Convergence);
        let header = empty_scan(&report.scan);
        st.scans.push(std::mem::replace(&mut report.scan, header));
        st.convergence = Some(report);
        Ok(st)
    }

    fn report(&self, stages: Vec<StageReport>) -> RunReport {
        let certified = stages.iter().find_map(|s| s.search.as_ref().and_then(|x| x.certified));
        let verdict = if stages.iter().all(|s| s.pass) { Verdict::Pass } else { Verdict::Fail };
        RunReport {
            schema_version: SCHEMA_VERSION,
            config: self.config.clone(),
            calibration: self.calibration.clone(),
            stages,
            certified,
            verdict,
        }
    }
}

/// Header-only copy of a scan, left behind when its points move elsewhere.
fn empty_scan(s: &ScanReport) -> ScanReport {
    ScanReport { points: Vec::new(), ..s.clone() }
}

/// Runs every stage in order and writes `report.json` and one CSV per scan
/// into the config's output directory.
pub fn run_scenario(config: &RunConfig) -> Result<RunReport, RunError> {
    let p = Pipeline::build(config)?;
    let stages = Stage::ALL.iter().map(|s| p.run_stage(*s)).collect();
    let report = p.report(stages);
    write_outputs(&report, &config.output_dir, "report.json")?;
    Ok(report)
}

/// Runs a single stage (freshly building its inputs) and writes
/// `<stage>.json` plus that stage's CSVs.
pub fn verify_only(config: &RunConfig, stage: &str) -> Result<RunReport, RunError> {
    let stage: Stage = stage.parse()?;
    let p = Pipeline::build(config)?;
    let report = p.report(vec![p.run_stage(stage)]);
    write_outputs(&report, &config.output_dir, &format!("{stage}.json"))?;
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn csv_row(r: &PointRecord) -> [String; 10] {
    let mut notes = Vec::new();
    if let Some(z) = r.zone {
        notes.push(format!("zone={}", serde_json::to_value(z).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()));
    }
    if r.failed {
        notes.push("FAILED".to_string());
    }
    if !r.notes.is_empty() {
        notes.push(r.notes.clone());
    }
    [
        r.chart.clone(),
        format!("{:e}", r.coords[0]),
        format!("{:e}", r.coords[1]),
        format!("{:e}", r.coords[2]),
        format!("{:e}", r.coords[3]),
        fmt_opt(r.min_eig),
        fmt_opt(r.res_brane),
        fmt_opt(r.res_nijenhuis),
        fmt_opt(r.res_gk),
        notes.join("; "),
    ]
}

/// Writes the flat per-point table of one scan.
pub fn write_csv(scan: &ScanReport, path: &Path) -> Result<(), RunError> {
    let err = |source| RunError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in &scan.points {
        w.write_record(csv_row(r)).map_err(err)?;
    }
    w.flush().map_err(|source| RunError::Io { path: path.to_path_buf(), source })
}

pub fn csv_name(stage: Stage, scan: &ScanReport) -> String {
    format!("{}_{}.csv", stage, scan.name)
}

/// Creates `dir`, writes the report as `json_name` and every stage's CSVs.
pub fn write_outputs(report: &RunReport, dir: &Path, json_name: &str) -> Result<Vec<PathBuf>, RunError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    for st in &report.stages {
        for scan in &st.scans {
            let path = dir.join(csv_name(st.stage, scan));
            write_csv(scan, &path)?;
            written.push(path);
        }
    }
    let path = dir.join(json_name);
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(&path, text + "\n").map_err(io(&path))?;
    written.push(path);
    Ok(written)
}

/// Chart of a scan row, parsed back from its CSV label.
pub fn chart_from_label(label: &str) -> Option<Chart> {
    match label {
        "chart0" => Some(Chart::Zero),
        "chart1" => Some(Chart::One),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_round_trips() {
        let cfg = RunConfig::from_json(&RunConfig::template_json()).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = RunConfig::from_json(r#"{"atlas": {"r0": 0.1, "r3": 1.0}}"#).unwrap_err();
        assert_eq!(err.path, "<json>");
        assert!(err.message.contains("r3"));
    }

    #[test]
    fn radii_order_names_the_field() {
        let err = RunConfig::from_json(r#"{"atlas": {"r0": 0.5, "r1": 0.45, "r2": 0.7}}"#).unwrap_err();
        assert_eq!(err.path, "atlas.r0");
        assert!(err.message.contains("r1"));
    }

    #[test]
    fn convergence_times_must_halve() {
        let err = RunConfig::from_json(r#"{"convergence": {"t_grid": [-0.08, -0.05]}}"#).unwrap_err();
        assert_eq!(err.path, "convergence.t_grid[1]");
    }

    #[test]
    fn stage_names() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!(matches!("blowup".parse::<Stage>(), Err(RunError::UnknownStage(_))));
    }

    #[test]
    fn csv_floats_round_trip() {
        let mut r = PointRecord::new("chart0", [0.1, -2.5e-7, 0.0, 1.0 / 3.0]);
        r.min_eig = Some(6.611536436730851e-5);
        let row = csv_row(&r);
        assert_eq!(row[4].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(row[5], "6.611536436730851e-5");
        assert_eq!(row[6], "");
    }
}
