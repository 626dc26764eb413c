//! Pipeline configuration, geometry presets and the file-based stages.
//!
//! Every stage reads its inputs from files and writes its outputs to files,
//! so running [`run_pipeline`] and running the stages one by one produce the
//! same bytes.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{classify, signature, Classification, ClassifierTolerances, Label};
use crate::contour::LayeredContourCloud;
use crate::error::{Error, Result};
use crate::ideal::{ideal_cloud, EndEffectorSpec};
use crate::mesh_io::{read_cloud, read_stl, write_cloud, write_stl_binary, CloudFormat, PointCloud};
use crate::metrics::{error_distribution, material_balance, ring_mesh_area, utilization, AreaSample, MetricsReport};
use crate::planner::{plan, FeedCycle, KneadingProgram, PlannerConfig, Strategy};
use crate::registration::{compensate, default_thresholds, sweep, CompensationMode, IcpParams, RegistrationCurve};
use crate::report::{area_plot, area_series_csv, rmse_plot, write_json, write_text};
use crate::shapes::{contours_to_mesh, gen_shape, Geometry, ShapeSpec};
use crate::sim::{simulate, BilletState, SimConfig};
use crate::slicer::slice_to_contours;

pub const TARGET_STL: &str = "target.stl";
pub const TARGET_CONTOURS: &str = "target.csv";
pub const CLASSIFICATION: &str = "classification.json";
pub const PROGRAM: &str = "program.json";
pub const IDEAL_CLOUD: &str = "ideal.csv";
pub const KNEADED_CLOUD: &str = "kneaded.csv";
pub const SIMULATION: &str = "simulation.json";
pub const AREA_SERIES: &str = "area_series.csv";
pub const IDEAL_CURVE: &str = "ideal_curve.csv";
pub const KNEADED_CURVE: &str = "kneaded_curve.csv";
pub const COMPENSATED_CLOUD: &str = "compensated.csv";
pub const COMPENSATED_CURVE: &str = "compensated_curve.csv";
pub const REPORT: &str = "report.json";
pub const AREA_PLOT: &str = "area.svg";
pub const RMSE_PLOT: &str = "rmse.svg";

/// Target given as a parametric shape or an STL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShapeSource {
    Stl { stl: PathBuf },
    Spec(ShapeSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyChoice {
    Envelope,
    Gradient,
    #[default]
    Auto,
}

impl std::str::FromStr for StrategyChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "envelope" => Ok(StrategyChoice::Envelope),
            "gradient" => Ok(StrategyChoice::Gradient),
            "auto" => Ok(StrategyChoice::Auto),
            other => Err(Error::invalid(format!(
                "unknown strategy `{other}`, expected envelope, gradient or auto"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct SweepConfig {
    pub thresholds: Vec<f64>,
    pub icp: IcpParams,
    /// Stop at the first threshold reaching full fitness.
    pub stop_at_full: bool,
    pub compensation: CompensationMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            thresholds: default_thresholds(),
            icp: IcpParams::default(),
            stop_at_full: true,
            compensation: CompensationMode::Offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub shape: ShapeSource,
    pub billet: ShapeSpec,
    pub layer_step: f64,
    pub points_per_layer: usize,
    pub classifier: ClassifierTolerances,
    pub planner: PlannerConfig,
    pub strategy: StrategyChoice,
    pub effector: EndEffectorSpec,
    pub sim: SimConfig,
    pub sweep: SweepConfig,
    /// Measured masses in grams, when available.
    pub mass_in: Option<f64>,
    pub mass_out: Option<f64>,
    pub output: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::preset(Geometry::B)
    }
}

/// Extra billet volume over the target, per geometry.
pub fn billet_surplus(g: Geometry) -> f64 {
    match g {
        Geometry::A => 0.06,
        Geometry::B => 0.0,
        Geometry::C | Geometry::E => 0.05,
        Geometry::D => 0.04,
    }
}

/// Trapezoidal volume of a layered cloud.
fn trapezoid_volume(cloud: &LayeredContourCloud) -> f64 {
    cloud
        .layers
        .windows(2)
        .map(|w| 0.5 * (w[0].area() + w[1].area()) * (w[1].z - w[0].z))
        .sum()
}

/// Billet used for each geometry: a 60 mm square block for B, 75 mm disk
/// for D and 80 mm disks otherwise, tall enough to hold the target volume
/// plus [`billet_surplus`] on an `angles`-gon grid.
pub fn preset_billet(g: Geometry, angles: usize, layer_step: f64) -> Result<ShapeSpec> {
    let target = gen_shape(&g.target(), layer_step, angles)?;
    let v = trapezoid_volume(&target);
    let n = angles as f64;
    Ok(match g {
        Geometry::B => ShapeSpec::SquarePrism {
            side: 60.0,
            height: v / 3600.0,
        },
        _ => {
            let d: f64 = if g == Geometry::D { 75.0 } else { 80.0 };
            let area = 0.5 * n * (2.0 * PI / n).sin() * (d / 2.0).powi(2);
            ShapeSpec::Cylinder {
                diameter: d,
                height: (1.0 + billet_surplus(g)) * v / area,
            }
        }
    })
}

impl PipelineConfig {
    pub fn preset(g: Geometry) -> Self {
        let sim = SimConfig::default();
        PipelineConfig {
            shape: ShapeSource::Spec(g.target()),
            billet: preset_billet(g, sim.angles, sim.layer_step).expect("preset geometries are valid"),
            layer_step: 1.0,
            points_per_layer: 400,
            classifier: ClassifierTolerances::default(),
            planner: PlannerConfig::default(),
            strategy: StrategyChoice::Auto,
            effector: EndEffectorSpec::default(),
            sim,
            sweep: SweepConfig::default(),
            mass_in: None,
            mass_out: None,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks every section and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut check = |key: &str, r: Result<()>| {
            if let Err(e) = r {
                let msg = match e {
                    Error::Invalid(m) => m,
                    other => other.to_string(),
                };
                bad.extend(msg.split("; ").map(|m| format!("{key}: {m}")));
            }
        };
        match &self.shape {
            ShapeSource::Spec(spec) => check("shape", spec.validate()),
            ShapeSource::Stl { stl } => {
                if stl.as_os_str().is_empty() {
                    check("shape.stl", Err(Error::invalid("path is empty")));
                }
            }
        }
        check("billet", self.billet.validate());
        if !matches!(self.billet, ShapeSpec::Cylinder { .. } | ShapeSpec::SquarePrism { .. }) {
            check("billet", Err(Error::invalid("must be a cylinder or square prism")));
        }
        if !(self.layer_step > 0.0 && self.layer_step.is_finite()) {
            check("layerStep", Err(Error::invalid("must be positive")));
        }
        if self.points_per_layer < 4 || !self.points_per_layer.is_multiple_of(2) {
            check("pointsPerLayer", Err(Error::invalid("must be even and at least 4")));
        }
        check("planner", self.planner.validate());
        check("effector", self.effector.validate());
        check("sim", self.sim.validate());
        let th = &self.sweep.thresholds;
        if th.is_empty() || th.iter().any(|t| !(*t > 0.0 && t.is_finite())) || th.windows(2).any(|w| w[1] <= w[0]) {
            check(
                "sweep.thresholds",
                Err(Error::invalid("must be non-empty, positive and strictly increasing")),
            );
        }
        if self.sweep.icp.max_iter == 0 {
            check("sweep.icp.maxIter", Err(Error::invalid("must be at least 1")));
        }
        if !(self.sweep.icp.tol >= 0.0 && self.sweep.icp.tol.is_finite()) {
            check("sweep.icp.tol", Err(Error::invalid("must be finite and non-negative")));
        }
        for (key, m) in [("massIn", self.mass_in), ("massOut", self.mass_out)] {
            if let Some(m) = m {
                if !(m >= 0.0 && m.is_finite()) {
                    check(key, Err(Error::invalid("must be finite and non-negative")));
                }
            }
        }
        if self.mass_in.is_some() != self.mass_out.is_some() {
            check("massOut", Err(Error::invalid("massIn and massOut must be given together")));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}

// ---------------------------------------------------------------- file helpers

pub fn write_contours(cloud: &LayeredContourCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_cloud(&cloud.to_point_cloud(), path, CloudFormat::from_path(path))
}

pub fn read_contours(path: impl AsRef<Path>) -> Result<LayeredContourCloud> {
    LayeredContourCloud::from_point_cloud(&read_points(path)?)
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    read_cloud(path, CloudFormat::from_path(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

// ---------------------------------------------------------------- stages

/// Contours of a parametric shape, plus its STL when `stl_out` is given.
pub fn stage_gen_shape(
    spec: &ShapeSpec,
    layer_step: f64,
    points: usize,
    contours_out: &Path,
    stl_out: Option<&Path>,
) -> Result<LayeredContourCloud> {
    let cloud = gen_shape(spec, layer_step, points)?;
    if let Some(stl) = stl_out {
        write_stl_binary(&contours_to_mesh(&cloud)?, stl)?;
    }
    write_contours(&cloud, contours_out)?;
    Ok(cloud)
}

pub fn stage_slice(stl: &Path, layer_step: f64, points: usize, out: &Path) -> Result<LayeredContourCloud> {
    let out_cloud = slice_to_contours(&read_stl(stl)?, layer_step, points)?;
    if !out_cloud.skipped.is_empty() {
        log::warn!("{}: skipped slices at z = {:?}", stl.display(), out_cloud.skipped);
    }
    write_contours(&out_cloud.cloud, out)?;
    Ok(out_cloud.cloud)
}

pub fn stage_classify(contours: &Path, tol: &ClassifierTolerances, out: &Path) -> Result<Classification> {
    let c = classify(&signature(&read_contours(contours)?)?, tol);
    write_json(out, &c)?;
    Ok(c)
}

/// Strategy for a classified target. Forcing the envelope strategy on a
/// non-enveloping shape is allowed but logged.
pub fn resolve_strategy(choice: StrategyChoice, classification: &Classification) -> Strategy {
    match (choice, classification.label) {
        (StrategyChoice::Auto, Label::Enveloping) => Strategy::Envelope,
        (StrategyChoice::Auto, Label::NonEnveloping) => Strategy::Gradient,
        (StrategyChoice::Envelope, Label::NonEnveloping) => {
            let failed: Vec<&str> = classification.failed().map(|c| c.name.as_str()).collect();
            log::warn!("envelope strategy on a non-enveloping target (failed: {})", failed.join(", "));
            Strategy::Envelope
        }
        (StrategyChoice::Envelope, _) => Strategy::Envelope,
        (StrategyChoice::Gradient, _) => Strategy::Gradient,
    }
}

pub fn stage_plan(contours: &Path, planner: &PlannerConfig, strategy: Strategy, out: &Path) -> Result<KneadingProgram> {
    let program = plan(&read_contours(contours)?, planner, strategy)?;
    write_text(out, &program.to_json()?)?;
    Ok(program)
}

pub fn stage_ideal(program: &Path, effector: &EndEffectorSpec, out: &Path) -> Result<PointCloud> {
    let program: KneadingProgram = read_json(program)?;
    let cloud = ideal_cloud(&program, effector)?;
    write_cloud(&cloud, out, CloudFormat::from_path(out))?;
    Ok(cloud)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimSummary {
    pub strategy: Strategy,
    pub billet: ShapeSpec,
    pub rebound_eps: f64,
    pub cycles: Vec<FeedCycle>,
    pub commands: usize,
    pub initial_volume: f64,
    pub final_volume: f64,
    pub program_drift: f64,
    pub max_command_drift: f64,
    pub final_height: f64,
    pub area_series: Vec<AreaSample>,
}

/// Simulates kneading `billet` into the target; writes the formed cloud,
/// the summary JSON and the area series next to the summary.
pub fn stage_simulate(
    contours: &Path,
    billet: &ShapeSpec,
    planner: &PlannerConfig,
    strategy: Strategy,
    sim: &SimConfig,
    cloud_out: &Path,
    summary_out: &Path,
) -> Result<SimSummary> {
    let target = read_contours(contours)?;
    let state = BilletState::init(billet, sim.angles, sim.layer_step, sim.rebound_eps)?;
    let out = simulate(&target, state, planner, strategy, sim)?;
    write_contours(&out.cloud, cloud_out)?;
    let summary = SimSummary {
        strategy,
        billet: billet.clone(),
        rebound_eps: sim.rebound_eps,
        cycles: out.program.cycles.clone(),
        commands: out.program.commands.len(),
        initial_volume: out.initial_volume,
        final_volume: out.final_volume,
        program_drift: out.program_drift(),
        max_command_drift: out.max_command_drift,
        final_height: out.state.height(),
        area_series: out.area_series,
    };
    write_json(summary_out, &summary)?;
    write_text(summary_out.with_file_name(AREA_SERIES), &area_series_csv(&summary.area_series))?;
    Ok(summary)
}

/// Threshold sweep of `source` onto `target`; writes the curve as CSV and
/// as JSON next to it.
pub fn stage_register(source: &Path, target: &Path, cfg: &SweepConfig, curve_out: &Path) -> Result<RegistrationCurve> {
    let curve = sweep(
        &read_points(source)?,
        &read_points(target)?,
        &cfg.thresholds,
        &cfg.icp,
        cfg.stop_at_full,
    )?;
    write_text(curve_out, &curve.to_csv())?;
    write_json(curve_out.with_extension("json"), &curve)?;
    Ok(curve)
}

pub fn stage_compensate(cloud: &Path, value: f64, mode: CompensationMode, out: &Path) -> Result<PointCloud> {
    let c = compensate(&read_points(cloud)?, value, mode)?;
    write_cloud(&c, out, CloudFormat::from_path(out))?;
    Ok(c)
}

#[derive(Debug, Clone, Default)]
pub struct MetricsInputs {
    pub target: PathBuf,
    pub kneaded: PathBuf,
    pub compensated: Option<PathBuf>,
    pub simulation: Option<PathBuf>,
    /// Registration curves (JSON) to plot, with their legend names.
    pub curves: Vec<(String, PathBuf)>,
    pub mass_in: Option<f64>,
    pub mass_out: Option<f64>,
}

/// Writes the report JSON plus the area and RMSE plots into `out_dir`.
pub fn stage_metrics(inputs: &MetricsInputs, out_dir: &Path) -> Result<MetricsReport> {
    let target = read_contours(&inputs.target)?;
    let kneaded = read_contours(&inputs.kneaded)?;
    let summary: Option<SimSummary> = inputs.simulation.as_ref().map(read_json).transpose()?;
    let target_area = ring_mesh_area(&target)?;
    let mut report = MetricsReport {
        surface_area: Some(ring_mesh_area(&kneaded)?),
        target_area: Some(target_area),
        volume: Some(summary.as_ref().map_or_else(|| kneaded.volume(), |s| s.final_volume)),
        ..MetricsReport::default()
    };
    match (inputs.mass_in, inputs.mass_out) {
        (Some(a), Some(b)) => {
            let m = material_balance(a, b)?;
            report.utilization = Some(m.utilization);
            report.material = Some(m);
        }
        (None, None) => {
            if let Some(s) = &summary {
                report.utilization = Some(utilization(s.initial_volume, s.final_volume.min(s.initial_volume))?);
            }
        }
        _ => return Err(Error::invalid("massIn and massOut must be given together")),
    }
    if let Some(s) = &summary {
        report.area_series = s.area_series.clone();
    }
    if let Some(c) = &inputs.compensated {
        report.error_stats = Some(error_distribution(
            &kneaded.to_point_cloud(),
            &read_points(c)?,
            &target.to_point_cloud(),
        )?);
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_json(out_dir.join(REPORT), &report)?;
    if !report.area_series.is_empty() {
        write_text(out_dir.join(AREA_PLOT), &area_plot(&report.area_series, Some(target_area)).to_svg())?;
    }
    if !inputs.curves.is_empty() {
        let curves: Vec<(String, RegistrationCurve)> = inputs
            .curves
            .iter()
            .map(|(name, p)| Ok((name.clone(), read_json(p)?)))
            .collect::<Result<_>>()?;
        let named: Vec<(&str, &RegistrationCurve)> = curves.iter().map(|(n, c)| (n.as_str(), c)).collect();
        write_text(out_dir.join(RMSE_PLOT), &rmse_plot(&named).to_svg())?;
    }
    Ok(report)
}

// ---------------------------------------------------------------- pipeline

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineSummary {
    pub classification: Classification,
    pub strategy: Strategy,
    pub ideal: RegistrationCurve,
    pub kneaded: RegistrationCurve,
    pub compensated: Option<RegistrationCurve>,
    pub simulation: SimSummary,
    pub report: MetricsReport,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Invalid(m) => Error::Invalid(format!("[{name}] {m}")),
        Error::Degenerate(m) => Error::Degenerate(format!("[{name}] {m}")),
        other => other,
    })
}

/// Runs every stage in order, writing all artifacts into `out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<PipelineSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let p = |name: &str| out_dir.join(name);
    match &cfg.shape {
        ShapeSource::Spec(spec) => stage(
            "gen-shape",
            stage_gen_shape(spec, cfg.layer_step, cfg.points_per_layer, &p(TARGET_CONTOURS), Some(&p(TARGET_STL))),
        )?,
        ShapeSource::Stl { stl } => stage(
            "slice",
            stage_slice(stl, cfg.layer_step, cfg.points_per_layer, &p(TARGET_CONTOURS)),
        )?,
    };
    let classification = stage(
        "classify",
        stage_classify(&p(TARGET_CONTOURS), &cfg.classifier, &p(CLASSIFICATION)),
    )?;
    let strategy = resolve_strategy(cfg.strategy, &classification);
    stage("plan", stage_plan(&p(TARGET_CONTOURS), &cfg.planner, strategy, &p(PROGRAM)))?;
    stage("ideal-pcl", stage_ideal(&p(PROGRAM), &cfg.effector, &p(IDEAL_CLOUD)))?;
    let simulation = stage(
        "simulate",
        stage_simulate(
            &p(TARGET_CONTOURS),
            &cfg.billet,
            &cfg.planner,
            strategy,
            &cfg.sim,
            &p(KNEADED_CLOUD),
            &p(SIMULATION),
        ),
    )?;
    let ideal = stage(
        "register",
        stage_register(&p(IDEAL_CLOUD), &p(TARGET_CONTOURS), &cfg.sweep, &p(IDEAL_CURVE)),
    )?;
    let kneaded = stage(
        "register",
        stage_register(&p(KNEADED_CLOUD), &p(TARGET_CONTOURS), &cfg.sweep, &p(KNEADED_CURVE)),
    )?;
    let mut curves = vec![
        ("ideal".to_string(), p(IDEAL_CURVE).with_extension("json")),
        ("kneaded".to_string(), p(KNEADED_CURVE).with_extension("json")),
    ];
    let compensated = match kneaded.compensation_value {
        Some(c) => {
            stage(
                "register",
                stage_compensate(&p(KNEADED_CLOUD), c, cfg.sweep.compensation, &p(COMPENSATED_CLOUD)),
            )?;
            let curve = stage(
                "register",
                stage_register(&p(COMPENSATED_CLOUD), &p(TARGET_CONTOURS), &cfg.sweep, &p(COMPENSATED_CURVE)),
            )?;
            curves.push(("compensated".to_string(), p(COMPENSATED_CURVE).with_extension("json")));
            Some(curve)
        }
        None => {
            log::warn!("kneaded cloud never reached full fitness; skipping compensation");
            None
        }
    };
    let inputs = MetricsInputs {
        target: p(TARGET_CONTOURS),
        kneaded: p(KNEADED_CLOUD),
        compensated: compensated.as_ref().map(|_| p(COMPENSATED_CLOUD)),
        simulation: Some(p(SIMULATION)),
        curves,
        mass_in: cfg.mass_in,
        mass_out: cfg.mass_out,
    };
    let report = stage("metrics", stage_metrics(&inputs, out_dir))?;
    Ok(PipelineSummary {
        classification,
        strategy,
        ideal,
        kneaded,
        compensated,
        simulation,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for g in Geometry::ALL {
            PipelineConfig::preset(g).validate().unwrap();
        }
    }

    #[test]
    fn every_bad_key_is_listed() {
        let mut cfg = PipelineConfig::preset(Geometry::B);
        cfg.planner.effector_diameter = 0.0;
        cfg.sim.rebound_eps = -1.0;
        cfg.sweep.thresholds = vec![];
        cfg.points_per_layer = 3;
        let Err(Error::Config(keys)) = cfg.validate() else {
            panic!("expected a config error");
        };
        for k in ["planner", "sim", "sweep.thresholds", "pointsPerLayer"] {
            assert!(keys.iter().any(|m| m.starts_with(k)), "{k} missing from {keys:?}");
        }
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = PipelineConfig::preset(Geometry::C);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_json(&text).unwrap(), cfg);
        let partial = r#"{"strategy":"gradient","shape":{"stl":"part.stl"}}"#;
        let cfg = PipelineConfig::from_json(partial).unwrap();
        assert_eq!(cfg.strategy, StrategyChoice::Gradient);
        assert!(matches!(cfg.shape, ShapeSource::Stl { .. }));
        assert!(PipelineConfig::from_json(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn billet_holds_target_volume() {
        let b = preset_billet(Geometry::B, 400, 1.0).unwrap();
        let ShapeSpec::SquarePrism { side, height } = b else { panic!() };
        assert_eq!(side, 60.0);
        // Cylinder d60 h40 on a 400-gon: 1/2 * 400 * sin(2pi/400) * 900 * 40.
        let v = 0.5 * 400.0 * (2.0 * PI / 400.0).sin() * 900.0 * 40.0;
        assert!((height - v / 3600.0).abs() < 1e-9);
    }
}
