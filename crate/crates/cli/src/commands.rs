use std::path::Path;
use std::time::Instant;

use autotune_core::autotune::{autotune, check_mode, CostContext, Evaluation, Mode, TuneResult};
use autotune_core::controller::{load_structure, ControllerStructure, GeneralizedController, StructureFile};
use autotune_core::discretize::{integration_step, LfrExport, SlotLaw};
use autotune_core::frf::{load_frf_set, save_frf_set, FrfSet};
use autotune_core::plant::{load_plant, sample_frf_set, ModalPlant, SynthOptions};
use autotune_core::shaping::{loop_metrics, ChannelMetrics};
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::export;
use crate::CliError;

/// Process outcome of a successful run; errors map to exit code 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Unstable,
    Infeasible,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Unstable => 1,
            Outcome::Infeasible => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteInfo {
    pub sample_time_s: f64,
    /// `Ts`, or the prewarped step when `prewarp_at` is set.
    pub integration_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prewarp_at: Option<f64>,
}

/// Tuned controller artifact: the structure echo with resolved values, the
/// continuous-time LFR partitions and the affine slot laws, plus the
/// sampling data when the controller runs in discrete time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerArtifact {
    pub mode: Mode,
    pub parameters: Vec<NamedValue>,
    pub structure: StructureFile,
    pub lfr: LfrExport,
    pub slots: Vec<SlotLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrete: Option<DiscreteInfo>,
}

#[derive(Serialize)]
struct TuneReport<'a> {
    config: RunConfig,
    parameters: Vec<NamedValue>,
    result: &'a TuneResult,
    metrics: Vec<Vec<ChannelMetrics>>,
}

#[derive(Serialize)]
struct AnalysisReport<'a> {
    stable: bool,
    evaluation: &'a Evaluation,
    metrics: Vec<Vec<ChannelMetrics>>,
}

fn plant_of(cfg: &RunConfig) -> Result<ModalPlant, CliError> {
    match &cfg.plant {
        Some(path) => Ok(load_plant(path)?),
        None => Ok(ModalPlant::demo()),
    }
}

/// Sampled plant data for the run: sampled under `Mode::Dt`, continuous
/// otherwise.
pub fn synthesize(cfg: &RunConfig) -> Result<FrfSet, CliError> {
    let plant = plant_of(cfg)?;
    let grid = cfg.grid.build()?;
    let points = cfg.points.build(&plant.scheduling_box);
    let options = SynthOptions {
        decouple_per_point: cfg.decouple_per_point.unwrap_or(true),
        sample_time: if cfg.tune.mode == Mode::Dt { cfg.ts } else { None },
    };
    Ok(sample_frf_set(&plant, &grid, &points, options)?)
}

fn frf_for(cfg: &RunConfig) -> Result<FrfSet, CliError> {
    let frfs = match &cfg.frf {
        Some(path) => load_frf_set(path)?,
        None => synthesize(cfg)?,
    };
    if let (Some(ts), Some(data_ts)) = (cfg.ts, frfs.sample_time) {
        if ts != data_ts {
            return Err(CliError::Input(format!("--ts {ts} s does not match the FRF sampling time {data_ts} s")));
        }
    }
    check_mode(&frfs, cfg.tune.mode)?;
    Ok(frfs)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn prepare_out(cfg: &RunConfig) -> Result<std::path::PathBuf, CliError> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn named(structure: &ControllerStructure, theta: &[f64]) -> Vec<NamedValue> {
    structure.descriptors().iter().zip(theta).map(|(d, &v)| NamedValue { name: d.name.clone(), value: v }).collect()
}

pub fn artifact(
    structure: &ControllerStructure,
    params: &GeneralizedController,
    mode: Mode,
    ts: Option<f64>,
    prewarp_at: Option<f64>,
) -> Result<ControllerArtifact, CliError> {
    let discrete = match (mode, ts) {
        (Mode::Dt, Some(ts)) => Some(DiscreteInfo { sample_time_s: ts, integration_step: integration_step(ts, prewarp_at)?, prewarp_at }),
        _ => None,
    };
    Ok(ControllerArtifact {
        mode,
        parameters: named(structure, &params.theta),
        structure: structure.to_file(&params.theta)?,
        lfr: LfrExport::from(&structure.lfr()?),
        slots: structure.phi_laws(&params.theta)?.into_iter().map(|(value, slope)| SlotLaw { value, slope }).collect(),
        discrete,
    })
}

/// Read a controller to analyze: a `controller.json` artifact or a plain
/// structure file; either way the stored values are the parameters.
pub fn load_controller(path: &Path) -> Result<(ControllerStructure, GeneralizedController), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let structure = if value.get("structure").is_some() {
        let a: ControllerArtifact =
            serde_json::from_value(value).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        a.structure.to_structure()?
    } else {
        load_structure(path)?
    };
    let params = structure.initial();
    Ok((structure, params))
}

/// Write the FRF set of the configured plant to `<out>/frf.json`.
pub fn synth(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let frfs = synthesize(cfg)?;
    let dir = prepare_out(cfg)?;
    let path = dir.join("frf.json");
    save_frf_set(&frfs, &path)?;
    info!("wrote {} ({} locals, {} frequencies)", path.display(), frfs.len(), frfs.grid.len());
    Ok(Outcome::Success)
}

/// Tune the configured structure; the report is written even when no
/// stabilizing controller was found.
pub fn tune(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let path = cfg.structure.as_ref().ok_or_else(|| CliError::Input("tune needs a controller structure file".into()))?;
    let structure = load_structure(path)?;
    let frfs = frf_for(cfg)?;
    let started = Instant::now();
    let result = autotune(&frfs, &structure, &cfg.tune)?;
    info!(
        "tuning finished in {:.1} s: cost {} ({} evaluations), stable = {}",
        started.elapsed().as_secs_f64(),
        result.cost,
        result.evaluations,
        result.stable
    );
    let params = result.params();
    let dir = prepare_out(cfg)?;
    let metrics = loop_metrics(&frfs, &structure, &params).unwrap_or_default();
    let mut echo = cfg.clone();
    echo.out = None;
    let report = TuneReport { config: echo, parameters: named(&structure, &result.theta), result: &result, metrics };
    write_json(&dir.join("report.json"), &report)?;
    write_json(&dir.join("controller.json"), &artifact(&structure, &params, cfg.tune.mode, frfs.sample_time.or(cfg.ts), cfg.prewarp_at)?)?;
    export::write_all(&dir, &frfs, &structure, &params, &cfg.tune)?;
    Ok(if result.stable { Outcome::Success } else { Outcome::Infeasible })
}

/// Stability verdicts, achieved norms and plot data for a given controller.
pub fn analyze(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let path = cfg.controller.as_ref().ok_or_else(|| CliError::Input("analyze needs a controller file".into()))?;
    let (structure, params) = load_controller(path)?;
    let frfs = frf_for(cfg)?;
    let ctx = CostContext::new(
        &frfs,
        &structure,
        &cfg.tune.weights,
        cfg.tune.cost.clone(),
        &cfg.tune.integrators,
        cfg.tune.stability,
        cfg.tune.execution,
    )?;
    let evaluation = ctx.evaluate(&params.theta);
    for (i, v) in evaluation.verdicts.iter().enumerate() {
        info!("local {i}: {:?} windings {:?}", v.verdict, v.windings);
    }
    let dir = prepare_out(cfg)?;
    let metrics = loop_metrics(&frfs, &structure, &params).unwrap_or_default();
    let report = AnalysisReport { stable: evaluation.feasible, evaluation: &evaluation, metrics };
    write_json(&dir.join("analysis.json"), &report)?;
    export::write_all(&dir, &frfs, &structure, &params, &cfg.tune)?;
    Ok(if evaluation.feasible { Outcome::Success } else { Outcome::Unstable })
}
