//! Two-stage tuning of the stacked controller parameters: a particle swarm
//! explores the normalized box, then quasi-Newton refinement polishes the
//! swarm's best point.

mod bfgs;
mod cost;
mod pso;

use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

pub use bfgs::{bfgs_refine, BfgsConfig, BfgsResult};
pub use cost::{CostConfig, CostContext, Evaluation};
pub use pso::{pso_search, PsoConfig, PsoResult};

use crate::controller::{ControllerStructure, GeneralizedController};
use crate::frf::FrfSet;
use crate::par::Execution;
use crate::shaping::WeightConfig;
use crate::stability::{IntegratorDeclaration, StabilityConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Continuous-time FRFs; the controller is evaluated at `jω`.
    #[default]
    Ct,
    /// Sampled FRFs at `e^{jωTs}`; the controller is evaluated through the
    /// Tustin map.
    Dt,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub weights: WeightConfig,
    pub cost: CostConfig,
    pub pso: PsoConfig,
    pub bfgs: BfgsConfig,
    pub integrators: IntegratorDeclaration,
    pub stability: StabilityConfig,
    pub mode: Mode,
    pub seed: u64,
    pub execution: Execution,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuneResult {
    /// Best parameters, physical units, in descriptor order.
    pub theta: Vec<f64>,
    pub cost: f64,
    /// Every local verified stable at `theta`.
    pub stable: bool,
    /// Set when the result is not usable, with the reason.
    pub failure: Option<String>,
    pub initial_cost: f64,
    pub pso_cost: f64,
    pub pso_trace: Vec<f64>,
    pub bfgs_trace: Vec<f64>,
    pub evaluations: usize,
    pub final_evaluation: Evaluation,
    pub seed: u64,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TuneResult {
    pub fn params(&self) -> GeneralizedController {
        GeneralizedController { theta: self.theta.clone() }
    }
}

/// Check that the tuning mode matches the data.
pub fn check_mode(frfs: &FrfSet, mode: Mode) -> Result<()> {
    match (mode, frfs.sample_time) {
        (Mode::Ct, None) | (Mode::Dt, Some(_)) => Ok(()),
        (Mode::Dt, None) => Err(Error::Config(
            "discrete-time mode needs FRF data flagged as sampled (sample_time_s)".into(),
        )),
        (Mode::Ct, Some(ts)) => Err(Error::Config(format!(
            "FRF data are sampled (Ts = {ts} s); use discrete-time mode"
        ))),
    }
}

/// PSO, then BFGS from the swarm's best point, then re-validation.
pub fn autotune(frfs: &FrfSet, structure: &ControllerStructure, cfg: &TuneConfig) -> Result<TuneResult> {
    let started = Instant::now();
    check_mode(frfs, cfg.mode)?;
    cfg.pso.validate()?;
    let ctx = CostContext::new(
        frfs,
        structure,
        &cfg.weights,
        cfg.cost.clone(),
        &cfg.integrators,
        cfg.stability,
        Execution::Sequential,
    )?;
    let lambda = cfg.cost.lambda_high;
    let n = structure.n_params();
    let x0 = structure.normalize(&structure.initial().theta);
    let initial_cost = ctx.cost_normalized(&x0);
    let objective = |x: &[f64]| ctx.cost_normalized(x);

    let pso = pso_search(&cfg.pso, n, cfg.seed, Some(&x0), objective, cfg.execution, |k, best| {
        info!("iter={k} stage=pso best_cost={best} feasible={}", best < lambda);
    });
    let bfgs = bfgs_refine(&cfg.bfgs, &pso.best, pso.best_cost, objective, cfg.execution, |k, best| {
        info!("iter={k} stage=bfgs best_cost={best} feasible={}", best < lambda);
    });

    let theta = structure.denormalize(&bfgs.x).theta;
    let final_evaluation = ctx.evaluate(&theta);
    let stable = final_evaluation.feasible;
    let failure = if pso.best_cost >= lambda && !stable {
        Some("no stabilizing parameters found".to_string())
    } else if !stable {
        Some("final parameters are not verified stable on every local".to_string())
    } else {
        None
    };
    if let Some(reason) = &failure {
        log::warn!("tuning failed: {reason}");
    }
    Ok(TuneResult {
        theta,
        cost: final_evaluation.cost,
        stable,
        failure,
        initial_cost,
        pso_cost: pso.best_cost,
        pso_trace: pso.trace,
        bfgs_trace: bfgs.trace,
        evaluations: pso.evaluations + bfgs.evaluations + 2,
        final_evaluation,
        seed: cfg.seed,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
