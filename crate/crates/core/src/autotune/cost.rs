//! Weighted-norm cost with a stability penalty.

use serde::{Deserialize, Serialize};

use crate::controller::ControllerStructure;
use crate::frf::FrfSet;
use crate::par::{self, Execution};
use crate::shaping::{local_block_norms, summarize, NormReport, SampledWeights, WeightConfig};
use crate::stability::{
    assess_local, contour_of, controller_points, Contour, IntegratorDeclaration, StabilityConfig, StabilityVerdict,
    Verdict,
};
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// Penalty added when any local loop is not verified stable.
    pub lambda_high: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { lambda_high: 1e6 }
    }
}

/// Everything about a cost evaluation that does not depend on the
/// parameters, computed once.
pub struct CostContext<'a> {
    pub frfs: &'a FrfSet,
    pub structure: &'a ControllerStructure,
    pub cost: CostConfig,
    pub stability: StabilityConfig,
    pub p_ol: usize,
    n_int: Vec<usize>,
    weights: Vec<SampledWeights>,
    points: Vec<C64>,
    contour: Contour,
    /// Parallelism across locals inside one evaluation.
    pub mode: Execution,
}

/// Full outcome of one evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub cost: f64,
    /// Every local verified stable.
    pub feasible: bool,
    pub norms: NormReport,
    pub verdicts: Vec<StabilityVerdict>,
    /// Sub-evaluation failures (controller domain, singular resolvent, …).
    pub errors: Vec<String>,
}

impl<'a> CostContext<'a> {
    pub fn new(
        frfs: &'a FrfSet,
        structure: &'a ControllerStructure,
        weights: &WeightConfig,
        cost: CostConfig,
        decl: &IntegratorDeclaration,
        stability: StabilityConfig,
        mode: Execution,
    ) -> Result<Self> {
        if structure.channels != frfs.n_rb {
            return Err(Error::Dimension(format!(
                "controller has {} channels, plant has {}",
                structure.channels, frfs.n_rb
            )));
        }
        if structure.is_scheduled() && structure.np != frfs.np {
            return Err(Error::Dimension(format!(
                "controller is scheduled on {} variables, operating points have {}",
                structure.np, frfs.np
            )));
        }
        if !(cost.lambda_high > 0.0 && cost.lambda_high.is_finite()) {
            return Err(Error::Config("lambda_high must be positive".into()));
        }
        let weights = frfs
            .locals
            .iter()
            .map(|l| SampledWeights::new(&weights.weights_for(l, &frfs.grid)?, &frfs.grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            frfs,
            structure,
            cost,
            stability,
            p_ol: decl.p_ol,
            n_int: decl.per_channel(&structure.integrators())?,
            weights,
            points: controller_points(&frfs.grid, frfs.sample_time),
            contour: contour_of(frfs),
            mode,
        })
    }

    fn point_of(&self, i: usize) -> Vec<f64> {
        self.structure.point_for(self.frfs.locals[i].point.values())
    }

    /// Evaluate the parameter vector `theta` (physical units).
    pub fn evaluate(&self, theta: &[f64]) -> Evaluation {
        let locals = par::map_range(self.frfs.locals.len(), self.mode, |i| {
            let local = &self.frfs.locals[i];
            match self.structure.freeze(theta, &self.point_of(i), &self.points) {
                Ok(k) => {
                    let verdict = assess_local(
                        &local.response.data,
                        &k,
                        &self.frfs.grid,
                        &self.n_int,
                        self.p_ol,
                        self.contour,
                        &self.stability,
                    );
                    let norms = local_block_norms(&local.response.data, &k, &self.weights[i]);
                    Ok((verdict, norms))
                }
                Err(e) => Err(format!("local {i}: {e}")),
            }
        });
        let mut verdicts = Vec::with_capacity(locals.len());
        let mut blocks = Vec::with_capacity(locals.len());
        let mut errors = Vec::new();
        for r in locals {
            match r {
                Ok((v, b)) => {
                    verdicts.push(v);
                    blocks.push(b);
                }
                Err(e) => {
                    errors.push(e.clone());
                    verdicts.push(StabilityVerdict {
                        verdict: Verdict::Undetermined,
                        stable: false,
                        windings: Vec::new(),
                        min_distances: Vec::new(),
                        warnings: vec![e],
                    });
                    blocks.push([f64::INFINITY; 4]);
                }
            }
        }
        let norms = summarize(blocks);
        let feasible = errors.is_empty() && verdicts.iter().all(|v| v.stable);
        let lambda = self.cost.lambda_high;
        let cost = if !errors.is_empty() || !norms.overall.is_finite() {
            2.0 * lambda
        } else if feasible {
            norms.overall
        } else {
            lambda + norms.overall
        };
        Evaluation { cost, feasible, norms, verdicts, errors }
    }

    pub fn cost(&self, theta: &[f64]) -> f64 {
        self.evaluate(theta).cost
    }

    /// Cost of a normalized parameter vector.
    pub fn cost_normalized(&self, x: &[f64]) -> f64 {
        self.cost(&self.structure.denormalize(x).theta)
    }
}
