//! Tustin discretization through the r-operator.
//!
//! Every integrator `1/s` of a continuous-time realization is replaced by
//! `r⁻¹ = (h/2)(z + 1)/(z − 1)`, realized with one auxiliary state per
//! integrator:
//!
//! ```text
//! x(k)   = 2h λ(k) + ½h w(k),     w = A x + B u
//! λ(k+1) = λ(k) + ½ w(k)
//! ```
//!
//! The continuous-time matrices stay untouched; the algebraic loop through
//! `x` is solved with `F = (I − A h/2)⁻¹`, factored once. `h = Ts`, or
//! `2 tan(ω0 Ts/2)/ω0` when prewarping at `ω0`.

use std::f64::consts::PI;

use nalgebra::{DVector, LU};
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerStructure, GeneralizedController, LfrBlock, StructureFile};
use crate::frf::{ComplexResponse, FrequencyGrid, OperatingPoint};
use crate::linalg::StateSpace;
use crate::{CMat, Error, RMat, Result, C64};

/// Effective integration step `h` of the r-operator.
pub fn integration_step(ts: f64, prewarp_at: Option<f64>) -> Result<f64> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::Config(format!("sampling time {ts} must be positive")));
    }
    match prewarp_at {
        None => Ok(ts),
        Some(w0) if w0 > 0.0 && w0 < PI / ts => Ok(2.0 * (w0 * ts / 2.0).tan() / w0),
        Some(w0) => Err(Error::Config(format!("prewarp frequency {w0} must lie in (0, π/Ts)"))),
    }
}

/// Discrete-time controller built on an unmodified continuous-time state
/// space.
#[derive(Clone, Debug)]
pub struct DtController {
    /// Continuous-time matrices, stored verbatim.
    pub ct: StateSpace,
    pub ts: f64,
    pub h: f64,
    f: RMat,
}

fn factor(a: &RMat, h: f64) -> Result<RMat> {
    let n = a.nrows();
    let m = RMat::identity(n, n) - a * (h / 2.0);
    let lu = LU::new(m);
    let u = lu.u();
    let scale = u.abs().max().max(1.0);
    let singular = (0..n).any(|i| !(u[(i, i)].abs() > 1e-12 * scale));
    match (singular, lu.try_inverse()) {
        (false, Some(f)) => Ok(f),
        _ => {
            let target = C64::new(2.0 / h, 0.0);
            let eigenvalue = a
                .clone()
                .complex_eigenvalues()
                .iter()
                .copied()
                .min_by(|x, y| (x - target).norm().total_cmp(&(y - target).norm()))
                .unwrap_or(target);
            Err(Error::WellPosedness { eigenvalue })
        }
    }
}

/// One sample of the controller state: the auxiliary integrator states.
#[derive(Clone, Debug, PartialEq)]
pub struct DtState(pub DVector<f64>);

impl DtController {
    pub fn states(&self) -> usize {
        self.ct.states()
    }

    pub fn zero_state(&self) -> DtState {
        DtState(DVector::zeros(self.states()))
    }

    /// Equivalent standard state space in `λ`:
    /// `Ad = I + hAF`, `Bd = ½(I + ½hAF)B`, `Cd = 2hCF`, `Dd = D + ½hCFB`.
    pub fn lambda_form(&self) -> StateSpace {
        let (a, b, c, d) = (&self.ct.a, &self.ct.b, &self.ct.c, &self.ct.d);
        let n = self.states();
        let h = self.h;
        let af = a * &self.f;
        let cf = c * &self.f;
        let eye = RMat::identity(n, n);
        StateSpace {
            a: &eye + &af * h,
            b: (&eye + &af * (h / 2.0)) * b * 0.5,
            c: &cf * (2.0 * h),
            d: d + &cf * b * (h / 2.0),
        }
    }

    /// Frequency response at `z = e^{jωTs}` for every grid point.
    pub fn dt_frf(&self, grid: &FrequencyGrid) -> Result<ComplexResponse> {
        let limit = PI / self.ts;
        if grid.max() > limit * (1.0 + 1e-12) {
            return Err(Error::AboveNyquist { omega: grid.max(), limit });
        }
        let form = self.lambda_form();
        let data = grid
            .values()
            .iter()
            .map(|&w| {
                let z = C64::from_polar(1.0, w * self.ts);
                form.response(z).ok_or(Error::SingularResolvent { omega: w })
            })
            .collect::<Result<Vec<CMat>>>()?;
        ComplexResponse::new(self.ct.outputs(), self.ct.inputs(), data)
    }

    /// One sample: returns `y(k)` and advances the state.
    pub fn step(&self, u: &[f64], state: &mut DtState) -> Vec<f64> {
        let u = DVector::from_column_slice(u);
        let h = self.h;
        let x = &self.f * (&state.0 * (2.0 * h) + &self.ct.b * &u * (h / 2.0));
        let y = &self.ct.c * &x + &self.ct.d * &u;
        state.0 += (&self.ct.a * &x + &self.ct.b * &u) * 0.5;
        y.iter().copied().collect()
    }
}

/// Wrap a closed continuous-time realization in the r-operator.
pub fn discretize(ct: &StateSpace, ts: f64) -> Result<DtController> {
    discretize_prewarped(ct, ts, None)
}

pub fn discretize_prewarped(ct: &StateSpace, ts: f64, prewarp_at: Option<f64>) -> Result<DtController> {
    let h = integration_step(ts, prewarp_at)?;
    let f = factor(&ct.a, h)?;
    Ok(DtController { ct: ct.clone(), ts, h, f })
}

/// Scheduled discrete-time controller: the controller LFR is closed with
/// the slot values at the current scheduling sample and then stepped.
#[derive(Clone, Debug)]
pub struct DtLpvController {
    pub structure: ControllerStructure,
    pub params: GeneralizedController,
    pub lfr: LfrBlock,
    pub ts: f64,
    pub prewarp_at: Option<f64>,
}

impl DtLpvController {
    pub fn new(structure: ControllerStructure, params: GeneralizedController, ts: f64, prewarp_at: Option<f64>) -> Result<Self> {
        integration_step(ts, prewarp_at)?;
        let lfr = structure.lfr()?;
        Ok(Self { structure, params, lfr, ts, prewarp_at })
    }

    /// Frozen discrete-time controller at `p`.
    pub fn at(&self, p: &[f64]) -> Result<DtController> {
        let ct = self.lfr.close(&self.structure.phi(&self.params.theta, p)?)?;
        discretize_prewarped(&ct, self.ts, self.prewarp_at)
    }

    pub fn dt_frf(&self, grid: &FrequencyGrid, p: &OperatingPoint) -> Result<ComplexResponse> {
        self.at(p.values())?.dt_frf(grid)
    }

    /// One sample with the scheduling variables frozen over the step.
    pub fn step(&self, u: &[f64], p: &[f64], state: &mut DtState) -> Result<Vec<f64>> {
        Ok(self.at(p)?.step(u, state))
    }

    pub fn export(&self) -> Result<DtExport> {
        let phi = self.structure.phi_laws(&self.params.theta)?;
        Ok(DtExport {
            sample_time_s: self.ts,
            integration_step: integration_step(self.ts, self.prewarp_at)?,
            prewarp_at: self.prewarp_at,
            np: self.structure.np,
            lfr: LfrExport::from(&self.lfr),
            slots: phi.into_iter().map(|(value, slope)| SlotLaw { value, slope }).collect(),
            structure: self.structure.to_file(&self.params.theta)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfrExport {
    pub a: Vec<Vec<f64>>,
    pub b1: Vec<Vec<f64>>,
    pub b2: Vec<Vec<f64>>,
    pub c1: Vec<Vec<f64>>,
    pub d11: Vec<Vec<f64>>,
    pub d12: Vec<Vec<f64>>,
    pub c2: Vec<Vec<f64>>,
    pub d21: Vec<Vec<f64>>,
    pub d22: Vec<Vec<f64>>,
}

impl From<&LfrBlock> for LfrExport {
    fn from(l: &LfrBlock) -> Self {
        let rows = |m: &RMat| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        Self {
            a: rows(&l.a),
            b1: rows(&l.b1),
            b2: rows(&l.b2),
            c1: rows(&l.c1),
            d11: rows(&l.d11),
            d12: rows(&l.d12),
            c2: rows(&l.c2),
            d21: rows(&l.d21),
            d22: rows(&l.d22),
        }
    }
}

/// Slot entry `value + slopeᵀ p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotLaw {
    pub value: f64,
    pub slope: Vec<f64>,
}

/// Everything a real-time host needs: continuous-time LFR partitions, the
/// affine slot laws, and the r-operator step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtExport {
    pub sample_time_s: f64,
    pub integration_step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prewarp_at: Option<f64>,
    pub np: usize,
    pub lfr: LfrExport,
    pub slots: Vec<SlotLaw>,
    pub structure: StructureFile,
}
