//! Projected quasi-Newton refinement with finite-difference gradients.

use serde::{Deserialize, Serialize};

use crate::par::{self, Execution};
use crate::RMat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BfgsConfig {
    pub max_iterations: usize,
    /// Central-difference step, relative to `max(1, |x|)`.
    pub fd_step: f64,
    /// Stop when the relative cost decrease of an iteration drops below this.
    pub tolerance: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self { max_iterations: 100, fd_step: 1e-6, tolerance: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub cost: f64,
    /// Cost at the start, then after every accepted iteration.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 30;
const MAX_STEP: f64 = 0.25;

fn project(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

fn gradient<F>(cost: &F, x: &[f64], step: f64, mode: Execution) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    par::map_range(x.len(), mode, |i| {
        let h = step * x[i].abs().max(1.0);
        let (lo, hi) = ((x[i] - h).max(0.0), (x[i] + h).min(1.0));
        let at = |v: f64| {
            let mut y = x.to_vec();
            y[i] = v;
            cost(&y)
        };
        if hi > lo {
            (at(hi) - at(lo)) / (hi - lo)
        } else {
            0.0
        }
    })
}

/// Minimize `cost` on `[0, 1]^n` starting from `start` (whose cost is
/// `start_cost`). The result never costs more than the start.
pub fn bfgs_refine<F>(
    cfg: &BfgsConfig,
    start: &[f64],
    start_cost: f64,
    cost: F,
    mode: Execution,
    mut on_iteration: impl FnMut(usize, f64),
) -> BfgsResult
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let n = start.len();
    let mut x = project(start);
    let mut fx = start_cost;
    let mut trace = vec![fx];
    let mut evaluations = 0;
    if n == 0 || !fx.is_finite() {
        return BfgsResult { x, cost: fx, trace, evaluations };
    }
    let mut g = gradient(&cost, &x, cfg.fd_step, mode);
    evaluations += 2 * n;
    let mut hinv = RMat::identity(n, n);
    let mut fresh = true;

    for it in 1..=cfg.max_iterations {
        if g.iter().all(|v| v.abs() < 1e-12) {
            break;
        }
        let gv = nalgebra::DVector::from_column_slice(&g);
        let mut d = -(&hinv * &gv);
        if d.dot(&gv) >= 0.0 || d.iter().any(|v| !v.is_finite()) {
            hinv = RMat::identity(n, n);
            fresh = true;
            d = -gv.clone();
        }
        let dmax = d.amax();
        let mut t = if dmax > MAX_STEP { MAX_STEP / dmax } else { 1.0 };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let trial = project(&x.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect::<Vec<_>>());
            let decrease: f64 = trial.iter().zip(&x).zip(&g).map(|((a, b), gi)| gi * (a - b)).sum();
            let ft = cost(&trial);
            evaluations += 1;
            if ft.is_finite() && ft <= fx + ARMIJO * decrease && ft <= fx {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break;
            }
            hinv = RMat::identity(n, n);
            fresh = true;
            continue;
        };
        let g_new = gradient(&cost, &x_new, cfg.fd_step, mode);
        evaluations += 2 * n;
        let s = nalgebra::DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let y = nalgebra::DVector::from_iterator(n, g_new.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy.is_finite() {
            if fresh {
                hinv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let eye = RMat::identity(n, n);
            let left = &eye - &s * y.transpose() * rho;
            let right = &eye - &y * s.transpose() * rho;
            hinv = &left * &hinv * &right + &s * s.transpose() * rho;
            fresh = false;
        }
        let rel = (fx - f_new) / fx.abs().max(f64::MIN_POSITIVE);
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        on_iteration(it, fx);
        if rel < cfg.tolerance {
            break;
        }
    }
    BfgsResult { x, cost: fx, trace, evaluations }
}
