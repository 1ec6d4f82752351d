//! Global-best particle swarm on the unit box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::{self, Execution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity clamp as a fraction of the (unit) box width.
    pub velocity_clamp: f64,
    /// Seed one particle with the structure's initial values.
    pub include_initial: bool,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 40,
            iterations: 200,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            velocity_clamp: 0.2,
            include_initial: true,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let positive = [self.inertia, self.cognitive, self.social, self.velocity_clamp];
        if self.particles == 0 || positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(crate::Error::Config("swarm size and PSO coefficients must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsoResult {
    pub best: Vec<f64>,
    pub best_cost: f64,
    /// Best cost after initialization, then after every iteration.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Minimize `cost` over `[0, 1]^dim`. Random numbers are drawn serially
/// from a seeded stream; particle costs may be evaluated concurrently and
/// are reduced in particle order, so the result depends only on the seed.
pub fn pso_search<F>(
    cfg: &PsoConfig,
    dim: usize,
    seed: u64,
    initial: Option<&[f64]>,
    cost: F,
    mode: Execution,
    mut on_iteration: impl FnMut(usize, f64),
) -> PsoResult
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vmax = cfg.velocity_clamp;
    let mut x: Vec<Vec<f64>> = (0..cfg.particles).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect();
    if let (Some(init), true) = (initial, cfg.include_initial) {
        x[0] = init.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    }
    let mut v: Vec<Vec<f64>> =
        (0..cfg.particles).map(|_| (0..dim).map(|_| rng.gen_range(-vmax..=vmax)).collect()).collect();
    let safe = |c: f64| if c.is_nan() { f64::INFINITY } else { c };
    let mut f: Vec<f64> = par::map(&x, mode, |p| safe(cost(p)));
    let mut evaluations = f.len();
    let mut pbest = x.clone();
    let mut pbest_f = f.clone();
    let mut g = 0;
    for i in 1..cfg.particles {
        if f[i] < f[g] {
            g = i;
        }
    }
    let mut gbest = x[g].clone();
    let mut gbest_f = f[g];
    let mut trace = vec![gbest_f];
    on_iteration(0, gbest_f);

    for it in 1..=cfg.iterations {
        for i in 0..cfg.particles {
            for d in 0..dim {
                let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
                let vel = cfg.inertia * v[i][d]
                    + cfg.cognitive * r1 * (pbest[i][d] - x[i][d])
                    + cfg.social * r2 * (gbest[d] - x[i][d]);
                v[i][d] = vel.clamp(-vmax, vmax);
                x[i][d] = (x[i][d] + v[i][d]).clamp(0.0, 1.0);
            }
        }
        f = par::map(&x, mode, |p| safe(cost(p)));
        evaluations += f.len();
        for i in 0..cfg.particles {
            if f[i] < pbest_f[i] {
                pbest_f[i] = f[i];
                pbest[i].clone_from(&x[i]);
            }
            if f[i] < gbest_f {
                gbest_f = f[i];
                gbest.clone_from(&x[i]);
            }
        }
        trace.push(gbest_f);
        on_iteration(it, gbest_f);
    }
    PsoResult { best: gbest, best_cost: gbest_f, trace, evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        // [0,1] ↦ [-5,5]
        x.iter().map(|v| (10.0 * v - 5.0).powi(2)).sum()
    }

    #[test]
    fn sphere_converges() {
        let cfg = PsoConfig { include_initial: false, ..PsoConfig::default() };
        let r = pso_search(&cfg, 4, 7, None, sphere, Execution::Sequential, |_, _| {});
        assert!(r.best_cost < 1e-3, "best {}", r.best_cost);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.trace.len(), 201);
    }

    #[test]
    fn zero_budget_returns_best_initial_particle() {
        let cfg = PsoConfig { iterations: 0, include_initial: false, ..PsoConfig::default() };
        let r = pso_search(&cfg, 3, 1, None, sphere, Execution::Sequential, |_, _| {});
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init: Vec<Vec<f64>> = (0..cfg.particles).map(|_| (0..3).map(|_| rng.gen::<f64>()).collect()).collect();
        let best = init.iter().map(|p| sphere(p)).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_cost, best);
        assert_eq!(r.evaluations, cfg.particles);
    }

    #[test]
    fn same_seed_same_trace_in_both_modes() {
        let cfg = PsoConfig { iterations: 30, ..PsoConfig::default() };
        let a = pso_search(&cfg, 5, 42, Some(&[0.5; 5]), sphere, Execution::Sequential, |_, _| {});
        let b = pso_search(&cfg, 5, 42, Some(&[0.5; 5]), sphere, Execution::Parallel, |_, _| {});
        assert_eq!(a, b);
    }
}
