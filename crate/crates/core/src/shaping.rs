//! Piecewise-affine (in log-log) shaping weights and the weighted
//! four-block closed-loop norm.

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerStructure, FrozenController, GeneralizedController, OneOrMany};
use crate::frf::{FrequencyGrid, FrfSet, LocalFrf};
use crate::linalg::max_singular_value;
use crate::par::{self, Execution};
use crate::stability::controller_points;
use crate::{CMat, Error, Result, C64};

fn check_args(omega: f64, alpha: f64) -> Result<()> {
    if !(omega > 0.0) {
        return Err(Error::Config(format!("weight evaluated at ω = {omega}; frequencies must be positive")));
    }
    if !(alpha > 1.0) {
        return Err(Error::Config(format!("sharpening parameter α = {alpha} must exceed 1")));
    }
    Ok(())
}

/// Sensitivity weight: cubic roll-up below `ω_bw/α`, flat `ks` above.
pub fn sensitivity_weight(omega: f64, omega_bw: f64, alpha: f64, ks: f64) -> Result<f64> {
    check_args(omega, alpha)?;
    let corner = omega_bw / alpha;
    Ok(if omega <= corner { ks * (corner / omega).powi(3) } else { ks })
}

/// Complementary / control sensitivity weight: flat `kr` below `αω_bw`,
/// rising linearly above.
pub fn comp_or_control_weight(omega: f64, omega_bw: f64, alpha: f64, kr: f64) -> Result<f64> {
    check_args(omega, alpha)?;
    let corner = alpha * omega_bw;
    Ok(if omega >= corner { kr * omega / corner } else { kr })
}

/// Process sensitivity weight: vee-shaped around the flat floor
/// `[ω_bw/α, αω_bw]`.
pub fn process_weight(omega: f64, omega_bw: f64, alpha: f64, kp_scale: f64) -> Result<f64> {
    check_args(omega, alpha)?;
    let (lo, hi) = (omega_bw / alpha, alpha * omega_bw);
    Ok(if omega < lo {
        kp_scale * lo / omega
    } else if omega > hi {
        kp_scale * omega / hi
    } else {
        kp_scale
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    SensitivityCubic,
    HighpassLinear,
    Vee,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffineWeight {
    pub kind: LawKind,
    pub gain: f64,
    pub omega_bw: f64,
    pub alpha: f64,
}

impl PiecewiseAffineWeight {
    pub fn eval(&self, omega: f64) -> Result<f64> {
        match self.kind {
            LawKind::SensitivityCubic => sensitivity_weight(omega, self.omega_bw, self.alpha, self.gain),
            LawKind::HighpassLinear => comp_or_control_weight(omega, self.omega_bw, self.alpha, self.gain),
            LawKind::Vee => process_weight(omega, self.omega_bw, self.alpha, self.gain),
        }
    }
}

/// Block order of the weighted closed loop.
pub const BLOCKS: [&str; 4] = ["S", "KS", "SP", "KSP"];

/// Diagonal weights per block and channel: `blocks[b][j]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightSet {
    pub blocks: [Vec<PiecewiseAffineWeight>; 4],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KrMode {
    /// `W_KS` gain `kr·|P^ii(jω_bw)|`.
    #[default]
    Scaled,
    /// `W_KS` gain `kr`.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    /// Target bandwidth per channel, rad/s; one value is broadcast.
    pub omega_bw: OneOrMany<f64>,
    pub alpha: f64,
    pub ks: f64,
    pub kr: f64,
    pub kr_mode: KrMode,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { omega_bw: OneOrMany::One(60.0), alpha: 2.0, ks: 0.5, kr: 0.5, kr_mode: KrMode::Scaled }
    }
}

impl WeightConfig {
    pub fn bandwidths(&self, channels: usize) -> Result<Vec<f64>> {
        let w = match &self.omega_bw {
            OneOrMany::One(v) => vec![*v; channels],
            OneOrMany::Many(v) if v.len() == channels => v.clone(),
            OneOrMany::Many(v) => {
                return Err(Error::Config(format!("{} target bandwidths for {channels} channels", v.len())))
            }
        };
        if let Some(bad) = w.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("target bandwidth {bad} must be positive")));
        }
        if !(self.alpha > 1.0) {
            return Err(Error::Config(format!("α = {} must exceed 1", self.alpha)));
        }
        Ok(w)
    }

    /// Weights for one local, scaled by its diagonal plant gains at `ω_bw`.
    pub fn weights_for(&self, frf: &LocalFrf, grid: &FrequencyGrid) -> Result<WeightSet> {
        let bw = self.bandwidths(frf.response.outputs)?;
        let (p_mag, inv) = channel_scalings(frf, grid, &bw)?;
        let law = |kind, gain, j: usize| PiecewiseAffineWeight { kind, gain, omega_bw: bw[j], alpha: self.alpha };
        let n = bw.len();
        let kr_ks = |j: usize| match self.kr_mode {
            KrMode::Scaled => self.kr * p_mag[j],
            KrMode::Fixed => self.kr,
        };
        Ok(WeightSet {
            blocks: [
                (0..n).map(|j| law(LawKind::SensitivityCubic, self.ks, j)).collect(),
                (0..n).map(|j| law(LawKind::HighpassLinear, kr_ks(j), j)).collect(),
                (0..n).map(|j| law(LawKind::Vee, inv[j], j)).collect(),
                (0..n).map(|j| law(LawKind::HighpassLinear, self.kr, j)).collect(),
            ],
        })
    }
}

/// `|P^jj(jω_bw)|` (log-log interpolation on the grid) and its reciprocal
/// per channel.
pub fn channel_scalings(frf: &LocalFrf, grid: &FrequencyGrid, omega_bw: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = grid.values();
    let mut mags = Vec::with_capacity(omega_bw.len());
    for (j, &target) in omega_bw.iter().enumerate() {
        if target < grid.min() || target > grid.max() {
            return Err(Error::Config(format!(
                "target bandwidth {target} rad/s outside the grid span [{}, {}]",
                grid.min(),
                grid.max()
            )));
        }
        let k = w.partition_point(|&v| v < target);
        let mag = |i: usize| frf.response.data[i][(j, j)].norm();
        let m = if w[k] == target {
            mag(k)
        } else {
            let (w0, w1, m0, m1) = (w[k - 1], w[k], mag(k - 1), mag(k));
            if !(m0 > 0.0 && m1 > 0.0) {
                return Err(Error::Config(format!("zero plant magnitude near ω_bw on channel {j}")));
            }
            let t = (target.ln() - w0.ln()) / (w1.ln() - w0.ln());
            (m0.ln() + t * (m1.ln() - m0.ln())).exp()
        };
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Config(format!("zero plant magnitude at ω_bw on channel {j}")));
        }
        mags.push(m);
    }
    let inv = mags.iter().map(|m| 1.0 / m).collect();
    Ok((mags, inv))
}

/// Weight values on the grid, laid out `[k][b][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledWeights {
    pub channels: usize,
    values: Vec<f64>,
}

impl SampledWeights {
    pub fn new(set: &WeightSet, grid: &FrequencyGrid) -> Result<Self> {
        let n = set.blocks[0].len();
        let mut values = Vec::with_capacity(grid.len() * 4 * n);
        for &w in grid.values() {
            for block in &set.blocks {
                for law in block {
                    values.push(law.eval(w)?);
                }
            }
        }
        Ok(Self { channels: n, values })
    }

    pub fn get(&self, k: usize, block: usize, channel: usize) -> f64 {
        self.values[(k * 4 + block) * self.channels + channel]
    }
}

fn scale_rows(m: &mut CMat, weights: &SampledWeights, k: usize, block: usize) {
    for i in 0..m.nrows() {
        let w = weights.get(k, block, i);
        m.row_mut(i).iter_mut().for_each(|z| *z *= w);
    }
}

/// The four closed-loop blocks `S, KS, SP̃, KSP̃` at one frequency; `None`
/// when `I + P̃K` is singular.
pub fn closed_loop_blocks(p: &CMat, k: &CMat) -> Option<[CMat; 4]> {
    let n = p.nrows();
    let mut i_pk = p * k;
    for j in 0..n {
        i_pk[(j, j)] += C64::new(1.0, 0.0);
    }
    let s = crate::linalg::inverse(&i_pk)?;
    let ks = k * &s;
    let sp = &s * p;
    let ksp = &ks * p;
    Some([s, ks, sp, ksp])
}

/// Per-block maxima over the grid of `σmax(W_b(ω)·X_b(ω))` for one local;
/// `+∞` for every block when `I + P̃K` is singular somewhere.
pub fn local_block_norms(plant: &[CMat], k: &FrozenController, weights: &SampledWeights) -> [f64; 4] {
    let mut out = [0.0f64; 4];
    for (i, p) in plant.iter().enumerate() {
        let Some(mut blocks) = closed_loop_blocks(p, &k.matrix(i)) else {
            return [f64::INFINITY; 4];
        };
        for (b, m) in blocks.iter_mut().enumerate() {
            scale_rows(m, weights, i, b);
            let s = max_singular_value(m);
            out[b] = if s.is_nan() { f64::INFINITY } else { out[b].max(s) };
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormReport {
    pub per_local: Vec<f64>,
    /// `[S, KS, SP, KSP]` maxima per local.
    pub per_block: Vec<[f64; 4]>,
    pub overall: f64,
}

/// Weighted `L∞` norm (grid maximum) of every local and of the whole set.
pub fn weighted_norm(
    frfs: &FrfSet,
    structure: &ControllerStructure,
    params: &GeneralizedController,
    weights: &WeightConfig,
    mode: Execution,
) -> Result<NormReport> {
    if structure.channels != frfs.n_rb {
        return Err(Error::Dimension(format!("controller has {} channels, plant has {}", structure.channels, frfs.n_rb)));
    }
    let points = controller_points(&frfs.grid, frfs.sample_time);
    let per_block = par::map(&frfs.locals, mode, |local| -> Result<[f64; 4]> {
        let w = SampledWeights::new(&weights.weights_for(local, &frfs.grid)?, &frfs.grid)?;
        let k = structure.freeze(&params.theta, &structure.point_for(local.point.values()), &points)?;
        Ok(local_block_norms(&local.response.data, &k, &w))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(summarize(per_block))
}

pub fn summarize(per_block: Vec<[f64; 4]>) -> NormReport {
    let per_local: Vec<f64> = per_block.iter().map(|b| b.iter().copied().fold(0.0, f64::max)).collect();
    let overall = per_local.iter().copied().fold(0.0, f64::max);
    NormReport { per_local, per_block, overall }
}

/// Unweighted per-channel loop figures of one local: peak of the diagonal
/// sensitivity entry and the first 0 dB crossing of the diagonal loop gain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelMetrics {
    pub sensitivity_peak_db: f64,
    pub peak_omega: f64,
    /// `None` when `|P̃_jj K_jj|` never drops through 1 on the grid.
    pub crossover: Option<f64>,
}

/// Sensitivity peaks and crossovers for every local and channel
/// (`[local][channel]`).
pub fn loop_metrics(
    frfs: &FrfSet,
    structure: &ControllerStructure,
    params: &GeneralizedController,
) -> Result<Vec<Vec<ChannelMetrics>>> {
    let points = controller_points(&frfs.grid, frfs.sample_time);
    let omega = frfs.grid.values();
    frfs.locals
        .iter()
        .map(|local| {
            let p = structure.point_for(local.point.values());
            let k = structure.freeze(&params.theta, &p, &points)?;
            let n = frfs.n_rb;
            let mut out: Vec<ChannelMetrics> =
                (0..n).map(|_| ChannelMetrics { sensitivity_peak_db: f64::NEG_INFINITY, peak_omega: f64::NAN, crossover: None }).collect();
            let mut prev = vec![f64::NAN; n];
            for (i, p) in local.response.data.iter().enumerate() {
                let km = k.matrix(i);
                let blocks = closed_loop_blocks(p, &km)
                    .ok_or(Error::SingularLoop { omega: omega[i], what: "I + P̃K".into() })?;
                for (j, m) in out.iter_mut().enumerate() {
                    let db = 20.0 * blocks[0][(j, j)].norm().log10();
                    if db > m.sensitivity_peak_db {
                        m.sensitivity_peak_db = db;
                        m.peak_omega = omega[i];
                    }
                    let gain = (p.row(j) * km.column(j))[(0, 0)].norm();
                    if m.crossover.is_none() && i > 0 && prev[j] >= 1.0 && gain < 1.0 {
                        // log-log interpolation of the 0 dB crossing
                        let (g0, g1) = (prev[j].ln(), gain.ln());
                        let (w0, w1) = (omega[i - 1].ln(), omega[i].ln());
                        m.crossover = Some((w0 + (w1 - w0) * g0 / (g0 - g1)).exp());
                    }
                    prev[j] = gain;
                }
            }
            Ok(out)
        })
        .collect()
}
