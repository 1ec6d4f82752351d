//! Local closed-loop stability from FRF data.
//!
//! `det(I + L)` is split into SISO factors `γ_j = 1 + P^jj K^jj`, which carry
//! all integrators, and a MIMO factor `γ0 = det(I + E 𝒯)` built from the
//! interaction term `E = (PK − P̂K̂)(P̂K̂)⁻¹` and `𝒯 = P̂K̂(I + P̂K̂)⁻¹`. Each
//! factor's encirclements are counted along a sampled Nyquist contour that
//! is completed analytically below the first and above the last grid point.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerStructure, FrozenController, GeneralizedController};
use crate::frf::{FrequencyGrid, FrfSet};
use crate::linalg::determinant;
use crate::par::{self, Execution};
use crate::{CMat, Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    /// Minimum admissible distance of an image to its critical point.
    pub tol_origin: f64,
    /// Largest admissible argument change between adjacent samples, degrees.
    pub max_jump_deg: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { tol_origin: 1e-6, max_jump_deg: 90.0 }
    }
}

/// Open-loop integrators and unstable poles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorDeclaration {
    /// Plant integrators per RB channel; one value is broadcast. Rigid-body
    /// channels are double integrators.
    pub plant: Vec<usize>,
    /// Open-loop poles strictly inside the contour (right half plane, or
    /// outside the unit circle for sampled data).
    pub p_ol: usize,
}

impl Default for IntegratorDeclaration {
    fn default() -> Self {
        Self { plant: vec![2], p_ol: 0 }
    }
}

impl IntegratorDeclaration {
    /// `n_int,j`: plant plus controller integrators per channel.
    pub fn per_channel(&self, controller: &[usize]) -> Result<Vec<usize>> {
        let n = controller.len();
        let plant = match self.plant.len() {
            1 => vec![self.plant[0]; n],
            m if m == n => self.plant.clone(),
            m => return Err(Error::Config(format!("{m} plant integrator counts for {n} channels"))),
        };
        Ok(plant.iter().zip(controller).map(|(a, b)| a + b).collect())
    }
}

/// Which contour the frequency samples lie on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contour {
    /// Imaginary axis (D-contour).
    D,
    /// Unit circle `z = e^{jωTs}` (C-contour).
    C,
}

/// Points at which a continuous-time controller is evaluated so that it
/// lines up with the FRF samples: `jω`, or for sampled data the Tustin image
/// `j (2/Ts) tan(ωTs/2)` of `e^{jωTs}`.
pub fn controller_points(grid: &FrequencyGrid, sample_time: Option<f64>) -> Vec<C64> {
    grid.values()
        .iter()
        .map(|&w| match sample_time {
            Some(ts) => C64::new(0.0, 2.0 / ts * (w * ts / 2.0).tan()),
            None => C64::new(0.0, w),
        })
        .collect()
}

/// `L_i = P̃_i K_i` on the grid for every local, the controller frozen at
/// each local operating point.
pub fn loop_transfers(
    frfs: &FrfSet,
    structure: &ControllerStructure,
    params: &GeneralizedController,
) -> Result<Vec<Vec<CMat>>> {
    let points = controller_points(&frfs.grid, frfs.sample_time);
    frfs.locals
        .iter()
        .map(|local| {
            let k = structure.freeze(&params.theta, &structure.point_for(local.point.values()), &points)?;
            Ok(local.response.data.iter().enumerate().map(|(i, p)| p * k.matrix(i)).collect())
        })
        .collect()
}

/// `E = (P K − P̂ K̂)(P̂ K̂)⁻¹` at one frequency, with `P̂`, `K̂` the diagonals.
pub fn interaction_term(p: &CMat, k: &CMat, omega: f64) -> Result<CMat> {
    let n = p.nrows();
    let mut e = p * k;
    for j in 0..n {
        let d = p[(j, j)] * k[(j, j)];
        if d.norm() == 0.0 || !d.norm().is_finite() {
            return Err(Error::SingularLoop {
                omega,
                what: format!("diagonal loop {j} vanishes (transmission zero on the grid)"),
            });
        }
        e[(j, j)] -= d;
        for i in 0..n {
            e[(i, j)] /= d;
        }
    }
    Ok(e)
}

/// Sampled factor images of one local loop.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorImages {
    /// `γ0(ω_k)`.
    pub mimo: Vec<C64>,
    /// `γ_j(ω_k)`, indexed `[j][k]`.
    pub siso: Vec<Vec<C64>>,
}

/// `γ0 = det(I + E𝒯)` and `γ_j = 1 + P^jj K^jj` at every grid point.
///
/// Uses `E𝒯 = (PK − P̂K̂)(I + P̂K̂)⁻¹`, which needs only `I + P̂K̂` to be
/// invertible.
pub fn factorized_images(plant: &[CMat], controller: &FrozenController, grid: &FrequencyGrid) -> Result<FactorImages> {
    let n = controller.channels;
    let mut mimo = Vec::with_capacity(plant.len());
    let mut siso = vec![Vec::with_capacity(plant.len()); n];
    for (k, p) in plant.iter().enumerate() {
        let omega = grid.values()[k];
        let kk = controller.matrix(k);
        if n == 1 {
            let g = C64::new(1.0, 0.0) + p[(0, 0)] * kk[(0, 0)];
            siso[0].push(g);
            mimo.push(C64::new(1.0, 0.0));
            continue;
        }
        let l = p * &kk;
        let mut m = l.clone();
        for j in 0..n {
            let d = p[(j, j)] * kk[(j, j)];
            let g = C64::new(1.0, 0.0) + d;
            if g.norm() <= f64::EPSILON * (1.0 + d.norm()) {
                return Err(Error::SingularLoop { omega, what: "diagonal loop marginally critical".into() });
            }
            siso[j].push(g);
            // column j of (L − D)(I + D)⁻¹
            m[(j, j)] -= d;
            for i in 0..n {
                m[(i, j)] /= g;
            }
        }
        for j in 0..n {
            m[(j, j)] += C64::new(1.0, 0.0);
        }
        mimo.push(determinant(&m));
    }
    Ok(FactorImages { mimo, siso })
}

/// Net counterclockwise encirclements of `critical` by the closed sampled
/// curve `samples[0] → … → samples[last] → samples[0]`. The final segment is
/// an analytic closure arc that contributes `closure_half_turns` clockwise
/// half-turns; its sampled argument change is taken as the branch closest
/// to `−closure_half_turns·π`.
pub fn winding_number(samples: &[C64], critical: C64, closure_half_turns: i64, cfg: &StabilityConfig) -> Result<i64> {
    if samples.is_empty() {
        return Ok(0);
    }
    let shifted: Vec<C64> = samples.iter().map(|z| z - critical).collect();
    for (index, z) in shifted.iter().enumerate() {
        let distance = z.norm();
        if !(distance > cfg.tol_origin) {
            return Err(Error::OriginProximity { index, distance });
        }
    }
    let max_jump = cfg.max_jump_deg.to_radians();
    let mut total = 0.0;
    for (index, pair) in shifted.windows(2).enumerate() {
        let jump = (pair[1] / pair[0]).arg();
        if jump.abs() > max_jump {
            return Err(Error::Resolution { index: index + 1, jump_deg: jump.to_degrees() });
        }
        total += jump;
    }
    let principal = (shifted[0] / shifted[shifted.len() - 1]).arg();
    let target = -(closure_half_turns as f64) * PI;
    let m = ((target - principal) / (2.0 * PI)).round();
    let closing = principal + 2.0 * PI * m;
    if (closing - target).abs() > max_jump {
        return Err(Error::Resolution { index: 0, jump_deg: (closing - target).to_degrees() });
    }
    total += closing;
    Ok((total / (2.0 * PI)).round() as i64)
}

/// Sampled contour image: the positive-frequency samples, the
/// high-frequency closure (through 1 on the D-contour), then the
/// conjugate negative-frequency samples in reverse. The low-frequency
/// indentation closes the curve.
pub fn contour_image(samples: &[C64], contour: Contour) -> Vec<C64> {
    let mut out = Vec::with_capacity(2 * samples.len() + 1);
    out.extend_from_slice(samples);
    if contour == Contour::D {
        out.push(C64::new(1.0, 0.0));
    }
    out.extend(samples.iter().rev().map(|z| z.conj()));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    pub stable: bool,
    /// Winding numbers of `γ0, γ_1, …, γ_n`; `None` where undetermined.
    pub windings: Vec<Option<i64>>,
    /// Targets for the SISO factors are their share of `P_ol`; `γ0` needs 0.
    pub min_distances: Vec<f64>,
    pub warnings: Vec<String>,
}

impl StabilityVerdict {
    fn undetermined(message: String) -> Self {
        Self { verdict: Verdict::Undetermined, stable: false, windings: Vec::new(), min_distances: Vec::new(), warnings: vec![message] }
    }
}

/// Verdict of one local loop from its factor images.
pub fn assess_images(images: &FactorImages, n_int: &[usize], p_ol: usize, contour: Contour, cfg: &StabilityConfig) -> StabilityVerdict {
    let mut windings = Vec::with_capacity(1 + images.siso.len());
    let mut min_distances = Vec::with_capacity(1 + images.siso.len());
    let mut warnings = Vec::new();
    let factors = std::iter::once((&images.mimo, 0usize, "γ0".to_string()))
        .chain(images.siso.iter().zip(n_int).enumerate().map(|(j, (s, &h))| (s, h, format!("γ{}", j + 1))));
    for (samples, half_turns, label) in factors {
        min_distances.push(samples.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min));
        match winding_number(&contour_image(samples, contour), C64::new(0.0, 0.0), half_turns as i64, cfg) {
            Ok(w) => windings.push(Some(w)),
            Err(e) => {
                warnings.push(format!("{label}: {e}"));
                windings.push(None);
            }
        }
    }
    let verdict = if windings.iter().any(Option::is_none) {
        Verdict::Undetermined
    } else {
        let w: Vec<i64> = windings.iter().map(|w| w.unwrap()).collect();
        let siso_sum: i64 = w[1..].iter().sum();
        let ok = w[0] == 0 && siso_sum == p_ol as i64 && (p_ol != 0 || w[1..].iter().all(|&x| x == 0));
        if ok {
            Verdict::Stable
        } else {
            Verdict::Unstable
        }
    };
    StabilityVerdict { stable: verdict == Verdict::Stable, verdict, windings, min_distances, warnings }
}

/// Verdict of one local loop; sub-evaluation errors give "undetermined".
pub fn assess_local(
    plant: &[CMat],
    controller: &FrozenController,
    grid: &FrequencyGrid,
    n_int: &[usize],
    p_ol: usize,
    contour: Contour,
    cfg: &StabilityConfig,
) -> StabilityVerdict {
    match factorized_images(plant, controller, grid) {
        Ok(images) => assess_images(&images, n_int, p_ol, contour, cfg),
        Err(e) => StabilityVerdict::undetermined(e.to_string()),
    }
}

pub fn contour_of(frfs: &FrfSet) -> Contour {
    if frfs.sample_time.is_some() {
        Contour::C
    } else {
        Contour::D
    }
}

/// One verdict per local, in the order of `frfs.locals`.
pub fn assess_stability(
    frfs: &FrfSet,
    structure: &ControllerStructure,
    params: &GeneralizedController,
    decl: &IntegratorDeclaration,
    cfg: &StabilityConfig,
    mode: Execution,
) -> Result<Vec<StabilityVerdict>> {
    if structure.channels != frfs.n_rb {
        return Err(Error::Dimension(format!("controller has {} channels, plant has {}", structure.channels, frfs.n_rb)));
    }
    let n_int = decl.per_channel(&structure.integrators())?;
    let points = controller_points(&frfs.grid, frfs.sample_time);
    let contour = contour_of(frfs);
    Ok(par::map(&frfs.locals, mode, |local| {
        match structure.freeze(&params.theta, &structure.point_for(local.point.values()), &points) {
            Ok(k) => assess_local(&local.response.data, &k, &frfs.grid, &n_int, decl.p_ol, contour, cfg),
            Err(e) => StabilityVerdict::undetermined(e.to_string()),
        }
    }))
}
