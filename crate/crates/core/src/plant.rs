//! Synthetic position-dependent modal plants.
//!
//! A plant `M ẍ + D ẋ + K(p) x = G(p) f`, `y = H(p) x` is brought into
//! partitioned modal form (rigid-body and flexible blocks), decoupled on
//! its rigid-body channels, and sampled into frozen FRFs.

use std::path::Path;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::frf::{ComplexResponse, FrequencyGrid, FrfSet, LocalFrf, OperatingPoint};
use crate::linalg::pinv_full_rank;
use crate::{CMat, Error, RMat, Result, C64};

const RANK_TOL: f64 = 1e-10;

/// `constant + Σ_k p_k · slopes[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMatrix {
    pub constant: RMat,
    pub slopes: Vec<RMat>,
}

impl AffineMatrix {
    pub fn fixed(constant: RMat) -> Self {
        Self { constant, slopes: Vec::new() }
    }

    pub fn eval(&self, p: &[f64]) -> RMat {
        let mut m = self.constant.clone();
        for (slope, &pk) in self.slopes.iter().zip(p) {
            m += slope * pk;
        }
        m
    }

    pub fn is_constant(&self) -> bool {
        self.slopes.iter().all(|s| s.iter().all(|&v| v == 0.0))
    }

    fn map(&self, f: impl Fn(&RMat) -> RMat) -> Self {
        Self { constant: f(&self.constant), slopes: self.slopes.iter().map(f).collect() }
    }

    fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Damping {
    /// Physical damping matrix; must be diagonalized by the mass-normalized
    /// mode shapes.
    Physical(RMat),
    /// Damping ratio per flexible mode (one value is broadcast).
    Modal(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModalPlant {
    pub mass: RMat,
    pub damping: Damping,
    pub stiffness: AffineMatrix,
    /// Force distribution `G(p)`, `nx × nf`.
    pub input: AffineMatrix,
    /// Sensor map `H(p)`, `ny × nx`; collocated (`G(p)ᵀ`) when `None`.
    pub output: Option<AffineMatrix>,
    pub n_rb: usize,
    pub scheduling_box: Vec<(f64, f64)>,
}

impl ModalPlant {
    pub fn validate(&self) -> Result<()> {
        let nx = self.mass.nrows();
        let square_sym = |m: &RMat, name: &str| -> Result<()> {
            if m.shape() != (nx, nx) {
                return Err(Error::InvalidPlant(format!("{name} is {:?}, expected {nx}×{nx}", m.shape())));
            }
            if (m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
                return Err(Error::InvalidPlant(format!("{name} is not symmetric")));
            }
            Ok(())
        };
        square_sym(&self.mass, "M")?;
        square_sym(&self.stiffness.constant, "K")?;
        for s in &self.stiffness.slopes {
            square_sym(s, "K_k")?;
        }
        if let Damping::Physical(d) = &self.damping {
            square_sym(d, "D")?;
        }
        let np = self.scheduling_box.len();
        if self.stiffness.slopes.len() > np || self.input.slopes.len() > np {
            return Err(Error::InvalidPlant("more scheduling slopes than scheduling dimensions".into()));
        }
        if self.input.shape().0 != nx || self.input.slopes.iter().any(|s| s.shape() != self.input.shape()) {
            return Err(Error::InvalidPlant("G0/G_k must all be nx × nf".into()));
        }
        if let Some(h) = &self.output {
            if h.shape().1 != nx || h.slopes.iter().any(|s| s.shape() != h.shape()) {
                return Err(Error::InvalidPlant("H0/H_k must all be ny × nx".into()));
            }
        }
        if self.n_rb == 0 || self.n_rb > nx {
            return Err(Error::InvalidPlant(format!("n_rb = {} out of range", self.n_rb)));
        }
        if self.mass.clone().cholesky().is_none() {
            return Err(Error::InvalidPlant("M is not positive definite".into()));
        }
        for (lo, hi) in &self.scheduling_box {
            if !(lo <= hi) {
                return Err(Error::InvalidPlant(format!("scheduling interval [{lo}, {hi}]")));
            }
        }
        for p in self.box_samples() {
            let g = self.input.eval(&p);
            let rank_ok = g.ncols() <= g.nrows() && {
                let sv = g.singular_values();
                let smax = sv.iter().copied().fold(0.0, f64::max);
                sv.iter().all(|&s| s > RANK_TOL * smax)
            };
            if !rank_ok {
                return Err(Error::RankDeficient { what: "force distribution G(p)", point: p });
            }
        }
        Ok(())
    }

    pub fn np(&self) -> usize {
        self.scheduling_box.len()
    }

    /// Box vertices followed by the box center.
    pub fn box_samples(&self) -> Vec<Vec<f64>> {
        box_samples(&self.scheduling_box)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.np()
            && p.iter().zip(&self.scheduling_box).all(|(&v, &(lo, hi))| v >= lo - 1e-12 && v <= hi + 1e-12)
    }

    /// Copy with the stiffness matrix frozen at `p`.
    pub fn with_stiffness_at(&self, p: &[f64]) -> Self {
        Self { stiffness: AffineMatrix::fixed(self.stiffness.eval(p)), ..self.clone() }
    }

    fn output_map(&self) -> AffineMatrix {
        match &self.output {
            Some(h) => h.clone(),
            None => self.input.map(|g| g.transpose()),
        }
    }

    /// Desk-scale demonstration plant: two rigid-body channels, each carried
    /// by a two-mass chain whose flexible mode (600 and 900 rad/s nominal)
    /// shifts by roughly ±10 % across `p ∈ [-1, 1]`. The actuation point
    /// moves with `p`, which makes the flexible residues position dependent,
    /// and each actuator weakly excites the other chain's flexible mode.
    pub fn demo() -> Self {
        let chain = |k: f64| RMat::from_row_slice(2, 2, &[k, -k, -k, k]);
        let k0 = crate::linalg::block_diag(&chain(180_000.0), &chain(405_000.0));
        let g0 = RMat::from_row_slice(4, 2, &[1.0, 0.1, 0.5, -0.1, 0.1, 1.0, -0.1, 0.5]);
        let g1 = RMat::from_row_slice(4, 2, &[0.3, 0.0, 0.0, 0.0, 0.0, -0.3, 0.0, 0.0]);
        Self {
            mass: RMat::identity(4, 4),
            damping: Damping::Modal(vec![0.02]),
            stiffness: AffineMatrix { slopes: vec![&k0 * 0.2], constant: k0 },
            input: AffineMatrix { constant: g0, slopes: vec![g1] },
            output: None,
            n_rb: 2,
            scheduling_box: vec![(-1.0, 1.0)],
        }
    }
}

pub(crate) fn box_samples(bounds: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let np = bounds.len();
    let mut out = Vec::with_capacity((1usize << np) + 1);
    for mask in 0..(1usize << np) {
        out.push((0..np).map(|k| if mask >> k & 1 == 1 { bounds[k].1 } else { bounds[k].0 }).collect());
    }
    out.push(bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect());
    out
}

/// Partitioned modal realization. States are grouped per mode as
/// (position, velocity); rigid-body modes come first.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionedModalSS {
    pub n_rb: usize,
    pub a_rb: RMat,
    pub a_fm: RMat,
    pub b_rb: AffineMatrix,
    pub b_fm: AffineMatrix,
    pub c_rb: AffineMatrix,
    pub c_fm: AffineMatrix,
    /// Undamped natural frequencies of the flexible modes, rad/s.
    pub fm_frequencies: Vec<f64>,
    pub fm_damping: Vec<f64>,
}

impl PartitionedModalSS {
    pub fn n_fm(&self) -> usize {
        self.fm_frequencies.len()
    }

    pub fn assembled_a(&self) -> RMat {
        crate::linalg::block_diag(&self.a_rb, &self.a_fm)
    }

    pub fn b(&self, p: &[f64]) -> RMat {
        let (rb, fm) = (self.b_rb.eval(p), self.b_fm.eval(p));
        let mut out = RMat::zeros(rb.nrows() + fm.nrows(), rb.ncols());
        out.rows_mut(0, rb.nrows()).copy_from(&rb);
        out.rows_mut(rb.nrows(), fm.nrows()).copy_from(&fm);
        out
    }

    pub fn c(&self, p: &[f64]) -> RMat {
        let (rb, fm) = (self.c_rb.eval(p), self.c_fm.eval(p));
        let mut out = RMat::zeros(rb.nrows(), rb.ncols() + fm.ncols());
        out.columns_mut(0, rb.ncols()).copy_from(&rb);
        out.columns_mut(rb.ncols(), fm.ncols()).copy_from(&fm);
        out
    }
}

pub fn modal_transform(plant: &ModalPlant) -> Result<PartitionedModalSS> {
    plant.validate()?;
    let nx = plant.mass.nrows();
    let n_rb = plant.n_rb;

    let mass_eig = SymmetricEigen::new(plant.mass.clone());
    if mass_eig.eigenvalues.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidPlant("M is not positive definite".into()));
    }
    let inv_sqrt = RMat::from_diagonal(&mass_eig.eigenvalues.map(|m| 1.0 / m.sqrt()));
    let m_inv_half = &mass_eig.eigenvectors * inv_sqrt * mass_eig.eigenvectors.transpose();

    let k = &plant.stiffness.constant;
    let mut k_tilde = &m_inv_half * k * &m_inv_half;
    k_tilde = (&k_tilde + k_tilde.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(k_tilde, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::InvalidPlant("stiffness eigen-decomposition did not converge".into()))?;

    let mut order: Vec<usize> = (0..nx).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lambda_max = eig.eigenvalues.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let zero_tol = 1e-9 * lambda_max;
    if eig.eigenvalues[order[0]] < -zero_tol {
        return Err(Error::InvalidPlant("K is not positive semidefinite".into()));
    }
    let found = order.iter().filter(|&&i| eig.eigenvalues[i].abs() <= zero_tol).count();
    if found != n_rb {
        return Err(Error::ModeCount { expected: n_rb, found });
    }

    // Mass-normalized mode shapes, ascending frequency.
    let mut shapes = RMat::zeros(nx, nx);
    for (col, &i) in order.iter().enumerate() {
        shapes.set_column(col, &(&m_inv_half * eig.eigenvectors.column(i)));
    }
    let omegas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();

    let n_fm = nx - n_rb;
    let zetas: Vec<f64> = match &plant.damping {
        Damping::Modal(r) => match r.len() {
            1 => vec![r[0]; n_fm],
            n if n == n_fm => r.clone(),
            n => {
                return Err(Error::InvalidPlant(format!(
                    "{n} modal damping ratios for {n_fm} flexible modes"
                )))
            }
        },
        Damping::Physical(d) => {
            let dm = shapes.transpose() * d * &shapes;
            let scale = dm.abs().max().max(f64::MIN_POSITIVE);
            for i in 0..nx {
                for j in 0..nx {
                    if i != j && dm[(i, j)].abs() > 1e-8 * scale {
                        return Err(Error::InvalidPlant(
                            "damping is not proportional (modal damping matrix not diagonal)".into(),
                        ));
                    }
                }
                if i < n_rb && dm[(i, i)].abs() > 1e-8 * scale {
                    return Err(Error::InvalidPlant("rigid-body mode carries damping".into()));
                }
            }
            (n_rb..nx).map(|i| dm[(i, i)] / (2.0 * omegas[i])).collect()
        }
    };
    if zetas.iter().any(|z| !(*z >= 0.0)) {
        return Err(Error::InvalidPlant("negative damping ratio".into()));
    }

    let mode_block = |omega: f64, zeta: f64| {
        RMat::from_row_slice(2, 2, &[0.0, 1.0, -omega * omega, -2.0 * zeta * omega])
    };
    let mut a_rb = RMat::zeros(2 * n_rb, 2 * n_rb);
    for i in 0..n_rb {
        a_rb.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&mode_block(0.0, 0.0));
    }
    let mut a_fm = RMat::zeros(2 * n_fm, 2 * n_fm);
    for i in 0..n_fm {
        a_fm.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&mode_block(omegas[n_rb + i], zetas[i]));
    }

    // Modal input rows sit on the velocity state; modal outputs read position.
    let modal_b = |g: &RMat, modes: std::ops::Range<usize>| {
        let mut b = RMat::zeros(2 * modes.len(), g.ncols());
        for (row, i) in modes.enumerate() {
            b.set_row(2 * row + 1, &(shapes.column(i).transpose() * g));
        }
        b
    };
    let output = plant.output_map();
    let modal_c = |h: &RMat, modes: std::ops::Range<usize>| {
        let mut c = RMat::zeros(h.nrows(), 2 * modes.len());
        for (col, i) in modes.enumerate() {
            c.set_column(2 * col, &(h * shapes.column(i)));
        }
        c
    };

    Ok(PartitionedModalSS {
        n_rb,
        a_rb,
        a_fm,
        b_rb: plant.input.map(|g| modal_b(g, 0..n_rb)),
        b_fm: plant.input.map(|g| modal_b(g, n_rb..nx)),
        c_rb: output.map(|h| modal_c(h, 0..n_rb)),
        c_fm: output.map(|h| modal_c(h, n_rb..nx)),
        fm_frequencies: omegas[n_rb..].to_vec(),
        fm_damping: zetas,
    })
}

/// Input and output rigid-body decoupling matrices at one operating point.
#[derive(Clone, Debug, PartialEq)]
pub struct DecouplingPair {
    /// `T_u`, `nf × n_rb`.
    pub input: RMat,
    /// `T_y`, `n_rb × ny`.
    pub output: RMat,
}

pub fn rb_decoupling(ss: &PartitionedModalSS, p: &OperatingPoint) -> Result<DecouplingPair> {
    let n = ss.n_rb;
    let b = ss.b_rb.eval(p.values());
    let c = ss.c_rb.eval(p.values());
    let b_sel = RMat::from_fn(n, b.ncols(), |i, j| b[(2 * i + 1, j)]);
    let c_sel = RMat::from_fn(c.nrows(), n, |i, j| c[(i, 2 * j)]);
    if b_sel.ncols() < n {
        return Err(Error::RankDeficient { what: "rigid-body input", point: p.0.clone() });
    }
    if c_sel.nrows() < n {
        return Err(Error::RankDeficient { what: "rigid-body output", point: p.0.clone() });
    }
    let input = pinv_full_rank(&b_sel, RANK_TOL)
        .ok_or_else(|| Error::RankDeficient { what: "rigid-body input", point: p.0.clone() })?;
    let output = pinv_full_rank(&c_sel, RANK_TOL)
        .ok_or_else(|| Error::RankDeficient { what: "rigid-body output", point: p.0.clone() })?;
    Ok(DecouplingPair { input, output })
}

/// Frozen plant at one operating point, ready for repeated evaluation.
struct FrozenModal<'a> {
    ss: &'a PartitionedModalSS,
    b: RMat,
    c: RMat,
    pair: &'a DecouplingPair,
}

impl<'a> FrozenModal<'a> {
    fn new(ss: &'a PartitionedModalSS, pair: &'a DecouplingPair, p: &OperatingPoint) -> Result<Self> {
        let b = ss.b(p.values());
        let c = ss.c(p.values());
        if pair.input.nrows() != b.ncols() || pair.output.ncols() != c.nrows() {
            return Err(Error::Dimension("decoupling pair does not match plant ports".into()));
        }
        Ok(Self { ss, b, c, pair })
    }

    fn response(&self, s: C64, omega: f64) -> Result<CMat> {
        let a = self.ss.assembled_a();
        let modes = a.nrows() / 2;
        let (ny, nf) = (self.c.nrows(), self.b.ncols());
        let mut g = CMat::zeros(ny, nf);
        for i in 0..modes {
            let k = 2 * i;
            let (a00, a01, a10, a11) = (a[(k, k)], a[(k, k + 1)], a[(k + 1, k)], a[(k + 1, k + 1)]);
            let det = (s - a00) * (s - a11) - a01 * a10;
            let scale = s.norm_sqr() + a01.abs() * a10.abs() + a00.abs().max(a11.abs()).powi(2);
            if det.norm() <= 1e-13 * scale {
                return Err(Error::SingularResolvent { omega });
            }
            let inv = [[(s - a11) / det, C64::from(a01) / det], [C64::from(a10) / det, (s - a00) / det]];
            for r in 0..ny {
                for q in 0..nf {
                    let mut acc = C64::new(0.0, 0.0);
                    for (u, row) in inv.iter().enumerate() {
                        for (v, val) in row.iter().enumerate() {
                            acc += self.c[(r, k + u)] * val * self.b[(k + v, q)];
                        }
                    }
                    g[(r, q)] += acc;
                }
            }
        }
        let ty = crate::linalg::to_complex(&self.pair.output);
        let tu = crate::linalg::to_complex(&self.pair.input);
        Ok(ty * g * tu)
    }
}

/// Decoupled plant `T_y C(p) (sI − A)⁻¹ B(p) T_u` at an arbitrary complex `s`.
pub fn response_at(
    ss: &PartitionedModalSS,
    pair: &DecouplingPair,
    p: &OperatingPoint,
    s: C64,
) -> Result<CMat> {
    FrozenModal::new(ss, pair, p)?.response(s, s.im)
}

pub fn frozen_frf(
    ss: &PartitionedModalSS,
    pair: &DecouplingPair,
    grid: &FrequencyGrid,
    p: &OperatingPoint,
) -> Result<LocalFrf> {
    frozen_frf_mapped(ss, pair, grid, p, None)
}

/// With `sample_time = Some(Ts)` the plant is evaluated at the Tustin image
/// `s = j (2/Ts) tan(ωTs/2)` of `z = e^{jωTs}`.
fn frozen_frf_mapped(
    ss: &PartitionedModalSS,
    pair: &DecouplingPair,
    grid: &FrequencyGrid,
    p: &OperatingPoint,
    sample_time: Option<f64>,
) -> Result<LocalFrf> {
    let frozen = FrozenModal::new(ss, pair, p)?;
    let data = grid
        .values()
        .iter()
        .map(|&w| {
            let s = match sample_time {
                Some(ts) => C64::new(0.0, 2.0 / ts * (w * ts / 2.0).tan()),
                None => C64::new(0.0, w),
            };
            frozen.response(s, w)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = ss.n_rb;
    Ok(LocalFrf { point: p.clone(), response: ComplexResponse::new(n, n, data)? })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthOptions {
    /// Recompute `T_u`, `T_y` at every operating point; otherwise decouple
    /// once at the center of the scheduling box.
    pub decouple_per_point: bool,
    /// Produce discrete-time (Tustin-mapped) responses with this sampling time.
    pub sample_time: Option<f64>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { decouple_per_point: true, sample_time: None }
    }
}

pub fn sample_frf_set(
    plant: &ModalPlant,
    grid: &FrequencyGrid,
    points: &[OperatingPoint],
    options: SynthOptions,
) -> Result<FrfSet> {
    plant.validate()?;
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    for (i, p) in points.iter().enumerate() {
        if !plant.contains(p.values()) {
            return Err(Error::Config(format!("operating point {i} {:?} outside the scheduling box", p.0)));
        }
    }
    let center = OperatingPoint(plant.scheduling_box.iter().map(|&(l, h)| 0.5 * (l + h)).collect());
    let scheduled_stiffness = !plant.stiffness.is_constant();
    let nominal = if scheduled_stiffness { None } else { Some(modal_transform(plant)?) };
    let modal_at = |p: &OperatingPoint| -> Result<PartitionedModalSS> {
        match &nominal {
            Some(ss) => Ok(ss.clone()),
            None => modal_transform(&plant.with_stiffness_at(p.values())),
        }
    };
    let shared_pair = if options.decouple_per_point {
        None
    } else {
        Some(rb_decoupling(&modal_at(&center)?, &center)?)
    };
    let locals = points
        .iter()
        .map(|p| {
            let ss = modal_at(p)?;
            let pair = match &shared_pair {
                Some(pair) => pair.clone(),
                None => rb_decoupling(&ss, p)?,
            };
            frozen_frf_mapped(&ss, &pair, grid, p, options.sample_time)
        })
        .collect::<Result<Vec<_>>>()?;
    FrfSet::new(grid.clone(), locals)?
        .with_scheduling_box(plant.scheduling_box.clone())?
        .with_sample_time(options.sample_time)
}

/// Evenly spaced operating points on the segment `start → end`.
pub fn points_on_line(start: &[f64], end: &[f64], count: usize) -> Vec<OperatingPoint> {
    (0..count)
        .map(|i| {
            let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
            OperatingPoint(start.iter().zip(end).map(|(a, b)| a + t * (b - a)).collect())
        })
        .collect()
}

/// Default demonstration data: [`ModalPlant::demo`] sampled at 11 points on
/// `p ∈ [-1, 1]`, 400 log-spaced frequencies from 0.5 Hz to 500 Hz.
pub fn demo_frf_set() -> Result<FrfSet> {
    let grid = demo_grid()?;
    sample_frf_set(&ModalPlant::demo(), &grid, &points_on_line(&[-1.0], &[1.0], 11), SynthOptions::default())
}

pub fn demo_grid() -> Result<FrequencyGrid> {
    use std::f64::consts::PI;
    FrequencyGrid::log_spaced(2.0 * PI * 0.5, 2.0 * PI * 500.0, 400)
}

// ---------------------------------------------------------------------------
// Plant description file

#[derive(Clone, Debug, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct PlantFile {
    pub M: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub D: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modal_damping: Option<Vec<f64>>,
    pub K: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub K_k: Vec<Vec<Vec<f64>>>,
    pub G0: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub G_k: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub H0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub H_k: Vec<Vec<Vec<f64>>>,
    pub n_rb: usize,
    pub scheduling_box: Vec<[f64; 2]>,
}

fn rows_to_matrix(rows: &[Vec<f64>], name: &str) -> Result<RMat> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Parse { location: name.into(), message: "ragged matrix rows".into() });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name.into()));
    }
    Ok(RMat::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl PlantFile {
    pub fn to_plant(&self) -> Result<ModalPlant> {
        let list = |ms: &[Vec<Vec<f64>>], name: &str| -> Result<Vec<RMat>> {
            ms.iter().enumerate().map(|(k, m)| rows_to_matrix(m, &format!("{name}[{k}]"))).collect()
        };
        let damping = match (&self.D, &self.modal_damping) {
            (Some(d), None) => Damping::Physical(rows_to_matrix(d, "D")?),
            (None, Some(z)) => Damping::Modal(z.clone()),
            (None, None) => Damping::Modal(vec![0.0]),
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either D or modal_damping, not both".into()))
            }
        };
        let output = match &self.H0 {
            Some(h) => Some(AffineMatrix { constant: rows_to_matrix(h, "H0")?, slopes: list(&self.H_k, "H_k")? }),
            None => None,
        };
        let plant = ModalPlant {
            mass: rows_to_matrix(&self.M, "M")?,
            damping,
            stiffness: AffineMatrix { constant: rows_to_matrix(&self.K, "K")?, slopes: list(&self.K_k, "K_k")? },
            input: AffineMatrix { constant: rows_to_matrix(&self.G0, "G0")?, slopes: list(&self.G_k, "G_k")? },
            output,
            n_rb: self.n_rb,
            scheduling_box: self.scheduling_box.iter().map(|b| (b[0], b[1])).collect(),
        };
        plant.validate()?;
        Ok(plant)
    }

    pub fn from_plant(plant: &ModalPlant) -> Self {
        let list = |ms: &[RMat]| ms.iter().map(matrix_to_rows).collect();
        let (d, modal) = match &plant.damping {
            Damping::Physical(d) => (Some(matrix_to_rows(d)), None),
            Damping::Modal(z) => (None, Some(z.clone())),
        };
        Self {
            M: matrix_to_rows(&plant.mass),
            D: d,
            modal_damping: modal,
            K: matrix_to_rows(&plant.stiffness.constant),
            K_k: list(&plant.stiffness.slopes),
            G0: matrix_to_rows(&plant.input.constant),
            G_k: list(&plant.input.slopes),
            H0: plant.output.as_ref().map(|h| matrix_to_rows(&h.constant)),
            H_k: plant.output.as_ref().map(|h| list(&h.slopes)).unwrap_or_default(),
            n_rb: plant.n_rb,
            scheduling_box: plant.scheduling_box.iter().map(|&(l, h)| [l, h]).collect(),
        }
    }
}

pub fn load_plant(path: impl AsRef<Path>) -> Result<ModalPlant> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: PlantFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: format!("{} line {} column {}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })?;
    file.to_plant()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_mass(k: f64, d: f64) -> ModalPlant {
        let chain = |v: f64| RMat::from_row_slice(2, 2, &[v, -v, -v, v]);
        ModalPlant {
            mass: RMat::identity(2, 2),
            damping: Damping::Physical(chain(d)),
            stiffness: AffineMatrix::fixed(chain(k)),
            input: AffineMatrix::fixed(RMat::from_row_slice(2, 1, &[1.0, 0.0])),
            output: None,
            n_rb: 1,
            scheduling_box: vec![],
        }
    }

    #[test]
    fn single_rigid_body() {
        let plant = ModalPlant {
            mass: RMat::identity(1, 1),
            damping: Damping::Physical(RMat::zeros(1, 1)),
            stiffness: AffineMatrix::fixed(RMat::zeros(1, 1)),
            input: AffineMatrix::fixed(RMat::identity(1, 1)),
            output: None,
            n_rb: 1,
            scheduling_box: vec![],
        };
        let ss = modal_transform(&plant).unwrap();
        assert_eq!(ss.a_rb, RMat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(ss.n_fm(), 0);
        assert_eq!(ss.a_fm.shape(), (0, 0));
    }

    #[test]
    fn two_mass_chain_has_analytic_flexible_frequency() {
        let k = 1e4;
        let ss = modal_transform(&two_mass(k, 1.0)).unwrap();
        assert_eq!(ss.n_fm(), 1);
        assert!((ss.fm_frequencies[0] - (2.0 * k).sqrt()).abs() < 1e-9 * (2.0 * k).sqrt());
        // Proportional damping: c_modal = 2 d for the [1, -1]/√2 shape.
        assert!((ss.fm_damping[0] - 2.0 / (2.0 * (2.0 * k).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn mode_count_mismatch_is_reported() {
        let mut plant = two_mass(1e4, 1.0);
        plant.n_rb = 2;
        assert!(matches!(modal_transform(&plant), Err(Error::ModeCount { expected: 2, found: 1 })));
    }

    #[test]
    fn non_proportional_damping_is_rejected() {
        let mut plant = two_mass(1e4, 1.0);
        plant.damping = Damping::Physical(RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert!(matches!(modal_transform(&plant), Err(Error::InvalidPlant(_))));
    }

    #[test]
    fn square_rb_map_decouples_with_its_inverse() {
        let plant = ModalPlant::demo();
        let ss = modal_transform(&plant.with_stiffness_at(&[0.0])).unwrap();
        let p = OperatingPoint(vec![0.3]);
        let pair = rb_decoupling(&ss, &p).unwrap();
        let b = ss.b_rb.eval(p.values());
        let b_sel = RMat::from_fn(2, 2, |i, j| b[(2 * i + 1, j)]);
        let inv = b_sel.try_inverse().unwrap();
        assert!((&pair.input - inv).abs().max() < 1e-12);
    }

    #[test]
    fn decoupling_depends_on_position() {
        let plant = ModalPlant::demo();
        let ss = modal_transform(&plant.with_stiffness_at(&[0.0])).unwrap();
        let a = rb_decoupling(&ss, &OperatingPoint(vec![-1.0])).unwrap();
        let b = rb_decoupling(&ss, &OperatingPoint(vec![1.0])).unwrap();
        assert!((&a.input - &b.input).abs().max() > 1e-3);
    }

    #[test]
    fn rank_deficient_rb_map_is_reported() {
        let mut plant = ModalPlant::demo();
        plant.input.slopes.clear();
        // Both actuators push chain A identically: chain B rigid body is unactuated.
        plant.input.constant = RMat::from_row_slice(4, 2, &[1.0, 1.0, 0.5, 0.4, 0.0, 0.0, 0.0, 0.0]);
        let ss = modal_transform(&plant.with_stiffness_at(&[0.0])).unwrap();
        assert!(matches!(
            rb_decoupling(&ss, &OperatingPoint(vec![0.0])),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn double_integrator_channel_at_unit_frequency() {
        let plant = ModalPlant {
            mass: RMat::identity(1, 1),
            damping: Damping::Modal(vec![]),
            stiffness: AffineMatrix::fixed(RMat::zeros(1, 1)),
            input: AffineMatrix::fixed(RMat::identity(1, 1)),
            output: None,
            n_rb: 1,
            scheduling_box: vec![],
        };
        let ss = modal_transform(&plant).unwrap();
        let p = OperatingPoint(vec![]);
        let pair = rb_decoupling(&ss, &p).unwrap();
        let grid = FrequencyGrid::new(vec![1.0, 2.0]).unwrap();
        let frf = frozen_frf(&ss, &pair, &grid, &p).unwrap();
        let h = frf.response.data[0][(0, 0)];
        assert!((h.norm() - 1.0).abs() < 1e-14);
        assert!((h.arg().abs() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn undamped_resonance_on_grid_is_singular() {
        let k = 1e4;
        let mut plant = two_mass(k, 0.0);
        plant.damping = Damping::Modal(vec![0.0]);
        let ss = modal_transform(&plant).unwrap();
        let p = OperatingPoint(vec![]);
        let pair = rb_decoupling(&ss, &p).unwrap();
        let w = ss.fm_frequencies[0];
        let grid = FrequencyGrid::new(vec![w / 2.0, w]).unwrap();
        match frozen_frf(&ss, &pair, &grid, &p) {
            Err(Error::SingularResolvent { omega }) => assert_eq!(omega, w),
            other => panic!("expected singular resolvent, got {other:?}"),
        }
    }

    #[test]
    fn lti_plant_gives_identical_locals() {
        let mut plant = ModalPlant::demo();
        plant.input.slopes.clear();
        plant.stiffness.slopes.clear();
        let grid = FrequencyGrid::log_spaced(1.0, 1e4, 50).unwrap();
        let set =
            sample_frf_set(&plant, &grid, &points_on_line(&[-1.0], &[1.0], 3), SynthOptions::default())
                .unwrap();
        assert_eq!(set.locals[0].response, set.locals[2].response);
    }

    #[test]
    fn demo_file_matches_builtin_plant() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/configs/demo_plant.json");
        let plant = load_plant(path).unwrap();
        assert_eq!(plant, ModalPlant::demo());
    }
}
