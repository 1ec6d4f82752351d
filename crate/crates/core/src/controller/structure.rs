//! Declarative controller structures, the stacked parameter vector and
//! frozen evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::filters::{primitive_lfr, FilterKind};
use super::lfr::{interconnect, Interconnect, LfrBlock};
use crate::frf::{ComplexResponse, FrequencyGrid, OperatingPoint};
use crate::linalg::StateSpace;
use crate::{CMat, Error, Result, C64};

/// One scalar controller quantity `θ0 + θ1ᵀ p`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub fixed: bool,
    /// `θ0`: the fixed value, or the initial value of a free parameter.
    pub value: f64,
    /// Search bounds of `θ0`.
    pub bounds: (f64, f64),
    pub scheduling: bool,
    /// `θ1`, one entry per scheduling dimension when `scheduling` is set.
    pub slope: Vec<f64>,
    pub slope_bounds: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterSpec {
    pub name: String,
    pub kind: FilterKind,
    pub channels: usize,
    /// Channel-major (`[channel][quantity]`) for diagonal kinds, row-major
    /// matrix entries for `Mixing`.
    pub params: Vec<ParamSpec>,
}

impl FilterSpec {
    fn quantities_per_channel(&self) -> usize {
        self.kind.quantities().len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    /// Index into [`ControllerStructure::filters`].
    Filter(usize),
    Group { interconnect: Interconnect, children: Vec<Node> },
}

/// How a resolved quantity is obtained from the stacked parameter vector.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Coef {
    Fixed(f64),
    Free(usize),
}

#[derive(Clone, Debug, PartialEq)]
struct Link {
    base: Coef,
    slopes: Vec<Coef>,
}

/// Entry of the stacked parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamDescriptor {
    pub name: String,
    /// Index of the owning filter.
    pub filter: usize,
    /// Index of the quantity in the flattened quantity list.
    pub quantity: usize,
    /// `None` for `θ0`, `Some(k)` for the slope along scheduling dimension `k`.
    pub coefficient: Option<usize>,
    pub bounds: (f64, f64),
    /// Normalized on a logarithmic scale (strictly positive bounds of `θ0`).
    pub log_scale: bool,
    pub initial: f64,
}

impl ParamDescriptor {
    pub fn normalize(&self, v: f64) -> f64 {
        let (lo, hi) = self.bounds;
        if hi <= lo {
            return 0.5;
        }
        if self.log_scale {
            (v.ln() - lo.ln()) / (hi.ln() - lo.ln())
        } else {
            (v - lo) / (hi - lo)
        }
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        let (lo, hi) = self.bounds;
        let x = x.clamp(0.0, 1.0);
        if hi <= lo {
            return lo;
        }
        if self.log_scale {
            (lo.ln() + x * (hi.ln() - lo.ln())).exp()
        } else {
            lo + x * (hi - lo)
        }
    }
}

/// The stacked vector of free controller parameters (the generalized
/// controller block); its layout is given by
/// [`ControllerStructure::descriptors`].
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedController {
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerStructure {
    pub channels: usize,
    pub np: usize,
    pub filters: Vec<FilterSpec>,
    pub root: Node,
    links: Vec<Link>,
    offsets: Vec<usize>,
    descriptors: Vec<ParamDescriptor>,
    channel_blocks: Vec<Option<LfrBlock>>,
}

/// Frozen controller response on a list of evaluation points.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenController {
    pub channels: usize,
    pub points: usize,
    /// Only the diagonal is stored (`data[k·n + j]`); otherwise the full
    /// matrix row-major (`data[k·n² + i·n + j]`).
    pub diagonal: bool,
    data: Vec<C64>,
}

impl FrozenController {
    /// Full-matrix controller data given directly, one square matrix per
    /// evaluation point (for instance a measured controller response).
    pub fn from_matrices(matrices: &[CMat]) -> Result<Self> {
        let n = matrices.first().map_or(0, |m| m.nrows());
        if let Some(bad) = matrices.iter().find(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Dimension(format!("controller matrix is {}×{}, expected {n}×{n}", bad.nrows(), bad.ncols())));
        }
        let data = matrices.iter().flat_map(|m| (0..n).flat_map(move |i| (0..n).map(move |j| m[(i, j)]))).collect();
        Ok(Self { channels: n, points: matrices.len(), diagonal: false, data })
    }

    pub fn entry(&self, k: usize, i: usize, j: usize) -> C64 {
        let n = self.channels;
        if self.diagonal {
            if i == j {
                self.data[k * n + i]
            } else {
                C64::new(0.0, 0.0)
            }
        } else {
            self.data[k * n * n + i * n + j]
        }
    }

    pub fn matrix(&self, k: usize) -> CMat {
        CMat::from_fn(self.channels, self.channels, |i, j| self.entry(k, i, j))
    }

    fn to_full(&self) -> FrozenController {
        if !self.diagonal {
            return self.clone();
        }
        let n = self.channels;
        let mut data = vec![C64::new(0.0, 0.0); self.points * n * n];
        for k in 0..self.points {
            for j in 0..n {
                data[k * n * n + j * n + j] = self.data[k * n + j];
            }
        }
        FrozenController { data, diagonal: false, ..*self }
    }

    /// `next · self`.
    fn then(self, next: &FrozenController) -> FrozenController {
        let n = self.channels;
        if self.diagonal && next.diagonal {
            let data = self.data.iter().zip(&next.data).map(|(a, b)| a * b).collect();
            return FrozenController { data, ..self };
        }
        let (a, b) = (self.to_full(), next.to_full());
        let mut data = vec![C64::new(0.0, 0.0); self.points * n * n];
        for k in 0..self.points {
            let o = k * n * n;
            for i in 0..n {
                for j in 0..n {
                    data[o + i * n + j] = (0..n).map(|l| b.data[o + i * n + l] * a.data[o + l * n + j]).sum();
                }
            }
        }
        FrozenController { data, diagonal: false, ..self }
    }

    fn plus(self, other: &FrozenController) -> FrozenController {
        if self.diagonal && other.diagonal {
            let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
            return FrozenController { data, ..self };
        }
        let (a, b) = (self.to_full(), other.to_full());
        let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
        FrozenController { data, diagonal: false, ..self }
    }

    pub fn to_response(&self) -> Result<ComplexResponse> {
        ComplexResponse::new(self.channels, self.channels, (0..self.points).map(|k| self.matrix(k)).collect())
    }
}

/// `d + c (sI − A)⁻¹ b` for a SISO state space, closed form up to two states.
fn siso_response(ss: &StateSpace, s: C64) -> Option<C64> {
    let d = ss.d[(0, 0)];
    match ss.states() {
        0 => Some(C64::from(d)),
        1 => {
            let den = s - ss.a[(0, 0)];
            (den.norm() > 0.0).then(|| d + ss.c[(0, 0)] * ss.b[(0, 0)] / den)
        }
        2 => {
            let a = &ss.a;
            let (s00, s01, s10, s11) = (s - a[(0, 0)], -a[(0, 1)], -a[(1, 0)], s - a[(1, 1)]);
            let det = s00 * s11 - s01 * s10;
            let scale = s.norm_sqr() + a.abs().max().powi(2);
            if !(det.norm() > 1e-15 * scale) {
                return None;
            }
            let (b0, b1) = (ss.b[(0, 0)], ss.b[(1, 0)]);
            let x0 = (s11 * b0 - s01 * b1) / det;
            let x1 = (s00 * b1 - s10 * b0) / det;
            Some(d + ss.c[(0, 0)] * x0 + ss.c[(0, 1)] * x1)
        }
        _ => ss.response(s).map(|h| h[(0, 0)]),
    }
}

impl ControllerStructure {
    /// Build a structure, checking dimensions and parameter declarations.
    pub fn new(channels: usize, np: usize, filters: Vec<FilterSpec>, root: Node) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("controller needs at least one channel".into()));
        }
        if filters.is_empty() {
            return Err(Error::Config("controller structure needs at least one filter".into()));
        }
        check_node(&root, filters.len())?;
        let mut links = Vec::new();
        let mut offsets = Vec::new();
        let mut descriptors = Vec::new();
        let mut channel_blocks = Vec::new();
        for (fi, f) in filters.iter().enumerate() {
            if f.channels != channels {
                return Err(Error::Dimension(format!(
                    "filter {} has {} channels, controller has {channels}",
                    f.name, f.channels
                )));
            }
            let expected = if f.kind == FilterKind::Mixing {
                channels * channels
            } else {
                channels * f.quantities_per_channel()
            };
            if f.params.len() != expected {
                return Err(Error::Config(format!("filter {} has {} parameters, expected {expected}", f.name, f.params.len())));
            }
            offsets.push(links.len());
            channel_blocks.push(f.kind.is_diagonal().then(|| f.kind.channel_lfr()));
            for p in &f.params {
                let quantity = links.len();
                check_param(p, np)?;
                let mut coef = |value: f64, bounds: (f64, f64), log: bool, coefficient: Option<usize>, name: String| {
                    if p.fixed {
                        Coef::Fixed(value)
                    } else {
                        descriptors.push(ParamDescriptor {
                            name,
                            filter: fi,
                            quantity,
                            coefficient,
                            bounds,
                            log_scale: log,
                            initial: value,
                        });
                        Coef::Free(descriptors.len() - 1)
                    }
                };
                let log = p.bounds.0 > 0.0;
                let base = coef(p.value, p.bounds, log, None, p.name.clone());
                let slopes = if p.scheduling {
                    (0..np)
                        .map(|k| coef(p.slope[k], p.slope_bounds[k], false, Some(k), format!("{}.slope[{k}]", p.name)))
                        .collect()
                } else {
                    Vec::new()
                };
                links.push(Link { base, slopes });
            }
        }
        Ok(Self { channels, np, filters, root, links, offsets, descriptors, channel_blocks })
    }

    /// A single cascade of filters.
    pub fn cascade(channels: usize, np: usize, filters: Vec<FilterSpec>) -> Result<Self> {
        let root = Node::Group { interconnect: Interconnect::Cascade, children: (0..filters.len()).map(Node::Filter).collect() };
        Self::new(channels, np, filters, root)
    }

    pub fn descriptors(&self) -> &[ParamDescriptor] {
        &self.descriptors
    }

    pub fn n_params(&self) -> usize {
        self.descriptors.len()
    }

    pub fn initial(&self) -> GeneralizedController {
        GeneralizedController { theta: self.descriptors.iter().map(|d| d.initial).collect() }
    }

    pub fn normalize(&self, theta: &[f64]) -> Vec<f64> {
        self.descriptors.iter().zip(theta).map(|(d, &v)| d.normalize(v)).collect()
    }

    pub fn denormalize(&self, x: &[f64]) -> GeneralizedController {
        GeneralizedController { theta: self.descriptors.iter().zip(x).map(|(d, &v)| d.denormalize(v)).collect() }
    }

    pub fn is_diagonal(&self) -> bool {
        self.filters.iter().all(|f| f.kind.is_diagonal())
    }

    pub fn is_scheduled(&self) -> bool {
        self.filters.iter().flat_map(|f| &f.params).any(|p| p.scheduling)
    }

    /// Operating point handed to the controller for a local at `p`. A
    /// controller without scheduling variables ignores the point.
    pub fn point_for(&self, p: &[f64]) -> Vec<f64> {
        if self.np == p.len() {
            p.to_vec()
        } else {
            vec![0.0; self.np]
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Dimension(format!("{} parameter values for {} free parameters", theta.len(), self.n_params())));
        }
        Ok(())
    }

    fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.np {
            return Err(Error::Dimension(format!("operating point of dimension {}, controller expects {}", p.len(), self.np)));
        }
        Ok(())
    }

    /// All quantities resolved at `p`, in filter and parameter order.
    pub fn resolve(&self, theta: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        self.check_point(p)?;
        let get = |c: Coef| match c {
            Coef::Fixed(v) => v,
            Coef::Free(i) => theta[i],
        };
        Ok(self
            .links
            .iter()
            .map(|l| get(l.base) + l.slopes.iter().zip(p).map(|(&c, pk)| get(c) * pk).sum::<f64>())
            .collect())
    }

    /// `θ0` and `θ1` of every quantity for the given parameter vector.
    pub fn coefficients(&self, theta: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
        self.check_theta(theta)?;
        let get = |c: Coef| match c {
            Coef::Fixed(v) => v,
            Coef::Free(i) => theta[i],
        };
        Ok(self.links.iter().map(|l| (get(l.base), l.slopes.iter().map(|&c| get(c)).collect())).collect())
    }

    fn filter_values<'a>(&self, values: &'a [f64], fi: usize) -> &'a [f64] {
        let off = self.offsets[fi];
        &values[off..off + self.filters[fi].params.len()]
    }

    fn check_domain(&self, values: &[f64]) -> Result<()> {
        for (fi, f) in self.filters.iter().enumerate() {
            let v = self.filter_values(values, fi);
            if f.kind.is_diagonal() {
                for q in v.chunks(f.quantities_per_channel()) {
                    f.kind.check_domain(q).map_err(|e| Error::ParamDomain(format!("{}: {e}", f.name)))?;
                }
            } else {
                f.kind.check_domain(v)?;
            }
        }
        Ok(())
    }

    /// Domain check at the vertices and center of the scheduling box.
    pub fn check_box(&self, theta: &[f64], bounds: &[(f64, f64)]) -> Result<()> {
        for p in crate::plant::box_samples(bounds) {
            self.check_domain(&self.resolve(theta, &p)?)?;
        }
        Ok(())
    }

    /// Slot values of the stacked parameter block at `p`, ordered like the
    /// slot of [`Self::lfr`].
    pub fn phi(&self, theta: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let values = self.resolve(theta, p)?;
        let mut phi = Vec::new();
        self.collect_phi(&self.root, &values, &mut phi);
        Ok(phi)
    }

    /// Affine law `φ0 + Σ_k p_k φ_k` of every slot entry: `(φ0, [φ_k])`.
    pub fn phi_laws(&self, theta: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
        let coefs = self.coefficients(theta)?;
        let base: Vec<f64> = coefs.iter().map(|c| c.0).collect();
        let mut phi0 = Vec::new();
        self.collect_phi(&self.root, &base, &mut phi0);
        let mut slopes = vec![Vec::new(); phi0.len()];
        for k in 0..self.np {
            let along: Vec<f64> = coefs.iter().map(|c| c.1.get(k).copied().unwrap_or(0.0)).collect();
            let mut phik = Vec::new();
            self.collect_phi(&self.root, &along, &mut phik);
            for (slot, v) in slopes.iter_mut().zip(phik) {
                slot.push(v);
            }
        }
        Ok(phi0.into_iter().zip(slopes).collect())
    }

    fn collect_phi(&self, node: &Node, values: &[f64], out: &mut Vec<f64>) {
        match node {
            Node::Filter(fi) => {
                let f = &self.filters[*fi];
                let v = self.filter_values(values, *fi);
                if f.kind.is_diagonal() {
                    for q in v.chunks(f.quantities_per_channel()) {
                        f.kind.channel_phi(q, out);
                    }
                } else {
                    f.kind.channel_phi(v, out);
                }
            }
            Node::Group { children, .. } => children.iter().for_each(|c| self.collect_phi(c, values, out)),
        }
    }

    /// The whole controller as one LFR; the slot is the direct sum of the
    /// filter slots in declaration order.
    pub fn lfr(&self) -> Result<LfrBlock> {
        self.node_lfr(&self.root)
    }

    fn node_lfr(&self, node: &Node) -> Result<LfrBlock> {
        match node {
            Node::Filter(fi) => primitive_lfr(self.filters[*fi].kind, self.channels),
            Node::Group { interconnect: kind, children } => {
                let blocks = children.iter().map(|c| self.node_lfr(c)).collect::<Result<Vec<_>>>()?;
                interconnect(&blocks, *kind)
            }
        }
    }

    /// Controller integrators per channel.
    pub fn integrators(&self) -> Vec<usize> {
        self.node_integrators(&self.root)
    }

    fn node_integrators(&self, node: &Node) -> Vec<usize> {
        match node {
            Node::Filter(fi) => vec![self.filters[*fi].kind.integrators(); self.channels],
            Node::Group { interconnect, children } => {
                let counts: Vec<_> = children.iter().map(|c| self.node_integrators(c)).collect();
                (0..self.channels)
                    .map(|j| {
                        let it = counts.iter().map(|c| c[j]);
                        match interconnect {
                            Interconnect::Cascade => it.sum(),
                            Interconnect::Parallel => it.max().unwrap_or(0),
                        }
                    })
                    .collect()
            }
        }
    }

    /// Evaluate the controller frozen at `p` on arbitrary points `s`: each
    /// filter's LFR is closed with its slot values, the resolvents are
    /// evaluated, and the filters are combined along the structure tree.
    pub fn freeze(&self, theta: &[f64], p: &[f64], points: &[C64]) -> Result<FrozenController> {
        let values = self.resolve(theta, p)?;
        self.check_domain(&values)?;
        self.freeze_node(&self.root, &values, points)
    }

    fn freeze_node(&self, node: &Node, values: &[f64], points: &[C64]) -> Result<FrozenController> {
        match node {
            Node::Filter(fi) => self.freeze_filter(*fi, values, points),
            Node::Group { interconnect, children } => {
                let mut it = children.iter();
                let first = it.next().ok_or_else(|| Error::Config("empty filter group".into()))?;
                let mut acc = self.freeze_node(first, values, points)?;
                for child in it {
                    let next = self.freeze_node(child, values, points)?;
                    acc = match interconnect {
                        Interconnect::Cascade => acc.then(&next),
                        Interconnect::Parallel => acc.plus(&next),
                    };
                }
                Ok(acc)
            }
        }
    }

    fn freeze_filter(&self, fi: usize, values: &[f64], points: &[C64]) -> Result<FrozenController> {
        let f = &self.filters[fi];
        let v = self.filter_values(values, fi);
        let n = self.channels;
        let mut phi = Vec::with_capacity(8);
        match &self.channel_blocks[fi] {
            Some(block) => {
                let mut data = vec![C64::new(0.0, 0.0); points.len() * n];
                for (j, q) in v.chunks(f.quantities_per_channel()).enumerate() {
                    phi.clear();
                    f.kind.channel_phi(q, &mut phi);
                    let ss = block.close(&phi)?;
                    for (k, &s) in points.iter().enumerate() {
                        data[k * n + j] = siso_response(&ss, s).ok_or(Error::SingularResolvent { omega: s.im })?;
                    }
                }
                Ok(FrozenController { channels: n, points: points.len(), diagonal: true, data })
            }
            None => {
                f.kind.channel_phi(v, &mut phi);
                let ss = primitive_lfr(f.kind, n)?.close(&phi)?;
                let mut data = Vec::with_capacity(points.len() * n * n);
                for &s in points {
                    let h = ss.response(s).ok_or(Error::SingularResolvent { omega: s.im })?;
                    for i in 0..n {
                        for j in 0..n {
                            data.push(h[(i, j)]);
                        }
                    }
                }
                Ok(FrozenController { channels: n, points: points.len(), diagonal: false, data })
            }
        }
    }
}

/// Controller frozen at `p` on the imaginary-axis points of `grid`.
pub fn freeze_controller(
    structure: &ControllerStructure,
    params: &GeneralizedController,
    p: &OperatingPoint,
    grid: &FrequencyGrid,
) -> Result<ComplexResponse> {
    let points: Vec<C64> = grid.values().iter().map(|&w| C64::new(0.0, w)).collect();
    structure.freeze(&params.theta, p.values(), &points)?.to_response()
}

fn check_node(node: &Node, n_filters: usize) -> Result<()> {
    match node {
        Node::Filter(i) if *i < n_filters => Ok(()),
        Node::Filter(i) => Err(Error::Config(format!("filter index {i} out of range"))),
        Node::Group { children, .. } if children.is_empty() => Err(Error::Config("empty filter group".into())),
        Node::Group { children, .. } => children.iter().try_for_each(|c| check_node(c, n_filters)),
    }
}

fn check_param(p: &ParamSpec, np: usize) -> Result<()> {
    let (lo, hi) = p.bounds;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Config(format!("{}: invalid bounds [{lo}, {hi}]", p.name)));
    }
    if !p.fixed && !(p.value >= lo && p.value <= hi) {
        return Err(Error::Config(format!("{}: initial value {} outside [{lo}, {hi}]", p.name, p.value)));
    }
    if !p.value.is_finite() {
        return Err(Error::Config(format!("{}: non-finite value", p.name)));
    }
    if p.scheduling {
        if np == 0 {
            return Err(Error::Config(format!("{}: scheduling requested but the controller has no scheduling variables", p.name)));
        }
        if p.slope.len() != np {
            return Err(Error::Config(format!("{}: slope has {} entries, expected {np}", p.name, p.slope.len())));
        }
        if p.slope_bounds.len() != np {
            return Err(Error::Config(format!("{}: slope_bounds required for every scheduling dimension", p.name)));
        }
        for (k, (&(lo, hi), &v)) in p.slope_bounds.iter().zip(&p.slope).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("{}: invalid slope bounds [{lo}, {hi}] for dimension {k}", p.name)));
            }
            if !p.fixed && !(v >= lo && v <= hi) {
                return Err(Error::Config(format!("{}: initial slope {v} outside [{lo}, {hi}]", p.name)));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Structure file

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![v.clone(); n]),
            OneOrMany::Many(v) if v.len() == n => Ok(v.clone()),
            OneOrMany::Many(v) => Err(Error::Config(format!("{what}: {} entries given, expected 1 or {n}", v.len()))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamFile {
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fixed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub scheduling: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_bounds: Option<OneOrMany<[f64; 2]>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    #[serde(default)]
    pub params: BTreeMap<String, OneOrMany<ParamFile>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeFile {
    Pi(FilterFile),
    Lead(FilterFile),
    Notch(FilterFile),
    Gain(FilterFile),
    Mixing(FilterFile),
    Group {
        #[serde(default)]
        interconnect: Interconnect,
        filters: Vec<NodeFile>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureFile {
    pub channels: usize,
    #[serde(default)]
    pub np: usize,
    #[serde(default)]
    pub interconnect: Interconnect,
    pub filters: Vec<NodeFile>,
}

fn midpoint((lo, hi): (f64, f64)) -> f64 {
    if lo > 0.0 {
        (lo * hi).sqrt()
    } else {
        0.5 * (lo + hi)
    }
}

fn param_from_file(
    file: &ParamFile,
    name: String,
    kind: FilterKind,
    quantity: &str,
    default_value: Option<f64>,
    np: usize,
) -> Result<ParamSpec> {
    let bounds = file.bounds.map(|b| (b[0], b[1])).unwrap_or_else(|| kind.default_bounds(quantity));
    let value = match (file.value, file.fixed) {
        (Some(v), _) => v,
        (None, true) => return Err(Error::Config(format!("{name}: fixed parameter needs a value"))),
        (None, false) => default_value.unwrap_or_else(|| midpoint(bounds)),
    };
    let (slope, slope_bounds) = if file.scheduling {
        let slope_bounds: Vec<(f64, f64)> = match &file.slope_bounds {
            Some(b) => b.expand(np, &format!("{name}.slope_bounds"))?.into_iter().map(|b| (b[0], b[1])).collect(),
            None if file.fixed => vec![(f64::NEG_INFINITY, f64::INFINITY); np],
            None => return Err(Error::Config(format!("{name}: scheduled parameter needs slope_bounds"))),
        };
        let slope = match &file.slope {
            Some(s) => s.expand(np, &format!("{name}.slope"))?,
            None if file.fixed => return Err(Error::Config(format!("{name}: fixed scheduled parameter needs a slope"))),
            None => slope_bounds.iter().map(|&(lo, hi)| if lo <= 0.0 && hi >= 0.0 { 0.0 } else { 0.5 * (lo + hi) }).collect(),
        };
        let slope_bounds = if file.fixed {
            slope.iter().map(|&v| (v, v)).collect()
        } else {
            slope_bounds
        };
        (slope, slope_bounds)
    } else {
        if file.slope.is_some() || file.slope_bounds.is_some() {
            return Err(Error::Config(format!("{name}: slope given but scheduling is off")));
        }
        (Vec::new(), Vec::new())
    };
    Ok(ParamSpec { name, fixed: file.fixed, value, bounds, scheduling: file.scheduling, slope, slope_bounds })
}

fn filter_from_file(kind: FilterKind, file: &FilterFile, name: String, channels: usize, np: usize) -> Result<FilterSpec> {
    if let Some(c) = file.channels {
        if c != channels {
            return Err(Error::Dimension(format!("filter {name} declares {c} channels, controller has {channels}")));
        }
    }
    for key in file.params.keys() {
        if !kind.quantities().contains(&key.as_str()) {
            return Err(Error::Config(format!("filter {name}: unknown parameter {key:?} (expected one of {:?})", kind.quantities())));
        }
    }
    let mut params = Vec::new();
    let default_file = OneOrMany::One(ParamFile::default());
    if kind == FilterKind::Mixing {
        let specs = file.params.get("m").unwrap_or(&default_file).expand(channels * channels, &format!("{name}.m"))?;
        for (e, spec) in specs.iter().enumerate() {
            let (i, j) = (e / channels, e % channels);
            let identity = if i == j { 1.0 } else { 0.0 };
            params.push(param_from_file(spec, format!("{name}.m[{i}][{j}]"), kind, "m", Some(identity), np)?);
        }
    } else {
        let per_quantity = kind
            .quantities()
            .iter()
            .map(|q| file.params.get(*q).unwrap_or(&default_file).expand(channels, &format!("{name}.{q}")))
            .collect::<Result<Vec<_>>>()?;
        for c in 0..channels {
            for (qi, q) in kind.quantities().iter().enumerate() {
                params.push(param_from_file(&per_quantity[qi][c], format!("{name}.{q}[{c}]"), kind, q, None, np)?);
            }
        }
    }
    Ok(FilterSpec { name, kind, channels, params })
}

impl StructureFile {
    pub fn to_structure(&self) -> Result<ControllerStructure> {
        let mut filters = Vec::new();
        let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
        let children = self
            .filters
            .iter()
            .map(|n| self.build(n, &mut filters, &mut counts))
            .collect::<Result<Vec<_>>>()?;
        if children.is_empty() {
            return Err(Error::Config("controller structure needs at least one filter".into()));
        }
        let root = Node::Group { interconnect: self.interconnect, children };
        ControllerStructure::new(self.channels, self.np, filters, root)
    }

    fn build(
        &self,
        node: &NodeFile,
        filters: &mut Vec<FilterSpec>,
        counts: &mut BTreeMap<&'static str, usize>,
    ) -> Result<Node> {
        let (kind, file) = match node {
            NodeFile::Group { interconnect, filters: children } => {
                let children = children.iter().map(|c| self.build(c, filters, counts)).collect::<Result<Vec<_>>>()?;
                return Ok(Node::Group { interconnect: *interconnect, children });
            }
            NodeFile::Pi(f) => (FilterKind::Pi, f),
            NodeFile::Lead(f) => (FilterKind::Lead, f),
            NodeFile::Notch(f) => (FilterKind::Notch, f),
            NodeFile::Gain(f) => (FilterKind::Gain, f),
            NodeFile::Mixing(f) => (FilterKind::Mixing, f),
        };
        let tag = kind_tag(kind);
        let ordinal = counts.entry(tag).or_insert(0);
        *ordinal += 1;
        let name = file.name.clone().unwrap_or_else(|| format!("{tag}{ordinal}"));
        if filters.iter().any(|f| f.name == name) {
            return Err(Error::Config(format!("duplicate filter name {name:?}")));
        }
        filters.push(filter_from_file(kind, file, name, self.channels, self.np)?);
        Ok(Node::Filter(filters.len() - 1))
    }
}

fn kind_tag(kind: FilterKind) -> &'static str {
    match kind {
        FilterKind::Pi => "pi",
        FilterKind::Lead => "lead",
        FilterKind::Notch => "notch",
        FilterKind::Gain => "gain",
        FilterKind::Mixing => "mixing",
    }
}

impl ControllerStructure {
    /// Structure file with every value (and slope) replaced by its resolved
    /// value under `theta`; flags and bounds are kept.
    pub fn to_file(&self, theta: &[f64]) -> Result<StructureFile> {
        let coefs = self.coefficients(theta)?;
        let filter_file = |fi: usize| -> NodeFile {
            let f = &self.filters[fi];
            let off = self.offsets[fi];
            let to_param = |k: usize| {
                let spec = &f.params[k];
                let (value, slope) = &coefs[off + k];
                ParamFile {
                    fixed: spec.fixed,
                    value: Some(*value),
                    bounds: Some([spec.bounds.0, spec.bounds.1]),
                    scheduling: spec.scheduling,
                    slope: spec.scheduling.then(|| OneOrMany::Many(slope.clone())),
                    slope_bounds: (spec.scheduling && !spec.fixed)
                        .then(|| OneOrMany::Many(spec.slope_bounds.iter().map(|&(l, h)| [l, h]).collect())),
                }
            };
            let mut params = BTreeMap::new();
            if f.kind == FilterKind::Mixing {
                params.insert("m".to_string(), OneOrMany::Many((0..f.params.len()).map(to_param).collect()));
            } else {
                let nq = f.quantities_per_channel();
                for (qi, q) in f.kind.quantities().iter().enumerate() {
                    let per_channel = (0..f.channels).map(|c| to_param(c * nq + qi)).collect();
                    params.insert(q.to_string(), OneOrMany::Many(per_channel));
                }
            }
            let file = FilterFile { name: Some(f.name.clone()), channels: Some(f.channels), params };
            match f.kind {
                FilterKind::Pi => NodeFile::Pi(file),
                FilterKind::Lead => NodeFile::Lead(file),
                FilterKind::Notch => NodeFile::Notch(file),
                FilterKind::Gain => NodeFile::Gain(file),
                FilterKind::Mixing => NodeFile::Mixing(file),
            }
        };
        fn walk(node: &Node, leaf: &dyn Fn(usize) -> NodeFile) -> NodeFile {
            match node {
                Node::Filter(fi) => leaf(*fi),
                Node::Group { interconnect, children } => NodeFile::Group {
                    interconnect: *interconnect,
                    filters: children.iter().map(|c| walk(c, leaf)).collect(),
                },
            }
        }
        let (interconnect, filters) = match walk(&self.root, &filter_file) {
            NodeFile::Group { interconnect, filters } => (interconnect, filters),
            single => (Interconnect::Cascade, vec![single]),
        };
        Ok(StructureFile { channels: self.channels, np: self.np, interconnect, filters })
    }
}

pub fn parse_structure(text: &str) -> Result<ControllerStructure> {
    let file: StructureFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    file.to_structure()
}

pub fn load_structure(path: impl AsRef<Path>) -> Result<ControllerStructure> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_structure(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse { location: format!("{} {location}", path.display()), message },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO_STYLE: &str = r#"{
        "channels": 2, "np": 1,
        "filters": [
            {"kind": "pi", "params": {"kp": {"value": 2000.0}}},
            {"kind": "lead", "params": {"omega1": {"value": 20.0}, "omega2": {"value": 180.0}}},
            {"kind": "lead", "params": {"omega1": {"value": 25.0}, "omega2": {"value": 150.0}}},
            {"kind": "lead", "params": {"omega1": {"value": 30.0}, "omega2": {"value": 120.0}}},
            {"kind": "notch", "params": {
                "beta1": {"value": 0.02}, "beta2": {"value": 0.3},
                "omega1": {"value": 600.0, "scheduling": true, "slope": 40.0, "slope_bounds": [-100.0, 100.0]},
                "omega2": {"value": 620.0, "scheduling": true, "slope": 45.0, "slope_bounds": [-100.0, 100.0]}
            }}
        ]
    }"#;

    #[test]
    fn parses_and_counts_parameters() {
        let s = parse_structure(DEMO_STYLE).unwrap();
        // per channel: 1 + 2 + 2 + 2 + (4 + 2 slopes) = 13
        assert_eq!(s.n_params(), 26);
        assert_eq!(s.integrators(), vec![1, 1]);
        assert_eq!(s.lfr().unwrap().slots(), 2 * (1 + 2 + 2 + 2 + 8));
        assert_eq!(s.phi(&s.initial().theta, &[0.5]).unwrap().len(), 30);
        assert!(s.is_diagonal() && s.is_scheduled());
    }

    #[test]
    fn descriptor_map_is_a_bijection() {
        let s = parse_structure(DEMO_STYLE).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for d in s.descriptors() {
            assert!(seen.insert((d.quantity, d.coefficient)));
        }
        assert_eq!(seen.len(), s.n_params());
        let names: std::collections::BTreeSet<_> = s.descriptors().iter().map(|d| d.name.clone()).collect();
        assert_eq!(names.len(), s.n_params());
    }

    #[test]
    fn normalization_round_trip() {
        let s = parse_structure(DEMO_STYLE).unwrap();
        let theta = s.initial().theta;
        let back = s.denormalize(&s.normalize(&theta)).theta;
        for (a, b) in theta.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn scheduled_quantity_follows_affine_law() {
        let s = parse_structure(DEMO_STYLE).unwrap();
        let theta = s.initial().theta;
        let values = s.resolve(&theta, &[0.5]).unwrap();
        let notch = s.filters.iter().position(|f| f.kind == FilterKind::Notch).unwrap();
        let v = s.filter_values(&values, notch);
        assert_eq!(v[2], 600.0 + 0.5 * 40.0);
        assert_eq!(v[3], 620.0 + 0.5 * 45.0);
    }

    #[test]
    fn invalid_configurations() {
        let no_slope = r#"{"channels": 1, "np": 1, "filters": [{"kind": "notch", "params": {"omega1": {"scheduling": true}}}]}"#;
        assert!(matches!(parse_structure(no_slope), Err(Error::Config(_))));
        let unknown = r#"{"channels": 1, "filters": [{"kind": "lead", "params": {"tau": {}}}]}"#;
        assert!(matches!(parse_structure(unknown), Err(Error::Config(_))));
        let empty = r#"{"channels": 1, "filters": []}"#;
        assert!(parse_structure(empty).is_err());
        let mismatch = r#"{"channels": 2, "filters": [{"kind": "pi", "channels": 3}]}"#;
        assert!(matches!(parse_structure(mismatch), Err(Error::Dimension(_))));
        let fixed_no_value = r#"{"channels": 1, "filters": [{"kind": "pi", "params": {"kp": {"fixed": true}}}]}"#;
        assert!(parse_structure(fixed_no_value).is_err());
    }

    #[test]
    fn file_round_trip_preserves_values() {
        let s = parse_structure(DEMO_STYLE).unwrap();
        let mut theta = s.initial().theta;
        theta[0] *= 1.5;
        let file = s.to_file(&theta).unwrap();
        let text = serde_json::to_string(&file).unwrap();
        let back = parse_structure(&text).unwrap();
        assert_eq!(back.initial().theta, theta);
        assert_eq!(back.descriptors(), s.descriptors().iter().cloned().map(|mut d| {
            d.initial = theta[s.descriptors().iter().position(|x| x.name == d.name).unwrap()];
            d
        }).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn nonpositive_notch_frequency_is_a_domain_error() {
        let s = parse_structure(DEMO_STYLE).unwrap();
        let theta = s.initial().theta;
        // ω1(p) = 600 + 40 p is negative at p = -20
        let err = s.freeze(&theta, &[-20.0], &[C64::new(0.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::ParamDomain(_)));
        assert!(s.check_box(&theta, &[(-1.0, 1.0)]).is_ok());
        assert!(s.check_box(&theta, &[(-20.0, 1.0)]).is_err());
    }
}
