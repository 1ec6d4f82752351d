//! Filter primitives and their linear fractional forms.
//!
//! Every primitive keeps its tunable quantities in the parameter slot only;
//! the remaining partitions contain structural constants (0, ±1, ±2).

use serde::{Deserialize, Serialize};

use super::lfr::LfrBlock;
use crate::{Error, RMat, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// Integral action `Kp / s`.
    Pi,
    /// First-order lead/lag `(s + Ω1)/(s + Ω2)`.
    Lead,
    /// Second-order notch `(s² + 2β1ω1 s + ω1²)/(s² + 2β2ω2 s + ω2²)`.
    Notch,
    /// Static diagonal gain.
    Gain,
    /// Static full-block `n × n` mixing matrix.
    Mixing,
}

impl FilterKind {
    /// Tunable quantities per channel (per entry for `Mixing`).
    pub fn quantities(self) -> &'static [&'static str] {
        match self {
            FilterKind::Pi => &["kp"],
            FilterKind::Lead => &["omega1", "omega2"],
            FilterKind::Notch => &["beta1", "beta2", "omega1", "omega2"],
            FilterKind::Gain => &["k"],
            FilterKind::Mixing => &["m"],
        }
    }

    pub fn is_diagonal(self) -> bool {
        self != FilterKind::Mixing
    }

    pub fn integrators(self) -> usize {
        usize::from(self == FilterKind::Pi)
    }

    pub fn default_bounds(self, quantity: &str) -> (f64, f64) {
        match (self, quantity) {
            (FilterKind::Pi, _) | (FilterKind::Gain, _) => (1e-2, 1e6),
            (FilterKind::Lead, _) => (1.0, 1e5),
            (FilterKind::Notch, "beta1" | "beta2") => (1e-3, 1.0),
            (FilterKind::Notch, _) => (10.0, 1e5),
            (FilterKind::Mixing, _) => (-2.0, 2.0),
        }
    }

    /// Slot width of one SISO channel (whole block for `Mixing`).
    pub fn channel_slots(self) -> usize {
        match self {
            FilterKind::Pi | FilterKind::Gain => 1,
            FilterKind::Lead => 2,
            FilterKind::Notch => 8,
            FilterKind::Mixing => 0,
        }
    }

    /// Map the channel's quantity values (ordered as [`Self::quantities`])
    /// onto its slot entries.
    pub fn channel_phi(self, q: &[f64], out: &mut Vec<f64>) {
        match self {
            FilterKind::Pi | FilterKind::Gain => out.push(q[0]),
            FilterKind::Lead => out.extend_from_slice(&[q[0], q[1]]),
            FilterKind::Notch => {
                let (b1, b2, w1, w2) = (q[0], q[1], q[2], q[3]);
                out.extend_from_slice(&[w2, b2, w2, w2, w1, b1, w1, w1]);
            }
            FilterKind::Mixing => out.extend_from_slice(q),
        }
    }

    /// LFR of one SISO channel.
    pub fn channel_lfr(self) -> LfrBlock {
        match self {
            FilterKind::Pi => pi_lfr(),
            FilterKind::Lead => lead_lfr(),
            FilterKind::Notch => notch_lfr(),
            FilterKind::Gain => gain_lfr(),
            FilterKind::Mixing => unreachable!("mixing has no per-channel form"),
        }
    }

    /// Check that resolved quantity values stay in the admissible domain.
    pub fn check_domain(self, q: &[f64]) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::ParamDomain(format!("{what} = {v} after scheduling evaluation")));
        match self {
            FilterKind::Pi if !(q[0] > 0.0) => bad("Kp", q[0]),
            FilterKind::Lead if !(q[0] > 0.0) => bad("Ω1", q[0]),
            FilterKind::Lead if !(q[1] > 0.0) => bad("Ω2", q[1]),
            FilterKind::Notch if !(q[0] >= 0.0) => bad("β1", q[0]),
            FilterKind::Notch if !(q[1] > 0.0) => bad("β2", q[1]),
            FilterKind::Notch if !(q[2] > 0.0) => bad("ω1", q[2]),
            FilterKind::Notch if !(q[3] > 0.0) => bad("ω2", q[3]),
            _ if q.iter().any(|v| !v.is_finite()) => Err(Error::ParamDomain("non-finite parameter".into())),
            _ => Ok(()),
        }
    }

    /// Direct rational evaluation of one channel, used as a reference.
    pub fn channel_transfer(self, q: &[f64], s: C64) -> C64 {
        match self {
            FilterKind::Pi => q[0] / s,
            FilterKind::Lead => (s + q[0]) / (s + q[1]),
            FilterKind::Notch => {
                let (b1, b2, w1, w2) = (q[0], q[1], q[2], q[3]);
                (s * s + 2.0 * b1 * w1 * s + w1 * w1) / (s * s + 2.0 * b2 * w2 * s + w2 * w2)
            }
            FilterKind::Gain => C64::from(q[0]),
            FilterKind::Mixing => unreachable!("mixing has no per-channel form"),
        }
    }
}

fn m(rows: usize, cols: usize, v: &[f64]) -> RMat {
    RMat::from_row_slice(rows, cols, v)
}

/// `ẋ = u`, `ỹ = x`, `y = ũ`; closing with `Kp` gives `Kp/s`.
fn pi_lfr() -> LfrBlock {
    LfrBlock {
        a: m(1, 1, &[0.0]),
        b1: m(1, 1, &[0.0]),
        b2: m(1, 1, &[1.0]),
        c1: m(1, 1, &[1.0]),
        d11: m(1, 1, &[0.0]),
        d12: m(1, 1, &[0.0]),
        c2: m(1, 1, &[0.0]),
        d21: m(1, 1, &[1.0]),
        d22: m(1, 1, &[0.0]),
    }
}

/// `ẋ = −Ω2 x + u`, `y = (Ω1 − Ω2) x + u` with `ũ = (Ω1 x, Ω2 x)`.
fn lead_lfr() -> LfrBlock {
    LfrBlock {
        a: m(1, 1, &[0.0]),
        b1: m(1, 2, &[0.0, -1.0]),
        b2: m(1, 1, &[1.0]),
        c1: m(2, 1, &[1.0, 1.0]),
        d11: RMat::zeros(2, 2),
        d12: RMat::zeros(2, 1),
        c2: m(1, 1, &[0.0]),
        d21: m(1, 2, &[1.0, -1.0]),
        d22: m(1, 1, &[1.0]),
    }
}

/// Controllable-canonical notch. Products of parameters are built by
/// chaining slots: with `ũ = diag(ω2, β2, ω2, ω2, ω1, β1, ω1, ω1) ỹ` and
/// `ỹ = (x1, ũ1, x2, ũ3, x1, ũ5, x2, ũ7)` one gets `ũ2 = β2ω2 x1`,
/// `ũ4 = ω2² x2`, `ũ6 = β1ω1 x1`, `ũ8 = ω1² x2`, so
/// `ẋ1 = −2β2ω2 x1 − ω2² x2 + u`, `ẋ2 = x1` and
/// `y = 2(β1ω1 − β2ω2) x1 + (ω1² − ω2²) x2 + u`.
fn notch_lfr() -> LfrBlock {
    let mut d11 = RMat::zeros(8, 8);
    for k in [1, 3, 5, 7] {
        d11[(k, k - 1)] = 1.0;
    }
    let mut c1 = RMat::zeros(8, 2);
    for (row, state) in [(0, 0), (2, 1), (4, 0), (6, 1)] {
        c1[(row, state)] = 1.0;
    }
    LfrBlock {
        a: m(2, 2, &[0.0, 0.0, 1.0, 0.0]),
        b1: m(2, 8, &[0.0, -2.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        b2: m(2, 1, &[1.0, 0.0]),
        c1,
        d11,
        d12: RMat::zeros(8, 1),
        c2: RMat::zeros(1, 2),
        d21: m(1, 8, &[0.0, -2.0, 0.0, -1.0, 0.0, 2.0, 0.0, 1.0]),
        d22: m(1, 1, &[1.0]),
    }
}

/// `y = ũ`, `ỹ = u`.
fn gain_lfr() -> LfrBlock {
    LfrBlock {
        a: RMat::zeros(0, 0),
        b1: RMat::zeros(0, 1),
        b2: RMat::zeros(0, 1),
        c1: RMat::zeros(1, 0),
        d11: m(1, 1, &[0.0]),
        d12: m(1, 1, &[1.0]),
        c2: RMat::zeros(1, 0),
        d21: m(1, 1, &[1.0]),
        d22: m(1, 1, &[0.0]),
    }
}

fn channel_block(kind: FilterKind, channels: usize) -> Result<LfrBlock> {
    if channels == 0 {
        return Err(Error::Config("a filter needs at least one channel".into()));
    }
    let one = kind.channel_lfr();
    Ok((1..channels).fold(one.clone(), |acc, _| acc.append(&one)))
}

/// Diagonal integral-action filter over `channels` channels.
pub fn pi_to_lfr(channels: usize) -> Result<LfrBlock> {
    channel_block(FilterKind::Pi, channels)
}

pub fn lead_to_lfr(channels: usize) -> Result<LfrBlock> {
    channel_block(FilterKind::Lead, channels)
}

/// Notch LFR. The scheduling dimension does not change the block: the slot
/// receives the scheduling polynomials already evaluated at the frozen point.
pub fn notch_to_lfr(channels: usize, _np: usize) -> Result<LfrBlock> {
    channel_block(FilterKind::Notch, channels)
}

pub fn gain_to_lfr(channels: usize) -> Result<LfrBlock> {
    channel_block(FilterKind::Gain, channels)
}

/// Full-block static mixing `y = M u`; slot entries are `M` row-major.
pub fn mixing_to_lfr(channels: usize) -> Result<LfrBlock> {
    if channels == 0 {
        return Err(Error::Config("a filter needs at least one channel".into()));
    }
    let n = channels;
    let mut d12 = RMat::zeros(n * n, n);
    let mut d21 = RMat::zeros(n, n * n);
    for i in 0..n {
        for j in 0..n {
            d12[(i * n + j, j)] = 1.0;
            d21[(i, i * n + j)] = 1.0;
        }
    }
    Ok(LfrBlock {
        a: RMat::zeros(0, 0),
        b1: RMat::zeros(0, n * n),
        b2: RMat::zeros(0, n),
        c1: RMat::zeros(n * n, 0),
        d11: RMat::zeros(n * n, n * n),
        d12,
        c2: RMat::zeros(n, 0),
        d21,
        d22: RMat::zeros(n, n),
    })
}

pub fn primitive_lfr(kind: FilterKind, channels: usize) -> Result<LfrBlock> {
    match kind {
        FilterKind::Mixing => mixing_to_lfr(channels),
        _ => channel_block(kind, channels),
    }
}
