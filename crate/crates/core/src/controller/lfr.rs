//! Linear fractional representations with a diagonal parameter slot.
//!
//! ```text
//! ẋ = A x  + B1 ũ  + B2 u
//! ỹ = C1 x + D11 ũ + D12 u        ũ = Φ ỹ,  Φ = diag(φ)
//! y = C2 x + D21 ũ + D22 u
//! ```

use serde::{Deserialize, Serialize};

use crate::linalg::StateSpace;
use crate::{Error, RMat, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LfrBlock {
    pub a: RMat,
    pub b1: RMat,
    pub b2: RMat,
    pub c1: RMat,
    pub d11: RMat,
    pub d12: RMat,
    pub c2: RMat,
    pub d21: RMat,
    pub d22: RMat,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interconnect {
    /// Signal passes through the blocks in declaration order; the transfer is
    /// the product `K_last ⋯ K_first`.
    #[default]
    Cascade,
    /// All blocks see the same input; outputs are summed.
    Parallel,
}

/// Assemble a block matrix from a grid of parts with given row heights and
/// column widths; `None` entries are zero.
fn assemble(rows: &[usize], cols: &[usize], parts: &[&[Option<&RMat>]]) -> RMat {
    let mut out = RMat::zeros(rows.iter().sum(), cols.iter().sum());
    let mut r0 = 0;
    for (i, &h) in rows.iter().enumerate() {
        let mut c0 = 0;
        for (j, &w) in cols.iter().enumerate() {
            if let Some(m) = parts[i][j] {
                debug_assert_eq!(m.shape(), (h, w));
                out.view_mut((r0, c0), (h, w)).copy_from(m);
            }
            c0 += w;
        }
        r0 += h;
    }
    out
}

impl LfrBlock {
    /// Build and check partition dimensions.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: RMat,
        b1: RMat,
        b2: RMat,
        c1: RMat,
        d11: RMat,
        d12: RMat,
        c2: RMat,
        d21: RMat,
        d22: RMat,
    ) -> Result<Self> {
        let block = Self { a, b1, b2, c1, d11, d12, c2, d21, d22 };
        block.check()?;
        Ok(block)
    }

    fn check(&self) -> Result<()> {
        let (n, l, u, y) = (self.a.nrows(), self.d11.nrows(), self.d22.ncols(), self.d22.nrows());
        let expect = [
            ("A", &self.a, (n, n)),
            ("B1", &self.b1, (n, l)),
            ("B2", &self.b2, (n, u)),
            ("C1", &self.c1, (l, n)),
            ("D11", &self.d11, (l, l)),
            ("D12", &self.d12, (l, u)),
            ("C2", &self.c2, (y, n)),
            ("D21", &self.d21, (y, l)),
            ("D22", &self.d22, (y, u)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(Error::Dimension(format!("LFR partition {name} is {:?}, expected {shape:?}", m.shape())));
            }
        }
        Ok(())
    }

    /// Parameter-free block: a plain state space with an empty slot.
    pub fn from_state_space(ss: &StateSpace) -> Self {
        let (n, u, y) = (ss.states(), ss.inputs(), ss.outputs());
        Self {
            a: ss.a.clone(),
            b1: RMat::zeros(n, 0),
            b2: ss.b.clone(),
            c1: RMat::zeros(0, n),
            d11: RMat::zeros(0, 0),
            d12: RMat::zeros(0, u),
            c2: ss.c.clone(),
            d21: RMat::zeros(y, 0),
            d22: ss.d.clone(),
        }
    }

    pub fn identity(channels: usize) -> Self {
        Self::from_state_space(&StateSpace::static_gain(RMat::identity(channels, channels)))
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    /// Width of the parameter slot.
    pub fn slots(&self) -> usize {
        self.d11.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.d22.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.d22.nrows()
    }

    /// Close the upper loop `ũ = diag(phi) ỹ`.
    pub fn close(&self, phi: &[f64]) -> Result<StateSpace> {
        let l = self.slots();
        if phi.len() != l {
            return Err(Error::Dimension(format!("{} parameter values for a slot of width {l}", phi.len())));
        }
        if l == 0 {
            return StateSpace::new(self.a.clone(), self.b2.clone(), self.c2.clone(), self.d22.clone());
        }
        let phi_m = RMat::from_diagonal(&nalgebra::DVector::from_column_slice(phi));
        let loop_m = RMat::identity(l, l) - &phi_m * &self.d11;
        // Δ = (I − Φ D11)⁻¹ Φ
        let delta = if self.d11.iter().all(|&v| v == 0.0) {
            phi_m
        } else {
            let lu = loop_m.lu();
            let u = lu.u();
            let scale = u.abs().max().max(1.0);
            if (0..l).any(|i| !(u[(i, i)].abs() > 1e-14 * scale)) {
                return Err(Error::IllPosed("I − Φ·D11 is singular".into()));
            }
            lu.solve(&phi_m).ok_or_else(|| Error::IllPosed("I − Φ·D11 is singular".into()))?
        };
        let b1d = &self.b1 * &delta;
        let d21d = &self.d21 * &delta;
        StateSpace::new(
            &self.a + &b1d * &self.c1,
            &self.b2 + &b1d * &self.d12,
            &self.c2 + &d21d * &self.c1,
            &self.d22 + &d21d * &self.d12,
        )
    }

    /// `self` followed by `next`: the output of `self` drives `next`.
    pub fn then(&self, next: &LfrBlock) -> Result<LfrBlock> {
        let (f, g) = (self, next);
        if f.outputs() != g.inputs() {
            return Err(Error::Dimension(format!(
                "cascade of a {}-output block into a {}-input block",
                f.outputs(),
                g.inputs()
            )));
        }
        let (nf, ng, lf, lg) = (f.states(), g.states(), f.slots(), g.slots());
        let (u, y) = (f.inputs(), g.outputs());
        let b2g_c2f = &g.b2 * &f.c2;
        let b2g_d21f = &g.b2 * &f.d21;
        let b2g_d22f = &g.b2 * &f.d22;
        let d12g_c2f = &g.d12 * &f.c2;
        let d12g_d21f = &g.d12 * &f.d21;
        let d12g_d22f = &g.d12 * &f.d22;
        let d22g_c2f = &g.d22 * &f.c2;
        let d22g_d21f = &g.d22 * &f.d21;
        let block = LfrBlock {
            a: assemble(&[nf, ng], &[nf, ng], &[&[Some(&f.a), None], &[Some(&b2g_c2f), Some(&g.a)]]),
            b1: assemble(&[nf, ng], &[lf, lg], &[&[Some(&f.b1), None], &[Some(&b2g_d21f), Some(&g.b1)]]),
            b2: assemble(&[nf, ng], &[u], &[&[Some(&f.b2)], &[Some(&b2g_d22f)]]),
            c1: assemble(&[lf, lg], &[nf, ng], &[&[Some(&f.c1), None], &[Some(&d12g_c2f), Some(&g.c1)]]),
            d11: assemble(&[lf, lg], &[lf, lg], &[&[Some(&f.d11), None], &[Some(&d12g_d21f), Some(&g.d11)]]),
            d12: assemble(&[lf, lg], &[u], &[&[Some(&f.d12)], &[Some(&d12g_d22f)]]),
            c2: assemble(&[y], &[nf, ng], &[&[Some(&d22g_c2f), Some(&g.c2)]]),
            d21: assemble(&[y], &[lf, lg], &[&[Some(&d22g_d21f), Some(&g.d21)]]),
            d22: &g.d22 * &f.d22,
        };
        Ok(block)
    }

    /// Same input to both blocks, outputs summed.
    pub fn plus(&self, other: &LfrBlock) -> Result<LfrBlock> {
        let (f, g) = (self, other);
        if f.inputs() != g.inputs() || f.outputs() != g.outputs() {
            return Err(Error::Dimension(format!(
                "parallel blocks {}×{} and {}×{}",
                f.outputs(),
                f.inputs(),
                g.outputs(),
                g.inputs()
            )));
        }
        let (nf, ng, lf, lg) = (f.states(), g.states(), f.slots(), g.slots());
        let (u, y) = (f.inputs(), f.outputs());
        Ok(LfrBlock {
            a: assemble(&[nf, ng], &[nf, ng], &[&[Some(&f.a), None], &[None, Some(&g.a)]]),
            b1: assemble(&[nf, ng], &[lf, lg], &[&[Some(&f.b1), None], &[None, Some(&g.b1)]]),
            b2: assemble(&[nf, ng], &[u], &[&[Some(&f.b2)], &[Some(&g.b2)]]),
            c1: assemble(&[lf, lg], &[nf, ng], &[&[Some(&f.c1), None], &[None, Some(&g.c1)]]),
            d11: assemble(&[lf, lg], &[lf, lg], &[&[Some(&f.d11), None], &[None, Some(&g.d11)]]),
            d12: assemble(&[lf, lg], &[u], &[&[Some(&f.d12)], &[Some(&g.d12)]]),
            c2: assemble(&[y], &[nf, ng], &[&[Some(&f.c2), Some(&g.c2)]]),
            d21: assemble(&[y], &[lf, lg], &[&[Some(&f.d21), Some(&g.d21)]]),
            d22: &f.d22 + &g.d22,
        })
    }

    /// Block-diagonal augmentation: independent channels side by side.
    pub fn append(&self, other: &LfrBlock) -> LfrBlock {
        use crate::linalg::block_diag;
        LfrBlock {
            a: block_diag(&self.a, &other.a),
            b1: block_diag(&self.b1, &other.b1),
            b2: block_diag(&self.b2, &other.b2),
            c1: block_diag(&self.c1, &other.c1),
            d11: block_diag(&self.d11, &other.d11),
            d12: block_diag(&self.d12, &other.d12),
            c2: block_diag(&self.c2, &other.c2),
            d21: block_diag(&self.d21, &other.d21),
            d22: block_diag(&self.d22, &other.d22),
        }
    }
}

/// Interconnect blocks in declaration order. The parameter slot of the
/// result is the direct sum of the constituent slots in the same order.
pub fn interconnect(blocks: &[LfrBlock], kind: Interconnect) -> Result<LfrBlock> {
    let (first, rest) = blocks
        .split_first()
        .ok_or_else(|| Error::Config("interconnection of zero blocks".into()))?;
    rest.iter().try_fold(first.clone(), |acc, b| match kind {
        Interconnect::Cascade => acc.then(b),
        Interconnect::Parallel => acc.plus(b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn siso(a: f64, b: f64, c: f64, d: f64) -> LfrBlock {
        let m = |v| RMat::from_element(1, 1, v);
        LfrBlock::from_state_space(&StateSpace::new(m(a), m(b), m(c), m(d)).unwrap())
    }

    #[test]
    fn dimension_checks() {
        let bad = LfrBlock::new(
            RMat::zeros(1, 1),
            RMat::zeros(1, 2),
            RMat::zeros(1, 1),
            RMat::zeros(1, 1),
            RMat::zeros(2, 2),
            RMat::zeros(2, 1),
            RMat::zeros(1, 1),
            RMat::zeros(1, 2),
            RMat::zeros(1, 1),
        );
        assert!(matches!(bad, Err(Error::Dimension(_))));
        let two = LfrBlock::identity(2);
        assert!(two.then(&LfrBlock::identity(1)).is_err());
        assert!(two.plus(&LfrBlock::identity(1)).is_err());
    }

    #[test]
    fn series_and_parallel_of_plain_systems() {
        let f = siso(-1.0, 1.0, 1.0, 0.0); // 1/(s+1)
        let g = siso(-3.0, 2.0, 1.0, 0.5); // 2/(s+3) + 0.5
        let s = C64::new(0.3, 2.0);
        let hf = C64::from(1.0) / (s + 1.0);
        let hg = C64::from(2.0) / (s + 3.0) + 0.5;
        let cas = f.then(&g).unwrap().close(&[]).unwrap().response(s).unwrap()[(0, 0)];
        let par = f.plus(&g).unwrap().close(&[]).unwrap().response(s).unwrap()[(0, 0)];
        assert!((cas - hf * hg).norm() < 1e-14);
        assert!((par - (hf + hg)).norm() < 1e-14);
    }

    #[test]
    fn algebraic_slot_loop_is_solved() {
        // ũ = φ ỹ with ỹ = ũ + u: closed gain φ/(1 − φ)
        let m = |v| RMat::from_element(1, 1, v);
        let block = LfrBlock::new(
            RMat::zeros(0, 0),
            RMat::zeros(0, 1),
            RMat::zeros(0, 1),
            RMat::zeros(1, 0),
            m(1.0),
            m(1.0),
            RMat::zeros(1, 0),
            m(1.0),
            m(0.0),
        )
        .unwrap();
        let ss = block.close(&[0.25]).unwrap();
        assert!((ss.d[(0, 0)] - 0.25 / 0.75).abs() < 1e-15);
        assert!(matches!(block.close(&[1.0]), Err(Error::IllPosed(_))));
    }
}
