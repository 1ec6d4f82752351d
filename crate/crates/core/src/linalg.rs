//! Small dense linear-algebra helpers shared by the frequency-domain code.

use nalgebra::DMatrix;

use crate::{CMat, RMat, C64};

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| C64::new(v, 0.0))
}

/// Largest singular value. Closed form for 1×1 and 2×2, SVD otherwise.
pub fn max_singular_value(m: &CMat) -> f64 {
    match m.shape() {
        (0, _) | (_, 0) => 0.0,
        (1, 1) => m[(0, 0)].norm(),
        (2, 2) => {
            let frob = m.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).norm();
            let disc = (frob * frob - 4.0 * det * det).max(0.0);
            ((frob + disc.sqrt()) / 2.0).sqrt()
        }
        _ => m
            .clone()
            .singular_values()
            .iter()
            .copied()
            .fold(0.0, f64::max),
    }
}

/// Solve `a · x = b`; `None` when `a` is numerically singular.
pub fn solve(a: CMat, b: &CMat) -> Option<CMat> {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lu = a.lu();
    let u = lu.u();
    let pivot_min = (0..u.nrows()).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if !(pivot_min > 1e-14 * scale.max(f64::MIN_POSITIVE)) {
        return None;
    }
    lu.solve(b)
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    let n = a.nrows();
    solve(a.clone(), &CMat::identity(n, n))
}

pub fn determinant(a: &CMat) -> C64 {
    match a.shape() {
        (0, 0) => C64::new(1.0, 0.0),
        (1, 1) => a[(0, 0)],
        (2, 2) => a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
        _ => a.clone().lu().determinant(),
    }
}

/// Moore–Penrose pseudo-inverse of a matrix expected to have full rank
/// `min(rows, cols)`. Returns `None` when the smallest singular value falls
/// below `rel_tol` times the largest.
pub fn pinv_full_rank(m: &RMat, rel_tol: f64) -> Option<RMat> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin <= rel_tol * smax {
        return None;
    }
    svd.pseudo_inverse(0.0).ok()
}

/// Block-diagonal concatenation of two real matrices.
pub fn block_diag(a: &RMat, b: &RMat) -> RMat {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Continuous-time state-space data `ẋ = A x + B u`, `y = C x + D u`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub d: RMat,
}

impl StateSpace {
    pub fn new(a: RMat, b: RMat, c: RMat, d: RMat) -> crate::Result<Self> {
        let n = a.nrows();
        if a.ncols() != n
            || b.nrows() != n
            || c.ncols() != n
            || d.nrows() != c.nrows()
            || d.ncols() != b.ncols()
        {
            return Err(crate::Error::Dimension(format!(
                "state space A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn static_gain(d: RMat) -> Self {
        let (ny, nu) = d.shape();
        Self { a: RMat::zeros(0, 0), b: RMat::zeros(0, nu), c: RMat::zeros(ny, 0), d }
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.d.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.d.nrows()
    }

    /// `C (sI − A)⁻¹ B + D`; `None` if `s` is an eigenvalue of `A`.
    pub fn response(&self, s: C64) -> Option<CMat> {
        let n = self.states();
        let d = to_complex(&self.d);
        if n == 0 {
            return Some(d);
        }
        let mut resolvent = self.a.map(|v| C64::new(-v, 0.0));
        for i in 0..n {
            resolvent[(i, i)] += s;
        }
        let x = solve(resolvent, &to_complex(&self.b))?;
        Some(to_complex(&self.c) * x + d)
    }

    /// Eigenvalues of `A`.
    pub fn poles(&self) -> Vec<C64> {
        if self.states() == 0 {
            return Vec::new();
        }
        self.a.clone().complex_eigenvalues().iter().copied().collect()
    }
}
