//! Small dense helpers shared by the memory, editor and oracle paths.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative ridge factors tried, in order, when the plain factorization is unusable.
/// Each is multiplied by `tr(C) / dim` before being added to the diagonal.
pub const RIDGE_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Condition estimate above which a factorization is treated as failed.
pub const MAX_CONDITION: f64 = 1e12;

/// Residual tolerance the unregularized solve must meet.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Caps how far the ridge ladder may escalate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgePolicy {
    pub max_lambda: f64,
}

impl Default for RidgePolicy {
    fn default() -> Self {
        RidgePolicy {
            max_lambda: RIDGE_LADDER[RIDGE_LADDER.len() - 1],
        }
    }
}

impl RidgePolicy {
    pub fn none() -> Self {
        RidgePolicy { max_lambda: 0.0 }
    }

    fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(0.0).chain(
            RIDGE_LADDER
                .iter()
                .copied()
                .filter(move |&l| l <= self.max_lambda),
        )
    }
}

/// Outcome of solving `X · C = M` for symmetric positive-definite `C`.
#[derive(Debug, Clone)]
pub struct RightSolve {
    pub x: DMatrix<f64>,
    /// Absolute ridge added to the diagonal (0 when the plain system was used).
    pub ridge: f64,
    pub condition_estimate: f64,
    /// `‖X·C − M‖_F / scale`, always against the unregularized `C`.
    pub residual: f64,
}

/// Sum of elementwise products, i.e. `tr(A·Bᵀ)`.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `K·Kᵀ` with exact symmetry.
pub fn gram(k: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = k * k.transpose();
    symmetrize(&mut g);
    g
}

pub fn smallest_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn cholesky_condition(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        (hi / lo).powi(2)
    }
}

/// Solves `X · C = M` through a Cholesky factorization of `C`, escalating a
/// diagonal ridge along [`RIDGE_LADDER`] when the factorization fails, the
/// condition estimate exceeds [`MAX_CONDITION`], or the plain residual exceeds
/// [`RESIDUAL_TOL`].
pub fn solve_right_spd(
    c: &DMatrix<f64>,
    m: &DMatrix<f64>,
    scale: f64,
    policy: RidgePolicy,
) -> Result<RightSolve> {
    let dim = c.nrows();
    let base = c.trace() / dim as f64;
    let denom = if scale > 0.0 { scale } else { 1.0 };
    let mut last_cond = f64::INFINITY;
    let mut last_ridge = 0.0;

    for rel in policy.steps() {
        let ridge = rel * base.abs();
        let mut cr = c.clone();
        if ridge > 0.0 {
            for i in 0..dim {
                cr[(i, i)] += ridge;
            }
        }
        last_ridge = ridge;
        let Some(chol) = Cholesky::new(cr) else {
            continue;
        };
        let cond = cholesky_condition(&chol);
        last_cond = cond;
        if !cond.is_finite() || cond > MAX_CONDITION {
            continue;
        }
        // C symmetric: X·C = M  <=>  C·Xᵀ = Mᵀ
        let x = chol.solve(&m.transpose()).transpose();
        let residual = (&x * c - m).norm() / denom;
        if !x.iter().all(|v| v.is_finite()) {
            continue;
        }
        if ridge == 0.0 && residual > RESIDUAL_TOL {
            continue;
        }
        return Ok(RightSolve {
            x,
            ridge,
            condition_estimate: cond,
            residual,
        });
    }
    Err(Error::SingularSystem {
        condition_estimate: last_cond,
        ridge: last_ridge,
    })
}
