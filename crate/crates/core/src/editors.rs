//! Closed-form per-step perturbation solvers.
//!
//! All three solvers work in residual form `Δ = M·C⁻¹`, where `M` collects the
//! weighted target residuals and `C` the weighted key Grams. The right
//! multiplication by `C⁻¹` goes through a Cholesky solve, never an explicit
//! inverse.

use nalgebra::DMatrix;

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{solve_right_spd, symmetrize, RidgePolicy};
use crate::memory::{AssociativeMemory, BacklogAccumulator, EditBatch};

/// Which closed-form solver drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditorKind {
    /// Queue-weighted solve with backlog.
    Lyaplock,
    /// Bi-objective edit + preservation solve relative to the current weights.
    Baseline,
    /// Minimum-norm fit of the current batch only.
    EditOnly,
}

impl EditorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EditorKind::Lyaplock => "lyaplock",
            EditorKind::Baseline => "baseline",
            EditorKind::EditOnly => "edit-only",
        }
    }
}

impl std::fmt::Display for EditorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EditorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lyaplock" => Ok(EditorKind::Lyaplock),
            "baseline" => Ok(EditorKind::Baseline),
            "edit-only" => Ok(EditorKind::EditOnly),
            other => Err(Error::InvalidParameter {
                name: "editor",
                reason: format!("unknown editor `{other}` (expected lyaplock, baseline or edit-only)"),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// The perturbation `Δ(t)`.
    pub delta: DMatrix<f64>,
    /// Relative normal-equation residual.
    pub residual: f64,
    pub ridge_applied: f64,
    pub condition_estimate: f64,
}

fn check_weight(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and nonnegative, got {value}"),
        })
    }
}

fn check_inputs(mem: &AssociativeMemory, bk: &BacklogAccumulator, batch: &EditBatch) -> Result<()> {
    let dims = mem.dims();
    batch.check_dims(dims, "solve")?;
    ensure_dim("solve", "backlog d0", dims.d0, bk.dims().d0)?;
    ensure_dim("solve", "backlog d1", dims.d1, bk.dims().d1)
}

/// The per-step system `(W+Δ)·C = RHS` of the queue-weighted objective
/// `v·(EL + BL) + az·PL`.
struct NormalSystem {
    c: DMatrix<f64>,
    rhs: DMatrix<f64>,
}

fn lyaplock_system(
    mem: &AssociativeMemory,
    bk: &BacklogAccumulator,
    batch: &EditBatch,
    v_weight: f64,
    az: f64,
) -> NormalSystem {
    let k1t = batch.keys().transpose();
    let mut c = (batch.keys() * &k1t + bk.kp_gram()) * v_weight + mem.k0_gram() * az;
    symmetrize(&mut c);
    let rhs = (batch.values() * &k1t + bk.vpkpt()) * v_weight + mem.v0k0t() * az;
    NormalSystem { c, rhs }
}

/// Closed-form minimizer of `v·(EL + BL) + az·PL` at the post-edit weights.
///
/// `az` is the queue-scaled preservation weight `a·Z(t)`.
pub fn solve_lyaplock(
    mem: &AssociativeMemory,
    bk: &BacklogAccumulator,
    batch: &EditBatch,
    v_weight: f64,
    az: f64,
    policy: RidgePolicy,
) -> Result<SolveReport> {
    check_weight("v_weight", v_weight)?;
    check_weight("az", az)?;
    check_inputs(mem, bk, batch)?;
    let w = mem.weights();
    let sys = lyaplock_system(mem, bk, batch, v_weight, az);

    // residual form, so an already-satisfied step gives Δ = 0 exactly
    let mut m = batch.residual(w)? * batch.keys().transpose() * (-v_weight);
    if bk.absorbed() > 0 {
        m += (bk.vpkpt() - w * bk.kp_gram()) * v_weight;
    }
    m += (mem.v0k0t() - w * mem.k0_gram()) * az;

    let s = solve_right_spd(&sys.c, &m, sys.rhs.norm(), policy)?;
    Ok(SolveReport {
        delta: s.x,
        residual: s.residual,
        ridge_applied: s.ridge,
        condition_estimate: s.condition_estimate,
    })
}

/// Bi-objective baseline `Δ = (V1 − W·K1)·K1ᵀ·(K0K0ᵀ + K1K1ᵀ)⁻¹`.
///
/// Preservation is measured against the current weights' own outputs on the
/// preserved keys, so from `W(0)` this coincides with [`solve_lyaplock`] at
/// `v = az = 1` with an empty backlog, while later steps let the preservation
/// loss relative to `W(0)` accumulate.
pub fn solve_baseline(
    mem: &AssociativeMemory,
    batch: &EditBatch,
    policy: RidgePolicy,
) -> Result<SolveReport> {
    batch.check_dims(mem.dims(), "baseline solve")?;
    let w = mem.weights();
    let k1t = batch.keys().transpose();
    let mut c = batch.keys() * &k1t + mem.k0_gram();
    symmetrize(&mut c);
    let m = -(batch.residual(w)? * &k1t);
    let scale = (&m + w * &c).norm();
    let s = solve_right_spd(&c, &m, scale, policy)?;
    Ok(SolveReport {
        delta: s.x,
        residual: s.residual,
        ridge_applied: s.ridge,
        condition_estimate: s.condition_estimate,
    })
}

/// Minimum-Frobenius-norm `Δ` with `(W+Δ)·K1 = V1`: `Δ = R·(K1ᵀK1)⁻¹·K1ᵀ`
/// where `R = V1 − W·K1`.
pub fn solve_edit_only(
    mem: &AssociativeMemory,
    batch: &EditBatch,
    policy: RidgePolicy,
) -> Result<SolveReport> {
    batch.check_dims(mem.dims(), "edit-only solve")?;
    let r = -batch.residual(mem.weights())?;
    let mut h = batch.keys().transpose() * batch.keys();
    symmetrize(&mut h);
    let s = solve_right_spd(&h, &r, r.norm(), policy)?;
    Ok(SolveReport {
        delta: s.x * batch.keys().transpose(),
        residual: s.residual,
        ridge_applied: s.ridge,
        condition_estimate: s.condition_estimate,
    })
}

/// `v·(EL + BL) + az·PL` at `W + Δ`, from the Gram statistics.
pub fn objective(
    mem: &AssociativeMemory,
    bk: &BacklogAccumulator,
    batch: &EditBatch,
    v_weight: f64,
    az: f64,
    delta: &DMatrix<f64>,
) -> Result<f64> {
    let w = mem.weights() + delta;
    let el = batch.editing_loss(&w)?;
    let bl = bk.loss(&w)?;
    let pl = mem.preservation_loss(&w)?;
    Ok(v_weight * (el + bl) + az * pl)
}

/// Gradient of [`objective`] with respect to `Δ`: `2·(W+Δ)·C − 2·RHS`.
pub fn objective_gradient(
    mem: &AssociativeMemory,
    bk: &BacklogAccumulator,
    batch: &EditBatch,
    v_weight: f64,
    az: f64,
    delta: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_inputs(mem, bk, batch)?;
    ensure_dim("objective gradient", "Δ rows (d1)", mem.dims().d1, delta.nrows())?;
    ensure_dim("objective gradient", "Δ columns (d0)", mem.dims().d0, delta.ncols())?;
    let sys = lyaplock_system(mem, bk, batch, v_weight, az);
    Ok(((mem.weights() + delta) * &sys.c - &sys.rhs) * 2.0)
}

/// Relative normal-equation residual of an arbitrary `Δ`, from the Grams.
pub fn normal_equation_residual(
    mem: &AssociativeMemory,
    bk: &BacklogAccumulator,
    batch: &EditBatch,
    v_weight: f64,
    az: f64,
    delta: &DMatrix<f64>,
) -> Result<f64> {
    check_inputs(mem, bk, batch)?;
    let sys = lyaplock_system(mem, bk, batch, v_weight, az);
    let r = (mem.weights() + delta) * &sys.c - &sys.rhs;
    Ok(r.norm() / sys.rhs.norm().max(f64::MIN_POSITIVE))
}
