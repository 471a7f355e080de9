//! Associative-memory state and the three loss functionals.
//!
//! Preserved knowledge is kept only as Gram statistics (`K0·K0ᵀ`, `V0·K0ᵀ`,
//! `tr(V0·V0ᵀ)`), so memory use is `O(d0²)` regardless of how many preserved
//! keys were collected. Losses over preserved and previously edited pairs are
//! evaluated from those statistics; the per-batch editing loss uses the
//! explicit (small) batch matrices.

use nalgebra::DMatrix;

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::linalg::{frob_dot, gram, smallest_eigenvalue, symmetrize};

/// Relative floor below which a Gram-form loss is treated as corrupted rather
/// than as cancellation noise: raw values must satisfy `raw ≥ −GUARD·(1 + trace)`.
pub const CANCELLATION_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// Input dimension (columns of `W`).
    pub d0: usize,
    /// Output dimension (rows of `W`).
    pub d1: usize,
}

impl Dims {
    pub fn new(d0: usize, d1: usize) -> Result<Self> {
        if d0 == 0 {
            return Err(Error::InvalidParameter {
                name: "dims.d0",
                reason: "must be at least 1".into(),
            });
        }
        if d1 == 0 {
            return Err(Error::InvalidParameter {
                name: "dims.d1",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Dims { d0, d1 })
    }

    fn check_weights(&self, w: &DMatrix<f64>, context: &'static str) -> Result<()> {
        ensure_dim(context, "weight rows (d1)", self.d1, w.nrows())?;
        ensure_dim(context, "weight columns (d0)", self.d0, w.ncols())
    }
}

fn guarded(loss: &'static str, raw: f64, trace: f64) -> Result<f64> {
    let floor = -CANCELLATION_GUARD * (1.0 + trace);
    if !raw.is_finite() {
        return Err(Error::NonFinite(loss));
    }
    if raw < floor {
        return Err(Error::NumericalInstability { loss, raw, floor });
    }
    Ok(raw.max(0.0))
}

/// The editable weights `W(t)` plus Gram statistics of the preserved set.
#[derive(Debug, Clone)]
pub struct AssociativeMemory {
    w: DMatrix<f64>,
    w0: DMatrix<f64>,
    k0_gram: DMatrix<f64>,
    v0k0t: DMatrix<f64>,
    tr_v0v0: f64,
    dims: Dims,
    // W(0)·K0K0ᵀ − V0K0ᵀ; exactly zero under the V0 = W(0)·K0 convention
    w0_cross: DMatrix<f64>,
    // ‖W(0)·K0 − V0‖², computed once from explicit matrices
    pl_w0: f64,
}

impl AssociativeMemory {
    /// Builds the memory under the `V0 = W(0)·K0` convention. The raw keys are
    /// not retained.
    pub fn new(w0: DMatrix<f64>, k0: &DMatrix<f64>) -> Result<Self> {
        let dims = Dims::new(w0.ncols(), w0.nrows())?;
        Self::check_keys(&dims, k0)?;
        ensure_finite(&w0, "W(0)")?;
        ensure_finite(k0, "K0")?;

        let k0_gram = gram(k0);
        let v0k0t = &w0 * &k0_gram;
        let tr_v0v0 = frob_dot(&v0k0t, &w0);
        Ok(AssociativeMemory {
            w: w0.clone(),
            w0_cross: DMatrix::zeros(dims.d1, dims.d0),
            w0,
            k0_gram,
            v0k0t,
            tr_v0v0,
            dims,
            pl_w0: 0.0,
        })
    }

    /// Builds the memory from an explicitly supplied `V0`, which need not equal
    /// `W(0)·K0`; the preservation loss of `W(0)` is then generally nonzero.
    pub fn with_values(w0: DMatrix<f64>, k0: &DMatrix<f64>, v0: &DMatrix<f64>) -> Result<Self> {
        let dims = Dims::new(w0.ncols(), w0.nrows())?;
        Self::check_keys(&dims, k0)?;
        ensure_dim("preserved values", "V0 rows (d1)", dims.d1, v0.nrows())?;
        ensure_dim("preserved values", "V0 columns (m0)", k0.ncols(), v0.ncols())?;
        ensure_finite(&w0, "W(0)")?;
        ensure_finite(k0, "K0")?;
        ensure_finite(v0, "V0")?;

        let k0_gram = gram(k0);
        let v0k0t = v0 * k0.transpose();
        let tr_v0v0 = v0.norm_squared();
        let w0_cross = &w0 * &k0_gram - &v0k0t;
        let pl_w0 = (&w0 * k0 - v0).norm_squared();
        Ok(AssociativeMemory {
            w: w0.clone(),
            w0,
            k0_gram,
            v0k0t,
            tr_v0v0,
            dims,
            w0_cross,
            pl_w0,
        })
    }

    fn check_keys(dims: &Dims, k0: &DMatrix<f64>) -> Result<()> {
        ensure_dim("preserved keys", "K0 rows (d0)", dims.d0, k0.nrows())?;
        if k0.ncols() == 0 {
            return Err(Error::InvalidParameter {
                name: "m0",
                reason: "preserved key set must have at least one column".into(),
            });
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Current weights `W(t)`.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Frozen original weights `W(0)`.
    pub fn original_weights(&self) -> &DMatrix<f64> {
        &self.w0
    }

    pub fn k0_gram(&self) -> &DMatrix<f64> {
        &self.k0_gram
    }

    pub fn v0k0t(&self) -> &DMatrix<f64> {
        &self.v0k0t
    }

    pub fn tr_v0v0(&self) -> f64 {
        self.tr_v0v0
    }

    /// `W(t) = W(t−1) + Δ(t)`.
    pub fn apply_delta(&mut self, delta: &DMatrix<f64>) -> Result<()> {
        self.dims.check_weights(delta, "weight update")?;
        ensure_finite(delta, "Δ")?;
        self.w += delta;
        Ok(())
    }

    /// Restores `W` to `W(0)`.
    pub fn reset(&mut self) {
        self.w.copy_from(&self.w0);
    }

    /// `‖W·K0 − V0‖_F²` from the Gram statistics.
    ///
    /// Expanded around `W(0)` with `E = W − W(0)`:
    /// `tr(E·G·Eᵀ) + 2·tr(E·(W(0)·G − V0K0ᵀ)ᵀ) + PL(W(0))`, which equals
    /// `tr(W·G·Wᵀ) − 2·tr(W·(V0K0ᵀ)ᵀ) + tr(V0V0ᵀ)` but does not cancel the large
    /// `tr(V0V0ᵀ)` term against itself.
    pub fn preservation_loss(&self, w: &DMatrix<f64>) -> Result<f64> {
        self.dims.check_weights(w, "preservation loss")?;
        ensure_finite(w, "W")?;
        let e = w - &self.w0;
        let raw = frob_dot(&(&e * &self.k0_gram), &e) + 2.0 * frob_dot(&e, &self.w0_cross) + self.pl_w0;
        guarded("preservation loss", raw, self.tr_v0v0)
    }

    /// Symmetry and positive semidefiniteness of `K0·K0ᵀ`.
    pub fn check_invariants(&self) -> Result<()> {
        check_gram(&self.k0_gram, "K0·K0ᵀ")
    }
}

pub(crate) fn check_gram(g: &DMatrix<f64>, what: &'static str) -> Result<()> {
    let n = g.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (g[(i, j)] - g[(j, i)]).abs() > 1e-12 {
                return Err(Error::InvalidParameter {
                    name: what,
                    reason: format!("asymmetric at ({i}, {j})"),
                });
            }
        }
    }
    let lam = smallest_eigenvalue(g);
    if lam < -1e-9 * g.norm() {
        return Err(Error::InvalidParameter {
            name: what,
            reason: format!("not positive semidefinite (smallest eigenvalue {lam:e})"),
        });
    }
    Ok(())
}

/// One timestamp's edit targets: keys `K1(t)` (d0 × n) and values `V1(t)` (d1 × n).
#[derive(Debug, Clone, PartialEq)]
pub struct EditBatch {
    k1: DMatrix<f64>,
    v1: DMatrix<f64>,
}

impl EditBatch {
    pub fn new(k1: DMatrix<f64>, v1: DMatrix<f64>) -> Result<Self> {
        if k1.ncols() == 0 {
            return Err(Error::InvalidParameter {
                name: "batch size",
                reason: "a batch needs at least one key".into(),
            });
        }
        ensure_dim("edit batch", "V1 columns (n)", k1.ncols(), v1.ncols())?;
        ensure_finite(&k1, "K1")?;
        ensure_finite(&v1, "V1")?;
        Ok(EditBatch { k1, v1 })
    }

    pub fn keys(&self) -> &DMatrix<f64> {
        &self.k1
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.v1
    }

    pub fn len(&self) -> usize {
        self.k1.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.k1, self.v1)
    }

    pub(crate) fn check_dims(&self, dims: Dims, context: &'static str) -> Result<()> {
        ensure_dim(context, "K1 rows (d0)", dims.d0, self.k1.nrows())?;
        ensure_dim(context, "V1 rows (d1)", dims.d1, self.v1.nrows())
    }

    /// `W·K1 − V1`.
    pub fn residual(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim("editing loss", "weight columns (d0)", self.k1.nrows(), w.ncols())?;
        ensure_dim("editing loss", "weight rows (d1)", self.v1.nrows(), w.nrows())?;
        Ok(w * &self.k1 - &self.v1)
    }

    /// `‖W·K1 − V1‖_F²`, computed explicitly.
    pub fn editing_loss(&self, w: &DMatrix<f64>) -> Result<f64> {
        Ok(self.residual(w)?.norm_squared())
    }
}

/// Gram statistics of every batch absorbed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct BacklogAccumulator {
    kp_gram: DMatrix<f64>,
    vpkpt: DMatrix<f64>,
    tr_vpvp: f64,
    absorbed: usize,
    dims: Dims,
}

impl BacklogAccumulator {
    pub fn new(dims: Dims) -> Self {
        BacklogAccumulator {
            kp_gram: DMatrix::zeros(dims.d0, dims.d0),
            vpkpt: DMatrix::zeros(dims.d1, dims.d0),
            tr_vpvp: 0.0,
            absorbed: 0,
            dims,
        }
    }

    pub fn kp_gram(&self) -> &DMatrix<f64> {
        &self.kp_gram
    }

    pub fn vpkpt(&self) -> &DMatrix<f64> {
        &self.vpkpt
    }

    pub fn tr_vpvp(&self) -> f64 {
        self.tr_vpvp
    }

    pub fn absorbed(&self) -> usize {
        self.absorbed
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn absorb(&mut self, batch: &EditBatch) -> Result<()> {
        batch.check_dims(self.dims, "backlog absorb")?;
        let k1t = batch.keys().transpose();
        self.kp_gram += batch.keys() * &k1t;
        symmetrize(&mut self.kp_gram);
        self.vpkpt += batch.values() * &k1t;
        self.tr_vpvp += batch.values().norm_squared();
        self.absorbed += 1;
        Ok(())
    }

    /// `‖W·Kp − Vp‖_F²` from the Gram statistics; exactly 0 before any batch
    /// has been absorbed.
    pub fn loss(&self, w: &DMatrix<f64>) -> Result<f64> {
        self.dims.check_weights(w, "backlog loss")?;
        if self.absorbed == 0 {
            return Ok(0.0);
        }
        ensure_finite(w, "W")?;
        let raw = frob_dot(&(w * &self.kp_gram), w) - 2.0 * frob_dot(w, &self.vpkpt) + self.tr_vpvp;
        guarded("backlog loss", raw, self.tr_vpvp)
    }

    pub fn check_invariants(&self) -> Result<()> {
        check_gram(&self.kp_gram, "Kp·Kpᵀ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn zero_weights_give_zero_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k0 = randn(&mut rng, 2, 5);
        let mem = AssociativeMemory::new(DMatrix::zeros(2, 2), &k0).unwrap();
        assert_eq!(mem.v0k0t().norm(), 0.0);
        assert_eq!(mem.tr_v0v0(), 0.0);
        assert_eq!(mem.preservation_loss(mem.original_weights()).unwrap(), 0.0);
    }

    #[test]
    fn identity_case() {
        let mem = AssociativeMemory::new(DMatrix::identity(2, 2), &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(mem.k0_gram(), &DMatrix::identity(2, 2));
        assert_eq!(mem.v0k0t(), &DMatrix::identity(2, 2));
        assert_eq!(mem.tr_v0v0(), 2.0);
    }

    #[test]
    fn trace_matches_explicit_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w0 = randn(&mut rng, 4, 3);
        let k0 = randn(&mut rng, 3, 64);
        let mem = AssociativeMemory::new(w0.clone(), &k0).unwrap();
        let explicit = (&w0 * &k0).norm_squared();
        assert!(rel(mem.tr_v0v0(), explicit) < 1e-10);
        mem.check_invariants().unwrap();
    }

    #[test]
    fn key_rows_must_match_d0() {
        let err = AssociativeMemory::new(DMatrix::zeros(2, 3), &DMatrix::zeros(4, 5)).unwrap_err();
        match err {
            Error::DimensionMismatch { axis, expected, found, .. } => {
                assert!(axis.contains("d0"));
                assert_eq!((expected, found), (3, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut k0 = DMatrix::identity(2, 2);
        k0[(0, 1)] = f64::NAN;
        assert!(matches!(
            AssociativeMemory::new(DMatrix::identity(2, 2), &k0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn explicit_values_consistent_with_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w0 = randn(&mut rng, 3, 4);
        let k0 = randn(&mut rng, 4, 20);
        let a = AssociativeMemory::new(w0.clone(), &k0).unwrap();
        let b = AssociativeMemory::with_values(w0.clone(), &k0, &(&w0 * &k0)).unwrap();
        assert!((a.v0k0t() - b.v0k0t()).norm() <= 1e-12 * a.v0k0t().norm());
        assert!(rel(a.tr_v0v0(), b.tr_v0v0()) < 1e-12);
        let w = randn(&mut rng, 3, 4);
        assert!(rel(a.preservation_loss(&w).unwrap(), b.preservation_loss(&w).unwrap()) < 1e-10);
    }

    #[test]
    fn explicit_values_nonzero_loss_at_origin() {
        // W·K0 = 0, so PL(W(0)) = ‖V0‖²
        let unit = AssociativeMemory::with_values(
            DMatrix::zeros(2, 2),
            &DMatrix::identity(2, 2),
            &DMatrix::identity(2, 2),
        )
        .unwrap();
        assert_eq!(unit.preservation_loss(unit.original_weights()).unwrap(), 2.0);
        let ones = AssociativeMemory::with_values(
            DMatrix::zeros(2, 2),
            &DMatrix::identity(2, 2),
            &DMatrix::from_element(2, 2, 1.0),
        )
        .unwrap();
        assert_eq!(ones.preservation_loss(ones.original_weights()).unwrap(), 4.0);
    }

    #[test]
    fn explicit_values_random_matches_explicit_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w0 = randn(&mut rng, 5, 6);
        let k0 = randn(&mut rng, 6, 40);
        let v0 = randn(&mut rng, 5, 40);
        let mem = AssociativeMemory::with_values(w0.clone(), &k0, &v0).unwrap();
        let w = randn(&mut rng, 5, 6);
        let explicit = (&w * &k0 - &v0).norm_squared();
        assert!(rel(mem.preservation_loss(&w).unwrap(), explicit) < 1e-8);
    }

    #[test]
    fn scalar_preservation_loss() {
        let mem = AssociativeMemory::new(DMatrix::zeros(1, 1), &DMatrix::identity(1, 1)).unwrap();
        let pl = mem.preservation_loss(&DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert_eq!(pl, 4.0);
    }

    #[test]
    fn preservation_loss_random_matches_explicit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w0 = randn(&mut rng, 6, 8);
        let k0 = randn(&mut rng, 8, 128);
        let mem = AssociativeMemory::new(w0.clone(), &k0).unwrap();
        let w = randn(&mut rng, 6, 8);
        let explicit = (&w * &k0 - &w0 * &k0).norm_squared();
        assert!(rel(mem.preservation_loss(&w).unwrap(), explicit) < 1e-8);
        assert!(mem.preservation_loss(&w0).unwrap() <= 1e-9 * mem.tr_v0v0());
    }

    #[test]
    fn corrupted_state_trips_guard() {
        let mut mem = AssociativeMemory::new(DMatrix::zeros(1, 1), &DMatrix::identity(1, 1)).unwrap();
        mem.pl_w0 = -10.0;
        let err = mem.preservation_loss(&DMatrix::zeros(1, 1)).unwrap_err();
        assert!(matches!(err, Error::NumericalInstability { .. }));
        assert!(err.to_string().contains("explicit"));
    }

    #[test]
    fn editing_loss_cases() {
        let b = EditBatch::new(DMatrix::identity(1, 1), DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert_eq!(b.editing_loss(&DMatrix::zeros(1, 1)).unwrap(), 4.0);
        assert_eq!(b.editing_loss(&DMatrix::from_element(1, 1, 2.0)).unwrap(), 0.0);
    }

    #[test]
    fn editing_loss_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = randn(&mut rng, 4, 3);
        let k1 = randn(&mut rng, 3, 5);
        let v1 = randn(&mut rng, 4, 5);
        let b = EditBatch::new(k1.clone(), v1.clone()).unwrap();
        let mut naive = 0.0;
        for col in 0..5 {
            for row in 0..4 {
                let mut pred = 0.0;
                for j in 0..3 {
                    pred += w[(row, j)] * k1[(j, col)];
                }
                naive += (pred - v1[(row, col)]).powi(2);
            }
        }
        assert!(rel(b.editing_loss(&w).unwrap(), naive) < 1e-12);
    }

    #[test]
    fn editing_loss_dimension_mismatch() {
        let b = EditBatch::new(DMatrix::zeros(3, 2), DMatrix::zeros(4, 2)).unwrap();
        assert!(matches!(
            b.editing_loss(&DMatrix::zeros(4, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn batch_requires_matching_columns() {
        assert!(EditBatch::new(DMatrix::zeros(3, 2), DMatrix::zeros(4, 3)).is_err());
        assert!(EditBatch::new(DMatrix::zeros(3, 0), DMatrix::zeros(4, 0)).is_err());
    }

    #[test]
    fn empty_backlog_is_zero() {
        let bk = BacklogAccumulator::new(Dims::new(3, 2).unwrap());
        assert_eq!(bk.loss(&DMatrix::from_element(2, 3, 7.0)).unwrap(), 0.0);
        assert_eq!(bk.kp_gram().norm(), 0.0);
        assert_eq!(bk.tr_vpvp(), 0.0);
    }

    #[test]
    fn absorbing_zero_batch_only_counts() {
        let mut bk = BacklogAccumulator::new(Dims::new(3, 2).unwrap());
        bk.absorb(&EditBatch::new(DMatrix::zeros(3, 4), DMatrix::zeros(2, 4)).unwrap())
            .unwrap();
        assert_eq!(bk.absorbed(), 1);
        assert_eq!(bk.kp_gram().norm(), 0.0);
        assert_eq!(bk.vpkpt().norm(), 0.0);
    }

    #[test]
    fn satisfied_backlog_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = randn(&mut rng, 3, 4);
        let k1 = randn(&mut rng, 4, 2);
        let v1 = &w * &k1;
        let mut bk = BacklogAccumulator::new(Dims::new(4, 3).unwrap());
        bk.absorb(&EditBatch::new(k1, v1).unwrap()).unwrap();
        assert!(bk.loss(&w).unwrap() <= 1e-9 * bk.tr_vpvp());
    }

    #[test]
    fn single_batch_backlog_equals_editing_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = EditBatch::new(randn(&mut rng, 4, 3), randn(&mut rng, 5, 3)).unwrap();
        let mut bk = BacklogAccumulator::new(Dims::new(4, 5).unwrap());
        bk.absorb(&b).unwrap();
        let w = randn(&mut rng, 5, 4);
        assert!(rel(bk.loss(&w).unwrap(), b.editing_loss(&w).unwrap()) < 1e-10);
    }

    #[test]
    fn two_batches_match_concatenation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (k1, v1) = (randn(&mut rng, 4, 3), randn(&mut rng, 2, 3));
        let (k2, v2) = (randn(&mut rng, 4, 5), randn(&mut rng, 2, 5));
        let mut bk = BacklogAccumulator::new(Dims::new(4, 2).unwrap());
        bk.absorb(&EditBatch::new(k1.clone(), v1.clone()).unwrap()).unwrap();
        bk.absorb(&EditBatch::new(k2.clone(), v2.clone()).unwrap()).unwrap();
        let kp = DMatrix::from_fn(4, 8, |i, j| if j < 3 { k1[(i, j)] } else { k2[(i, j - 3)] });
        let vp = DMatrix::from_fn(2, 8, |i, j| if j < 3 { v1[(i, j)] } else { v2[(i, j - 3)] });
        let w = randn(&mut rng, 2, 4);
        assert!(rel(bk.loss(&w).unwrap(), (&w * &kp - &vp).norm_squared()) < 1e-8);
        assert!((bk.kp_gram() - &kp * kp.transpose()).norm() <= 1e-10 * bk.kp_gram().norm());
        bk.check_invariants().unwrap();
    }

    #[test]
    fn absorb_order_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let b1 = EditBatch::new(randn(&mut rng, 4, 3), randn(&mut rng, 2, 3)).unwrap();
        let b2 = EditBatch::new(randn(&mut rng, 4, 2), randn(&mut rng, 2, 2)).unwrap();
        let dims = Dims::new(4, 2).unwrap();
        let mut x = BacklogAccumulator::new(dims);
        x.absorb(&b1).unwrap();
        x.absorb(&b2).unwrap();
        let mut y = BacklogAccumulator::new(dims);
        y.absorb(&b2).unwrap();
        y.absorb(&b1).unwrap();
        assert!((x.kp_gram() - y.kp_gram()).norm() <= 1e-12 * x.kp_gram().norm());
        assert!((x.vpkpt() - y.vpkpt()).norm() <= 1e-12 * x.vpkpt().norm());
        assert!(rel(x.tr_vpvp(), y.tr_vpvp()) <= 1e-12);
    }

    #[test]
    fn absorb_rejects_wrong_dims() {
        let mut bk = BacklogAccumulator::new(Dims::new(4, 2).unwrap());
        let b = EditBatch::new(DMatrix::zeros(3, 1), DMatrix::zeros(2, 1)).unwrap();
        assert!(matches!(bk.absorb(&b), Err(Error::DimensionMismatch { .. })));
    }
}
