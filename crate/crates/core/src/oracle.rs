//! Independent verifiers.
//!
//! Everything here works on explicit key/value matrices (never the Gram
//! statistics the main path keeps), so arithmetic slips in the Gram route show
//! up as disagreements rather than being reproduced.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::controller::{derive_params, QueueParams};
use crate::editors::{objective_gradient, solve_baseline, solve_lyaplock, EditorKind};
use crate::error::{Error, Result};
use crate::harness::{run, RunConfig, RunOutcome};
use crate::kvmx::{decode_matrix, encode_matrix};
use crate::linalg::RidgePolicy;
use crate::memory::{AssociativeMemory, BacklogAccumulator, Dims, EditBatch};
use crate::stream::{StreamSource, StreamSpec};

/// One editing step with every matrix kept explicitly.
#[derive(Debug, Clone)]
pub struct RawProblem {
    pub w0: DMatrix<f64>,
    /// Current weights `W(t−1)`.
    pub w: DMatrix<f64>,
    pub k0: DMatrix<f64>,
    pub v0: DMatrix<f64>,
    /// Concatenated previously edited keys (may have zero columns).
    pub kp: DMatrix<f64>,
    pub vp: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub v1: DMatrix<f64>,
}

fn randn(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

impl RawProblem {
    /// Random instance under the `V0 = W(0)·K0` convention, with `W` displaced
    /// from `W(0)` and `past` columns of backlog.
    pub fn random(rng: &mut impl Rng, d0: usize, d1: usize, n: usize, m0: usize, past: usize) -> Self {
        let w0 = randn(rng, d1, d0);
        let k0 = randn(rng, d0, m0);
        let v0 = &w0 * &k0;
        let w = &w0 + randn(rng, d1, d0) * 0.5;
        RawProblem {
            w0,
            w,
            k0,
            v0,
            kp: randn(rng, d0, past),
            vp: randn(rng, d1, past),
            k1: randn(rng, d0, n),
            v1: randn(rng, d1, n),
        }
    }

    /// The Gram-form state the main path operates on.
    pub fn to_gram(&self) -> Result<(AssociativeMemory, BacklogAccumulator, EditBatch)> {
        let mut mem = AssociativeMemory::with_values(self.w0.clone(), &self.k0, &self.v0)?;
        mem.apply_delta(&(&self.w - &self.w0))?;
        let mut bk = BacklogAccumulator::new(mem.dims());
        if self.kp.ncols() > 0 {
            bk.absorb(&EditBatch::new(self.kp.clone(), self.vp.clone())?)?;
        }
        let batch = EditBatch::new(self.k1.clone(), self.v1.clone())?;
        Ok((mem, bk, batch))
    }

    fn residuals(&self, delta: &DMatrix<f64>) -> [DMatrix<f64>; 3] {
        let w = &self.w + delta;
        [&w * &self.k1 - &self.v1, &w * &self.kp - &self.vp, &w * &self.k0 - &self.v0]
    }

    /// `v·(‖(W+Δ)K1 − V1‖² + ‖(W+Δ)Kp − Vp‖²) + az·‖(W+Δ)K0 − V0‖²`.
    pub fn objective(&self, v_weight: f64, az: f64, delta: &DMatrix<f64>) -> f64 {
        let [e, b, p] = self.residuals(delta);
        v_weight * (e.norm_squared() + b.norm_squared()) + az * p.norm_squared()
    }

    pub fn preservation_loss(&self, delta: &DMatrix<f64>) -> f64 {
        ((&self.w + delta) * &self.k0 - &self.v0).norm_squared()
    }

    pub fn gradient(&self, v_weight: f64, az: f64, delta: &DMatrix<f64>) -> DMatrix<f64> {
        let [e, b, p] = self.residuals(delta);
        (e * self.k1.transpose() * v_weight + b * self.kp.transpose() * v_weight + p * self.k0.transpose() * az) * 2.0
    }
}

/// `‖(W+Δ)·C − RHS‖_F / max(‖RHS‖_F, ε)` with `C` and `RHS` formed from the raw
/// matrices.
pub fn verify_normal_equations(p: &RawProblem, v_weight: f64, az: f64, delta: &DMatrix<f64>) -> f64 {
    let c = (&p.k1 * p.k1.transpose() + &p.kp * p.kp.transpose()) * v_weight + &p.k0 * p.k0.transpose() * az;
    let rhs = (&p.v1 * p.k1.transpose() + &p.vp * p.kp.transpose()) * v_weight + &p.v0 * p.k0.transpose() * az;
    let r = (&p.w + delta) * c - &rhs;
    r.norm() / rhs.norm().max(f64::EPSILON)
}

/// Central finite-difference gradient of [`RawProblem::objective`].
pub fn finite_difference_gradient(
    p: &RawProblem,
    v_weight: f64,
    az: f64,
    delta: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(delta.nrows(), delta.ncols());
    let mut probe = delta.clone();
    for i in 0..delta.nrows() {
        for j in 0..delta.ncols() {
            let x = probe[(i, j)];
            probe[(i, j)] = x + h;
            let up = p.objective(v_weight, az, &probe);
            probe[(i, j)] = x - h;
            let down = p.objective(v_weight, az, &probe);
            probe[(i, j)] = x;
            g[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    g
}

/// Gradient descent with Armijo backtracking on the explicit objective.
///
/// `rate` is the first trial step; it doubles after every accepted step and
/// halves while the sufficient-decrease test fails. Stops early once no
/// step size decreases the objective.
pub fn minimize_iteratively(
    p: &RawProblem,
    v_weight: f64,
    az: f64,
    steps: usize,
    rate: f64,
    start: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, f64)> {
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            reason: "must be at least 1".into(),
        });
    }
    let mut delta = start.cloned().unwrap_or_else(|| DMatrix::zeros(p.w.nrows(), p.w.ncols()));
    let mut f = p.objective(v_weight, az, &delta);
    let f_start = f;
    let mut step = rate;
    'outer: for _ in 0..steps {
        let g = p.gradient(v_weight, az, &delta);
        let gg = g.norm_squared();
        if gg == 0.0 {
            break;
        }
        for _ in 0..80 {
            let cand = &delta - &g * step;
            let fc = p.objective(v_weight, az, &cand);
            if !fc.is_finite() {
                return Err(Error::Oracle(format!("objective became non-finite at step {step:e}")));
            }
            if fc <= f - 1e-4 * step * gg {
                delta = cand;
                f = fc;
                step *= 2.0;
                continue 'outer;
            }
            step *= 0.5;
        }
        break;
    }
    if f.is_nan() || f > f_start {
        return Err(Error::Oracle("descent increased the objective".into()));
    }
    Ok((delta, f))
}

/// `(max(a+b−c, z_max)², a² + b² + c² + 2a(b−c) + z_max²)`.
pub fn inequality_sides(a: f64, b: f64, c: f64, z_max: f64) -> (f64, f64) {
    let lhs = (a + b - c).max(z_max).powi(2);
    let rhs = a * a + b * b + c * c + 2.0 * a * (b - c) + z_max * z_max;
    (lhs, rhs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzReport {
    pub samples: usize,
    pub violations: usize,
    pub first_counterexample: Option<[f64; 4]>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Evaluates the squared-max inequality on `samples` uniform draws from
/// `[0, bound]⁴`, with absolute slack `1e-9`.
pub fn check_inequality_fuzz(samples: usize, seed: u64, bound: f64) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FuzzReport {
        samples,
        violations: 0,
        first_counterexample: None,
    };
    for _ in 0..samples {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..=bound));
        let (lhs, rhs) = inequality_sides(q[0], q[1], q[2], q[3]);
        if lhs > rhs + 1e-9 {
            report.violations += 1;
            report.first_counterexample.get_or_insert(q);
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficiencyReport {
    pub horizon: usize,
    /// `Z(T+1)`.
    pub z_final: f64,
    /// `Z(1) + a·ΣPL − a·T·D + T·b`.
    pub telescoped: f64,
    pub telescoping_holds: bool,
    /// `D − b/a + (Z(T+1) − Z(1))/(a·T)`.
    pub implied_bound: f64,
    pub measured_avg_pl: f64,
    pub measured_within_bound: bool,
}

impl SufficiencyReport {
    pub fn passed(&self) -> bool {
        self.telescoping_holds && self.measured_within_bound
    }
}

/// Checks the summed queue inequality and the average-loss bound it implies.
///
/// `z_history` holds `Z(1), …, Z(T+1)` and `pl_history` `PL(1), …, PL(T)`.
pub fn check_sufficiency(pl_history: &[f64], z_history: &[f64], params: &QueueParams) -> Result<SufficiencyReport> {
    let t = pl_history.len();
    if t == 0 {
        return Err(Error::Empty("loss history"));
    }
    if z_history.len() != t + 1 {
        return Err(Error::DimensionMismatch {
            context: "sufficiency check",
            axis: "queue history length",
            expected: t + 1,
            found: z_history.len(),
        });
    }
    let tf = t as f64;
    let (a, b, d) = (params.a, params.b, params.d_threshold);
    let sum_pl: f64 = pl_history.iter().sum();
    let z1 = z_history[0];
    let z_final = z_history[t];
    let telescoped = z1 + a * sum_pl - a * tf * d + tf * b;
    let tol = 1e-10 * z_final.abs().max(telescoped.abs()).max(1.0);
    let implied_bound = d - b / a + (z_final - z1) / (a * tf);
    let measured_avg_pl = sum_pl / tf;
    Ok(SufficiencyReport {
        horizon: t,
        z_final,
        telescoped,
        telescoping_holds: z_final >= telescoped - tol,
        implied_bound,
        measured_avg_pl,
        measured_within_bound: measured_avg_pl <= implied_bound + 1e-10 * implied_bound.abs().max(d),
    })
}

pub fn check_sufficiency_empirical(outcome: &RunOutcome) -> Result<SufficiencyReport> {
    check_sufficiency(&outcome.pl_history, &outcome.z_history, &outcome.params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> CheckOutcome {
    match r {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn random_dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize, usize, usize) {
    let d0 = rng.random_range(1..=8);
    let d1 = rng.random_range(1..=6);
    let n = rng.random_range(1..=4);
    let m0 = rng.random_range(d0..=64);
    let past = rng.random_range(0..=8);
    (d0, d1, n, m0, past)
}

/// Runs every oracle check once; used by the `verify` command.
pub fn run_verify_suite(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    out.push(outcome("normal-equations", (|| {
        let mut worst: f64 = 0.0;
        let mut min_perturbed = f64::INFINITY;
        for _ in 0..100 {
            let (d0, d1, n, m0, past) = random_dims(&mut rng);
            let p = RawProblem::random(&mut rng, d0, d1, n, m0, past);
            let az = rng.random_range(0.1..10.0);
            let (mem, bk, batch) = p.to_gram()?;
            let s = solve_lyaplock(&mem, &bk, &batch, 1.0, az, RidgePolicy::default())?;
            worst = worst.max(verify_normal_equations(&p, 1.0, az, &s.delta));
            let e = randn(&mut rng, d1, d0);
            let scale = 1e-2 * s.delta.norm().max(p.w.norm()) / e.norm();
            min_perturbed = min_perturbed.min(verify_normal_equations(&p, 1.0, az, &(&s.delta + e * scale)));
        }
        Ok((
            worst <= 1e-8 && min_perturbed > 1e-4,
            format!("max residual {worst:.3e}, min perturbed residual {min_perturbed:.3e}"),
        ))
    })()));

    out.push(outcome("iterative-optimality", (|| {
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..30 {
            let (d0, d1, n, m0, past) = random_dims(&mut rng);
            let p = RawProblem::random(&mut rng, d0, d1, n, m0, past);
            let az = rng.random_range(0.1..10.0);
            let (mem, bk, batch) = p.to_gram()?;
            let s = solve_lyaplock(&mem, &bk, &batch, 1.0, az, RidgePolicy::default())?;
            let closed = p.objective(1.0, az, &s.delta);
            let (_, iter) = minimize_iteratively(&p, 1.0, az, 2000, 1e-3, None)?;
            worst = worst.max((closed - iter) / iter.abs().max(f64::MIN_POSITIVE));
        }
        Ok((worst <= 1e-6, format!("max (closed − iterative)/iterative {worst:.3e}")))
    })()));

    out.push(outcome("gradient", (|| {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let p = RawProblem::random(&mut rng, 3, 4, 2, 12, 3);
            let az = rng.random_range(0.1..5.0);
            let v = rng.random_range(0.1..5.0);
            let delta = randn(&mut rng, 4, 3);
            let (mem, bk, batch) = p.to_gram()?;
            let analytic = objective_gradient(&mem, &bk, &batch, v, az, &delta)?;
            let fd = finite_difference_gradient(&p, v, az, &delta, 1e-5);
            worst = worst.max((analytic - &fd).norm() / fd.norm());
        }
        Ok((worst <= 1e-5, format!("max relative error {worst:.3e}")))
    })()));

    out.push(outcome("baseline-equivalence", (|| {
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let (d0, d1, n, m0, _) = random_dims(&mut rng);
            let mut p = RawProblem::random(&mut rng, d0, d1, n, m0, 0);
            p.w = p.w0.clone();
            let (mem, bk, batch) = p.to_gram()?;
            let a = solve_baseline(&mem, &batch, RidgePolicy::default())?;
            let b = solve_lyaplock(&mem, &bk, &batch, 1.0, 1.0, RidgePolicy::default())?;
            worst = worst.max((&a.delta - &b.delta).norm() / b.delta.norm().max(f64::MIN_POSITIVE));
        }
        Ok((worst <= 1e-10, format!("max relative difference {worst:.3e}")))
    })()));

    out.push(outcome("squared-max-inequality", {
        let r = check_inequality_fuzz(100_000, seed, 10.0);
        Ok((r.passed(), format!("{} samples, {} violations", r.samples, r.violations)))
    }));

    out.push(outcome("schedule", (|| {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let alpha = rng.random_range(0.1..200.0);
            let d_base = rng.random_range(1e-3..1e3);
            let q = derive_params(alpha, d_base)?;
            let d = alpha * d_base;
            for (got, want) in [(q.d_threshold, d), (q.a, 1.0 / d.sqrt()), (q.z_init, d.sqrt()), (q.z_max, d.sqrt()), (q.v_weight, 1.0), (q.a * q.z_init, 1.0)] {
                worst = worst.max((got - want).abs() / want);
            }
            worst = worst.max(q.b.abs());
        }
        Ok((worst <= 1e-12, format!("max relative error {worst:.3e}")))
    })()));

    out.push(outcome("kvmx-round-trip", {
        let mut bad = 0;
        for _ in 0..200 {
            let r = rng.random_range(0..8);
            let c = rng.random_range(0..8);
            let m = DMatrix::from_fn(r, c, |_, _| f64::from_bits(rng.random::<u64>() & !(0x7ffu64 << 52) | (rng.random_range(1u64..0x7ff) << 52)));
            let mut buf = Vec::new();
            encode_matrix(&m, &mut buf);
            match decode_matrix(&buf) {
                Ok(back) if back.shape() == m.shape() && back.iter().zip(m.iter()).all(|(x, y)| x.to_bits() == y.to_bits()) => {}
                _ => bad += 1,
            }
        }
        Ok((bad == 0, format!("200 round trips, {bad} mismatches")))
    }));

    out.push(outcome("queue-telescoping", (|| {
        let spec = StreamSpec::new(Dims::new(16, 12)?, 4, 300, seed);
        let mut all = true;
        let mut details = Vec::new();
        for editor in [EditorKind::Lyaplock, EditorKind::Baseline] {
            let cfg = RunConfig::new(StreamSource::Synthetic(spec.clone()), editor, 60.0);
            let o = run(&cfg)?;
            let r = check_sufficiency_empirical(&o)?;
            let ok = r.passed() && o.summary.status.is_completed();
            all &= ok;
            details.push(format!(
                "{editor}: avg PL {:.4e} <= implied {:.4e}",
                r.measured_avg_pl, r.implied_bound
            ));
        }
        Ok((all, details.join("; ")))
    })()));

    out
}
