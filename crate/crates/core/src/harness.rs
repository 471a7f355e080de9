//! End-to-end sequential editing runs, editor comparisons and α sweeps.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::controller::{derive_params, stability_ratio, QueueParams, QueueState};
use crate::editors::{solve_baseline, solve_edit_only, solve_lyaplock, EditorKind, SolveReport};
use crate::error::{Error, Result};
use crate::linalg::RidgePolicy;
use crate::memory::{AssociativeMemory, BacklogAccumulator, EditBatch};
use crate::stream::StreamSource;

/// Relative floor applied to a vanishing probe loss, `D_base ≥ FLOOR·(1 + tr(V0V0ᵀ))`,
/// so a stream that needs no edits still yields a finite queue schedule.
pub const D_BASE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: StreamSource,
    pub editor: EditorKind,
    pub alpha: f64,
    pub v_weight: Option<f64>,
    pub ridge: RidgePolicy,
    pub record_every: usize,
    /// Measure per-step wall time; when off `wall_ms` is recorded as 0 so
    /// output stays byte-reproducible.
    pub timing: bool,
}

impl RunConfig {
    pub fn new(source: StreamSource, editor: EditorKind, alpha: f64) -> Self {
        RunConfig {
            source,
            editor,
            alpha,
            v_weight: None,
            ridge: RidgePolicy::default(),
            record_every: 1,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must be finite and positive, got {}", self.alpha),
            });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter {
                name: "record_every",
                reason: "must be at least 1".into(),
            });
        }
        if let Some(v) = self.v_weight {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "v_weight",
                    reason: format!("must be finite and nonnegative, got {v}"),
                });
            }
        }
        if !(self.ridge.max_lambda.is_finite() && self.ridge.max_lambda >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "ridge.max_lambda",
                reason: "must be finite and nonnegative".into(),
            });
        }
        if let StreamSource::Synthetic(spec) = &self.source {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Metrics of one step, all measured at the post-edit weights `W(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub el: f64,
    pub pl: f64,
    pub bl: f64,
    /// `Z(t)`, the queue value the step-`t` solve used.
    pub z: f64,
    pub avg_pl: f64,
    pub avg_el: f64,
    pub delta_fro: f64,
    pub ridge: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    SolverAbort(String),
    NumericalAbort(String),
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::SolverAbort(_) => "solver-abort",
            RunStatus::NumericalAbort(_) => "numerical-abort",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub editor: EditorKind,
    pub alpha: f64,
    pub d_base: f64,
    pub d_threshold: f64,
    pub steps: u64,
    pub final_avg_pl: f64,
    pub final_avg_el: f64,
    pub z_init: f64,
    /// `Z(T+1)`.
    pub z_final: f64,
    /// `Z(T)/T`.
    pub stability_ratio: f64,
    pub constraint_satisfied: bool,
    pub mean_wall_ms: f64,
    pub status: RunStatus,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<StepRecord>,
    pub summary: RunSummary,
    pub params: QueueParams,
    /// `Z(1), …, Z(T+1)`.
    pub z_history: Vec<f64>,
    /// `PL(1), …, PL(T)` for every step, independent of `record_every`.
    pub pl_history: Vec<f64>,
    /// `Σ Δ(t)`.
    pub delta_sum: DMatrix<f64>,
    pub initial_weights: DMatrix<f64>,
    pub final_weights: DMatrix<f64>,
}

/// Preservation loss after one baseline edit of `W(0)` on `batch`; the memory
/// is left at `W(0)`.
pub fn estimate_d_base(mem: &mut AssociativeMemory, batch: &EditBatch, ridge: RidgePolicy) -> Result<f64> {
    mem.reset();
    let probe = solve_baseline(mem, batch, ridge)?;
    let w = mem.weights() + &probe.delta;
    let pl = mem.preservation_loss(&w)?;
    Ok(pl.max(D_BASE_FLOOR * (1.0 + mem.tr_v0v0())))
}

/// Measures `D_base` for a configuration without running it.
pub fn measure_d_base(config: &RunConfig) -> Result<f64> {
    config.validate()?;
    let mut prepared = config.source.prepare()?;
    let first = prepared.batches.next().ok_or(Error::Empty("edit stream"))??;
    estimate_d_base(&mut prepared.memory, &first, config.ridge)
}

fn solve_step(
    editor: EditorKind,
    mem: &AssociativeMemory,
    bk: &BacklogAccumulator,
    batch: &EditBatch,
    v_weight: f64,
    az: f64,
    ridge: RidgePolicy,
) -> Result<SolveReport> {
    match editor {
        EditorKind::Lyaplock => solve_lyaplock(mem, bk, batch, v_weight, az, ridge),
        EditorKind::Baseline => solve_baseline(mem, batch, ridge),
        EditorKind::EditOnly => solve_edit_only(mem, batch, ridge),
    }
}

fn state_dump(t: u64, state: &QueueState, mem: &AssociativeMemory, err: &Error) -> String {
    format!(
        "t={t} z={:e} pl_max_seen={:e} |W|_F={:e} |W-W0|_F={:e}: {err}",
        state.z,
        state.pl_max_seen,
        mem.weights().norm(),
        (mem.weights() - mem.original_weights()).norm(),
    )
}

/// Runs one sequential editing trajectory.
///
/// Per step `t`: read `Z(t)`; solve `Δ(t)`; set `W(t) = W(t−1) + Δ(t)`;
/// measure EL, PL and BL at `W(t)`; update the queue with `PL(t)`; absorb the
/// batch into the backlog. `D_base` is measured beforehand by a discarded
/// baseline probe edit on the first batch.
///
/// Solver and numerical failures end the run early with a non-completed
/// status and the records gathered so far; setup failures are errors.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let prepared = config.source.prepare()?;
    let total = prepared.total_batches;
    let mut mem = prepared.memory;
    let mut batches = prepared.batches.peekable();

    let first = match batches.peek() {
        Some(Ok(b)) => b.clone(),
        Some(Err(_)) => return Err(batches.next().unwrap().unwrap_err()),
        None => return Err(Error::Empty("edit stream")),
    };
    let d_base = estimate_d_base(&mut mem, &first, config.ridge)?;
    let mut params = derive_params(config.alpha, d_base)?;
    if let Some(v) = config.v_weight {
        params.v_weight = v;
    }

    let dims = mem.dims();
    let initial_weights = mem.original_weights().clone();
    let mut bk = BacklogAccumulator::new(dims);
    let mut state = QueueState::initial(&params);
    let mut z_history = Vec::with_capacity(total + 1);
    z_history.push(state.z);
    let mut pl_history = Vec::with_capacity(total);
    let mut records = Vec::new();
    let mut delta_sum = DMatrix::zeros(dims.d1, dims.d0);
    let (mut sum_pl, mut sum_el, mut sum_ms) = (0.0, 0.0, 0.0);
    let mut status = RunStatus::Completed;

    for (idx, batch) in batches.enumerate() {
        let t = idx as u64 + 1;
        let batch = match batch {
            Ok(b) => b,
            Err(e) => {
                status = RunStatus::NumericalAbort(format!("t={t}: batch unreadable: {e}"));
                break;
            }
        };
        let started = config.timing.then(Instant::now);
        let az = state.preservation_weight(&params);
        let report = match solve_step(config.editor, &mem, &bk, &batch, params.v_weight, az, config.ridge) {
            Ok(r) => r,
            Err(e) => {
                status = RunStatus::SolverAbort(state_dump(t, &state, &mem, &e));
                break;
            }
        };
        if let Err(e) = mem.apply_delta(&report.delta) {
            status = RunStatus::NumericalAbort(state_dump(t, &state, &mem, &e));
            break;
        }
        delta_sum += &report.delta;

        let losses = (|| -> Result<(f64, f64, f64)> {
            let w = mem.weights();
            Ok((batch.editing_loss(w)?, mem.preservation_loss(w)?, bk.loss(w)?))
        })();
        let (el, pl, bl) = match losses {
            Ok(l) if l.0.is_finite() && l.1.is_finite() && l.2.is_finite() => l,
            Ok(_) => {
                let e = Error::NonFinite("step loss");
                status = RunStatus::NumericalAbort(state_dump(t, &state, &mem, &e));
                break;
            }
            Err(e) => {
                status = RunStatus::NumericalAbort(state_dump(t, &state, &mem, &e));
                break;
            }
        };
        let z_used = state.z;
        state = state.update(&params, pl)?;
        bk.absorb(&batch)?;
        let wall_ms = started.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);

        sum_pl += pl;
        sum_el += el;
        sum_ms += wall_ms;
        pl_history.push(pl);
        z_history.push(state.z);

        if t.is_multiple_of(config.record_every as u64) || idx + 1 == total {
            records.push(StepRecord {
                t,
                el,
                pl,
                bl,
                z: z_used,
                avg_pl: sum_pl / t as f64,
                avg_el: sum_el / t as f64,
                delta_fro: report.delta.norm(),
                ridge: report.ridge_applied,
                wall_ms,
            });
        }
    }

    let steps = pl_history.len() as u64;
    let denom = steps.max(1) as f64;
    let final_avg_pl = sum_pl / denom;
    let summary = RunSummary {
        editor: config.editor,
        alpha: config.alpha,
        d_base,
        d_threshold: params.d_threshold,
        steps,
        final_avg_pl,
        final_avg_el: sum_el / denom,
        z_init: params.z_init,
        z_final: *z_history.last().unwrap(),
        stability_ratio: stability_ratio(&z_history[..z_history.len().saturating_sub(1).max(1)])?,
        constraint_satisfied: steps > 0 && final_avg_pl <= params.d_threshold,
        mean_wall_ms: sum_ms / denom,
        status,
    };
    Ok(RunOutcome {
        records,
        summary,
        params,
        z_history,
        pl_history,
        delta_sum,
        initial_weights,
        final_weights: mem.weights().clone(),
    })
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter {
            name: "LYAPEDIT_THREADS",
            reason: e.to_string(),
        })
}

/// Runs several editors on one shared stream. `threads = 0` lets the pool
/// pick its own width.
pub fn compare(configs: &[RunConfig], threads: usize) -> Result<Vec<RunOutcome>> {
    let first = configs.first().ok_or(Error::Empty("comparison set"))?;
    if configs.iter().any(|c| c.source != first.source) {
        return Err(Error::StreamMismatch);
    }
    pool(threads)?.install(|| configs.par_iter().map(run).collect())
}

/// Runs `base` once per α, results ordered by α (ties keep input order).
pub fn sweep_alpha(base: &RunConfig, alphas: &[f64], threads: usize) -> Result<Vec<RunOutcome>> {
    if alphas.is_empty() {
        return Err(Error::Empty("alpha list"));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let configs: Vec<RunConfig> = sorted
        .iter()
        .map(|&alpha| RunConfig { alpha, ..base.clone() })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    pool(threads)?.install(|| configs.par_iter().map(run).collect())
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // ties share their average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Number of adjacent pairs that break a non-decreasing (`increasing = true`)
/// or non-increasing order.
pub fn trend_inversions(values: &[f64], increasing: bool) -> usize {
    values
        .windows(2)
        .filter(|w| if increasing { w[1] < w[0] } else { w[1] > w[0] })
        .count()
}
