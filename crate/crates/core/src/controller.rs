//! Virtual-queue dynamics, the threshold schedule, and Lyapunov diagnostics.

use crate::error::{Error, Result};

/// Queue and weighting parameters for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueParams {
    /// Long-term preservation threshold `D = α·D_base`.
    pub d_threshold: f64,
    pub a: f64,
    pub b: f64,
    pub z_init: f64,
    /// Floor of the queue: `Z(t+1) = max(·, z_max)`.
    pub z_max: f64,
    /// Weight `V` on editing and backlog losses.
    pub v_weight: f64,
    pub alpha: f64,
    pub d_base: f64,
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and positive, got {x}"),
        })
    }
}

/// Default schedule: `D = α·D_base`, `a = 1/√D`, `b = 0`,
/// `z_init = z_max = √D`, `V = 1`.
///
/// With this choice `a·Z(1) = 1`, so preservation and editing losses start
/// at equal weight, and a step whose preservation loss exceeds `D` by a
/// factor of two doubles the preservation weight.
pub fn derive_params(alpha: f64, d_base: f64) -> Result<QueueParams> {
    positive("alpha", alpha)?;
    positive("d_base", d_base)?;
    let d = alpha * d_base;
    let root = d.sqrt();
    Ok(QueueParams {
        d_threshold: d,
        a: 1.0 / root,
        b: 0.0,
        z_init: root,
        z_max: root,
        v_weight: 1.0,
        alpha,
        d_base,
    })
}

impl QueueParams {
    pub fn validate(&self) -> Result<()> {
        positive("d_threshold", self.d_threshold)?;
        positive("a", self.a)?;
        for (name, x) in [
            ("b", self.b),
            ("z_init", self.z_init),
            ("z_max", self.z_max),
            ("v_weight", self.v_weight),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and nonnegative, got {x}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueState {
    /// `Z(t)`.
    pub z: f64,
    /// Timestamp `t` this state belongs to (starts at 1).
    pub t: u64,
    /// Largest preservation loss fed to the queue so far.
    pub pl_max_seen: f64,
    /// Last realized drift `½·Z(t)² − ½·Z(t−1)²`.
    pub drift_last: f64,
}

impl QueueState {
    pub fn initial(params: &QueueParams) -> Self {
        QueueState {
            z: params.z_init,
            t: 1,
            pl_max_seen: 0.0,
            drift_last: 0.0,
        }
    }

    /// Preservation weight `a·Z(t)` used by the step-`t` solve.
    pub fn preservation_weight(&self, params: &QueueParams) -> f64 {
        params.a * self.z
    }

    /// `Z(t+1) = max(Z(t) + a·(PL(t) − D) + b, z_max)`.
    pub fn update(&self, params: &QueueParams, pl: f64) -> Result<QueueState> {
        if !pl.is_finite() || pl < 0.0 {
            return Err(Error::InvalidParameter {
                name: "pl",
                reason: format!("preservation loss must be finite and nonnegative, got {pl}"),
            });
        }
        let z = (self.z + params.a * (pl - params.d_threshold) + params.b).max(params.z_max);
        Ok(QueueState {
            z,
            t: self.t + 1,
            pl_max_seen: self.pl_max_seen.max(pl),
            drift_last: 0.5 * z * z - 0.5 * self.z * self.z,
        })
    }

    /// Upper bound `B + Z(t)·(a·PL + b − a·D)` on the drift of the transition
    /// driven by `pl`, with
    /// `B = ½·((a·D_max + b)² + (a·D)² + z_max²)` and `D_max` the largest loss
    /// seen including `pl`.
    pub fn drift_upper_bound(&self, params: &QueueParams, pl: f64) -> f64 {
        let d_max = self.pl_max_seen.max(pl);
        let a = params.a;
        let big_b = 0.5
            * ((a * d_max + params.b).powi(2)
                + (a * params.d_threshold).powi(2)
                + params.z_max.powi(2));
        big_b + self.z * (a * pl + params.b - a * params.d_threshold)
    }
}

/// `Z(T)/T` for a queue history `Z(1), …, Z(T)`.
pub fn stability_ratio(history: &[f64]) -> Result<f64> {
    match history.last() {
        Some(&z) => Ok(z / history.len() as f64),
        None => Err(Error::Empty("queue history")),
    }
}
