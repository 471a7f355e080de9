use thiserror::Error;

use crate::kvmx::KvmxError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {axis} is {found}, expected {expected}")]
    DimensionMismatch {
        context: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid value for `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A Gram-form loss came out more negative than floating cancellation can explain.
    #[error(
        "numerical instability in {loss}: raw value {raw:e} is below the cancellation floor {floor:e}; \
         recompute with explicit matrices"
    )]
    NumericalInstability {
        loss: &'static str,
        raw: f64,
        floor: f64,
    },

    #[error("normal-equation matrix is numerically singular (condition estimate {condition_estimate:e}, ridge {ridge:e})")]
    SingularSystem { condition_estimate: f64, ridge: f64 },

    #[error("stream generation failed: {0}")]
    Generation(String),

    #[error("editor configs do not share one stream source")]
    StreamMismatch,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error(transparent)]
    Format(#[from] KvmxError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn ensure_finite(m: &nalgebra::DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_dim(
    context: &'static str,
    axis: &'static str,
    expected: usize,
    found: usize,
) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            axis,
            expected,
            found,
        })
    }
}
