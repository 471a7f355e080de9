//! Sequential editing of a linear associative memory `W ≈ V·K⁺` under a
//! long-term preservation constraint.
//!
//! Each step solves a drift-plus-penalty weighted least-squares problem in
//! closed form ([`editors`]); a scalar virtual queue ([`controller`]) raises
//! the weight on preserved knowledge whenever its loss overshoots the
//! threshold `D`. [`harness`] drives full trajectories over synthetic or
//! file-backed edit streams ([`stream`], [`kvmx`]); [`oracle`] holds
//! independent explicit-matrix verifiers.

pub mod cli;
pub mod config;
pub mod controller;
pub mod editors;
pub mod error;
pub mod harness;
pub mod kvmx;
pub mod linalg;
pub mod memory;
pub mod oracle;
pub mod report;
pub mod stream;

pub use controller::{derive_params, QueueParams, QueueState};
pub use editors::{solve_baseline, solve_edit_only, solve_lyaplock, EditorKind, SolveReport};
pub use error::{Error, Result};
pub use harness::{run, RunConfig, RunOutcome, RunStatus, RunSummary, StepRecord};
pub use linalg::RidgePolicy;
pub use memory::{AssociativeMemory, BacklogAccumulator, Dims, EditBatch};
pub use stream::{StreamSource, StreamSpec, ValueMode};
