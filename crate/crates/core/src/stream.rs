//! Edit-batch sources: seeded synthetic Gaussian streams and KVMX files.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), a portable counter-based
//! generator, with normal variates from `rand_distr::StandardNormal`
//! (ziggurat). Each consumer draws from its own ChaCha stream id, so the
//! preserved set, retries and the batch sequence never share state:
//!
//! | stream id | use                               |
//! |-----------|-----------------------------------|
//! | 0         | `W(0)`                            |
//! | 1         | edit batches                      |
//! | 16 + k    | preserved keys, attempt `k`       |

use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kvmx::{load_batch_file, load_matrix_file};
use crate::linalg::{gram, smallest_eigenvalue};
use crate::memory::{AssociativeMemory, Dims, EditBatch};

const WEIGHT_STREAM: u64 = 0;
const BATCH_STREAM: u64 = 1;
const PRESERVED_STREAM: u64 = 16;
const PRESERVED_RETRIES: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueMode {
    /// Targets drawn independently of the keys.
    RandomTarget,
    /// Targets `W*·k + noise` with `W* = W(0) + drift·G`, `G` fresh per batch.
    PlantedTeacher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub dims: Dims,
    pub n_per_batch: usize,
    /// Horizon `T`.
    pub total_batches: usize,
    pub key_scale: f64,
    pub value_mode: ValueMode,
    pub teacher_drift: f64,
    /// Standard deviation of additive target noise in planted mode.
    pub value_noise: f64,
    pub seed: u64,
    /// Number of preserved keys.
    pub m0: usize,
}

impl StreamSpec {
    /// Planted-teacher stream with unit key scale and drift, no target noise,
    /// and `m0 = 4·d0`.
    pub fn new(dims: Dims, n_per_batch: usize, total_batches: usize, seed: u64) -> Self {
        StreamSpec {
            dims,
            n_per_batch,
            total_batches,
            key_scale: 1.0,
            value_mode: ValueMode::PlantedTeacher,
            teacher_drift: 1.0,
            value_noise: 0.0,
            seed,
            m0: 4 * dims.d0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        Dims::new(self.dims.d0, self.dims.d1)?;
        if self.n_per_batch == 0 {
            return bad("stream.n_per_batch", "must be at least 1");
        }
        if self.total_batches == 0 {
            return bad("stream.total_batches", "must be at least 1");
        }
        if self.m0 < self.dims.d0 {
            return bad("stream.m0", "must be at least dims.d0");
        }
        if !(self.key_scale.is_finite() && self.key_scale >= 0.0) {
            return bad("stream.key_scale", "must be finite and nonnegative");
        }
        if !(self.teacher_drift.is_finite() && self.teacher_drift >= 0.0) {
            return bad("stream.teacher_drift", "must be finite and nonnegative");
        }
        if !(self.value_noise.is_finite() && self.value_noise >= 0.0) {
            return bad("stream.value_noise", "must be finite and nonnegative");
        }
        Ok(())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    // fill row by row so the draw order does not depend on storage layout
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let x: f64 = StandardNormal.sample(rng);
            m[(i, j)] = scale * x;
        }
    }
    m
}

/// Draws `W(0)` (standard Gaussian scaled by `1/√d0`) and the preserved keys
/// `K0` (`m0` standard Gaussian columns scaled by `key_scale`).
///
/// A key draw whose Gram is not positive definite is retried with a fresh
/// sub-stream up to three times.
pub fn generate_preserved(spec: &StreamSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    spec.validate()?;
    let Dims { d0, d1 } = spec.dims;
    let w0 = gaussian(&mut rng_for(spec.seed, WEIGHT_STREAM), d1, d0, 1.0 / (d0 as f64).sqrt());

    let mut last = 0.0;
    for attempt in 0..=PRESERVED_RETRIES {
        let mut rng = rng_for(spec.seed, PRESERVED_STREAM + attempt);
        let k0 = gaussian(&mut rng, d0, spec.m0, spec.key_scale);
        let g = gram(&k0);
        let scale = g.trace() / d0 as f64;
        last = smallest_eigenvalue(&g);
        if scale > 0.0 && last > 1e-10 * scale {
            return Ok((w0, k0));
        }
    }
    Err(Error::Generation(format!(
        "preserved key Gram stayed rank deficient after {} retries (smallest eigenvalue {last:e})",
        PRESERVED_RETRIES
    )))
}

/// Sequential synthetic batch generator; yields `total_batches` batches and
/// then `None`.
#[derive(Debug, Clone)]
pub struct EditStream {
    spec: StreamSpec,
    w0: DMatrix<f64>,
    rng: ChaCha8Rng,
    emitted: usize,
}

impl EditStream {
    pub fn new(spec: StreamSpec, w0: DMatrix<f64>) -> Result<Self> {
        spec.validate()?;
        crate::error::ensure_dim("edit stream", "W(0) rows (d1)", spec.dims.d1, w0.nrows())?;
        crate::error::ensure_dim("edit stream", "W(0) columns (d0)", spec.dims.d0, w0.ncols())?;
        let rng = rng_for(spec.seed, BATCH_STREAM);
        Ok(EditStream {
            spec,
            w0,
            rng,
            emitted: 0,
        })
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    pub fn remaining(&self) -> usize {
        self.spec.total_batches - self.emitted
    }

    pub fn next_batch(&mut self) -> Option<EditBatch> {
        if self.emitted >= self.spec.total_batches {
            return None;
        }
        let Dims { d0, d1 } = self.spec.dims;
        let n = self.spec.n_per_batch;
        let rng = &mut self.rng;
        let k1 = gaussian(rng, d0, n, self.spec.key_scale);
        let v1 = match self.spec.value_mode {
            ValueMode::RandomTarget => gaussian(rng, d1, n, 1.0),
            ValueMode::PlantedTeacher => {
                // always drawn so the key sequence does not depend on drift or noise
                let g = gaussian(rng, d1, d0, 1.0 / (d0 as f64).sqrt());
                let noise = gaussian(rng, d1, n, 1.0);
                let mut v = if self.spec.teacher_drift == 0.0 {
                    &self.w0 * &k1
                } else {
                    (&self.w0 + g * self.spec.teacher_drift) * &k1
                };
                if self.spec.value_noise > 0.0 {
                    v += noise * self.spec.value_noise;
                }
                v
            }
        };
        self.emitted += 1;
        Some(EditBatch::new(k1, v1).expect("generated batch is finite and consistent"))
    }
}

impl Iterator for EditStream {
    type Item = EditBatch;

    fn next(&mut self) -> Option<EditBatch> {
        self.next_batch()
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining(), Some(self.remaining()))
    }
}

/// Externally extracted matrices on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FileStreamSpec {
    pub w0: PathBuf,
    pub k0: PathBuf,
    /// When absent, `V0 = W(0)·K0`.
    pub v0: Option<PathBuf>,
    pub batches: Vec<PathBuf>,
}

/// Where a run's preserved set and edit batches come from.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamSource {
    Synthetic(StreamSpec),
    Files(FileStreamSpec),
}

/// A ready-to-run source: the initial memory plus a batch iterator.
pub struct PreparedStream {
    pub memory: AssociativeMemory,
    pub batches: Box<dyn Iterator<Item = Result<EditBatch>> + Send>,
    pub total_batches: usize,
}

impl StreamSource {
    pub fn total_batches(&self) -> usize {
        match self {
            StreamSource::Synthetic(s) => s.total_batches,
            StreamSource::Files(f) => f.batches.len(),
        }
    }

    pub fn prepare(&self) -> Result<PreparedStream> {
        match self {
            StreamSource::Synthetic(spec) => {
                let (w0, k0) = generate_preserved(spec)?;
                let memory = AssociativeMemory::new(w0.clone(), &k0)?;
                let stream = EditStream::new(spec.clone(), w0)?;
                Ok(PreparedStream {
                    memory,
                    batches: Box::new(stream.map(Ok)),
                    total_batches: spec.total_batches,
                })
            }
            StreamSource::Files(files) => {
                if files.batches.is_empty() {
                    return Err(Error::Empty("batch file list"));
                }
                let w0 = load_matrix_file(&files.w0)?;
                let k0 = load_matrix_file(&files.k0)?;
                let memory = match &files.v0 {
                    Some(p) => AssociativeMemory::with_values(w0, &k0, &load_matrix_file(p)?)?,
                    None => AssociativeMemory::new(w0, &k0)?,
                };
                let paths = files.batches.clone();
                Ok(PreparedStream {
                    memory,
                    batches: Box::new(paths.into_iter().map(load_batch_file)),
                    total_batches: files.batches.len(),
                })
            }
        }
    }
}
