//! Run-configuration documents.
//!
//! A TOML document with a fixed key set; unknown keys are rejected.
//!
//! ```toml
//! alpha = 60.0
//! editor = "lyaplock"          # lyaplock | baseline | edit-only
//! record_every = 1
//! # v_weight = 1.0             # overrides V
//! # timing = false             # per-step wall time (breaks byte-reproducibility)
//!
//! [dims]
//! d0 = 64
//! d1 = 48
//!
//! [stream]
//! n_per_batch = 8
//! total_batches = 2000
//! seed = 2024
//! mode = "planted-teacher"     # planted-teacher | random-target
//! # m0 = 256  key_scale = 1.0  teacher_drift = 1.0  value_noise = 0.0
//!
//! [ridge]
//! max_lambda = 1e-6
//!
//! [sweep]
//! alphas = [20.0, 60.0, 100.0]
//!
//! [compare]
//! editors = ["lyaplock", "baseline", "edit-only"]
//! ```
//!
//! A `[files]` table (`w0`, `k0`, optional `v0`, `batches`) replaces `[dims]`
//! and `[stream]` with KVMX files; relative paths resolve against the
//! document's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::editors::EditorKind;
use crate::error::{Error, Result};
use crate::harness::RunConfig;
use crate::linalg::RidgePolicy;
use crate::memory::Dims;
use crate::stream::{FileStreamSpec, StreamSource, StreamSpec, ValueMode};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimsDoc {
    d0: usize,
    d1: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StreamDoc {
    n_per_batch: usize,
    total_batches: usize,
    seed: u64,
    #[serde(default = "default_mode")]
    mode: ValueMode,
    m0: Option<usize>,
    key_scale: Option<f64>,
    teacher_drift: Option<f64>,
    value_noise: Option<f64>,
}

fn default_mode() -> ValueMode {
    ValueMode::PlantedTeacher
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RidgeDoc {
    max_lambda: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepDoc {
    alphas: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareDoc {
    editors: Vec<EditorKind>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilesDoc {
    w0: PathBuf,
    k0: PathBuf,
    v0: Option<PathBuf>,
    batches: Vec<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    alpha: f64,
    #[serde(default = "default_editor")]
    editor: EditorKind,
    #[serde(default = "default_record_every")]
    record_every: usize,
    v_weight: Option<f64>,
    #[serde(default)]
    timing: bool,
    dims: Option<DimsDoc>,
    stream: Option<StreamDoc>,
    ridge: Option<RidgeDoc>,
    sweep: Option<SweepDoc>,
    compare: Option<CompareDoc>,
    files: Option<FilesDoc>,
}

fn default_editor() -> EditorKind {
    EditorKind::Lyaplock
}

fn default_record_every() -> usize {
    1
}

/// A validated configuration document.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub run: RunConfig,
    /// `[sweep] alphas`, if present.
    pub sweep_alphas: Option<Vec<f64>>,
    /// `[compare] editors`, if present.
    pub compare_editors: Option<Vec<EditorKind>>,
}

fn missing(name: &str) -> Error {
    Error::Config(format!("missing `{name}` (required unless [files] is given)"))
}

impl Config {
    /// Parses and validates a document; `base_dir` anchors relative file paths.
    pub fn parse(text: &str, base_dir: &Path, seed_override: Option<u64>) -> Result<Config> {
        let doc: Document = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;

        let source = match (doc.files, doc.dims, doc.stream) {
            (Some(f), None, None) => {
                if seed_override.is_some() {
                    return Err(Error::Config("`--seed` has no effect on a [files] source".into()));
                }
                let at = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
                StreamSource::Files(FileStreamSpec {
                    w0: at(f.w0),
                    k0: at(f.k0),
                    v0: f.v0.map(at),
                    batches: f.batches.into_iter().map(at).collect(),
                })
            }
            (Some(_), _, _) => return Err(Error::Config("[files] cannot be combined with [dims] or [stream]".into())),
            (None, dims, stream) => {
                let dims = dims.ok_or_else(|| missing("dims"))?;
                let s = stream.ok_or_else(|| missing("stream"))?;
                let dims = Dims::new(dims.d0, dims.d1)?;
                let mut spec = StreamSpec::new(dims, s.n_per_batch, s.total_batches, seed_override.unwrap_or(s.seed));
                spec.value_mode = s.mode;
                if let Some(m0) = s.m0 {
                    spec.m0 = m0;
                }
                if let Some(x) = s.key_scale {
                    spec.key_scale = x;
                }
                if let Some(x) = s.teacher_drift {
                    spec.teacher_drift = x;
                }
                if let Some(x) = s.value_noise {
                    spec.value_noise = x;
                }
                StreamSource::Synthetic(spec)
            }
        };

        let mut run = RunConfig::new(source, doc.editor, doc.alpha);
        run.record_every = doc.record_every;
        run.v_weight = doc.v_weight;
        run.timing = doc.timing;
        if let Some(r) = doc.ridge {
            run.ridge = RidgePolicy { max_lambda: r.max_lambda };
        }
        run.validate()?;

        let sweep_alphas = doc.sweep.map(|s| s.alphas);
        if let Some(alphas) = &sweep_alphas {
            if alphas.is_empty() {
                return Err(Error::InvalidParameter {
                    name: "sweep.alphas",
                    reason: "must not be empty".into(),
                });
            }
            if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
                return Err(Error::InvalidParameter {
                    name: "sweep.alphas",
                    reason: format!("every alpha must be finite and positive, got {a}"),
                });
            }
        }
        let compare_editors = doc.compare.map(|c| c.editors);
        if compare_editors.as_ref().is_some_and(|e| e.is_empty()) {
            return Err(Error::InvalidParameter {
                name: "compare.editors",
                reason: "must not be empty".into(),
            });
        }
        Ok(Config {
            run,
            sweep_alphas,
            compare_editors,
        })
    }

    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Config::parse(&text, base, seed_override)
    }
}
