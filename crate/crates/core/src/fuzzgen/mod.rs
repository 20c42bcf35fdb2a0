//! Shared fuzz-input generation.
//!
//! Two modes build the input set every candidate of a task runs on:
//! `Seeded` mutates the task's seed inputs with structure-preserving,
//! type-specific operators; `SeedFree` infers parameter types from the
//! function interface and samples from per-type generators. Both are pure
//! functions of `(task, config)`: the RNG is derived from the task id and
//! `rng_seed`, so input sets are reproducible bit for bit.

mod hint;
mod infer;
mod mutate;
mod sample;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{file_stem, InputValue, Task};

pub use hint::{HintParseError, TypeHint, MAX_HINT_DEPTH};
pub use infer::{infer_types, name_rule};
pub use mutate::{mutate_seeded, shape_of};
pub use sample::{sample_seed_free, sample_value};

/// Seeds used for fuzz-seed robustness reruns.
pub const ROBUSTNESS_SEEDS: [u64; 3] = [1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FuzzMode {
    Seeded,
    SeedFree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub n_inputs: usize,
    pub mode: FuzzMode,
    pub rng_seed: u64,
    pub max_attempts_per_input: usize,
    pub numeric_magnitude_cap: i64,
    pub max_collection_len: usize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            n_inputs: 10,
            mode: FuzzMode::Seeded,
            rng_seed: 1,
            max_attempts_per_input: 100,
            numeric_magnitude_cap: 1_000_000,
            max_collection_len: 32,
        }
    }
}

impl FuzzConfig {
    pub fn validate(&self) -> Result<(), FuzzError> {
        if self.n_inputs == 0 {
            return Err(FuzzError::InvalidConfig("n_inputs must be at least 1".into()));
        }
        if self.max_attempts_per_input == 0 || self.numeric_magnitude_cap <= 0 || self.max_collection_len == 0 {
            return Err(FuzzError::InvalidConfig("attempt, magnitude and length caps must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn max_str_len(&self) -> usize {
        self.max_collection_len.max(16)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FuzzError {
    #[error("task {0:?} has no seed inputs; use seed-free mode")]
    NoSeeds(String),
    #[error("task {task_id:?}: no structurally valid mutation within {attempts} attempts")]
    ExhaustedAttempts { task_id: String, attempts: usize },
    #[error("task {0:?} has no function interface to infer types from")]
    NoInterface(String),
    #[error("invalid fuzz config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// A generated input set plus a warning when fewer than `n_inputs`
/// distinct inputs could be produced.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSet {
    pub inputs: Vec<InputValue>,
    pub warning: Option<String>,
}

/// Stable 64-bit FNV-1a; platform independent, unlike `std`'s hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// RNG for one task: a function of the task id and the configured seed only.
pub fn task_rng(task_id: &str, rng_seed: u64) -> ChaCha8Rng {
    let mut z = fnv1a(task_id.as_bytes()) ^ rng_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Drops inputs that are duplicates under canonical normalization, then
/// asks `regen` for replacements until `target` distinct inputs exist or
/// the attempt budget runs out. Returns the inputs and whether the target
/// was missed.
pub fn dedupe_and_fill(
    candidates: Vec<InputValue>,
    target: usize,
    config: &FuzzConfig,
    mut regen: impl FnMut() -> Option<InputValue>,
) -> (Vec<InputValue>, bool) {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(target);
    for c in candidates {
        if out.len() < target && seen.insert(c.canonical_key()) {
            out.push(c);
        }
    }
    let budget = config.max_attempts_per_input.saturating_mul(target.max(1));
    let mut attempts = 0;
    while out.len() < target && attempts < budget {
        attempts += 1;
        let Some(v) = regen() else { break };
        if seen.insert(v.canonical_key()) {
            out.push(v);
        }
    }
    let short = out.len() < target;
    (out, short)
}

/// Builds the task's shared input set according to `config.mode`.
pub fn generate_inputs(task: &Task, config: &FuzzConfig) -> Result<InputSet, FuzzError> {
    config.validate()?;
    let mut rng = task_rng(&task.task_id, config.rng_seed);
    let n = config.n_inputs;
    let (inputs, short) = match config.mode {
        FuzzMode::Seeded => {
            if task.seed_inputs.is_empty() {
                return Err(FuzzError::NoSeeds(task.task_id.clone()));
            }
            let first = mutate::mutate_with(task, config, &mut rng, n)?;
            dedupe_and_fill(first, n, config, || {
                mutate::mutate_with(task, config, &mut rng, 1).ok().and_then(|mut v| v.pop())
            })
        }
        FuzzMode::SeedFree => {
            if task.interface.function().is_none() {
                return Err(FuzzError::NoInterface(task.task_id.clone()));
            }
            let hints = infer_types(task);
            let first = sample::sample_with(&hints, config, &mut rng, n);
            dedupe_and_fill(first, n, config, || sample::sample_with(&hints, config, &mut rng, 1).pop())
        }
    };
    let warning = short.then(|| format!("only {} distinct inputs of {} requested", inputs.len(), n));
    Ok(InputSet { inputs, warning })
}

pub fn inputs_path(dir: &Path, task_id: &str) -> PathBuf {
    dir.join(format!("{}.json", file_stem(task_id)))
}

/// Persists an input set as `<dir>/<task_id>.json` so runs can be replayed.
pub fn save_inputs(dir: &Path, task_id: &str, inputs: &[InputValue]) -> Result<PathBuf, FuzzError> {
    let path = inputs_path(dir, task_id);
    let io = |message: String| FuzzError::Io {
        path: path.clone(),
        message,
    };
    let text = serde_json::to_string(inputs).map_err(|e| io(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| io(e.to_string()))?;
    Ok(path)
}

pub fn load_inputs(dir: &Path, task_id: &str) -> Result<Vec<InputValue>, FuzzError> {
    let path = inputs_path(dir, task_id);
    let io = |message: String| FuzzError::Io {
        path: path.clone(),
        message,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| io(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| io(e.to_string()))
}
