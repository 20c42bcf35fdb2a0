//! Running candidates on a shared input set and assembling execution
//! signatures.
//!
//! [`SubprocessExecutor`] drives a per-language shim over a JSON-lines
//! protocol (or compiles and runs C++/Java programs directly);
//! [`ReplayExecutor`] answers from recorded signatures and is what the
//! metric-level tests use.

mod compiled;
mod diagnostics;
mod normalize;
mod replay;
mod shim;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::{CandidateProgram, InputValue, Task};

pub use diagnostics::diagnostics;
pub use normalize::{canonical_json, format_float, normalize, OutputDecodeError, FLOAT_SIG_DIGITS};
pub use replay::{Recording, ReplayExecutor};
pub use shim::{canonical_wire_output, SubprocessExecutor};

/// How a run ended abnormally. Runtime errors carry the exception class
/// only, never the message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    Timeout,
    RuntimeError(String),
    NonzeroExit(i32),
    OutputDecodeError,
    /// The harness failed (missing shim, spawn failure), not the program.
    SandboxFailure,
}

impl ErrorType {
    /// Builds a runtime error from whatever class label a shim reported,
    /// dropping any message or module prefix that leaked through.
    pub fn runtime(label: &str) -> Self {
        let class = label.split(':').next().unwrap_or("").trim();
        let class = class.split_whitespace().next().unwrap_or("");
        let class = class.rsplit('.').next().unwrap_or(class);
        ErrorType::RuntimeError(if class.is_empty() { "Error".into() } else { class.into() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Normal(String),
    Abnormal(ErrorType),
}

impl OutcomeKind {
    pub fn is_normal(&self) -> bool {
        matches!(self, OutcomeKind::Normal(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub wall_time_ms: u64,
}

impl Outcome {
    pub fn normal(output: impl Into<String>) -> Self {
        Outcome {
            kind: OutcomeKind::Normal(output.into()),
            wall_time_ms: 0,
        }
    }

    pub fn abnormal(error: ErrorType) -> Self {
        Outcome {
            kind: OutcomeKind::Abnormal(error),
            wall_time_ms: 0,
        }
    }

    pub fn is_normal(&self) -> bool {
        self.kind.is_normal()
    }
}

/// A program's outcomes over the input set, in input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionSignature {
    pub task_id: String,
    pub rank: u32,
    pub outcomes: Vec<Outcome>,
}

impl ExecutionSignature {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// The behavioural part of the signature (wall times excluded).
    pub fn behaviour(&self) -> Vec<&OutcomeKind> {
        self.outcomes.iter().map(|o| &o.kind).collect()
    }

    pub fn same_behaviour(&self, other: &ExecutionSignature) -> bool {
        self.outcomes.len() == other.outcomes.len()
            && self.outcomes.iter().zip(&other.outcomes).all(|(a, b)| a.kind == b.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    pub timeout_ms_per_input: u64,
    pub max_parallel_workers: usize,
    pub memory_cap_mb: Option<u64>,
    pub shim_path: PathBuf,
    /// Interpreter used to launch the shim. `None` picks `python3` for
    /// `.py` shims and runs anything else directly.
    #[serde(default)]
    pub shim_interpreter: Option<String>,
    #[serde(default = "default_cpp")]
    pub cpp_compiler: String,
    #[serde(default = "default_javac")]
    pub java_compiler: String,
    #[serde(default = "default_java")]
    pub java_runtime: String,
    #[serde(default = "default_compile_timeout")]
    pub compile_timeout_ms: u64,
    /// Longest wait for a fresh shim to load the candidate and block on its
    /// first request. Time spent here is not charged to any input.
    #[serde(default = "default_startup_timeout")]
    pub startup_timeout_ms: u64,
}

fn default_cpp() -> String {
    "g++".into()
}
fn default_javac() -> String {
    "javac".into()
}
fn default_java() -> String {
    "java".into()
}
fn default_compile_timeout() -> u64 {
    60_000
}
fn default_startup_timeout() -> u64 {
    5_000
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            timeout_ms_per_input: 200,
            max_parallel_workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            memory_cap_mb: None,
            shim_path: PathBuf::from("shim.py"),
            shim_interpreter: None,
            cpp_compiler: default_cpp(),
            java_compiler: default_javac(),
            java_runtime: default_java(),
            compile_timeout_ms: default_compile_timeout(),
            startup_timeout_ms: default_startup_timeout(),
        }
    }
}

impl ExecConfig {
    pub fn validate(&self) -> Result<(), ExecError> {
        if self.timeout_ms_per_input == 0 {
            return Err(ExecError::InvalidConfig("timeout_ms_per_input must be positive".into()));
        }
        if self.max_parallel_workers == 0 {
            return Err(ExecError::InvalidConfig("max_parallel_workers must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("no candidates to execute")]
    NoCandidates,
    #[error("empty input set")]
    NoInputs,
    #[error("invalid execution config: {0}")]
    InvalidConfig(String),
    #[error("recording for task {task_id:?} rank {rank} has {got} outcomes for {expected} inputs")]
    LengthMismatch {
        task_id: String,
        rank: u32,
        expected: usize,
        got: usize,
    },
    #[error("{path}: {message}")]
    Recording { path: PathBuf, message: String },
}

/// Produces one signature per candidate, in candidate order. Individual
/// cell failures are recorded as abnormal outcomes, never as errors.
pub trait Executor: Sync {
    fn execute_all(
        &self,
        task: &Task,
        candidates: &[CandidateProgram],
        inputs: &[InputValue],
    ) -> Result<Vec<ExecutionSignature>, ExecError>;
}

fn check_preconditions(candidates: &[CandidateProgram], inputs: &[InputValue]) -> Result<(), ExecError> {
    if candidates.is_empty() {
        return Err(ExecError::NoCandidates);
    }
    if inputs.is_empty() {
        return Err(ExecError::NoInputs);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runtime_error_keeps_class_only() {
        assert_eq!(ErrorType::runtime("ValueError"), ErrorType::RuntimeError("ValueError".into()));
        assert_eq!(
            ErrorType::runtime("ValueError: invalid literal for int() with base 10: '-'"),
            ErrorType::RuntimeError("ValueError".into())
        );
        assert_eq!(ErrorType::runtime("json.decoder.JSONDecodeError"), ErrorType::RuntimeError("JSONDecodeError".into()));
        assert_eq!(ErrorType::runtime(""), ErrorType::RuntimeError("Error".into()));
    }

    #[test]
    fn wall_time_does_not_affect_behaviour() {
        let mut a = ExecutionSignature {
            task_id: "t".into(),
            rank: 1,
            outcomes: vec![Outcome::normal("1"), Outcome::abnormal(ErrorType::Timeout)],
        };
        let b = a.clone();
        a.outcomes[1].wall_time_ms = 250;
        assert!(a.same_behaviour(&b));
        assert_eq!(a.behaviour(), b.behaviour());
    }

    #[test]
    fn zero_timeout_is_rejected() {
        let cfg = ExecConfig {
            timeout_ms_per_input: 0,
            ..ExecConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
