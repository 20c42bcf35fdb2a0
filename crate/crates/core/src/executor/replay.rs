//! Executor backed by recorded signatures.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_preconditions, ErrorType, ExecError, ExecutionSignature, Executor, Outcome};
use crate::corpus::{CandidateProgram, InputValue, Task};

/// Signatures recorded for one task together with the inputs they ran on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub task_id: String,
    pub inputs: Vec<InputValue>,
    pub signatures: Vec<ExecutionSignature>,
}

impl Recording {
    pub fn read(path: &Path) -> Result<Self, ExecError> {
        let err = |message: String| ExecError::Recording {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }
}

/// Replays outcomes keyed by `(task, rank, canonical input)`. Cells with
/// no recorded outcome come back as sandbox failures.
#[derive(Debug, Clone, Default)]
pub struct ReplayExecutor {
    table: HashMap<(String, u32, String), Outcome>,
}

impl ReplayExecutor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, recording: &Recording) -> Result<(), ExecError> {
        let keys: Vec<String> = recording.inputs.iter().map(InputValue::canonical_key).collect();
        for sig in &recording.signatures {
            if sig.outcomes.len() != keys.len() {
                return Err(ExecError::LengthMismatch {
                    task_id: sig.task_id.clone(),
                    rank: sig.rank,
                    expected: keys.len(),
                    got: sig.outcomes.len(),
                });
            }
            for (key, outcome) in keys.iter().zip(&sig.outcomes) {
                self.table
                    .insert((recording.task_id.clone(), sig.rank, key.clone()), outcome.clone());
            }
        }
        Ok(())
    }

    pub fn with(mut self, recording: &Recording) -> Result<Self, ExecError> {
        self.add(recording)?;
        Ok(self)
    }

    /// Loads every `*.json` recording found in `dir`.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, ExecError> {
        let entries = std::fs::read_dir(dir).map_err(|e| ExecError::Recording {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut paths: Vec<_> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        for path in &paths {
            self.add(&Recording::read(path)?)?;
        }
        Ok(paths.len())
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Executor for ReplayExecutor {
    fn execute_all(
        &self,
        task: &Task,
        candidates: &[CandidateProgram],
        inputs: &[InputValue],
    ) -> Result<Vec<ExecutionSignature>, ExecError> {
        check_preconditions(candidates, inputs)?;
        let keys: Vec<String> = inputs.iter().map(InputValue::canonical_key).collect();
        Ok(candidates
            .iter()
            .map(|c| ExecutionSignature {
                task_id: task.task_id.clone(),
                rank: c.rank,
                outcomes: keys
                    .iter()
                    .map(|k| {
                        self.table
                            .get(&(task.task_id.clone(), c.rank, k.clone()))
                            .cloned()
                            .unwrap_or_else(|| Outcome::abnormal(ErrorType::SandboxFailure))
                    })
                    .collect(),
            })
            .collect())
    }
}
