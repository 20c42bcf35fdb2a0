//! Input-set quality diagnostics.

use std::collections::HashSet;

use super::ExecutionSignature;
use crate::corpus::{InputQuality, InputValue};

/// Computes, over one shared input set:
/// - valid execution rate: inputs on which at least one candidate ends normally;
/// - unique input rate: inputs distinct after canonical normalization;
/// - crash pollution rate: candidate-by-input cells that end abnormally.
pub fn diagnostics(signatures: &[ExecutionSignature], inputs: &[InputValue]) -> InputQuality {
    let n = inputs.len();
    if n == 0 {
        return InputQuality {
            valid_exec_rate: 0.0,
            unique_input_rate: 0.0,
            crash_pollution_rate: 0.0,
        };
    }
    let valid = (0..n)
        .filter(|&j| signatures.iter().any(|s| s.outcomes.get(j).is_some_and(|o| o.is_normal())))
        .count();
    let unique: HashSet<String> = inputs.iter().map(InputValue::canonical_key).collect();
    let cells = signatures.len() * n;
    let crashed: usize = signatures
        .iter()
        .map(|s| s.outcomes.iter().take(n).filter(|o| !o.is_normal()).count())
        .sum();
    InputQuality {
        valid_exec_rate: valid as f64 / n as f64,
        unique_input_rate: unique.len() as f64 / n as f64,
        crash_pollution_rate: if cells == 0 { 0.0 } else { crashed as f64 / cells as f64 },
    }
}
