//! pass@1 and partial_pass@1 of the top-ranked candidate.

use serde::{Deserialize, Serialize};

use crate::corpus::Task;
use crate::executor::{canonical_wire_output, Outcome, OutcomeKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrectnessError {
    #[error("task {0:?} has no reference tests")]
    NoReferenceTests(String),
    #[error("task {task_id:?}: {got} outcomes for {expected} reference tests")]
    LengthMismatch { task_id: String, expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessTargets {
    pub pass1: bool,
    pub partial_pass1: f64,
}

/// Scores the rank-1 candidate's outcomes on the task's reference-test
/// inputs, in order. Expected outputs are canonicalized the same way
/// program outputs are; abnormal outcomes never match.
pub fn correctness(task: &Task, outcomes: &[Outcome]) -> Result<CorrectnessTargets, CorrectnessError> {
    let tests = &task.reference_tests;
    if tests.is_empty() {
        return Err(CorrectnessError::NoReferenceTests(task.task_id.clone()));
    }
    if outcomes.len() != tests.len() {
        return Err(CorrectnessError::LengthMismatch {
            task_id: task.task_id.clone(),
            expected: tests.len(),
            got: outcomes.len(),
        });
    }
    let matched = tests
        .iter()
        .zip(outcomes)
        .filter(|(test, outcome)| match (&outcome.kind, canonical_wire_output(&task.interface, &test.expected)) {
            (OutcomeKind::Normal(got), OutcomeKind::Normal(want)) => *got == want,
            _ => false,
        })
        .count();
    let partial_pass1 = matched as f64 / tests.len() as f64;
    Ok(CorrectnessTargets {
        pass1: matched == tests.len(),
        partial_pass1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Difficulty, InputValue, Language, ReferenceTest, TaskInterface};
    use crate::executor::ErrorType;
    use serde_json::json;

    fn stdin_task(expected: &[&str]) -> Task {
        Task {
            task_id: "abc326_b".into(),
            description: String::new(),
            interface: TaskInterface::Stdin,
            seed_inputs: vec![],
            reference_tests: expected
                .iter()
                .map(|e| ReferenceTest {
                    input: InputValue::stdin("x\n"),
                    expected: json!(e),
                })
                .collect(),
            difficulty: Difficulty::Unknown,
            language: Language::Python,
        }
    }

    #[test]
    fn all_match() {
        let t = stdin_task(&["320\n", "144", "600"]);
        let got = [Outcome::normal("320"), Outcome::normal("144"), Outcome::normal("600")];
        assert_eq!(correctness(&t, &got).unwrap(), CorrectnessTargets { pass1: true, partial_pass1: 1.0 });
    }

    #[test]
    fn two_of_three() {
        let t = stdin_task(&["320", "144", "600"]);
        let got = [Outcome::normal("320"), Outcome::normal("145"), Outcome::normal("600")];
        let c = correctness(&t, &got).unwrap();
        assert!(!c.pass1);
        assert!((c.partial_pass1 - 0.6667).abs() < 5e-5);
    }

    #[test]
    fn crashes_never_match() {
        let t = stdin_task(&["1", "2", "3"]);
        let got = vec![Outcome::abnormal(ErrorType::RuntimeError("ValueError".into())); 3];
        assert_eq!(correctness(&t, &got).unwrap(), CorrectnessTargets { pass1: false, partial_pass1: 0.0 });
    }

    #[test]
    fn function_outputs_compare_canonically() {
        let mut t = stdin_task(&[]);
        t.interface = TaskInterface::Function(crate::corpus::FunctionInterface {
            entry_name: "f".into(),
            parameters: vec![],
            returns: None,
        });
        t.reference_tests = vec![ReferenceTest {
            input: InputValue::args(vec![json!([1])]),
            expected: json!({"b": 0.1, "a": [1, 2]}),
        }];
        let got = [Outcome::normal(r#"{"a":[1,2],"b":0.100000000}"#)];
        assert!(correctness(&t, &got).unwrap().pass1);
    }

    #[test]
    fn errors() {
        assert!(matches!(correctness(&stdin_task(&[]), &[]), Err(CorrectnessError::NoReferenceTests(_))));
        assert!(matches!(correctness(&stdin_task(&["1"]), &[]), Err(CorrectnessError::LengthMismatch { .. })));
    }
}
