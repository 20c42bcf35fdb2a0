use std::path::Path;

use execdiv::corpus::{
    read_report, CandidateProgram, Corpus, Difficulty, FunctionInterface, InputValue, Language, Parameter, ReferenceTest,
    Task, TaskInterface,
};
use execdiv::executor::{ExecError, ExecutionSignature, Executor, Outcome, ReplayExecutor};
use execdiv::fuzzgen::{FuzzConfig, FuzzMode, TypeHint};
use execdiv::pipeline::{
    load_signature_cache, run_pipeline, write_outputs, PipelineConfig, INPUTS_DIR, MANIFEST_FILE, REFERENCE_DIR,
    REPORT_FILE, SIGNATURES_DIR,
};
use serde_json::{json, Value};

/// Ranks 1 to 6 return `2x`, the rest `x + x` except on zero.
struct Doubler;

impl Executor for Doubler {
    fn execute_all(
        &self,
        task: &Task,
        candidates: &[CandidateProgram],
        inputs: &[InputValue],
    ) -> Result<Vec<ExecutionSignature>, ExecError> {
        Ok(candidates
            .iter()
            .map(|c| ExecutionSignature {
                task_id: task.task_id.clone(),
                rank: c.rank,
                outcomes: inputs
                    .iter()
                    .map(|i| {
                        let x = match i {
                            InputValue::Value(Value::Array(a)) => a[0].as_i64().unwrap_or(0),
                            _ => 0,
                        };
                        let y = if c.rank <= 6 || x != 0 { 2 * x } else { -1 };
                        Outcome::normal(y.to_string())
                    })
                    .collect(),
            })
            .collect())
    }
}

fn corpus() -> Corpus {
    let tasks: Vec<Task> = ["double", "twice"]
        .iter()
        .map(|id| Task {
            task_id: id.to_string(),
            description: String::new(),
            interface: TaskInterface::Function(FunctionInterface {
                entry_name: "f".into(),
                parameters: vec![Parameter {
                    name: "x".into(),
                    declared_type: Some(TypeHint::Int),
                }],
                returns: Some(TypeHint::Int),
            }),
            seed_inputs: vec![InputValue::args(vec![json!(0)]), InputValue::args(vec![json!(5)])],
            reference_tests: vec![
                ReferenceTest {
                    input: InputValue::args(vec![json!(3)]),
                    expected: json!(6),
                },
                ReferenceTest {
                    input: InputValue::args(vec![json!(4)]),
                    expected: json!(9),
                },
            ],
            difficulty: Difficulty::Easy,
            language: Language::Python,
        })
        .collect();
    let candidates = tasks
        .iter()
        .flat_map(|t| {
            (1..=10).map(|rank| CandidateProgram {
                task_id: t.task_id.clone(),
                rank,
                source: String::new(),
            })
        })
        .collect();
    Corpus::new(tasks, candidates).unwrap()
}

fn config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        fuzz: FuzzConfig {
            rng_seed: seed,
            ..FuzzConfig::default()
        },
        ..PipelineConfig::default()
    }
}

#[test]
fn two_task_corpus_yields_two_complete_rows() {
    let out = run_pipeline(&corpus(), Path::new("mem"), &config(1), &Doubler, None).unwrap();
    assert_eq!(out.report.rows.len(), 2);
    for row in &out.report.rows {
        assert!(row.error.is_none());
        assert!(row.sde.is_some() && row.dsde.is_some() && row.diagnostics.is_some());
        assert_eq!(row.pass1, Some(false));
        assert_eq!(row.partial_pass1, Some(0.5));
    }
    let timings = &out.manifest.timings;
    let covered = timings.fuzzing_ms + timings.execution_ms + timings.metric_ms;
    assert!(covered <= timings.total_ms + 1e-9);
}

#[test]
fn fuzz_seed_sweep_changes_inputs_only() {
    let runs: Vec<_> = [1, 2, 3]
        .iter()
        .map(|&s| run_pipeline(&corpus(), Path::new("mem"), &config(s), &Doubler, None).unwrap())
        .collect();
    assert_ne!(runs[0].runs[0].inputs, runs[1].runs[0].inputs);
    assert_ne!(runs[1].runs[0].inputs, runs[2].runs[0].inputs);
    for (run, seed) in runs.iter().zip([1, 2, 3]) {
        assert_eq!(run.manifest.rng_seeds, vec![seed]);
        let again = run_pipeline(&corpus(), Path::new("mem"), &config(seed), &Doubler, None).unwrap();
        assert_eq!(again.report, run.report);
    }
}

#[test]
fn seed_free_mode_runs_without_seeds() {
    let mut cfg = config(4);
    cfg.fuzz.mode = FuzzMode::SeedFree;
    let out = run_pipeline(&corpus(), Path::new("mem"), &cfg, &Doubler, None).unwrap();
    assert_eq!(out.runs[0].inputs.len(), 10);
    assert!(out.report.rows.iter().all(|r| r.error.is_none()));
}

#[test]
fn cached_run_replays_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&corpus(), Path::new("mem"), &config(1), &Doubler, Some(dir.path())).unwrap();
    write_outputs(&out, dir.path()).unwrap();
    for name in [REPORT_FILE, MANIFEST_FILE, INPUTS_DIR, SIGNATURES_DIR, REFERENCE_DIR] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert_eq!(read_report(&dir.path().join(REPORT_FILE)).unwrap(), out.report);
    assert_eq!(load_signature_cache(dir.path()).unwrap().len(), 2);

    let mut replay = ReplayExecutor::new();
    replay.load_dir(&dir.path().join(SIGNATURES_DIR)).unwrap();
    replay.load_dir(&dir.path().join(REFERENCE_DIR)).unwrap();
    let cfg = PipelineConfig {
        inputs_dir: Some(dir.path().join(INPUTS_DIR)),
        ..config(99)
    };
    let again = run_pipeline(&corpus(), Path::new("mem"), &cfg, &replay, None).unwrap();
    assert_eq!(again.report, out.report);
}

#[test]
fn k_limits_the_candidates_used() {
    let cfg = PipelineConfig {
        k: Some(6),
        ..config(1)
    };
    let out = run_pipeline(&corpus(), Path::new("mem"), &cfg, &Doubler, None).unwrap();
    assert!(out.report.rows.iter().all(|r| r.clusters == vec![6]));
    assert!(out.report.rows.iter().all(|r| r.sde == Some(0.0)));
}
