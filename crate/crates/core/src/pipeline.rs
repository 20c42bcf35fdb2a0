//! Stages 2 to 4 end to end: fuzz inputs, execute, cluster and score.
//!
//! Each stage runs over all tasks before the next starts, so the manifest
//! timings are wall-clock spans of whole stages. Per-task failures become
//! flagged report rows; only configuration and I/O problems abort a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::{partition, ClusterPartition};
use crate::corpus::{file_stem, write_report, CandidateProgram, Corpus, InputValue, ReportRow, RunReport, Task};
use crate::eval::correctness;
use crate::executor::{diagnostics, ErrorType, ExecConfig, ExecutionSignature, Executor, OutcomeKind, Recording};
use crate::fuzzgen::{generate_inputs, load_inputs, save_inputs, FuzzConfig, InputSet};
use crate::metrics::{score, DistanceWeights};
use crate::par;

pub const INPUTS_DIR: &str = "inputs";
pub const SIGNATURES_DIR: &str = "signatures";
pub const REFERENCE_DIR: &str = "reference";
pub const REPORT_FILE: &str = "report.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub fuzz: FuzzConfig,
    pub exec: ExecConfig,
    pub weights: DistanceWeights,
    /// Use only ranks `1..=k` of each task; all candidates when unset.
    pub k: Option<usize>,
    /// Tasks processed concurrently.
    pub jobs: usize,
    /// Read inputs from `<dir>/<task>.json` instead of fuzzing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fuzz: FuzzConfig::default(),
            exec: ExecConfig::default(),
            weights: DistanceWeights::default(),
            k: Some(10),
            jobs: 1,
            inputs_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    /// Candidates come pre-sampled, so this is normally absent.
    pub sampling_ms: Option<f64>,
    pub fuzzing_ms: f64,
    pub execution_ms: f64,
    pub metric_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub corpus_path: PathBuf,
    pub fuzz: FuzzConfig,
    pub exec: ExecConfig,
    pub weights: DistanceWeights,
    pub k: Option<usize>,
    pub jobs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs_dir: Option<PathBuf>,
    pub rng_seeds: Vec<u64>,
    pub versions: BTreeMap<String, String>,
    pub n_tasks: usize,
    pub n_flagged: usize,
    pub warnings: Vec<String>,
    pub timings: StageTimings,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Everything a run produced for one task.
#[derive(Debug, Clone)]
pub struct TaskRun {
    pub inputs: Vec<InputValue>,
    pub signatures: Vec<ExecutionSignature>,
    pub partition: Option<ClusterPartition>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: RunReport,
    pub manifest: RunManifest,
    pub runs: Vec<TaskRun>,
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

struct Executed {
    signatures: Result<Vec<ExecutionSignature>, String>,
    reference: Option<Result<Vec<ExecutionSignature>, String>>,
}

fn selected(candidates: &[CandidateProgram], k: Option<usize>) -> &[CandidateProgram] {
    match k {
        Some(k) => &candidates[..k.min(candidates.len())],
        None => candidates,
    }
}

fn run_reference(executor: &dyn Executor, task: &Task, candidates: &[CandidateProgram]) -> Option<Result<Vec<ExecutionSignature>, String>> {
    if task.reference_tests.is_empty() {
        return None;
    }
    let top: Vec<CandidateProgram> = candidates.iter().filter(|c| c.rank == 1).cloned().collect();
    let inputs: Vec<InputValue> = task.reference_tests.iter().map(|t| t.input.clone()).collect();
    Some(executor.execute_all(task, &top, &inputs).map_err(|e| e.to_string()))
}

fn has_sandbox_failure(signatures: &[ExecutionSignature]) -> bool {
    signatures
        .iter()
        .flat_map(|s| &s.outcomes)
        .any(|o| o.kind == OutcomeKind::Abnormal(ErrorType::SandboxFailure))
}

fn build_row(
    task: &Task,
    inputs: &[InputValue],
    executed: &Executed,
    weights: &DistanceWeights,
) -> (ReportRow, Option<ClusterPartition>) {
    let signatures = match &executed.signatures {
        Ok(s) => s,
        Err(e) => return (ReportRow::failed(&task.task_id, format!("execution: {e}")), None),
    };
    let part = match partition(signatures) {
        Ok(p) => p,
        Err(e) => return (ReportRow::failed(&task.task_id, format!("clustering: {e}")), None),
    };
    let scores = match score(&part, weights) {
        Ok(s) => s,
        Err(e) => return (ReportRow::failed(&task.task_id, format!("metrics: {e}")), Some(part)),
    };
    let mut row = ReportRow {
        task_id: task.task_id.clone(),
        sde: Some(scores.sde),
        dsde: Some(scores.dsde),
        baseline_sc_entropy: Some(scores.sc_entropy),
        clusters: part.sizes(),
        dominant_index: Some(part.dominant_index),
        pass1: None,
        partial_pass1: None,
        diagnostics: Some(diagnostics(signatures, inputs)),
        error: None,
    };
    let mut problems = Vec::new();
    match &executed.reference {
        Some(Ok(top)) => match top.first().map(|s| correctness(task, &s.outcomes)) {
            Some(Ok(c)) => {
                row.pass1 = Some(c.pass1);
                row.partial_pass1 = Some(c.partial_pass1);
                if has_sandbox_failure(top) {
                    problems.push("sandbox failure on reference tests".to_string());
                }
            }
            Some(Err(e)) => problems.push(format!("correctness: {e}")),
            None => problems.push("no rank-1 candidate for reference tests".to_string()),
        },
        Some(Err(e)) => problems.push(format!("reference execution: {e}")),
        None => {}
    }
    if has_sandbox_failure(signatures) {
        problems.push("sandbox failure during execution".to_string());
    }
    if !signatures.iter().flat_map(|s| &s.outcomes).any(|o| o.is_normal()) {
        problems.push("no candidate ended normally on any input".to_string());
    }
    if !problems.is_empty() {
        row.error = Some(problems.join("; "));
    }
    (row, Some(part))
}

/// Runs fuzzing, execution and scoring for every task in the corpus. When
/// `cache_dir` is given, inputs and signatures are written under it.
pub fn run_pipeline(
    corpus: &Corpus,
    corpus_path: &Path,
    config: &PipelineConfig,
    executor: &dyn Executor,
    cache_dir: Option<&Path>,
) -> Result<PipelineOutput, PipelineError> {
    config.fuzz.validate().map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    config.weights.validate().map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    if config.jobs == 0 {
        return Err(PipelineError::InvalidConfig("jobs must be at least 1".into()));
    }
    if config.k == Some(0) {
        return Err(PipelineError::InvalidConfig("k must be at least 1".into()));
    }
    let total = Instant::now();
    let tasks = corpus.tasks();
    let indices: Vec<usize> = (0..tasks.len()).collect();
    if let Some(dir) = cache_dir {
        for sub in [INPUTS_DIR, SIGNATURES_DIR, REFERENCE_DIR] {
            let path = dir.join(sub);
            std::fs::create_dir_all(&path).map_err(|e| io_error(&path, e))?;
        }
    }

    let start = Instant::now();
    let fuzzed: Vec<Result<InputSet, String>> = par::map_bounded(config.jobs, &indices, |&i| {
        match &config.inputs_dir {
            Some(dir) => load_inputs(dir, &tasks[i].task_id).map(|inputs| InputSet { inputs, warning: None }),
            None => generate_inputs(&tasks[i], &config.fuzz),
        }
        .map_err(|e| e.to_string())
    });
    let reused = |dir: &Path| config.inputs_dir.as_deref() == Some(dir.join(INPUTS_DIR).as_path());
    if let Some(dir) = cache_dir.filter(|d| !reused(d)) {
        for (task, set) in tasks.iter().zip(&fuzzed) {
            if let Ok(set) = set {
                save_inputs(&dir.join(INPUTS_DIR), &task.task_id, &set.inputs).map_err(|e| io_error(dir, e))?;
            }
        }
    }
    let fuzzing_ms = ms_since(start);

    let start = Instant::now();
    let executed: Vec<Option<Executed>> = par::map_bounded(config.jobs, &indices, |&i| {
        let inputs = fuzzed[i].as_ref().ok()?;
        let candidates = selected(corpus.candidates_at(i), config.k);
        Some(Executed {
            signatures: executor
                .execute_all(&tasks[i], candidates, &inputs.inputs)
                .map_err(|e| e.to_string()),
            reference: run_reference(executor, &tasks[i], candidates),
        })
    });
    if let Some(dir) = cache_dir {
        for ((task, set), ex) in tasks.iter().zip(&fuzzed).zip(&executed) {
            let (Ok(set), Some(ex)) = (set, ex) else { continue };
            let stem = format!("{}.json", file_stem(&task.task_id));
            if let Ok(signatures) = &ex.signatures {
                let path = dir.join(SIGNATURES_DIR).join(&stem);
                Recording {
                    task_id: task.task_id.clone(),
                    inputs: set.inputs.clone(),
                    signatures: signatures.clone(),
                }
                .write(&path)
                .map_err(|e| io_error(&path, e))?;
            }
            if let Some(Ok(signatures)) = &ex.reference {
                let path = dir.join(REFERENCE_DIR).join(&stem);
                Recording {
                    task_id: task.task_id.clone(),
                    inputs: task.reference_tests.iter().map(|t| t.input.clone()).collect(),
                    signatures: signatures.clone(),
                }
                .write(&path)
                .map_err(|e| io_error(&path, e))?;
            }
        }
    }
    let execution_ms = ms_since(start);

    let start = Instant::now();
    let mut rows = Vec::with_capacity(tasks.len());
    let mut runs = Vec::with_capacity(tasks.len());
    let mut warnings = Vec::new();
    for ((task, set), ex) in tasks.iter().zip(&fuzzed).zip(&executed) {
        match (set, ex) {
            (Err(e), _) => {
                rows.push(ReportRow::failed(&task.task_id, format!("fuzzing: {e}")));
                runs.push(TaskRun {
                    inputs: Vec::new(),
                    signatures: Vec::new(),
                    partition: None,
                });
            }
            (Ok(set), Some(ex)) => {
                if let Some(w) = &set.warning {
                    warnings.push(format!("{}: {w}", task.task_id));
                }
                let (row, part) = build_row(task, &set.inputs, ex, &config.weights);
                rows.push(row);
                runs.push(TaskRun {
                    inputs: set.inputs.clone(),
                    signatures: ex.signatures.clone().unwrap_or_default(),
                    partition: part,
                });
            }
            (Ok(_), None) => unreachable!("executed whenever fuzzing succeeded"),
        }
    }
    let metric_ms = ms_since(start);

    let report = RunReport { rows };
    let manifest = RunManifest {
        corpus_path: corpus_path.to_path_buf(),
        fuzz: config.fuzz.clone(),
        exec: config.exec.clone(),
        weights: config.weights,
        k: config.k,
        jobs: config.jobs,
        inputs_dir: config.inputs_dir.clone(),
        rng_seeds: vec![config.fuzz.rng_seed],
        versions: [("execdiv".to_string(), env!("CARGO_PKG_VERSION").to_string())].into(),
        n_tasks: tasks.len(),
        n_flagged: report.rows.iter().filter(|r| r.error.is_some()).count(),
        warnings,
        timings: StageTimings {
            sampling_ms: None,
            fuzzing_ms,
            execution_ms,
            metric_ms,
            total_ms: ms_since(total),
        },
    };
    Ok(PipelineOutput { report, manifest, runs })
}

/// Writes `report.jsonl` and `manifest.json` into `dir`.
pub fn write_outputs(output: &PipelineOutput, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let report_path = dir.join(REPORT_FILE);
    write_report(&output.report, &report_path).map_err(|e| io_error(&report_path, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&output.manifest).map_err(|e| io_error(&manifest_path, e))?;
    std::fs::write(&manifest_path, text + "\n").map_err(|e| io_error(&manifest_path, e))
}

/// Reads the signature recordings cached by a run.
pub fn load_signature_cache(dir: &Path) -> Result<BTreeMap<String, Recording>, PipelineError> {
    let sig_dir = dir.join(SIGNATURES_DIR);
    let entries = std::fs::read_dir(&sig_dir).map_err(|e| io_error(&sig_dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(&sig_dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let rec = Recording::read(&path).map_err(|e| io_error(&path, e))?;
            out.insert(rec.task_id.clone(), rec);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Difficulty, FunctionInterface, Language, ReferenceTest, TaskInterface};
    use crate::executor::{Outcome, ReplayExecutor};
    use crate::fuzzgen::FuzzMode;
    use serde_json::json;

    fn task(id: &str, seeds: bool) -> Task {
        Task {
            task_id: id.into(),
            description: "add one".into(),
            interface: TaskInterface::Function(FunctionInterface {
                entry_name: "f".into(),
                parameters: vec![crate::corpus::Parameter {
                    name: "x".into(),
                    declared_type: Some(crate::fuzzgen::TypeHint::Int),
                }],
                returns: None,
            }),
            seed_inputs: if seeds { vec![InputValue::args(vec![json!(3)])] } else { vec![] },
            reference_tests: vec![ReferenceTest {
                input: InputValue::args(vec![json!(1)]),
                expected: json!(2),
            }],
            difficulty: Difficulty::Easy,
            language: Language::Python,
        }
    }

    fn cands(id: &str, k: u32) -> Vec<CandidateProgram> {
        (1..=k)
            .map(|rank| CandidateProgram {
                task_id: id.into(),
                rank,
                source: String::new(),
            })
            .collect()
    }

    /// Echoes `x + 1` for ranks up to `good`, `x + 2` beyond.
    struct Arith {
        good: u32,
    }

    impl Executor for Arith {
        fn execute_all(
            &self,
            task: &Task,
            candidates: &[CandidateProgram],
            inputs: &[InputValue],
        ) -> Result<Vec<ExecutionSignature>, crate::executor::ExecError> {
            Ok(candidates
                .iter()
                .map(|c| ExecutionSignature {
                    task_id: task.task_id.clone(),
                    rank: c.rank,
                    outcomes: inputs
                        .iter()
                        .map(|i| {
                            let InputValue::Value(v) = i else { unreachable!() };
                            let x = v[0].as_i64().unwrap();
                            Outcome::normal((x + if c.rank <= self.good { 1 } else { 2 }).to_string())
                        })
                        .collect(),
                })
                .collect())
        }
    }

    #[test]
    fn rows_scores_and_flags() {
        let mut all = cands("a", 10);
        all.extend(cands("b", 10));
        let corpus = Corpus::new(vec![task("a", true), task("b", false)], all).unwrap();
        let out = run_pipeline(&corpus, Path::new("c"), &PipelineConfig::default(), &Arith { good: 8 }, None).unwrap();
        let rows = &out.report.rows;
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].clusters, vec![8, 2]);
        assert!((rows[0].sde.unwrap() - 0.16).abs() < 1e-12);
        assert!((rows[0].dsde.unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(rows[0].pass1, Some(true));
        assert!(rows[0].error.is_none());
        assert!(rows[1].error.as_deref().unwrap().contains("fuzzing"));
        assert_eq!(out.manifest.n_flagged, 1);
    }

    #[test]
    fn missing_recordings_are_flagged() {
        let corpus = Corpus::new(vec![task("a", true)], cands("a", 3)).unwrap();
        let config = PipelineConfig {
            fuzz: FuzzConfig {
                mode: FuzzMode::SeedFree,
                ..FuzzConfig::default()
            },
            ..PipelineConfig::default()
        };
        let out = run_pipeline(&corpus, Path::new("c"), &config, &ReplayExecutor::new(), None).unwrap();
        let err = out.report.rows[0].error.as_deref().unwrap();
        assert!(err.contains("sandbox failure"), "{err}");
    }

    #[test]
    fn caches_round_trip() {
        let corpus = Corpus::new(vec![task("a", true)], cands("a", 4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_pipeline(&corpus, Path::new("c"), &PipelineConfig::default(), &Arith { good: 3 }, Some(dir.path())).unwrap();
        write_outputs(&out, dir.path()).unwrap();
        let cache = load_signature_cache(dir.path()).unwrap();
        assert_eq!(cache["a"].signatures, out.runs[0].signatures);
        let mut replay = ReplayExecutor::new();
        replay.load_dir(&dir.path().join(SIGNATURES_DIR)).unwrap();
        replay.load_dir(&dir.path().join(REFERENCE_DIR)).unwrap();
        let again = run_pipeline(&corpus, Path::new("c"), &PipelineConfig::default(), &replay, None).unwrap();
        assert_eq!(again.report, out.report);
        assert!(dir.path().join(MANIFEST_FILE).exists());
        let reuse = PipelineConfig {
            inputs_dir: Some(dir.path().join(INPUTS_DIR)),
            fuzz: FuzzConfig {
                rng_seed: 99,
                ..FuzzConfig::default()
            },
            ..PipelineConfig::default()
        };
        let third = run_pipeline(&corpus, Path::new("c"), &reuse, &replay, Some(dir.path())).unwrap();
        assert_eq!(third.runs[0].inputs, out.runs[0].inputs);
        assert_eq!(third.report, out.report);
    }

    #[test]
    fn rejects_bad_config() {
        let corpus = Corpus::new(vec![task("a", true)], cands("a", 1)).unwrap();
        let config = PipelineConfig {
            jobs: 0,
            ..PipelineConfig::default()
        };
        assert!(matches!(
            run_pipeline(&corpus, Path::new("c"), &config, &Arith { good: 1 }, None),
            Err(PipelineError::InvalidConfig(_))
        ));
    }
}
