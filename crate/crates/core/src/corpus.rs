//! Task corpora, candidate programs and the per-task JSONL report.
//!
//! A corpus directory holds `tasks.jsonl` and `candidates.jsonl`. Both are
//! line oriented; blank lines are skipped.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::fuzzgen::TypeHint;

pub const TASKS_FILE: &str = "tasks.jsonl";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("candidate references unknown task {0:?}")]
    MissingTask(String),
    #[error("task {task_id:?}: candidate ranks {ranks:?} are not exactly 1..={expected}")]
    RankGap {
        task_id: String,
        ranks: Vec<u32>,
        expected: usize,
    },
    #[error("duplicate task id {0:?}")]
    DuplicateTask(String),
    #[error("task {task_id:?}: {message}")]
    InvalidTask { task_id: String, message: String },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    #[default]
    Unknown,
}

impl Difficulty {
    pub fn as_str(&self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
            Difficulty::Unknown => "unknown",
        }
    }
}

impl Serialize for Difficulty {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Difficulty {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Option::<String>::deserialize(deserializer)?;
        Ok(match raw.as_deref().map(str::to_ascii_lowercase).as_deref() {
            Some("easy") => Difficulty::Easy,
            Some("medium") => Difficulty::Medium,
            Some("hard") => Difficulty::Hard,
            _ => Difficulty::Unknown,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub enum Language {
    #[default]
    Python,
    Java,
    Cpp,
    Other(String),
}

impl Language {
    pub fn as_str(&self) -> &str {
        match self {
            Language::Python => "python",
            Language::Java => "java",
            Language::Cpp => "cpp",
            Language::Other(name) => name,
        }
    }
}

impl Serialize for Language {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Language {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Ok(match raw.to_ascii_lowercase().as_str() {
            "python" | "python3" | "py" => Language::Python,
            "java" => Language::Java,
            "cpp" | "c++" => Language::Cpp,
            _ => Language::Other(raw),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub declared_type: Option<TypeHint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionInterface {
    pub entry_name: String,
    #[serde(default)]
    pub parameters: Vec<Parameter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub returns: Option<TypeHint>,
}

/// How a task's programs receive their input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskInterface {
    /// Called as a function with positional arguments.
    Function(FunctionInterface),
    /// A script reading standard input and writing standard output.
    Stdin,
}

impl TaskInterface {
    pub fn function(&self) -> Option<&FunctionInterface> {
        match self {
            TaskInterface::Function(f) => Some(f),
            TaskInterface::Stdin => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TaskInterface::Function(_) => "function",
            TaskInterface::Stdin => "stdin",
        }
    }
}

/// One element of an input set. Function tasks carry their positional
/// arguments as a JSON array; stdin tasks carry raw text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputValue {
    Value(Value),
    RawStdin(String),
}

impl InputValue {
    pub fn args(args: Vec<Value>) -> Self {
        InputValue::Value(Value::Array(args))
    }

    pub fn stdin(text: impl Into<String>) -> Self {
        InputValue::RawStdin(text.into())
    }

    /// Canonical text form: sorted-key compact JSON for value trees,
    /// normalized text for stdin.
    pub fn canonical_key(&self) -> String {
        match self {
            InputValue::Value(v) => format!("v:{}", crate::executor::canonical_json(v)),
            InputValue::RawStdin(s) => format!(
                "s:{}",
                crate::executor::normalize(s.as_bytes()).unwrap_or_else(|_| s.clone())
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTest {
    pub input: InputValue,
    /// Return value for function tasks, stdout text for stdin tasks.
    pub expected: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    #[serde(default)]
    pub description: String,
    pub interface: TaskInterface,
    #[serde(default)]
    pub seed_inputs: Vec<InputValue>,
    #[serde(default)]
    pub reference_tests: Vec<ReferenceTest>,
    #[serde(default)]
    pub difficulty: Difficulty,
    #[serde(default)]
    pub language: Language,
}

impl Task {
    /// Without seeds a task can only be fuzzed in seed-free mode.
    pub fn seed_free_only(&self) -> bool {
        self.seed_inputs.is_empty()
    }

    fn validate(&self) -> Result<(), String> {
        if self.task_id.is_empty() {
            return Err("task_id is empty".into());
        }
        let inputs = self
            .seed_inputs
            .iter()
            .chain(self.reference_tests.iter().map(|t| &t.input));
        for input in inputs {
            match (&self.interface, input) {
                (TaskInterface::Function(_), InputValue::Value(Value::Array(_))) => {}
                (TaskInterface::Function(_), _) => {
                    return Err("function-task inputs must be JSON arrays of positional arguments".into())
                }
                (TaskInterface::Stdin, InputValue::RawStdin(_)) => {}
                (TaskInterface::Stdin, _) => return Err("stdin-task inputs must use raw_stdin".into()),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateProgram {
    pub task_id: String,
    /// 1 is the first sample, the output a user would be shown.
    pub rank: u32,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    tasks: Vec<Task>,
    candidates: Vec<CandidateProgram>,
    ranges: Vec<Range<usize>>,
}

impl Corpus {
    /// Validates and groups candidates by task (in task order) then rank.
    pub fn new(tasks: Vec<Task>, mut candidates: Vec<CandidateProgram>) -> Result<Self, CorpusError> {
        let mut index = BTreeMap::new();
        for (i, task) in tasks.iter().enumerate() {
            task.validate().map_err(|message| CorpusError::InvalidTask {
                task_id: task.task_id.clone(),
                message,
            })?;
            if index.insert(task.task_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateTask(task.task_id.clone()));
            }
        }
        for c in &candidates {
            if !index.contains_key(&c.task_id) {
                return Err(CorpusError::MissingTask(c.task_id.clone()));
            }
        }
        candidates.sort_by_key(|c| (index[&c.task_id], c.rank));

        let mut ranges = Vec::with_capacity(tasks.len());
        let mut start = 0;
        for (i, task) in tasks.iter().enumerate() {
            let end = start + candidates[start..].iter().take_while(|c| index[&c.task_id] == i).count();
            let ranks: Vec<u32> = candidates[start..end].iter().map(|c| c.rank).collect();
            if !ranks.iter().copied().eq(1..=ranks.len() as u32) {
                return Err(CorpusError::RankGap {
                    task_id: task.task_id.clone(),
                    ranks,
                    expected: end - start,
                });
            }
            ranges.push(start..end);
            start = end;
        }
        Ok(Corpus {
            tasks,
            candidates,
            ranges,
        })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn candidates(&self) -> &[CandidateProgram] {
        &self.candidates
    }

    pub fn task(&self, task_id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    /// Candidates of the task at `index`, ordered by rank.
    pub fn candidates_at(&self, index: usize) -> &[CandidateProgram] {
        &self.candidates[self.ranges[index].clone()]
    }

    pub fn candidates_for(&self, task_id: &str) -> &[CandidateProgram] {
        match self.tasks.iter().position(|t| t.task_id == task_id) {
            Some(i) => self.candidates_at(i),
            None => &[],
        }
    }

    /// Iterates `(task, candidates)` pairs in corpus order.
    pub fn iter(&self) -> impl Iterator<Item = (&Task, &[CandidateProgram])> {
        self.tasks.iter().zip(self.ranges.iter().map(|r| &self.candidates[r.clone()]))
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Loads `tasks.jsonl` and `candidates.jsonl` from `dir`. Candidate
/// sources are passed through [`strip_code_fences`].
pub fn load_corpus(dir: &Path) -> Result<Corpus, CorpusError> {
    let tasks: Vec<Task> = read_jsonl(&dir.join(TASKS_FILE))?;
    let mut candidates: Vec<CandidateProgram> = read_jsonl(&dir.join(CANDIDATES_FILE))?;
    for c in &mut candidates {
        let cleaned = strip_code_fences(&c.source);
        if cleaned.len() != c.source.len() {
            c.source = cleaned;
        }
    }
    Corpus::new(tasks, candidates)
}

pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    let tasks = dir.join(TASKS_FILE);
    write_jsonl(&tasks, corpus.tasks()).map_err(|e| CorpusError::io(&tasks, e))?;
    let cands = dir.join(CANDIDATES_FILE);
    write_jsonl(&cands, corpus.candidates()).map_err(|e| CorpusError::io(&cands, e))
}

/// Returns the body of the first fenced code block, or the text unchanged
/// when it contains no fence line.
pub fn strip_code_fences(text: &str) -> String {
    let mut lines = text.lines();
    if !lines.clone().any(|l| l.trim_start().starts_with("```")) {
        return text.to_string();
    }
    let body: Vec<&str> = lines
        .by_ref()
        .skip_while(|l| !l.trim_start().starts_with("```"))
        .skip(1)
        .take_while(|l| !l.trim_start().starts_with("```"))
        .collect();
    let mut out = body.join("\n");
    out.push('\n');
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputQuality {
    pub valid_exec_rate: f64,
    pub unique_input_rate: f64,
    pub crash_pollution_rate: f64,
}

/// One line of `report.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task_id: String,
    pub sde: Option<f64>,
    pub dsde: Option<f64>,
    pub baseline_sc_entropy: Option<f64>,
    /// Cluster sizes in partition order.
    pub clusters: Vec<usize>,
    pub dominant_index: Option<usize>,
    pub pass1: Option<bool>,
    pub partial_pass1: Option<f64>,
    pub diagnostics: Option<InputQuality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReportRow {
    pub fn failed(task_id: impl Into<String>, error: impl Into<String>) -> Self {
        ReportRow {
            task_id: task_id.into(),
            sde: None,
            dsde: None,
            baseline_sc_entropy: None,
            clusters: Vec::new(),
            dominant_index: None,
            pass1: None,
            partial_pass1: None,
            diagnostics: None,
            error: Some(error.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
}

impl RunReport {
    pub fn has_errors(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_some())
    }
}

pub fn write_report(report: &RunReport, path: &Path) -> Result<(), CorpusError> {
    write_jsonl(path, &report.rows).map_err(|e| CorpusError::io(path, e))
}

pub fn read_report(path: &Path) -> Result<RunReport, CorpusError> {
    Ok(RunReport {
        rows: read_jsonl(path)?,
    })
}

/// Makes a task id safe to use as a file stem.
pub fn file_stem(task_id: &str) -> String {
    task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Task ids that share a sanitized file stem (their caches would collide).
pub fn colliding_stems(tasks: &[Task]) -> BTreeSet<String> {
    let mut seen = HashSet::new();
    tasks
        .iter()
        .map(|t| file_stem(&t.task_id))
        .filter(|s| !seen.insert(s.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn task(id: &str) -> Task {
        Task {
            task_id: id.into(),
            description: String::new(),
            interface: TaskInterface::Function(FunctionInterface {
                entry_name: "f".into(),
                parameters: vec![Parameter {
                    name: "x".into(),
                    declared_type: Some(TypeHint::Int),
                }],
                returns: None,
            }),
            seed_inputs: vec![InputValue::args(vec![json!(1)])],
            reference_tests: vec![],
            difficulty: Difficulty::Unknown,
            language: Language::Python,
        }
    }

    fn cand(id: &str, rank: u32) -> CandidateProgram {
        CandidateProgram {
            task_id: id.into(),
            rank,
            source: format!("def f(x):\n    return x + {rank}\n"),
        }
    }

    #[test]
    fn groups_by_task_then_rank() {
        let cands = vec![cand("b", 2), cand("a", 1), cand("b", 1)];
        let corpus = Corpus::new(vec![task("a"), task("b")], cands).unwrap();
        assert_eq!(corpus.candidates_for("b").iter().map(|c| c.rank).collect::<Vec<_>>(), [1, 2]);
        assert_eq!(corpus.candidates_for("a").len(), 1);
    }

    #[test]
    fn unknown_task_is_rejected() {
        let err = Corpus::new(vec![task("a")], vec![cand("zzz", 1)]).unwrap_err();
        assert!(matches!(err, CorpusError::MissingTask(ref id) if id == "zzz"));
    }

    #[test]
    fn rank_gap_is_rejected() {
        let cands = vec![cand("a", 1), cand("a", 2), cand("a", 4)];
        let err = Corpus::new(vec![task("a")], cands).unwrap_err();
        assert!(matches!(err, CorpusError::RankGap { .. }));
        let dup = vec![cand("a", 1), cand("a", 1)];
        assert!(matches!(Corpus::new(vec![task("a")], dup), Err(CorpusError::RankGap { .. })));
    }

    #[test]
    fn duplicate_and_empty_ids_are_rejected() {
        assert!(matches!(
            Corpus::new(vec![task("a"), task("a")], vec![]),
            Err(CorpusError::DuplicateTask(_))
        ));
        assert!(matches!(Corpus::new(vec![task("")], vec![]), Err(CorpusError::InvalidTask { .. })));
    }

    #[test]
    fn difficulty_defaults_to_unknown() {
        let t: Task = serde_json::from_value(json!({
            "task_id": "t", "interface": "stdin", "difficulty": "impossible"
        }))
        .unwrap();
        assert_eq!(t.difficulty, Difficulty::Unknown);
        assert_eq!(t.language, Language::Python);
    }

    #[test]
    fn fences_are_stripped_once() {
        let raw = "Here you go:\n```python\ndef f(x):\n    return x\n```\nThanks";
        assert_eq!(strip_code_fences(raw), "def f(x):\n    return x\n");
        let clean = "def f(x):\n    return x\n";
        assert_eq!(strip_code_fences(clean), clean);
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(TASKS_FILE), "\n{\"task_id\": \"a\", \"interface\": \"stdin\"}\n{oops\n").unwrap();
        fs::write(dir.path().join(CANDIDATES_FILE), "").unwrap();
        match load_corpus(dir.path()).unwrap_err() {
            CorpusError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn report_writes_are_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.jsonl");
        write_report(&RunReport::default(), &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"");

        let report = RunReport {
            rows: (0..3).map(|i| ReportRow::failed(format!("t{i}"), "boom")).collect(),
        };
        write_report(&report, &path).unwrap();
        let first = fs::read(&path).unwrap();
        write_report(&report, &path).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
        let text = String::from_utf8(first).unwrap();
        assert_eq!(text.lines().count(), 3);
        for line in text.lines() {
            serde_json::from_str::<Value>(line).unwrap();
        }
        assert_eq!(read_report(&path).unwrap(), report);
    }
}
