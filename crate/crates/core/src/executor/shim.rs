//! Subprocess orchestration over the shim's JSON-lines protocol.
//!
//! The orchestrator writes `{"id": k, "args": [...]}` or
//! `{"id": k, "stdin": "..."}` and expects exactly one response line,
//! `{"id": k, "status": "ok", "output": ...}` or
//! `{"id": k, "status": "error", "error_type": "<class>"}`. The timeout is
//! enforced here: on expiry the process is killed. After any abnormal cell
//! the shim is restarted so crashed state never leaks into later inputs.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde_json::Value;

use super::compiled::run_compiled;
use super::{
    canonical_json, check_preconditions, normalize, ErrorType, ExecConfig, ExecError, ExecutionSignature, Executor,
    Outcome, OutcomeKind,
};
use crate::corpus::{CandidateProgram, InputValue, Language, Task, TaskInterface};
use crate::par;

#[derive(Debug, Clone)]
pub struct SubprocessExecutor {
    config: ExecConfig,
}

impl SubprocessExecutor {
    pub fn new(config: ExecConfig) -> Result<Self, ExecError> {
        config.validate()?;
        Ok(SubprocessExecutor { config })
    }

    pub fn config(&self) -> &ExecConfig {
        &self.config
    }
}

impl Executor for SubprocessExecutor {
    fn execute_all(
        &self,
        task: &Task,
        candidates: &[CandidateProgram],
        inputs: &[InputValue],
    ) -> Result<Vec<ExecutionSignature>, ExecError> {
        check_preconditions(candidates, inputs)?;
        let outcomes = par::map_bounded(self.config.max_parallel_workers, candidates, |candidate| {
            match task.language {
                Language::Cpp | Language::Java => run_compiled(&self.config, task, candidate, inputs),
                _ => run_with_shim(&self.config, task, candidate, inputs),
            }
        });
        Ok(candidates
            .iter()
            .zip(outcomes)
            .map(|(c, outcomes)| ExecutionSignature {
                task_id: task.task_id.clone(),
                rank: c.rank,
                outcomes,
            })
            .collect())
    }
}

pub(super) fn millis(d: Duration) -> u64 {
    d.as_millis().min(u64::MAX as u128) as u64
}

/// Applies the optional address-space cap to a child before exec.
pub(super) fn apply_memory_cap(cmd: &mut Command, memory_cap_mb: Option<u64>) {
    #[cfg(unix)]
    if let Some(mb) = memory_cap_mb {
        use std::os::unix::process::CommandExt;
        let bytes = mb.saturating_mul(1024 * 1024) as libc::rlim_t;
        // SAFETY: setrlimit is async-signal-safe and touches no parent state.
        unsafe {
            cmd.pre_exec(move || {
                let limit = libc::rlimit {
                    rlim_cur: bytes,
                    rlim_max: bytes,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &limit) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }
    #[cfg(not(unix))]
    let _ = (cmd, memory_cap_mb);
}

/// Abnormal outcome for a child that exited without answering.
pub(super) fn exit_error(status: Option<ExitStatus>) -> ErrorType {
    let Some(status) = status else {
        return ErrorType::SandboxFailure;
    };
    if let Some(code) = status.code() {
        return ErrorType::NonzeroExit(code);
    }
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(sig) = status.signal() {
            return ErrorType::NonzeroExit(128 + sig);
        }
    }
    ErrorType::SandboxFailure
}

struct ShimSession {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    reader: Option<JoinHandle<()>>,
}

enum Reply {
    Line(String),
    TimedOut,
    Closed,
}

impl ShimSession {
    fn spawn(config: &ExecConfig, candidate_file: &Path, task: &Task) -> std::io::Result<Self> {
        let shim = &config.shim_path;
        let interpreter = config.shim_interpreter.clone().or_else(|| {
            (shim.extension().and_then(|e| e.to_str()) == Some("py")).then(|| "python3".to_string())
        });
        let mut cmd = match &interpreter {
            Some(interp) => {
                let mut c = Command::new(interp);
                c.arg(shim);
                c
            }
            None => Command::new(shim),
        };
        cmd.arg(candidate_file).arg("--task-kind").arg(task.interface.kind());
        if let TaskInterface::Function(f) = &task.interface {
            cmd.arg("--entry").arg(&f.entry_name);
        }
        cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::null());
        apply_memory_cap(&mut cmd, config.memory_cap_mb);
        let mut child = cmd.spawn()?;
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        let reader = std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) | Err(_) => break,
                    Ok(_) => {
                        if tx.send(line).is_err() {
                            break;
                        }
                    }
                }
            }
        });
        Ok(ShimSession {
            stdin: child.stdin.take(),
            child,
            lines: rx,
            reader: Some(reader),
        })
    }

    /// Waits until the shim is blocked reading its first request, so
    /// interpreter startup and candidate import are not timed. Gives up
    /// silently where `/proc` is unavailable.
    fn wait_ready(&mut self, limit: Duration) {
        let pid = self.child.id();
        let give_up = Instant::now() + limit;
        while Instant::now() < give_up {
            match blocked_on_stdin(pid) {
                Some(true) => return,
                Some(false) => {}
                None => return,
            }
            if !matches!(self.child.try_wait(), Ok(None)) {
                return;
            }
            std::thread::sleep(Duration::from_millis(1));
        }
    }

    fn request(&mut self, line: &str, deadline: Instant) -> Reply {
        let Some(stdin) = self.stdin.as_mut() else {
            return Reply::Closed;
        };
        if stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()).is_err() {
            return Reply::Closed;
        }
        loop {
            let now = Instant::now();
            if now >= deadline {
                return Reply::TimedOut;
            }
            match self.lines.recv_timeout(deadline - now) {
                Ok(line) => return Reply::Line(line),
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => return Reply::Closed,
            }
        }
    }

    fn kill(mut self) -> Option<ExitStatus> {
        let _ = self.child.kill();
        self.finish()
    }

    /// Closes stdin and waits briefly for a clean exit before killing.
    fn close(mut self) {
        self.stdin.take();
        let waited = wait_timeout::ChildExt::wait_timeout(&mut self.child, Duration::from_millis(500));
        if !matches!(waited, Ok(Some(_))) {
            let _ = self.child.kill();
        }
        self.finish();
    }

    /// Status of a child whose pipe already closed.
    fn exited(mut self) -> Option<ExitStatus> {
        self.stdin.take();
        match wait_timeout::ChildExt::wait_timeout(&mut self.child, Duration::from_millis(1000)) {
            Ok(Some(status)) => {
                self.finish();
                Some(status)
            }
            _ => self.kill(),
        }
    }

    fn finish(&mut self) -> Option<ExitStatus> {
        self.stdin.take();
        let status = self.child.wait().ok();
        // Detached: a grandchild may still hold the pipe open.
        self.reader.take();
        status
    }
}

#[cfg(target_arch = "x86_64")]
const READ_SYSCALL: Option<&str> = Some("0");
#[cfg(target_arch = "aarch64")]
const READ_SYSCALL: Option<&str> = Some("63");
#[cfg(not(any(target_arch = "x86_64", target_arch = "aarch64")))]
const READ_SYSCALL: Option<&str> = None;

/// `Some(true)` when the process sits in `read(0, ..)`, `None` when this
/// cannot be observed.
fn blocked_on_stdin(pid: u32) -> Option<bool> {
    if let (Some(nr), Ok(text)) = (READ_SYSCALL, std::fs::read_to_string(format!("/proc/{pid}/syscall"))) {
        let mut fields = text.split_whitespace();
        return Some(fields.next() == Some(nr) && fields.next() == Some("0x0"));
    }
    let wchan = std::fs::read_to_string(format!("/proc/{pid}/wchan")).ok()?;
    Some(wchan.contains("pipe_read"))
}

fn request_line(id: usize, input: &InputValue) -> String {
    let (key, payload) = match input {
        InputValue::Value(Value::Array(args)) => ("args", Value::Array(args.clone())),
        InputValue::Value(other) => ("args", Value::Array(vec![other.clone()])),
        InputValue::RawStdin(text) => ("stdin", Value::String(text.clone())),
    };
    format!("{{\"id\":{id},\"{key}\":{payload}}}\n")
}

/// Canonical form of a wire output: stdout text for stdin tasks, a JSON
/// value for function tasks.
pub fn canonical_wire_output(interface: &TaskInterface, output: &Value) -> OutcomeKind {
    let text = match (interface, output) {
        (TaskInterface::Stdin, Value::String(s)) => s.clone(),
        _ => canonical_json(output),
    };
    match normalize(text.as_bytes()) {
        Ok(canon) => OutcomeKind::Normal(canon),
        Err(_) => OutcomeKind::Abnormal(ErrorType::OutputDecodeError),
    }
}

fn parse_reply(interface: &TaskInterface, id: usize, line: &str) -> OutcomeKind {
    let Ok(Value::Object(msg)) = serde_json::from_str::<Value>(line) else {
        return OutcomeKind::Abnormal(ErrorType::OutputDecodeError);
    };
    if msg.get("id").and_then(Value::as_u64) != Some(id as u64) {
        return OutcomeKind::Abnormal(ErrorType::SandboxFailure);
    }
    match msg.get("status").and_then(Value::as_str) {
        Some("ok") => canonical_wire_output(interface, msg.get("output").unwrap_or(&Value::Null)),
        Some("error") => {
            let class = msg.get("error_type").and_then(Value::as_str).unwrap_or("");
            OutcomeKind::Abnormal(ErrorType::runtime(class))
        }
        _ => OutcomeKind::Abnormal(ErrorType::OutputDecodeError),
    }
}

fn run_with_shim(config: &ExecConfig, task: &Task, candidate: &CandidateProgram, inputs: &[InputValue]) -> Vec<Outcome> {
    let sandbox_failure = || vec![Outcome::abnormal(ErrorType::SandboxFailure); inputs.len()];
    let Ok(dir) = tempfile::tempdir() else {
        return sandbox_failure();
    };
    let file = dir.path().join("candidate.py");
    if std::fs::write(&file, &candidate.source).is_err() {
        return sandbox_failure();
    }
    let timeout = Duration::from_millis(config.timeout_ms_per_input);

    let mut outcomes = Vec::with_capacity(inputs.len());
    let mut session: Option<ShimSession> = None;
    for (id, input) in inputs.iter().enumerate() {
        if session.is_none() {
            match ShimSession::spawn(config, &file, task) {
                Ok(mut s) => {
                    s.wait_ready(Duration::from_millis(config.startup_timeout_ms));
                    session = Some(s);
                }
                Err(_) => {
                    outcomes.push(Outcome::abnormal(ErrorType::SandboxFailure));
                    continue;
                }
            }
        }
        let mut live = session.take().expect("session spawned");
        let start = Instant::now();
        let reply = live.request(&request_line(id, input), start + timeout);
        let kind = match reply {
            Reply::Line(line) => {
                let kind = parse_reply(&task.interface, id, &line);
                if kind.is_normal() {
                    session = Some(live);
                } else {
                    live.kill();
                }
                kind
            }
            Reply::TimedOut => {
                live.kill();
                OutcomeKind::Abnormal(ErrorType::Timeout)
            }
            Reply::Closed => OutcomeKind::Abnormal(exit_error(live.exited())),
        };
        outcomes.push(Outcome {
            kind,
            wall_time_ms: millis(start.elapsed()),
        });
    }
    if let Some(s) = session {
        s.close();
    }
    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FunctionInterface;
    use serde_json::json;

    fn function_interface() -> TaskInterface {
        TaskInterface::Function(FunctionInterface {
            entry_name: "f".into(),
            parameters: vec![],
            returns: None,
        })
    }

    #[test]
    fn request_lines_follow_the_protocol() {
        let args = InputValue::args(vec![json!(5), json!([1, 2])]);
        assert_eq!(request_line(3, &args), "{\"id\":3,\"args\":[5,[1,2]]}\n");
        assert_eq!(request_line(0, &InputValue::stdin("5 300 100\n")), "{\"id\":0,\"stdin\":\"5 300 100\\n\"}\n");
    }

    #[test]
    fn replies_map_to_outcomes() {
        let f = function_interface();
        assert_eq!(parse_reply(&f, 1, r#"{"id":1,"status":"ok","output":6}"#), OutcomeKind::Normal("6".into()));
        assert_eq!(
            parse_reply(&f, 1, r#"{"id":1,"status":"error","error_type":"ValueError"}"#),
            OutcomeKind::Abnormal(ErrorType::RuntimeError("ValueError".into()))
        );
        assert_eq!(
            parse_reply(&f, 2, r#"{"id":1,"status":"ok","output":6}"#),
            OutcomeKind::Abnormal(ErrorType::SandboxFailure)
        );
        assert_eq!(parse_reply(&f, 1, "garbage"), OutcomeKind::Abnormal(ErrorType::OutputDecodeError));
        assert_eq!(
            parse_reply(&TaskInterface::Stdin, 0, r#"{"id":0,"status":"ok","output":"0 100\n"}"#),
            OutcomeKind::Normal("0 100".into())
        );
        assert_eq!(
            parse_reply(&f, 0, r#"{"id":0,"status":"ok","output":"0 100"}"#),
            OutcomeKind::Normal("\"0 100\"".into())
        );
    }

    #[test]
    fn missing_shim_is_a_sandbox_failure() {
        let config = ExecConfig {
            shim_path: "/nonexistent/shim-binary".into(),
            ..ExecConfig::default()
        };
        let task = Task {
            task_id: "t".into(),
            description: String::new(),
            interface: function_interface(),
            seed_inputs: vec![],
            reference_tests: vec![],
            difficulty: Default::default(),
            language: Language::Python,
        };
        let cand = CandidateProgram {
            task_id: "t".into(),
            rank: 1,
            source: "def f(x): return x".into(),
        };
        let inputs = vec![InputValue::args(vec![json!(1)]); 3];
        let sigs = SubprocessExecutor::new(config).unwrap().execute_all(&task, &[cand], &inputs).unwrap();
        assert_eq!(sigs.len(), 1);
        assert!(sigs[0].outcomes.iter().all(|o| o.kind == OutcomeKind::Abnormal(ErrorType::SandboxFailure)));
    }
}
