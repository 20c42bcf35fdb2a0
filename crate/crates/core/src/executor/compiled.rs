//! Compile-and-run recipe for C++ and Java candidates.
//!
//! Each candidate is compiled once; every input then runs in a fresh
//! process reading the input on stdin (raw text, or the JSON argument
//! array followed by a newline for function tasks).

use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::shim::{apply_memory_cap, exit_error, millis};
use super::{normalize, ErrorType, ExecConfig, Outcome, OutcomeKind};
use crate::corpus::{CandidateProgram, InputValue, Language, Task};

pub(crate) const COMPILE_ERROR: &str = "CompileError";

enum Compiled {
    Ready(Command),
    CompileError,
    Unavailable,
}

fn java_class_name(source: &str) -> String {
    source
        .lines()
        .find_map(|l| {
            let rest = l.trim_start().strip_prefix("public")?.trim_start();
            let rest = rest.strip_prefix("final").map(str::trim_start).unwrap_or(rest);
            let rest = rest.strip_prefix("class")?.trim_start();
            let name: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
            (!name.is_empty()).then_some(name)
        })
        .unwrap_or_else(|| "Main".to_string())
}

fn run_compiler(mut cmd: Command, timeout: Duration) -> Option<bool> {
    cmd.stdin(Stdio::null()).stdout(Stdio::null()).stderr(Stdio::null());
    let mut child = cmd.spawn().ok()?;
    match child.wait_timeout(timeout) {
        Ok(Some(status)) => Some(status.success()),
        _ => {
            let _ = child.kill();
            let _ = child.wait();
            Some(false)
        }
    }
}

fn compile(config: &ExecConfig, language: &Language, source: &str, dir: &Path) -> Compiled {
    let timeout = Duration::from_millis(config.compile_timeout_ms);
    match language {
        Language::Java => {
            let class = java_class_name(source);
            let file = dir.join(format!("{class}.java"));
            if std::fs::write(&file, source).is_err() {
                return Compiled::Unavailable;
            }
            let mut javac = Command::new(&config.java_compiler);
            javac.current_dir(dir).arg(&file);
            match run_compiler(javac, timeout) {
                None => Compiled::Unavailable,
                Some(false) => Compiled::CompileError,
                Some(true) => {
                    let mut run = Command::new(&config.java_runtime);
                    run.arg("-cp").arg(dir).arg(class);
                    Compiled::Ready(run)
                }
            }
        }
        _ => {
            let file = dir.join("main.cpp");
            let binary = dir.join("prog");
            if std::fs::write(&file, source).is_err() {
                return Compiled::Unavailable;
            }
            let mut cxx = Command::new(&config.cpp_compiler);
            cxx.arg("-O2").arg("-std=c++17").arg("-o").arg(&binary).arg(&file);
            match run_compiler(cxx, timeout) {
                None => Compiled::Unavailable,
                Some(false) => Compiled::CompileError,
                Some(true) => Compiled::Ready(Command::new(binary)),
            }
        }
    }
}

fn stdin_text(input: &InputValue) -> String {
    match input {
        InputValue::RawStdin(text) => text.clone(),
        InputValue::Value(v) => format!("{v}\n"),
    }
}

fn run_once(cmd: &mut Command, config: &ExecConfig, input: &InputValue) -> Outcome {
    let start = Instant::now();
    cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::null());
    apply_memory_cap(cmd, config.memory_cap_mb);
    let Ok(mut child) = cmd.spawn() else {
        return Outcome::abnormal(ErrorType::SandboxFailure);
    };
    let mut stdin = child.stdin.take().expect("piped stdin");
    let text = stdin_text(input);
    let writer = std::thread::spawn(move || {
        let _ = stdin.write_all(text.as_bytes());
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        let _ = tx.send(buf);
    });

    let timeout = Duration::from_millis(config.timeout_ms_per_input);
    let kind = match child.wait_timeout(timeout) {
        Ok(Some(status)) if status.success() => {
            let raw = rx.recv_timeout(Duration::from_millis(1000)).unwrap_or_default();
            match normalize(&raw) {
                Ok(canon) => OutcomeKind::Normal(canon),
                Err(_) => OutcomeKind::Abnormal(ErrorType::OutputDecodeError),
            }
        }
        Ok(Some(status)) => OutcomeKind::Abnormal(exit_error(Some(status))),
        Ok(None) => {
            let _ = child.kill();
            let _ = child.wait();
            OutcomeKind::Abnormal(ErrorType::Timeout)
        }
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            OutcomeKind::Abnormal(ErrorType::SandboxFailure)
        }
    };
    let _ = writer.join();
    Outcome {
        kind,
        wall_time_ms: millis(start.elapsed()),
    }
}

pub(super) fn run_compiled(
    config: &ExecConfig,
    task: &Task,
    candidate: &CandidateProgram,
    inputs: &[InputValue],
) -> Vec<Outcome> {
    let fill = |error: ErrorType| vec![Outcome::abnormal(error); inputs.len()];
    let Ok(dir) = tempfile::tempdir() else {
        return fill(ErrorType::SandboxFailure);
    };
    match compile(config, &task.language, &candidate.source, dir.path()) {
        Compiled::Unavailable => fill(ErrorType::SandboxFailure),
        Compiled::CompileError => fill(ErrorType::RuntimeError(COMPILE_ERROR.into())),
        Compiled::Ready(mut cmd) => inputs.iter().map(|input| run_once(&mut cmd, config, input)).collect(),
    }
}
