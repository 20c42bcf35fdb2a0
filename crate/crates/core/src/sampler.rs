//! Optional client that samples K candidates per task from an
//! OpenAI-compatible chat-completion endpoint.
//!
//! Requests for one task are issued in order, so rank 1 is the first
//! sample. Code fences are stripped and each raw response can be archived
//! for audit. The API key is read from the named environment variable and
//! never stored in the config, logged or archived.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{file_stem, strip_code_fences, CandidateProgram, Task};
use crate::par::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub k_samples: usize,
    pub max_tokens: u32,
    pub api_key_env_var: String,
    pub request_timeout_ms: u64,
    pub retry_limit: u32,
    /// First retry delay; doubled on every further retry.
    pub backoff_ms: u64,
    /// `{description}` is replaced by the task description.
    pub prompt_template: String,
    pub system_prompt: Option<String>,
    /// Raw responses go to `<archive_dir>/<task>/<rank>.json` when set.
    pub archive_dir: Option<PathBuf>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            endpoint_url: "http://localhost:8000/v1/chat/completions".into(),
            model_name: "gpt-4o-mini".into(),
            temperature: 0.6,
            k_samples: 10,
            max_tokens: 2048,
            api_key_env_var: "OPENAI_API_KEY".into(),
            request_timeout_ms: 60_000,
            retry_limit: 2,
            backoff_ms: 500,
            prompt_template: "{description}".into(),
            system_prompt: None,
            archive_dir: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.k_samples == 0 {
            return Err(SamplerError::InvalidConfig("k_samples must be at least 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(SamplerError::InvalidConfig("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("request failed after {attempts} attempts: {message}")]
    HttpError {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("{path}: {message}")]
    Archive { path: PathBuf, message: String },
}

/// Candidates for one task, ranked in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTask {
    pub candidates: Vec<CandidateProgram>,
    /// Ranks whose completion held no code; their source is empty.
    pub empty_completions: Vec<u32>,
}

fn request_body(task: &Task, config: &SamplerConfig) -> Value {
    let mut messages = Vec::new();
    if let Some(system) = &config.system_prompt {
        messages.push(json!({"role": "system", "content": system}));
    }
    let prompt = config.prompt_template.replace("{description}", &task.description);
    messages.push(json!({"role": "user", "content": prompt}));
    json!({
        "model": config.model_name,
        "messages": messages,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    })
}

fn completion_text(response: &Value) -> Option<&str> {
    response.pointer("/choices/0/message/content").and_then(Value::as_str)
}

fn retryable(status: u16) -> bool {
    status == 429 || status >= 500
}

fn post_with_retry(agent: &ureq::Agent, config: &SamplerConfig, api_key: &str, body: &Value) -> Result<Value, SamplerError> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        let result = agent
            .post(&config.endpoint_url)
            .header("Authorization", &format!("Bearer {api_key}"))
            .send_json(body);
        let (status, message) = match result {
            Ok(mut resp) if resp.status().is_success() => match resp.body_mut().read_json::<Value>() {
                Ok(v) => return Ok(v),
                Err(e) => (Some(resp.status().as_u16()), format!("unreadable response body: {e}")),
            },
            Ok(resp) => {
                let status = resp.status().as_u16();
                if !retryable(status) {
                    return Err(SamplerError::HttpError {
                        status: Some(status),
                        attempts,
                        message: format!("HTTP {status}"),
                    });
                }
                (Some(status), format!("HTTP {status}"))
            }
            Err(e) => (None, e.to_string()),
        };
        if attempts > config.retry_limit {
            return Err(SamplerError::HttpError {
                status,
                attempts,
                message,
            });
        }
        let delay = config.backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
        std::thread::sleep(Duration::from_millis(delay));
    }
}

fn archive(dir: &Path, task_id: &str, rank: u32, response: &Value) -> Result<(), SamplerError> {
    let task_dir = dir.join(file_stem(task_id));
    let path = task_dir.join(format!("{rank}.json"));
    let err = |e: std::io::Error| SamplerError::Archive {
        path: path.clone(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(&task_dir).map_err(err)?;
    let text = serde_json::to_string_pretty(response).expect("JSON value serializes");
    std::fs::write(&path, text).map_err(err)
}

fn agent(config: &SamplerConfig) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(config.request_timeout_ms)))
        .http_status_as_error(false)
        .build()
        .into()
}

/// Samples `k_samples` candidates for one task.
pub fn sample_candidates(task: &Task, config: &SamplerConfig) -> Result<SampledTask, SamplerError> {
    config.validate()?;
    let api_key =
        std::env::var(&config.api_key_env_var).map_err(|_| SamplerError::MissingApiKey(config.api_key_env_var.clone()))?;
    let agent = agent(config);
    let body = request_body(task, config);
    let mut candidates = Vec::with_capacity(config.k_samples);
    let mut empty_completions = Vec::new();
    for rank in 1..=config.k_samples as u32 {
        let response = post_with_retry(&agent, config, &api_key, &body)?;
        if let Some(dir) = &config.archive_dir {
            archive(dir, &task.task_id, rank, &response)?;
        }
        let source = completion_text(&response).map(strip_code_fences).unwrap_or_default();
        if source.trim().is_empty() {
            empty_completions.push(rank);
        }
        candidates.push(CandidateProgram {
            task_id: task.task_id.clone(),
            rank,
            source,
        });
    }
    Ok(SampledTask {
        candidates,
        empty_completions,
    })
}

/// Samples every task, running tasks concurrently under `strategy`.
pub fn sample_all(tasks: &[Task], config: &SamplerConfig, strategy: Strategy) -> Vec<Result<SampledTask, SamplerError>> {
    strategy.map(tasks, |t| sample_candidates(t, config))
}

/// Rebuilds candidates from an archive written by a previous run.
pub fn replay_archive(dir: &Path, task_id: &str, k: usize) -> Result<Vec<CandidateProgram>, SamplerError> {
    (1..=k as u32)
        .map(|rank| {
            let path = dir.join(file_stem(task_id)).join(format!("{rank}.json"));
            let err = |message: String| SamplerError::Archive {
                path: path.clone(),
                message,
            };
            let text = std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
            let response: Value = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
            Ok(CandidateProgram {
                task_id: task_id.to_string(),
                rank,
                source: completion_text(&response).map(strip_code_fences).unwrap_or_default(),
            })
        })
        .collect()
}
