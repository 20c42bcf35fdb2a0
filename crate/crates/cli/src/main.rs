//! `execdiv` command line.
//!
//! Exit codes: 0 on success, 2 when a run finished but flagged some tasks,
//! 1 on fatal errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use execdiv::clustering::partition;
use execdiv::corpus::{load_corpus, read_report, write_corpus, Corpus, Difficulty, Task};
use execdiv::eval::{
    calibrate_abstention, evaluate_weights, learn_weights, summarize, train_test_split, AbstentionMetric,
    LabeledScores, Stat, TaskClusterData, WeightGrid, WeightLearningBlock,
};
use execdiv::executor::{ExecConfig, Executor, ReplayExecutor, SubprocessExecutor};
use execdiv::fuzzgen::{FuzzConfig, FuzzMode};
use execdiv::metrics::DistanceWeights;
use execdiv::par::Strategy;
use execdiv::pipeline::{
    load_signature_cache, run_pipeline, write_outputs, PipelineConfig, INPUTS_DIR, REFERENCE_DIR, REPORT_FILE,
    SIGNATURES_DIR,
};
use execdiv::sampler::{replay_archive, sample_all, SamplerConfig};

#[derive(Parser)]
#[command(name = "execdiv", version, about = "Execution-based uncertainty scores for sampled programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Seeded,
    SeedFree,
}

#[derive(Subcommand)]
enum Command {
    /// Fuzz, execute, cluster and score every task of a corpus.
    Run(RunArgs),
    /// Predictive statistics of the scores in a report.
    Eval {
        /// A report.jsonl, or a run directory holding one.
        report: PathBuf,
        /// Corpus directory; enables the per-difficulty breakdown.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated abstention thresholds.
    Calibrate {
        report: PathBuf,
        /// Repeat for several caps.
        #[arg(long = "fpr-cap", default_values_t = [0.05])]
        fpr_caps: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Repeat for several scores.
        #[arg(long = "metric", default_values_t = ["dsde".to_string()])]
        metrics: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit distance weights on a train split of a run's cached signatures.
    LearnWeights {
        /// Run directory written by `run --out`.
        run: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        split: f64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long, default_value_t = 20)]
        grid_steps: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample candidates from a chat-completion endpoint.
    Sample(SampleArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Directory with tasks.jsonl and candidates.jsonl.
    #[arg(long)]
    corpus: PathBuf,
    /// Receives report.jsonl, manifest.json and the stage caches.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    timeout_ms: u64,
    #[arg(long, default_value = "1.0,0.8,0.6")]
    weights: DistanceWeights,
    #[arg(long, value_enum, default_value_t = Mode::Seeded)]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    fuzz_seed: u64,
    /// Tasks processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Candidates executed concurrently within a task.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "shim.py")]
    shim: PathBuf,
    #[arg(long)]
    memory_cap_mb: Option<u64>,
    /// Read inputs from this directory instead of fuzzing.
    #[arg(long)]
    inputs: Option<PathBuf>,
    /// Replay signatures cached by an earlier run instead of executing.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SampleArgs {
    /// Directory with tasks.jsonl.
    #[arg(long)]
    tasks: PathBuf,
    /// Receives tasks.jsonl, candidates.jsonl and the raw responses.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "http://localhost:8000/v1/chat/completions")]
    endpoint: String,
    #[arg(long, default_value = "gpt-4o-mini")]
    model: String,
    #[arg(long, default_value_t = 0.6)]
    temperature: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 2048)]
    max_tokens: u32,
    /// Name of the environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = 2)]
    retry_limit: u32,
    /// `{description}` is replaced by the task description.
    #[arg(long, default_value = "{description}")]
    prompt_template: String,
    #[arg(long)]
    system_prompt: Option<String>,
    /// Rebuild candidates from an existing archive without any requests.
    #[arg(long)]
    from_archive: Option<PathBuf>,
}

type Fallible<T> = Result<T, String>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Eval { report, corpus, out } => cmd_eval(&report, corpus.as_deref(), out.as_deref()).map(|_| 0),
        Command::Calibrate {
            report,
            fpr_caps,
            folds,
            metrics,
            seed,
            out,
        } => cmd_calibrate(&report, &fpr_caps, folds, &metrics, seed, out.as_deref()).map(|_| 0),
        Command::LearnWeights {
            run,
            split,
            split_seed,
            grid_steps,
            out,
        } => cmd_learn_weights(&run, split, split_seed, grid_steps, out.as_deref()).map(|_| 0),
        Command::Sample(args) => cmd_sample(args).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn emit(value: &impl serde::Serialize, out: Option<&Path>) -> Fallible<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())? + "\n";
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(REPORT_FILE)
    } else {
        path.to_path_buf()
    }
}

fn cmd_run(args: RunArgs) -> Fallible<u8> {
    let corpus = load_corpus(&args.corpus).map_err(|e| e.to_string())?;
    let mut exec = ExecConfig {
        timeout_ms_per_input: args.timeout_ms,
        memory_cap_mb: args.memory_cap_mb,
        shim_path: args.shim,
        ..ExecConfig::default()
    };
    if let Some(w) = args.workers {
        exec.max_parallel_workers = w;
    }
    let inputs_dir = args.inputs.or_else(|| {
        let cached = args.replay.as_ref()?.join(INPUTS_DIR);
        cached.is_dir().then_some(cached)
    });
    let config = PipelineConfig {
        fuzz: FuzzConfig {
            n_inputs: args.n,
            mode: match args.mode {
                Mode::Seeded => FuzzMode::Seeded,
                Mode::SeedFree => FuzzMode::SeedFree,
            },
            rng_seed: args.fuzz_seed,
            ..FuzzConfig::default()
        },
        exec: exec.clone(),
        weights: args.weights,
        k: Some(args.k),
        jobs: args.jobs,
        inputs_dir,
    };
    let executor: Box<dyn Executor> = match &args.replay {
        Some(dir) => {
            let mut replay = ReplayExecutor::new();
            for sub in [SIGNATURES_DIR, REFERENCE_DIR] {
                let path = dir.join(sub);
                if path.is_dir() {
                    replay.load_dir(&path).map_err(|e| e.to_string())?;
                }
            }
            Box::new(replay)
        }
        None => Box::new(SubprocessExecutor::new(exec).map_err(|e| e.to_string())?),
    };
    let output =
        run_pipeline(&corpus, &args.corpus, &config, executor.as_ref(), Some(&args.out)).map_err(|e| e.to_string())?;
    write_outputs(&output, &args.out).map_err(|e| e.to_string())?;
    let flagged = output.manifest.n_flagged;
    eprintln!("{} tasks, {} flagged, report in {}", output.manifest.n_tasks, flagged, args.out.display());
    Ok(if flagged > 0 { 2 } else { 0 })
}

fn cmd_eval(report: &Path, corpus: Option<&Path>, out: Option<&Path>) -> Fallible<()> {
    let rows = read_report(&report_path(report)).map_err(|e| e.to_string())?.rows;
    let difficulty: BTreeMap<String, Difficulty> = match corpus {
        Some(dir) => load_corpus(dir)
            .map_err(|e| e.to_string())?
            .tasks()
            .iter()
            .map(|t| (t.task_id.clone(), t.difficulty))
            .collect(),
        None => BTreeMap::new(),
    };
    let summary = summarize(&rows, &difficulty).map_err(|e| e.to_string())?;
    emit(&summary, out)
}

fn cmd_calibrate(
    report: &Path,
    fpr_caps: &[f64],
    folds: usize,
    metrics: &[String],
    seed: u64,
    out: Option<&Path>,
) -> Fallible<()> {
    let rows = read_report(&report_path(report)).map_err(|e| e.to_string())?.rows;
    let data = LabeledScores::from_rows(&rows).map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for name in metrics {
        let metric: AbstentionMetric = name.parse().map_err(|e: String| e)?;
        let scores = data
            .named()
            .into_iter()
            .find(|(n, _)| *n == metric.as_str())
            .map(|(_, s)| s)
            .expect("every metric has a score series");
        for &cap in fpr_caps {
            reports.push(calibrate_abstention(scores, &data.pass1, metric, cap, folds, seed).map_err(|e| e.to_string())?);
        }
    }
    emit(&reports, out)
}

fn stat(r: Result<f64, execdiv::eval::StatError>) -> Stat {
    r.map(Stat::Value).unwrap_or(Stat::Undefined)
}

fn cmd_learn_weights(run: &Path, split: f64, split_seed: u64, grid_steps: u32, out: Option<&Path>) -> Fallible<()> {
    let rows = read_report(&run.join(REPORT_FILE)).map_err(|e| e.to_string())?.rows;
    let cache = load_signature_cache(run).map_err(|e| e.to_string())?;
    let mut data = Vec::new();
    let mut failure = Vec::new();
    for row in rows.iter().filter(|r| r.error.is_none()) {
        let (Some(pass1), Some(rec)) = (row.pass1, cache.get(&row.task_id)) else {
            continue;
        };
        let part = partition(&rec.signatures).map_err(|e| format!("{}: {e}", row.task_id))?;
        data.push(TaskClusterData::from_partition(&part).map_err(|e| format!("{}: {e}", row.task_id))?);
        failure.push(!pass1);
    }
    let (train, test) = train_test_split(data.len(), split, split_seed);
    let pick = |idx: &[usize]| -> (Vec<TaskClusterData>, Vec<bool>) {
        idx.iter().map(|&i| (data[i].clone(), failure[i])).unzip()
    };
    let (train_data, train_failure) = pick(&train);
    let (test_data, test_failure) = pick(&test);
    let learned = learn_weights(&train_data, &train_failure, WeightGrid { steps: grid_steps }, Strategy::default())
        .map_err(|e| e.to_string())?;
    let block = WeightLearningBlock {
        test_auroc_learned: stat(evaluate_weights(&test_data, &test_failure, &learned.weights)),
        test_auroc_default: stat(evaluate_weights(&test_data, &test_failure, &DistanceWeights::default())),
        learned,
        n_train: train.len(),
        n_test: test.len(),
    };
    emit(&block, out)
}

fn read_tasks(dir: &Path) -> Fallible<Vec<Task>> {
    let path = dir.join("tasks.jsonl");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1)))
        .collect()
}

fn cmd_sample(args: SampleArgs) -> Fallible<()> {
    let tasks = read_tasks(&args.tasks)?;
    std::fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    let mut candidates = Vec::new();
    match &args.from_archive {
        Some(dir) => {
            for task in &tasks {
                candidates.extend(replay_archive(dir, &task.task_id, args.k).map_err(|e| e.to_string())?);
            }
        }
        None => {
            let config = SamplerConfig {
                endpoint_url: args.endpoint,
                model_name: args.model,
                temperature: args.temperature,
                k_samples: args.k,
                max_tokens: args.max_tokens,
                api_key_env_var: args.api_key_env,
                retry_limit: args.retry_limit,
                prompt_template: args.prompt_template,
                system_prompt: args.system_prompt,
                archive_dir: Some(args.out.join("raw")),
                ..SamplerConfig::default()
            };
            for (task, sampled) in tasks.iter().zip(sample_all(&tasks, &config, Strategy::default())) {
                let sampled = sampled.map_err(|e| format!("{}: {e}", task.task_id))?;
                if !sampled.empty_completions.is_empty() {
                    eprintln!("{}: no code in ranks {:?}", task.task_id, sampled.empty_completions);
                }
                candidates.extend(sampled.candidates);
            }
        }
    }
    let corpus = Corpus::new(tasks, candidates).map_err(|e| e.to_string())?;
    write_corpus(&corpus, &args.out).map_err(|e| e.to_string())
}
