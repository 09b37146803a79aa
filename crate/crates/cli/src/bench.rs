//! Direct path vs compiled path on the intersecting tasks of a task file.
//!
//! Latency is the wall time of a direct call against the replay backend
//! (optionally delayed to stand in for the model), including prompt
//! building and answer parsing. Execution time is one round trip to the
//! warm worker running the generated code, after one untimed call per test
//! input. Compile time covers generation (or the cache hit), transpiling
//! and worker start-up.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use askit::codegen::output_equal;
use askit::taskfile::{TaskEntry, TaskFile};
use askit::{Askit, CodegenConfig, LlmClient, ReplayClient, TargetLanguage, Toolchain};
use clap::Args;
use serde_json::json;

use crate::exit::CliError;

#[derive(Args)]
pub struct BenchArgs {
    task_file: PathBuf,
    #[arg(long)]
    fixtures: PathBuf,
    /// Passes over every test input.
    #[arg(long, default_value_t = 10)]
    repeat: usize,
    /// Simulated per-call model latency.
    #[arg(long, default_value_t = 0)]
    replay_delay_ms: u64,
    #[arg(long, num_args = 1..)]
    only: Vec<String>,
    /// Defaults to a fresh temporary directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value = "typescript")]
    target: TargetLanguage,
    #[arg(long)]
    model: Option<String>,
}

struct TaskTimes {
    latency_s: f64,
    execution_time_us: f64,
    compile_time_s: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn bench_task(
    askit: &Askit,
    replay: &ReplayClient,
    entry: &TaskEntry,
    args: &BenchArgs,
    config: &CodegenConfig,
) -> Result<TaskTimes, CliError> {
    let defined = crate::define(askit, entry, args.target)?;

    let start = Instant::now();
    let compiled = defined.compile(config)?;
    compiled.warm_up()?;
    let compile_time_s = start.elapsed().as_secs_f64();

    let mut latencies = Vec::new();
    for _ in 0..args.repeat {
        for test in &entry.tests {
            replay.rewind();
            let start = Instant::now();
            let answer = defined.call(&test.input)?;
            latencies.push(start.elapsed().as_secs_f64());
            if !output_equal(&test.output, &answer.value) {
                eprintln!("{}: direct answer {} differs from {}", entry.name, answer.value, test.output);
            }
        }
    }
    // measured as a separate phase: a worker left idle during a long
    // simulated model call answers its next request much more slowly
    // first calls also pay for module loading and JIT warm-up
    for test in &entry.tests {
        compiled.call(&test.input)?;
    }
    let mut executions = Vec::new();
    for _ in 0..args.repeat {
        for test in &entry.tests {
            let start = Instant::now();
            let value = compiled.call(&test.input)?;
            executions.push(start.elapsed().as_secs_f64() * 1e6);
            if !output_equal(&test.output, &value) {
                eprintln!("{}: compiled result {value} differs from {}", entry.name, test.output);
            }
        }
    }
    Ok(TaskTimes {
        latency_s: mean(&latencies),
        execution_time_us: mean(&executions),
        compile_time_s,
    })
}

pub fn run(args: &BenchArgs) -> Result<(), CliError> {
    if args.repeat == 0 {
        return Err(CliError::usage("--repeat must be at least 1"));
    }
    let file = TaskFile::load(&args.task_file)?;
    let tasks: Vec<&TaskEntry> = if args.only.is_empty() {
        file.tasks.iter().filter(|t| t.is_intersecting()).collect()
    } else {
        let picked = args.only.iter().map(|n| file.get(n)).collect::<Result<Vec<_>, _>>()?;
        if let Some(t) = picked.iter().find(|t| !t.is_intersecting()) {
            return Err(CliError::usage(format!(
                "task `{}` needs codable: true, a return type and tests to be benchmarked",
                t.name
            )));
        }
        picked
    };
    if tasks.is_empty() {
        return Err(CliError::usage("no intersecting tasks to benchmark"));
    }

    let replay = Arc::new(
        ReplayClient::open(crate::model_id(args.model.as_deref()), &args.fixtures)?
            .with_delay(Duration::from_millis(args.replay_delay_ms)),
    );
    let client: Arc<dyn LlmClient> = replay.clone();
    let askit = Askit::new(client);

    let scratch;
    let cache_dir = match &args.cache_dir {
        Some(dir) => dir.clone(),
        None => {
            scratch = tempfile::tempdir()?;
            scratch.path().to_path_buf()
        }
    };
    let config = CodegenConfig {
        cache_dir,
        toolchain: Toolchain::from_env(),
        ..CodegenConfig::default()
    };

    let mut per_task = Vec::new();
    for entry in tasks {
        let times = bench_task(&askit, &replay, entry, args, &config)?;
        eprintln!(
            "{}: latency {:.6} s, execution {:.1} us, compile {:.3} s",
            entry.name, times.latency_s, times.execution_time_us, times.compile_time_s
        );
        per_task.push(times);
    }
    let latency: Vec<f64> = per_task.iter().map(|t| t.latency_s).collect();
    let execution: Vec<f64> = per_task.iter().map(|t| t.execution_time_us).collect();
    let compile: Vec<f64> = per_task.iter().map(|t| t.compile_time_s).collect();
    let speedup: Vec<f64> = per_task
        .iter()
        .map(|t| t.latency_s / (t.execution_time_us / 1e6))
        .collect();
    println!(
        "{}",
        json!({
            "latency_s": mean(&latency),
            "execution_time_us": mean(&execution),
            "compile_time_s": mean(&compile),
            "speedup": mean(&speedup),
        })
    );
    Ok(())
}
