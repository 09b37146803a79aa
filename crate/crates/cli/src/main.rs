//! `askit`: inspect prompts, ask questions, compile task files into cached
//! code, run compiled functions and benchmark both paths.

mod bench;
mod exit;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use askit::codegen::{cache, Allowlist};
use askit::llm_client::{DEFAULT_MODEL, ENV_MODEL};
use askit::prompt_codec::{build_codegen, build_direct};
use askit::taskfile::{TaskEntry, TaskFile};
use askit::{
    ArgBinding, Askit, ClientConfig, CodegenConfig, DefineOptions, DefinedFunction, EngineConfig, LiveClient,
    LlmClient, Recorder, ReplayClient, TargetLanguage, Toolchain,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use exit::CliError;

#[derive(Parser)]
#[command(name = "askit", version, about = "Typed LLM tasks, answered directly or compiled to code")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the prompt a task would send.
    ShowPrompt {
        task_file: PathBuf,
        name: String,
        /// Arguments as a JSON object (direct mode).
        #[arg(long, default_value = "{}")]
        args: String,
        #[arg(long, value_enum, default_value_t = Mode::Direct)]
        mode: Mode,
        #[arg(long, default_value = "typescript")]
        target: TargetLanguage,
    },
    /// Answer a task directly with the model.
    Ask {
        task_file: PathBuf,
        name: String,
        #[arg(long, default_value = "{}")]
        args: String,
        #[command(flatten)]
        backend: BackendArgs,
        /// Retries after the first attempt.
        #[arg(long, default_value_t = 9)]
        max_retries: u32,
    },
    /// Generate, validate and cache code for codable tasks.
    Codegen {
        task_file: PathBuf,
        /// Compile only these tasks.
        #[arg(long, num_args = 1..)]
        only: Vec<String>,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value = "askit")]
        cache_dir: PathBuf,
        #[arg(long, default_value = "typescript")]
        target: TargetLanguage,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 9)]
        max_retries: u32,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Call a compiled task. Generates it first unless already cached.
    Run {
        task_file: PathBuf,
        name: String,
        #[arg(long, default_value = "{}")]
        args: String,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value = "askit")]
        cache_dir: PathBuf,
        #[arg(long, default_value = "typescript")]
        target: TargetLanguage,
    },
    /// Compare direct-path latency with compiled execution time.
    Bench(bench::BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Direct,
    Codegen,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Live,
    Replay,
    Record,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value_t = Backend::Replay)]
    backend: Backend,
    /// Fixture file (JSONL) read by replay and appended to by record.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Model id; defaults to $ASKIT_MODEL.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Simulated per-call latency for the replay backend.
    #[arg(long, default_value_t = 0)]
    replay_delay_ms: u64,
}

pub(crate) fn model_id(flag: Option<&str>) -> String {
    flag.map(str::to_string)
        .or_else(|| std::env::var(ENV_MODEL).ok().filter(|m| !m.is_empty()))
        .unwrap_or_else(|| DEFAULT_MODEL.to_string())
}

impl BackendArgs {
    fn client(&self) -> Result<Arc<dyn LlmClient>, CliError> {
        let model = model_id(self.model.as_deref());
        match self.backend {
            Backend::Replay => {
                let client = match &self.fixtures {
                    Some(path) => ReplayClient::open(model, path)?,
                    None => ReplayClient::new(model, []),
                };
                Ok(Arc::new(client.with_delay(Duration::from_millis(self.replay_delay_ms))))
            }
            Backend::Live | Backend::Record => {
                let mut config = ClientConfig::from_env();
                config.model_id = model;
                config.temperature = self.temperature;
                let live = LiveClient::new(config)?;
                if self.backend == Backend::Live {
                    return Ok(Arc::new(live));
                }
                let path = self
                    .fixtures
                    .as_ref()
                    .ok_or_else(|| CliError::usage("--backend record needs --fixtures"))?;
                Ok(Arc::new(Recorder::new(live, path.clone())?))
            }
        }
    }
}

pub(crate) fn parse_args(text: &str) -> Result<ArgBinding, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::usage(format!("--args: {e}")))?;
    ArgBinding::from_json(value).map_err(|e| CliError::usage(format!("--args: {e}")))
}

pub(crate) fn define(askit: &Askit, entry: &TaskEntry, target: TargetLanguage) -> Result<DefinedFunction, CliError> {
    let mut options = DefineOptions::named(&entry.name)
        .fewshot(entry.fewshot.clone())
        .tests(entry.tests.clone())
        .language(target);
    options.param_schemas = entry.param_schemas()?;
    Ok(askit.define(entry.return_schema()?, &entry.template, options)?)
}

fn show_prompt(task_file: &Path, name: &str, args: &str, mode: Mode, target: TargetLanguage) -> Result<(), CliError> {
    let file = TaskFile::load(task_file)?;
    let entry = file.get(name)?;
    let spec = entry.to_spec(target)?;
    let text = match mode {
        Mode::Direct => {
            let schema = spec
                .return_schema
                .as_ref()
                .ok_or_else(|| CliError::usage(format!("task `{name}` returns void and has no direct prompt")))?;
            let args = parse_args(args)?;
            build_direct(&spec.template, &args, schema, &spec.fewshot)
                .map_err(|e| CliError::usage(e.to_string()))?
                .text
        }
        Mode::Codegen => build_codegen(&spec).text,
    };
    print!("{text}");
    Ok(())
}

fn ask(task_file: &Path, name: &str, args: &str, backend: &BackendArgs, max_retries: u32) -> Result<(), CliError> {
    let file = TaskFile::load(task_file)?;
    let entry = file.get(name)?;
    let args = parse_args(args)?;
    let engine = EngineConfig {
        max_direct_retries: max_retries,
        temperature: backend.temperature,
    };
    let askit = Askit::new(backend.client()?).with_engine_config(engine);
    let answer = define(&askit, entry, TargetLanguage::default())?.call(&args)?;
    println!(
        "{}",
        json!({"answer": answer.value, "reason": answer.reason, "attempts": answer.attempts})
    );
    Ok(())
}

struct Compiled {
    name: String,
    cached: bool,
    retries: u32,
    path: PathBuf,
    loc: usize,
}

#[allow(clippy::too_many_arguments)]
fn codegen(
    task_file: &Path,
    only: &[String],
    backend: &BackendArgs,
    cache_dir: &Path,
    target: TargetLanguage,
    jobs: usize,
    max_retries: u32,
    as_json: bool,
) -> Result<(), CliError> {
    let file = TaskFile::load(task_file)?;
    let selected: Vec<&TaskEntry> = if only.is_empty() {
        file.tasks.iter().filter(|t| t.codable).collect()
    } else {
        only.iter().map(|n| file.get(n)).collect::<Result<_, _>>()?
    };
    let client = backend.client()?;
    let askit = Askit::new(Arc::clone(&client));
    let config = CodegenConfig {
        max_retries,
        temperature: backend.temperature,
        cache_dir: cache_dir.to_path_buf(),
        codable_allowlist: Some(Allowlist {
            names: file.tasks.iter().filter(|t| t.codable).map(|t| t.name.clone()).collect(),
            units: Default::default(),
        }),
        toolchain: Toolchain::from_env(),
        ..CodegenConfig::default()
    };

    let calls_before = client.call_count();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Compiled, CliError>>>> =
        Mutex::new((0..selected.len()).map(|_| None).collect());
    let compile_one = |entry: &TaskEntry| -> Result<Compiled, CliError> {
        let defined = define(&askit, entry, target)?;
        let cached = cache::lookup(defined.spec(), &config.cache_dir)?.is_some();
        let compiled = defined.compile(&config)?;
        let generated = compiled.generated();
        Ok(Compiled {
            name: entry.name.clone(),
            cached,
            retries: generated.retries_used,
            path: generated.cache_path.clone(),
            loc: generated.source.lines().filter(|l| !l.trim().is_empty()).count(),
        })
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, selected.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(entry) = selected.get(i) else { break };
                let outcome = compile_one(entry);
                if let Err(e) = &outcome {
                    eprintln!("{}: {e}", entry.name);
                }
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(outcome);
            });
        }
    });
    let results: Vec<Result<Compiled, CliError>> = results
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every task visited"))
        .collect();
    let client_calls = client.call_count() - calls_before;

    if as_json {
        let tasks: Vec<Value> = results
            .iter()
            .zip(&selected)
            .map(|(r, entry)| match r {
                Ok(c) => json!({
                    "name": c.name, "ok": true, "cached": c.cached, "retries": c.retries,
                    "path": c.path, "loc": c.loc,
                }),
                Err(e) => json!({"name": entry.name, "ok": false, "error": e.message}),
            })
            .collect();
        println!("{}", json!({"tasks": tasks, "client_calls": client_calls}));
    } else {
        let width = selected.iter().map(|t| t.name.len()).max().unwrap_or(4).max(4);
        println!("{:<width$}  {:>7}  {:>4}  {:<6}  PATH", "NAME", "RETRIES", "LOC", "SOURCE");
        for (r, entry) in results.iter().zip(&selected) {
            match r {
                Ok(c) => println!(
                    "{:<width$}  {:>7}  {:>4}  {:<6}  {}",
                    c.name,
                    c.retries,
                    c.loc,
                    if c.cached { "cache" } else { "model" },
                    c.path.display()
                ),
                Err(_) => println!("{:<width$}  {:>7}  {:>4}  {:<6}  -", entry.name, "-", "-", "FAILED"),
            }
        }
        println!("client calls: {client_calls}");
    }
    match results.into_iter().find_map(Result::err) {
        Some(e) => Err(CliError {
            code: e.code,
            message: "some tasks failed".into(),
        }),
        None => Ok(()),
    }
}

fn run(
    task_file: &Path,
    name: &str,
    args: &str,
    backend: &BackendArgs,
    cache_dir: &Path,
    target: TargetLanguage,
) -> Result<(), CliError> {
    let file = TaskFile::load(task_file)?;
    let entry = file.get(name)?;
    if !entry.codable {
        return Err(CliError::usage(format!("task `{name}` is not codable")));
    }
    let args = parse_args(args)?;
    let askit = Askit::new(backend.client()?);
    let config = CodegenConfig {
        temperature: backend.temperature,
        cache_dir: cache_dir.to_path_buf(),
        toolchain: Toolchain::from_env(),
        ..CodegenConfig::default()
    };
    let compiled = define(&askit, entry, target)?.compile(&config)?;
    println!("{}", compiled.call(&args)?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ShowPrompt {
            task_file,
            name,
            args,
            mode,
            target,
        } => show_prompt(&task_file, &name, &args, mode, target),
        Command::Ask {
            task_file,
            name,
            args,
            backend,
            max_retries,
        } => ask(&task_file, &name, &args, &backend, max_retries),
        Command::Codegen {
            task_file,
            only,
            backend,
            cache_dir,
            target,
            jobs,
            max_retries,
            json,
        } => codegen(&task_file, &only, &backend, &cache_dir, target, jobs, max_retries, json),
        Command::Run {
            task_file,
            name,
            args,
            backend,
            cache_dir,
            target,
        } => run(&task_file, &name, &args, &backend, &cache_dir, target),
        Command::Bench(args) => bench::run(&args),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("askit: {e}");
            e.exit_code()
        }
    }
}
