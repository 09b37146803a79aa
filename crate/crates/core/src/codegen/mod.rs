//! The compiled path: ask the model for an implementation, check it, test
//! it against the task's examples, and cache the first candidate that
//! passes.

pub mod cache;
pub mod runner;
pub mod target;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use runner::{invoke, ExecError, Worker};
pub use target::{syntax_check, TargetLanguage, ToolError, Toolchain};

use crate::engine::Dialogue;
use crate::llm_client::{ClientError, CompletionRequest, LlmClient};
use crate::prompt_codec::{build_codegen, extract_code, spaced_json, Violation, ViolationKind};
use crate::template::{is_identifier, ArgBinding, PromptTemplate, TemplateError};
use crate::typeschema::TypeSchema;

/// An input/output pair, used either as a prompt demonstration or as a
/// validation test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub input: ArgBinding,
    pub output: Value,
}

impl Example {
    pub fn new(input: Value, output: Value) -> Result<Self, TemplateError> {
        Ok(Example {
            input: ArgBinding::from_json(input)?,
            output,
        })
    }
}

/// Everything a `define` captures.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub template: PromptTemplate,
    /// `None` is a void function.
    pub return_schema: Option<TypeSchema>,
    /// Declared parameter types, in signature order. `None` when the task
    /// was defined without them.
    pub param_schemas: Option<Vec<(String, TypeSchema)>>,
    pub fewshot: Vec<Example>,
    pub tests: Vec<Example>,
    pub target_language: TargetLanguage,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("`{0}` is not a valid function name")]
    InvalidName(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("parameter types {declared:?} do not match template parameters {expected:?}")]
    ParamMismatch {
        declared: Vec<String>,
        expected: Vec<String>,
    },
    #[error("example input `{0}` does not name a template parameter")]
    ExampleKey(String),
    #[error("parameter `{0}` has an invalid schema: {1}")]
    Schema(String, crate::typeschema::SchemaError),
}

impl TaskSpec {
    pub fn new(
        name: &str,
        template: &str,
        return_schema: Option<TypeSchema>,
        param_schemas: Option<Vec<(String, TypeSchema)>>,
    ) -> Result<Self, SpecError> {
        let spec = TaskSpec {
            name: name.to_string(),
            template: PromptTemplate::parse(template)?,
            return_schema,
            param_schemas,
            fewshot: Vec::new(),
            tests: Vec::new(),
            target_language: TargetLanguage::default(),
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn with_fewshot(mut self, fewshot: Vec<Example>) -> Result<Self, SpecError> {
        self.fewshot = fewshot;
        self.check()?;
        Ok(self)
    }

    pub fn with_tests(mut self, tests: Vec<Example>) -> Result<Self, SpecError> {
        self.tests = tests;
        self.check()?;
        Ok(self)
    }

    pub fn with_language(mut self, language: TargetLanguage) -> Self {
        self.target_language = language;
        self
    }

    pub fn check(&self) -> Result<(), SpecError> {
        if !is_identifier(&self.name) {
            return Err(SpecError::InvalidName(self.name.clone()));
        }
        let params = self.template.params();
        if let Some(declared) = &self.param_schemas {
            let names: BTreeSet<&str> = declared.iter().map(|(n, _)| n.as_str()).collect();
            let expected: BTreeSet<&str> = params.iter().map(String::as_str).collect();
            if names != expected || names.len() != declared.len() {
                return Err(SpecError::ParamMismatch {
                    declared: declared.iter().map(|(n, _)| n.clone()).collect(),
                    expected: params.to_vec(),
                });
            }
            for (n, s) in declared {
                s.check().map_err(|e| SpecError::Schema(n.clone(), e))?;
            }
        }
        for example in self.fewshot.iter().chain(&self.tests) {
            if let Some(k) = example.input.names().find(|k| !params.iter().any(|p| p == k)) {
                return Err(SpecError::ExampleKey(k.to_string()));
            }
        }
        Ok(())
    }
}

/// A validated implementation of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFunction {
    pub source: String,
    pub entry: String,
    pub language: TargetLanguage,
    pub cache_path: PathBuf,
    pub retries_used: u32,
}

/// Which tasks may be compiled. Names match exactly; units match as name
/// prefixes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Allowlist {
    pub names: BTreeSet<String>,
    pub units: BTreeSet<String>,
}

impl Allowlist {
    pub fn permits(&self, name: &str) -> bool {
        self.names.contains(name) || self.units.iter().any(|u| name.starts_with(u.as_str()))
    }
}

#[derive(Debug, Clone)]
pub struct CodegenConfig {
    /// Regeneration attempts after the first.
    pub max_retries: u32,
    pub temperature: f64,
    pub cache_dir: PathBuf,
    pub codable_allowlist: Option<Allowlist>,
    /// Reject tasks without declared parameter types.
    pub require_param_schemas: bool,
    pub toolchain: Toolchain,
    /// Per-call deadline when running candidates and compiled functions.
    pub exec_timeout: Duration,
}

impl Default for CodegenConfig {
    fn default() -> Self {
        CodegenConfig {
            max_retries: 9,
            temperature: 1.0,
            cache_dir: PathBuf::from("askit"),
            codable_allowlist: None,
            require_param_schemas: true,
            toolchain: Toolchain::default(),
            exec_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CodegenError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("task `{0}` declares no parameter types")]
    MissingParamSchemas(String),
    #[error("code generation failed after {attempts} attempts; last problem: {violation}")]
    GenerationFailed {
        attempts: u32,
        violation: Box<Violation>,
        /// Raw model responses, one per attempt.
        transcript: Vec<String>,
    },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Toolchain(#[from] ToolError),
    #[error("cache error: {0}")]
    Cache(#[from] std::io::Error),
}

/// Structural equality for test outputs. Numbers compare exactly when
/// both are integral, otherwise with relative tolerance 1e-6.
pub fn output_equal(expected: &Value, actual: &Value) -> bool {
    match (expected, actual) {
        (Value::Number(a), Value::Number(b)) => {
            if let (Some(x), Some(y)) = (a.as_i64(), b.as_i64()) {
                return x == y;
            }
            let (x, y) = (a.as_f64().unwrap_or(f64::NAN), b.as_f64().unwrap_or(f64::NAN));
            if x.fract() == 0.0 && y.fract() == 0.0 {
                return x == y;
            }
            x == y || (x - y).abs() <= 1e-6 * x.abs().max(y.abs())
        }
        (Value::Array(a), Value::Array(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| output_equal(x, y))
        }
        (Value::Object(a), Value::Object(b)) => {
            a.len() == b.len()
                && a.iter()
                    .all(|(k, v)| b.get(k).is_some_and(|w| output_equal(v, w)))
        }
        (a, b) => a == b,
    }
}

/// Runs every test through one worker; returns the first failure.
fn run_tests(source: &str, spec: &TaskSpec, config: &CodegenConfig) -> Result<Option<Violation>, ToolError> {
    if spec.tests.is_empty() {
        return Ok(None);
    }
    let mut worker = match Worker::spawn(
        source,
        &spec.name,
        spec.target_language,
        &config.toolchain,
        config.exec_timeout,
    ) {
        Ok(w) => w,
        Err(ExecError::Tool(e)) => return Err(e),
        Err(e) => return Ok(Some(Violation::new(ViolationKind::TestFailure, e.to_string()))),
    };
    for test in &spec.tests {
        let input = spaced_json(&test.input.to_json());
        let detail = match worker.call(&test.input) {
            Ok(actual) if output_equal(&test.output, &actual) => continue,
            Ok(actual) => format!(
                "{}({input}) returned {}, expected {}",
                spec.name,
                spaced_json(&actual),
                spaced_json(&test.output)
            ),
            Err(ExecError::Tool(e)) => return Err(e),
            Err(e) => format!("{}({input}) failed: {e}", spec.name),
        };
        return Ok(Some(Violation::new(ViolationKind::TestFailure, detail)));
    }
    Ok(None)
}

/// Checks one candidate response: code block, syntax, entry point, tests.
fn check_candidate(response: &str, spec: &TaskSpec, config: &CodegenConfig) -> Result<Result<String, Violation>, ToolError> {
    let source = match extract_code(response, spec.target_language) {
        Ok(s) => s,
        Err(v) => return Ok(Err(v)),
    };
    if let Err(v) = syntax_check(&source, spec.target_language, &config.toolchain)? {
        return Ok(Err(v));
    }
    if !spec.target_language.defines(&source, &spec.name) {
        return Ok(Err(Violation::new(
            ViolationKind::SyntaxError,
            format!("the code does not define `{}`", spec.name),
        )));
    }
    Ok(match run_tests(&source, spec, config)? {
        Some(v) => Err(v),
        None => Ok(source),
    })
}

fn precheck(spec: &TaskSpec, config: &CodegenConfig) -> Result<(), CodegenError> {
    spec.check()?;
    if config.require_param_schemas && spec.param_schemas.is_none() && !spec.template.params().is_empty() {
        return Err(CodegenError::MissingParamSchemas(spec.name.clone()));
    }
    Ok(())
}

/// Generates, validates and caches an implementation of `spec`. Every
/// attempt resends the same prompt; variation comes from sampling.
///
/// Callers normally go through [`compile`], which consults the cache first.
pub fn generate(client: &dyn LlmClient, spec: &TaskSpec, config: &CodegenConfig) -> Result<GeneratedFunction, CodegenError> {
    precheck(spec, config)?;
    let prompt = build_codegen(spec);
    let dialogue = Dialogue::new(prompt.text);
    let request = CompletionRequest::new(&dialogue, config.temperature);
    let mut transcript = Vec::new();
    let attempts = config.max_retries.saturating_add(1);
    let mut last = None;

    for attempt in 0..attempts {
        let response = client.complete(&request)?;
        let verdict = check_candidate(&response, spec, config)?;
        transcript.push(response);
        match verdict {
            Ok(source) => {
                let cache_path = cache::store(spec, &source, attempt, &config.cache_dir)?;
                return Ok(GeneratedFunction {
                    source,
                    entry: spec.name.clone(),
                    language: spec.target_language,
                    cache_path,
                    retries_used: attempt,
                });
            }
            Err(v) => last = Some(v),
        }
    }
    Err(CodegenError::GenerationFailed {
        attempts,
        violation: Box::new(last.expect("at least one attempt ran")),
        transcript,
    })
}

/// Cache lookup, falling back to [`generate`]. Concurrent callers for the
/// same key are serialized so only one of them generates.
pub fn compile(client: &dyn LlmClient, spec: &TaskSpec, config: &CodegenConfig) -> Result<GeneratedFunction, CodegenError> {
    precheck(spec, config)?;
    if let Some(hit) = cache::lookup(spec, &config.cache_dir)? {
        return Ok(hit);
    }
    let _guard = cache::lock(spec, &config.cache_dir)?;
    if let Some(hit) = cache::lookup(spec, &config.cache_dir)? {
        return Ok(hit);
    }
    generate(client, spec, config)
}
