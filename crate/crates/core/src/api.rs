//! The user-facing interface: [`Askit::ask`], [`Askit::define`] and
//! [`DefinedFunction::compile`].
//!
//! One [`TaskSpec`] serves both execution paths. Calling a
//! [`DefinedFunction`] asks the model at call time; compiling it produces a
//! [`CompiledFunction`] backed by validated, cached code that never talks
//! to the model again.
//!
//! ```no_run
//! use askit::{Askit, ArgBinding, DefineOptions, ReplayClient, TypeSchema};
//! use std::sync::Arc;
//!
//! let client = Arc::new(ReplayClient::open("gpt-3.5-turbo-16k", "fixtures.jsonl".as_ref())?);
//! let askit = Askit::new(client);
//! let factorial = askit.define(
//!     Some(TypeSchema::Integer),
//!     "Calculate the factorial of {{n}}",
//!     DefineOptions::named("calculateFactorial").params(vec![("n".into(), TypeSchema::Integer)]),
//! )?;
//! let args = ArgBinding::new().bind("n", 5)?;
//! println!("{}", factorial.call(&args)?.value);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

use std::sync::{Arc, Mutex};

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::codegen::{self, CodegenConfig, CodegenError, ExecError, Example, GeneratedFunction, SpecError, TaskSpec, Worker};
use crate::engine::{ask_until_valid, Answer, EngineConfig, EngineError};
use crate::llm_client::LlmClient;
use crate::template::{ArgBinding, PromptTemplate, TemplateError};
use crate::typeschema::TypeSchema;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("task `{0}` is not designated as codable")]
    NotCodable(String),
    #[error("task `{0}` returns void and cannot be answered directly")]
    VoidAnswer(String),
}

/// Entry point holding the model client and direct-path settings.
#[derive(Clone)]
pub struct Askit {
    client: Arc<dyn LlmClient>,
    engine: EngineConfig,
}

impl Askit {
    pub fn new(client: Arc<dyn LlmClient>) -> Self {
        Askit {
            client,
            engine: EngineConfig::default(),
        }
    }

    pub fn with_engine_config(mut self, engine: EngineConfig) -> Self {
        self.engine = engine;
        self
    }

    pub fn client(&self) -> &Arc<dyn LlmClient> {
        &self.client
    }

    /// One-off direct question.
    pub fn ask(&self, answer_schema: &TypeSchema, template: &str, args: &ArgBinding) -> Result<Answer, ApiError> {
        self.ask_with_examples(answer_schema, template, args, &[])
    }

    pub fn ask_with_examples(
        &self,
        answer_schema: &TypeSchema,
        template: &str,
        args: &ArgBinding,
        fewshot: &[Example],
    ) -> Result<Answer, ApiError> {
        let tpl = PromptTemplate::parse(template)?;
        // fail before any client call
        tpl.substitute_direct(args)?;
        Ok(ask_until_valid(self.client.as_ref(), &tpl, args, answer_schema, fewshot, &self.engine)?)
    }

    /// Declares a task. `return_schema` of `None` is a void function, only
    /// usable through [`DefinedFunction::compile`].
    pub fn define(
        &self,
        return_schema: Option<TypeSchema>,
        template: &str,
        options: DefineOptions,
    ) -> Result<DefinedFunction, ApiError> {
        let name = match options.name {
            Some(n) => n,
            None => default_name(template),
        };
        let tests = match (options.tests, options.reuse_fewshot_as_tests) {
            (Some(t), _) => t,
            (None, true) => options.fewshot.clone(),
            (None, false) => Vec::new(),
        };
        let spec = TaskSpec::new(&name, template, return_schema, options.param_schemas)?
            .with_fewshot(options.fewshot)?
            .with_tests(tests)?
            .with_language(options.target_language);
        Ok(DefinedFunction {
            spec,
            client: Arc::clone(&self.client),
            engine: self.engine.clone(),
        })
    }
}

fn default_name(template: &str) -> String {
    let hash = Sha256::digest(template.as_bytes());
    format!("task_{}", hex::encode(&hash[..4]))
}

/// Optional parts of a `define`.
#[derive(Debug, Clone, Default)]
pub struct DefineOptions {
    pub name: Option<String>,
    pub param_schemas: Option<Vec<(String, TypeSchema)>>,
    pub fewshot: Vec<Example>,
    pub tests: Option<Vec<Example>>,
    /// Use the few-shot examples as validation tests when `tests` is unset.
    pub reuse_fewshot_as_tests: bool,
    pub target_language: codegen::TargetLanguage,
}

impl DefineOptions {
    pub fn named(name: &str) -> Self {
        DefineOptions {
            name: Some(name.to_string()),
            ..Default::default()
        }
    }

    pub fn params(mut self, params: Vec<(String, TypeSchema)>) -> Self {
        self.param_schemas = Some(params);
        self
    }

    pub fn fewshot(mut self, examples: Vec<Example>) -> Self {
        self.fewshot = examples;
        self
    }

    pub fn tests(mut self, examples: Vec<Example>) -> Self {
        self.tests = Some(examples);
        self
    }

    pub fn language(mut self, language: codegen::TargetLanguage) -> Self {
        self.target_language = language;
        self
    }
}

/// A task answered by the model on every call.
#[derive(Clone)]
pub struct DefinedFunction {
    spec: TaskSpec,
    client: Arc<dyn LlmClient>,
    engine: EngineConfig,
}

impl std::fmt::Debug for DefinedFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DefinedFunction").field("spec", &self.spec).finish()
    }
}

impl DefinedFunction {
    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn call(&self, args: &ArgBinding) -> Result<Answer, ApiError> {
        let schema = self
            .spec
            .return_schema
            .as_ref()
            .ok_or_else(|| ApiError::VoidAnswer(self.spec.name.clone()))?;
        self.spec.template.substitute_direct(args)?;
        Ok(ask_until_valid(
            self.client.as_ref(),
            &self.spec.template,
            args,
            schema,
            &self.spec.fewshot,
            &self.engine,
        )?)
    }

    /// Generates (or loads from cache) an implementation.
    pub fn compile(&self, config: &CodegenConfig) -> Result<CompiledFunction, ApiError> {
        if let Some(allow) = &config.codable_allowlist {
            if !allow.permits(&self.spec.name) {
                return Err(ApiError::NotCodable(self.spec.name.clone()));
            }
        }
        let generated = codegen::compile(self.client.as_ref(), &self.spec, config)?;
        Ok(CompiledFunction {
            spec: self.spec.clone(),
            generated,
            config: config.clone(),
            worker: Mutex::new(None),
        })
    }
}

/// A task backed by generated code. Calls run in a child process kept warm
/// between calls and never reach the model.
pub struct CompiledFunction {
    spec: TaskSpec,
    generated: GeneratedFunction,
    config: CodegenConfig,
    worker: Mutex<Option<Worker>>,
}

impl std::fmt::Debug for CompiledFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompiledFunction")
            .field("spec", &self.spec)
            .field("generated", &self.generated)
            .finish()
    }
}

impl CompiledFunction {
    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn generated(&self) -> &GeneratedFunction {
        &self.generated
    }

    /// Starts the worker process ahead of the first call.
    pub fn warm_up(&self) -> Result<(), ApiError> {
        let mut slot = self.worker.lock().unwrap_or_else(|e| e.into_inner());
        self.ensure_worker(&mut slot)?;
        Ok(())
    }

    fn ensure_worker<'a>(&self, slot: &'a mut Option<Worker>) -> Result<&'a mut Worker, ApiError> {
        if slot.as_ref().is_none_or(|w| !w.is_alive()) {
            *slot = Some(Worker::for_function(
                &self.generated,
                &self.config.toolchain,
                self.config.exec_timeout,
            )?);
        }
        Ok(slot.as_mut().expect("worker just ensured"))
    }

    pub fn call(&self, args: &ArgBinding) -> Result<Value, ApiError> {
        self.spec.template.substitute_direct(args)?;
        let mut slot = self.worker.lock().unwrap_or_else(|e| e.into_inner());
        let worker = self.ensure_worker(&mut slot)?;
        Ok(worker.call(args)?)
    }
}
