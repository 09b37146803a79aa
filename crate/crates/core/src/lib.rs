//! Typed prompt templates that run either as direct LLM questions or as
//! LLM-generated, validated and cached code, behind one interface.
//!
//! * [`typeschema`]: the answer type algebra, rendered as TypeScript types
//!   and used to validate JSON.
//! * [`template`]: `{{name}}` prompt templates.
//! * [`prompt_codec`]: prompt builders and response parsers.
//! * [`engine`]: the direct-answer retry loop with feedback.
//! * [`codegen`]: code generation, checking, caching and sandboxed execution.
//! * [`llm_client`]: live, recording, replay and scripted model backends.
//! * [`api`]: `ask`, `define` and `compile`.
//! * [`taskfile`]: the declarative JSON task file used by the CLI.

pub mod api;
pub mod codegen;
pub mod engine;
pub mod llm_client;
pub mod prompt_codec;
pub mod taskfile;
pub mod template;
pub mod typeschema;

pub use api::{ApiError, Askit, CompiledFunction, DefineOptions, DefinedFunction};
pub use codegen::{CodegenConfig, Example, GeneratedFunction, TargetLanguage, TaskSpec, Toolchain};
pub use engine::{Answer, Dialogue, EngineConfig};
pub use llm_client::{ClientConfig, LiveClient, LlmClient, Recorder, ReplayClient, ScriptedClient};
pub use template::{ArgBinding, PromptTemplate};
pub use typeschema::{validate, TypeSchema, ValidationReport};
