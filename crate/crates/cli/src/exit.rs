//! Process exit codes.

use std::fmt;
use std::process::ExitCode;

use askit::codegen::{CodegenError, ExecError, ToolError};
use askit::engine::EngineError;
use askit::llm_client::ClientError;
use askit::taskfile::TaskFileError;
use askit::ApiError;

pub const OTHER: u8 = 1;
pub const USAGE: u8 = 2;
pub const RETRIES_EXHAUSTED: u8 = 3;
pub const FIXTURE_MISS: u8 = 4;
pub const TOOLCHAIN: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn other(message: impl Into<String>) -> Self {
        CliError {
            code: OTHER,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn client_code(e: &ClientError) -> u8 {
    match e {
        ClientError::FixtureMiss { .. } => FIXTURE_MISS,
        ClientError::InvalidTemperature(_) | ClientError::MalformedFixture { .. } | ClientError::MissingApiKey => USAGE,
        _ => OTHER,
    }
}

fn tool_code(e: &ToolError) -> u8 {
    match e {
        ToolError::Unavailable(_) => TOOLCHAIN,
        _ => OTHER,
    }
}

fn exec_code(e: &ExecError) -> u8 {
    match e {
        ExecError::Tool(t) => tool_code(t),
        _ => OTHER,
    }
}

pub fn codegen_code(e: &CodegenError) -> u8 {
    match e {
        CodegenError::Spec(_) | CodegenError::MissingParamSchemas(_) => USAGE,
        CodegenError::GenerationFailed { .. } => RETRIES_EXHAUSTED,
        CodegenError::Client(c) => client_code(c),
        CodegenError::Toolchain(t) => tool_code(t),
        CodegenError::Cache(_) => OTHER,
    }
}

pub fn api_code(e: &ApiError) -> u8 {
    match e {
        ApiError::Template(_) | ApiError::Spec(_) | ApiError::NotCodable(_) | ApiError::VoidAnswer(_) => USAGE,
        ApiError::Engine(EngineError::RetriesExhausted { .. }) => RETRIES_EXHAUSTED,
        ApiError::Engine(EngineError::Client(c)) => client_code(c),
        ApiError::Engine(_) => USAGE,
        ApiError::Codegen(c) => codegen_code(c),
        ApiError::Exec(x) => exec_code(x),
    }
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        CliError {
            code: api_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        CliError {
            code: client_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<TaskFileError> for CliError {
    fn from(e: TaskFileError) -> Self {
        let code = match e {
            TaskFileError::Io(_) => OTHER,
            _ => USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::other(e.to_string())
    }
}
