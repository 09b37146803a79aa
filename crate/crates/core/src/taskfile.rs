//! Declarative task files: a JSON serialization of `define` calls.
//!
//! ```json
//! {
//!   "version": 1,
//!   "tasks": [
//!     {
//!       "name": "calculateFactorial",
//!       "template": "Calculate the factorial of {{n}}",
//!       "return_schema": "int",
//!       "param_schemas": {"n": "int"},
//!       "fewshot": [],
//!       "tests": [{"input": {"n": 5}, "output": 120}],
//!       "codable": true
//!     }
//!   ]
//! }
//! ```
//!
//! Schemas use the constructor syntax of [`TypeSchema::parse`]; a return
//! schema of `"void"` declares a function without a result.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::codegen::{Example, SpecError, TargetLanguage, TaskSpec};
use crate::typeschema::{SchemaError, TypeSchema};

pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TaskFileError {
    #[error("reading task file: {0}")]
    Io(#[from] std::io::Error),
    #[error("task file is not valid: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported task file version {0} (expected {VERSION})")]
    Version(u32),
    #[error("duplicate task name `{0}`")]
    DuplicateName(String),
    #[error("task `{task}`: {field}: {source}")]
    Schema {
        task: String,
        field: String,
        source: SchemaError,
    },
    #[error("task `{task}`: {source}")]
    Spec { task: String, source: SpecError },
    #[error("no task named `{0}`")]
    UnknownTask(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub version: u32,
    pub tasks: Vec<TaskEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub name: String,
    pub template: String,
    pub return_schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_schemas: Option<Map<String, Value>>,
    #[serde(default)]
    pub fewshot: Vec<Example>,
    #[serde(default)]
    pub tests: Vec<Example>,
    #[serde(default)]
    pub codable: bool,
}

impl TaskEntry {
    pub fn return_schema(&self) -> Result<Option<TypeSchema>, TaskFileError> {
        if self.return_schema.trim() == "void" {
            return Ok(None);
        }
        TypeSchema::parse(&self.return_schema)
            .map(Some)
            .map_err(|source| TaskFileError::Schema {
                task: self.name.clone(),
                field: "return_schema".into(),
                source,
            })
    }

    pub fn param_schemas(&self) -> Result<Option<Vec<(String, TypeSchema)>>, TaskFileError> {
        let Some(map) = &self.param_schemas else {
            return Ok(None);
        };
        map.iter()
            .map(|(name, v)| {
                let field = format!("param_schemas.{name}");
                let text = v.as_str().ok_or_else(|| TaskFileError::Schema {
                    task: self.name.clone(),
                    field: field.clone(),
                    source: SchemaError::Syntax {
                        offset: 0,
                        message: "schema must be a string".into(),
                    },
                })?;
                let schema = TypeSchema::parse(text).map_err(|source| TaskFileError::Schema {
                    task: self.name.clone(),
                    field,
                    source,
                })?;
                Ok((name.clone(), schema))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn to_spec(&self, language: TargetLanguage) -> Result<TaskSpec, TaskFileError> {
        let wrap = |source| TaskFileError::Spec {
            task: self.name.clone(),
            source,
        };
        Ok(TaskSpec::new(&self.name, &self.template, self.return_schema()?, self.param_schemas()?)
            .map_err(wrap)?
            .with_fewshot(self.fewshot.clone())
            .map_err(wrap)?
            .with_tests(self.tests.clone())
            .map_err(wrap)?
            .with_language(language))
    }

    /// Codable, with a result and at least one test: runnable on both paths.
    pub fn is_intersecting(&self) -> bool {
        self.codable && self.return_schema.trim() != "void" && !self.tests.is_empty()
    }
}

impl TaskFile {
    pub fn parse(text: &str) -> Result<Self, TaskFileError> {
        let file: TaskFile = serde_json::from_str(text)?;
        file.check()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, TaskFileError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn check(&self) -> Result<(), TaskFileError> {
        if self.version != VERSION {
            return Err(TaskFileError::Version(self.version));
        }
        let mut seen = HashSet::new();
        for task in &self.tasks {
            if !seen.insert(task.name.as_str()) {
                return Err(TaskFileError::DuplicateName(task.name.clone()));
            }
            task.to_spec(TargetLanguage::default())?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&TaskEntry, TaskFileError> {
        self.tasks
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| TaskFileError::UnknownTask(name.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "version": 1,
        "tasks": [
            {"name": "calculateFactorial", "template": "Calculate the factorial of {{n}}",
             "return_schema": "int", "param_schemas": {"n": "int"},
             "tests": [{"input": {"n": 5}, "output": 120}], "codable": true},
            {"name": "getSentiment", "template": "What is the sentiment of {{review}}?",
             "return_schema": "union(literal('positive'), literal('negative'))"},
            {"name": "appendReviewToCsv", "template": "Append {{review}} to {{filename}}",
             "return_schema": "void", "param_schemas": {"filename": "str", "review": "str"}, "codable": true}
        ]
    }"#;

    #[test]
    fn parses_sample() {
        let file = TaskFile::parse(SAMPLE).unwrap();
        assert_eq!(file.tasks.len(), 3);
        let f = file.get("calculateFactorial").unwrap();
        assert!(f.is_intersecting());
        let spec = f.to_spec(TargetLanguage::TypeScript).unwrap();
        assert_eq!(spec.tests.len(), 1);
        assert_eq!(spec.param_schemas.unwrap()[0].0, "n");
        let csv = file.get("appendReviewToCsv").unwrap();
        assert!(!csv.is_intersecting());
        assert_eq!(csv.return_schema().unwrap(), None);
        // declaration order of param schemas is preserved
        let names: Vec<String> = csv.param_schemas().unwrap().unwrap().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["filename", "review"]);
        assert!(matches!(file.get("nope"), Err(TaskFileError::UnknownTask(_))));
    }

    #[test]
    fn rejects_bad_files() {
        let v2 = SAMPLE.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(TaskFile::parse(&v2), Err(TaskFileError::Version(2))));
        let dup = SAMPLE.replace("getSentiment", "calculateFactorial");
        assert!(matches!(TaskFile::parse(&dup), Err(TaskFileError::DuplicateName(_))));
        let bad_schema = SAMPLE.replace("\"return_schema\": \"int\"", "\"return_schema\": \"integer\"");
        assert!(matches!(TaskFile::parse(&bad_schema), Err(TaskFileError::Schema { .. })));
        let mismatch = SAMPLE.replace("{\"n\": \"int\"}", "{\"m\": \"int\"}");
        assert!(matches!(TaskFile::parse(&mismatch), Err(TaskFileError::Spec { .. })));
    }
}
