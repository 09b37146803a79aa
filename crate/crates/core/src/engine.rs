//! The direct-answer loop: prompt, query, parse, and refine the dialogue
//! with feedback until the answer has the requested type.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::codegen::Example;
use crate::llm_client::{ClientError, CompletionRequest, LlmClient};
use crate::prompt_codec::{build_direct, parse_answer, Violation, ViolationKind};
use crate::template::{ArgBinding, PromptTemplate, TemplateError};
use crate::typeschema::TypeSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// Messages exchanged with the model. Starts with the user prompt; each
/// refinement appends the model's reply followed by a feedback message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Dialogue {
    messages: Vec<Message>,
}

impl Dialogue {
    pub fn new(prompt: impl Into<String>) -> Self {
        Dialogue {
            messages: vec![Message {
                role: Role::User,
                content: prompt.into(),
            }],
        }
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Appends the model's response and the user's follow-up instruction.
    pub fn push_exchange(&mut self, response: impl Into<String>, feedback: impl Into<String>) {
        self.messages.push(Message {
            role: Role::Assistant,
            content: response.into(),
        });
        self.messages.push(Message {
            role: Role::User,
            content: feedback.into(),
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Refinement rounds after the first attempt.
    pub max_direct_retries: u32,
    pub temperature: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_direct_retries: 9,
            temperature: 1.0,
        }
    }
}

impl EngineConfig {
    pub fn check(&self) -> Result<(), EngineError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(EngineError::InvalidTemperature(self.temperature));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("no valid answer after {attempts} attempts; last problem: {violation}")]
    RetriesExhausted {
        attempts: u32,
        violation: Box<Violation>,
        dialogue: Dialogue,
    },
    #[error("temperature {0} is outside [0.0, 2.0]")]
    InvalidTemperature(f64),
}

/// A validated answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub value: Value,
    pub reason: String,
    /// 1-based number of model calls it took.
    pub attempts: u32,
}

/// The follow-up instruction sent after a rejected direct response.
pub fn feedback_text(violation: &Violation) -> String {
    match violation.kind {
        ViolationKind::NoJsonBlock => "Your response did not contain a JSON code block. Respond again with a JSON code block enclosed with ```json and ```.".to_string(),
        ViolationKind::MissingAnswerField => "Your JSON object did not include the 'answer' field. Respond again including both 'reason' and 'answer'.".to_string(),
        ViolationKind::TypeMismatch => {
            let (path, expected, found) = match &violation.report {
                Some(r) => (r.path.as_str(), r.expected.as_str(), r.found.as_str()),
                None => ("answer", "the declared type", violation.detail.as_str()),
            };
            format!("The 'answer' field did not match the required type at {path}: expected {expected}, found {found}. Respond again with a conforming 'answer'.")
        }
        // Code-path violations never reach the direct loop.
        other => format!("Your response was rejected ({other}): {}. Respond again.", violation.detail),
    }
}

/// Runs the direct path until the model produces a well-typed answer or
/// the retry bound is hit.
pub fn ask_until_valid(
    client: &dyn LlmClient,
    tpl: &PromptTemplate,
    args: &ArgBinding,
    answer_schema: &TypeSchema,
    fewshot: &[Example],
    config: &EngineConfig,
) -> Result<Answer, EngineError> {
    config.check()?;
    let prompt = build_direct(tpl, args, answer_schema, fewshot)?;
    let mut dialogue = Dialogue::new(prompt.text);
    let max_attempts = config.max_direct_retries.saturating_add(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        let response = client.complete(&CompletionRequest {
            dialogue: &dialogue,
            temperature: Some(config.temperature),
        })?;
        match parse_answer(&response, answer_schema) {
            Ok((value, reason)) => {
                return Ok(Answer {
                    value,
                    reason,
                    attempts: attempt,
                })
            }
            Err(violation) => {
                let feedback = feedback_text(&violation);
                dialogue.push_exchange(response, feedback);
                if attempt >= max_attempts {
                    return Err(EngineError::RetriesExhausted {
                        attempts: attempt,
                        violation: Box::new(violation),
                        dialogue,
                    });
                }
            }
        }
    }
}

impl fmt::Display for Dialogue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.messages {
            writeln!(f, "[{}]\n{}", m.role.as_str(), m.content)?;
        }
        Ok(())
    }
}
