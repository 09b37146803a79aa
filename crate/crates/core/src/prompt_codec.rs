//! Prompt construction for both execution paths, and parsing of model
//! responses.
//!
//! The direct-answer prompt asks for a fenced JSON `{reason, answer}`
//! envelope whose shape is spelled out as a TypeScript type. The codegen
//! prompt is a one-shot Q/A exchange that shows how an `add` skeleton is
//! completed before presenting the skeleton for the real task.

use std::fmt;

use serde_json::Value;

use crate::codegen::{Example, TargetLanguage, TaskSpec};
use crate::template::{ArgBinding, PromptTemplate, TemplateError};
use crate::typeschema::{validate_at, TypeSchema, ValidationReport};

const DIRECT_PREAMBLE: &str = "You are a helpful assistant that generates responses in JSON format enclosed with ```json and ``` like:
```json
{ \"reason\": \"Step-by-step reason for the answer\", \"answer\": \"Final answer or result\" }
```
The response in the JSON code block should match the type defined as follows:
";

const DIRECT_REASON_LINE: &str = "Explain your answer step-by-step in the 'reason' field.";

/// Fence tag of the type block in direct prompts, whatever the host or
/// codegen target.
pub const TYPE_FENCE_TAG: &str = "ts";

const CODEGEN_QUESTION: &str = "Q: Implement the following function:";
const CODEGEN_ANSWER: &str = "A:";

#[derive(Debug, Clone, PartialEq)]
pub struct DirectPrompt {
    pub text: String,
    /// The wrapped `{reason, answer}` schema rendered into the prompt.
    pub schema: TypeSchema,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodegenPrompt {
    pub text: String,
    pub target_language_tag: String,
    /// The empty function presented for the task.
    pub skeleton: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ViolationKind {
    NoJsonBlock,
    MissingAnswerField,
    TypeMismatch,
    NoCodeBlock,
    SyntaxError,
    TestFailure,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A response that failed one of the acceptance checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
    /// Populated for [`ViolationKind::TypeMismatch`].
    pub report: Option<ValidationReport>,
}

impl Violation {
    pub fn new(kind: ViolationKind, detail: impl Into<String>) -> Self {
        Violation {
            kind,
            detail: detail.into(),
            report: None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.detail)
    }
}

/// Builds the direct-answer prompt.
pub fn build_direct(
    tpl: &PromptTemplate,
    args: &ArgBinding,
    answer_schema: &TypeSchema,
    fewshot: &[Example],
) -> Result<DirectPrompt, TemplateError> {
    let task = tpl.substitute_direct(args)?;
    let schema = TypeSchema::wrap_response(answer_schema.clone());

    let mut text = String::from(DIRECT_PREAMBLE);
    text.push_str("```");
    text.push_str(TYPE_FENCE_TAG);
    text.push('\n');
    text.push_str(&schema.render());
    text.push_str("\n```\n");
    text.push_str(DIRECT_REASON_LINE);
    text.push_str("\n\n");
    for example in fewshot {
        text.push_str(&tpl.render_with(&example.input));
        text.push_str("\n```json\n{\"reason\": \"\", \"answer\": ");
        text.push_str(&crate::template::encode_json(&example.output));
        text.push_str("}\n```\n\n");
    }
    text.push_str(&task);

    Ok(DirectPrompt { text, schema })
}

/// Builds the one-shot code generation prompt for `spec`.
pub fn build_codegen(spec: &TaskSpec) -> CodegenPrompt {
    let lang = spec.target_language;
    let tag = lang.fence_tag();
    let skeleton = task_skeleton(spec);

    let (example_skeleton, example_solution) = one_shot_example(lang);
    let mut text = String::new();
    for (head, body) in [
        (CODEGEN_QUESTION, example_skeleton.as_str()),
        (CODEGEN_ANSWER, example_solution.as_str()),
        (CODEGEN_QUESTION, skeleton.as_str()),
    ] {
        if !text.is_empty() {
            text.push_str("\n\n");
        }
        text.push_str(head);
        text.push_str("\n```");
        text.push_str(tag);
        text.push('\n');
        text.push_str(body);
        text.push_str("\n```");
    }

    CodegenPrompt {
        text,
        target_language_tag: tag.to_string(),
        skeleton,
    }
}

fn one_shot_example(lang: TargetLanguage) -> (String, String) {
    let params = vec![
        ("x".to_string(), TypeSchema::Integer),
        ("y".to_string(), TypeSchema::Integer),
    ];
    let signature = synthesize_signature(lang, "func", Some(&TypeSchema::Integer), Some(&params));
    let comment = format!("{}add 'x' and 'y'", lang.comment_prefix());
    let ret = match lang {
        TargetLanguage::TypeScript => "return x + y;",
        TargetLanguage::Python => "return x + y",
    };
    let indent = lang.indent();
    let skeleton = close_body(lang, format!("{signature}{}\n{indent}{comment}", lang.body_open()));
    let solution = close_body(
        lang,
        format!("{signature}{}\n{indent}{comment}\n{indent}{ret}", lang.body_open()),
    );
    (skeleton, solution)
}

fn close_body(lang: TargetLanguage, mut body: String) -> String {
    if lang == TargetLanguage::TypeScript {
        body.push_str("\n}");
    }
    body
}

fn task_skeleton(spec: &TaskSpec) -> String {
    let lang = spec.target_language;
    let indent = lang.indent();
    let prefix = lang.comment_prefix();
    let signature = synthesize_signature(
        lang,
        &spec.name,
        spec.return_schema.as_ref(),
        spec.param_schemas.as_deref(),
    );
    let mut body = format!(
        "{signature}{}\n{indent}{prefix}{}",
        lang.body_open(),
        spec.template.substitute_comment()
    );
    for example in &spec.fewshot {
        body.push_str(&format!(
            "\n{indent}{prefix}Example: {}({}) == {}",
            spec.name,
            spaced_json(&example.input.to_json()),
            spaced_json(&example.output)
        ));
    }
    close_body(lang, body)
}

/// Named-parameter function signature for the codegen target.
///
/// `params` of `None` means no parameter types were declared; the
/// signature then falls back to untyped names (`any` for TypeScript).
/// A `return_schema` of `None` is a void function.
pub fn synthesize_signature(
    lang: TargetLanguage,
    name: &str,
    return_schema: Option<&TypeSchema>,
    params: Option<&[(String, TypeSchema)]>,
) -> String {
    let params: Vec<(&str, Option<&TypeSchema>)> = match params {
        Some(p) => p.iter().map(|(n, s)| (n.as_str(), Some(s))).collect(),
        None => Vec::new(),
    };
    signature_from(lang, name, return_schema, &params)
}

pub(crate) fn signature_from(
    lang: TargetLanguage,
    name: &str,
    return_schema: Option<&TypeSchema>,
    params: &[(&str, Option<&TypeSchema>)],
) -> String {
    match lang {
        TargetLanguage::TypeScript => {
            let names: Vec<&str> = params.iter().map(|(n, _)| *n).collect();
            let types: Vec<String> = params
                .iter()
                .map(|(n, s)| format!("{n}: {}", s.map_or("any".into(), |s| s.render())))
                .collect();
            let ret = return_schema.map_or("void".into(), TypeSchema::render);
            format!(
                "export function {name}({{{}}}: {{{}}}): {ret}",
                names.join(", "),
                types.join(", ")
            )
        }
        TargetLanguage::Python => {
            let ret = return_schema.map_or("None".into(), render_python);
            if params.is_empty() {
                return format!("def {name}() -> {ret}");
            }
            let args: Vec<String> = params
                .iter()
                .map(|(n, s)| match s {
                    Some(s) => format!("{n}: {}", render_python(s)),
                    None => n.to_string(),
                })
                .collect();
            format!("def {name}(*, {}) -> {ret}", args.join(", "))
        }
    }
}

/// Python annotation for a schema. Records have no inline form and fall
/// back to `dict`.
fn render_python(schema: &TypeSchema) -> String {
    match schema {
        TypeSchema::Integer => "int".into(),
        TypeSchema::Float => "float".into(),
        TypeSchema::Boolean => "bool".into(),
        TypeSchema::Text => "str".into(),
        TypeSchema::Literal(l) => {
            let token = match l {
                crate::typeschema::LiteralValue::Bool(true) => "True".to_string(),
                crate::typeschema::LiteralValue::Bool(false) => "False".to_string(),
                other => TypeSchema::Literal(other.clone()).render(),
            };
            format!("Literal[{token}]")
        }
        TypeSchema::List(e) => format!("list[{}]", render_python(e)),
        TypeSchema::Record(_) => "dict".into(),
        TypeSchema::Union(members) => members
            .iter()
            .map(render_python)
            .collect::<Vec<_>>()
            .join(" | "),
    }
}

/// JSON with `", "` and `": "` separators, as used in example comments.
pub fn spaced_json(value: &Value) -> String {
    match value {
        Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(spaced_json).collect();
            format!("[{}]", inner.join(", "))
        }
        Value::Object(map) => {
            let inner: Vec<String> = map
                .iter()
                .map(|(k, v)| format!("{}: {}", Value::String(k.clone()), spaced_json(v)))
                .collect();
            format!("{{{}}}", inner.join(", "))
        }
        scalar => scalar.to_string(),
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("no ```{tag} block found")]
pub struct BlockNotFound {
    pub tag: String,
}

/// Returns the body of the first fenced block opened with exactly
/// `` ```tag ``. The newline before the closing fence is not part of the
/// body.
pub fn extract_block(text: &str, fence_tag: &str) -> Result<String, BlockNotFound> {
    let text = text.replace("\r\n", "\n");
    let mut lines = text.split('\n');
    while let Some(line) = lines.next() {
        let Some(tag) = line.trim().strip_prefix("```") else {
            continue;
        };
        if tag.trim() != fence_tag {
            continue;
        }
        let mut body: Vec<&str> = Vec::new();
        for inner in lines.by_ref() {
            if inner.trim() == "```" {
                return Ok(body.join("\n"));
            }
            body.push(inner);
        }
        break;
    }
    Err(BlockNotFound {
        tag: fence_tag.to_string(),
    })
}

/// Applies the three direct-response checks in order: a `json` block is
/// present and decodes, the object carries `answer`, and `answer` matches
/// the schema. Returns `(answer, reason)`.
pub fn parse_answer(text: &str, answer_schema: &TypeSchema) -> Result<(Value, String), Violation> {
    let block = extract_block(text, "json")
        .map_err(|_| Violation::new(ViolationKind::NoJsonBlock, "no ```json block in response"))?;
    let decoded: Value = serde_json::from_str(&block).map_err(|e| {
        Violation::new(
            ViolationKind::NoJsonBlock,
            format!("```json block is not valid JSON: {e}"),
        )
    })?;
    let Value::Object(mut object) = decoded else {
        return Err(Violation::new(
            ViolationKind::MissingAnswerField,
            "JSON block is not an object",
        ));
    };
    let Some(answer) = object.remove("answer") else {
        return Err(Violation::new(
            ViolationKind::MissingAnswerField,
            "JSON object has no `answer` field",
        ));
    };
    let reason = match object.remove("reason") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s,
        Some(other) => other.to_string(),
    };
    let report = validate_at(answer_schema, &answer, "answer");
    if !report.ok {
        return Err(Violation {
            kind: ViolationKind::TypeMismatch,
            detail: report.to_string(),
            report: Some(report),
        });
    }
    Ok((answer, reason))
}

/// Extracts generated source for `lang`, trying each accepted fence tag.
pub fn extract_code(text: &str, lang: TargetLanguage) -> Result<String, Violation> {
    lang.fence_tags()
        .iter()
        .find_map(|tag| extract_block(text, tag).ok())
        .ok_or_else(|| {
            Violation::new(
                ViolationKind::NoCodeBlock,
                format!("no ```{} block in response", lang.fence_tag()),
            )
        })
}
