//! `{{identifier}}` prompt templates.

use std::fmt;

use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("malformed placeholder at byte {offset}: {message}")]
    MalformedPlaceholder { offset: usize, message: &'static str },
    #[error("placeholder `{{{{{name}}}}}` at byte {offset} is not a valid identifier")]
    InvalidIdentifier { offset: usize, name: String },
    #[error("parameter `{0}` is not bound")]
    UnboundParameter(String),
    #[error("argument `{0}` does not name a template parameter")]
    UnknownParameter(String),
    #[error("argument key `{0}` is not a valid identifier")]
    InvalidArgumentKey(String),
}

/// True when `s` matches `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Text(String),
    Placeholder(String),
}

/// A parsed prompt template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    raw: String,
    segments: Vec<Segment>,
    params: Vec<String>,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut params: Vec<String> = Vec::new();
        let mut rest = text;
        let mut offset = 0;

        loop {
            let open = rest.find("{{");
            let close = rest.find("}}");
            match (open, close) {
                (None, None) => break,
                (None, Some(c)) => {
                    return Err(TemplateError::MalformedPlaceholder {
                        offset: offset + c,
                        message: "`}}` without a matching `{{`",
                    })
                }
                (Some(o), Some(c)) if c < o => {
                    return Err(TemplateError::MalformedPlaceholder {
                        offset: offset + c,
                        message: "`}}` without a matching `{{`",
                    })
                }
                (Some(o), _) => {
                    let inner_start = o + 2;
                    let Some(len) = rest[inner_start..].find("}}") else {
                        return Err(TemplateError::MalformedPlaceholder {
                            offset: offset + o,
                            message: "`{{` is never closed",
                        });
                    };
                    let name = &rest[inner_start..inner_start + len];
                    if !is_identifier(name) {
                        return Err(TemplateError::InvalidIdentifier {
                            offset: offset + o,
                            name: name.to_string(),
                        });
                    }
                    if o > 0 {
                        segments.push(Segment::Text(rest[..o].to_string()));
                    }
                    segments.push(Segment::Placeholder(name.to_string()));
                    if !params.iter().any(|p| p == name) {
                        params.push(name.to_string());
                    }
                    let consumed = inner_start + len + 2;
                    offset += consumed;
                    rest = &rest[consumed..];
                }
            }
        }
        if !rest.is_empty() {
            segments.push(Segment::Text(rest.to_string()));
        }

        Ok(PromptTemplate {
            raw: text.to_string(),
            segments,
            params,
        })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Distinct placeholder names in first-occurrence order.
    pub fn params(&self) -> &[String] {
        &self.params
    }

    /// Task text with every `{{x}}` replaced by `'x'`.
    pub fn substitute_comment(&self) -> String {
        let mut out = String::with_capacity(self.raw.len());
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Placeholder(p) => {
                    out.push('\'');
                    out.push_str(p);
                    out.push('\'');
                }
            }
        }
        out
    }

    /// The direct-answer task text: quoted parameter names followed by a
    /// `where 'p' = <json>, ...` line. `args` must bind exactly the
    /// template's parameters.
    pub fn substitute_direct(&self, args: &ArgBinding) -> Result<String, TemplateError> {
        if let Some(missing) = self.params.iter().find(|p| args.get(p).is_none()) {
            return Err(TemplateError::UnboundParameter(missing.clone()));
        }
        if let Some(extra) = args.names().find(|k| !self.params.iter().any(|p| p == k)) {
            return Err(TemplateError::UnknownParameter(extra.to_string()));
        }
        Ok(self.render_with(args))
    }

    /// Like [`PromptTemplate::substitute_direct`] but tolerates partial
    /// bindings: unbound parameters are simply left out of the where-clause.
    pub(crate) fn render_with(&self, args: &ArgBinding) -> String {
        let mut out = self.substitute_comment();
        let bound: Vec<String> = self
            .params
            .iter()
            .filter_map(|p| args.get(p).map(|v| format!("'{p}' = {}", encode_json(v))))
            .collect();
        if !bound.is_empty() {
            out.push_str("\nwhere ");
            out.push_str(&bound.join(", "));
        }
        out
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => f.write_str(t)?,
                Segment::Placeholder(p) => write!(f, "{{{{{p}}}}}")?,
            }
        }
        Ok(())
    }
}

/// Canonical compact JSON used inside prompts.
pub fn encode_json(value: &Value) -> String {
    serde_json::to_string(value).expect("serializing a JSON value cannot fail")
}

/// Named call arguments, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Map<String, Value>", into = "Map<String, Value>")]
pub struct ArgBinding(Map<String, Value>);

impl ArgBinding {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a binding; the key must be an identifier.
    pub fn bind(mut self, name: &str, value: impl Into<Value>) -> Result<Self, TemplateError> {
        if !is_identifier(name) {
            return Err(TemplateError::InvalidArgumentKey(name.to_string()));
        }
        self.0.insert(name.to_string(), value.into());
        Ok(self)
    }

    /// Builds a binding from a JSON object.
    pub fn from_json(value: Value) -> Result<Self, TemplateError> {
        match value {
            Value::Object(map) => Self::try_from(map),
            _ => Err(TemplateError::InvalidArgumentKey(
                "<arguments must be a JSON object>".into(),
            )),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_map(&self) -> &Map<String, Value> {
        &self.0
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.0.clone())
    }
}

impl TryFrom<Map<String, Value>> for ArgBinding {
    type Error = TemplateError;

    fn try_from(map: Map<String, Value>) -> Result<Self, Self::Error> {
        if let Some(bad) = map.keys().find(|k| !is_identifier(k)) {
            return Err(TemplateError::InvalidArgumentKey(bad.clone()));
        }
        Ok(ArgBinding(map))
    }
}

impl From<ArgBinding> for Map<String, Value> {
    fn from(args: ArgBinding) -> Self {
        args.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn args(v: Value) -> ArgBinding {
        ArgBinding::from_json(v).unwrap()
    }

    #[test]
    fn parses_params_in_first_occurrence_order() {
        let t = PromptTemplate::parse("What is the sentiment of {{review}}?").unwrap();
        assert_eq!(t.params(), ["review"]);
        let t = PromptTemplate::parse("Count the number of occurrences of {{x}} in {{xs}}.").unwrap();
        assert_eq!(t.params(), ["x", "xs"]);
        let t = PromptTemplate::parse("compare {{b}} with {{a}} and {{b}}").unwrap();
        assert_eq!(t.params(), ["b", "a"]);
        assert_eq!(t.segments().len(), 6);
        let t = PromptTemplate::parse("Hello world").unwrap();
        assert!(t.params().is_empty());
        assert!(PromptTemplate::parse("").unwrap().segments().is_empty());
    }

    #[test]
    fn rejects_malformed_placeholders() {
        assert!(matches!(
            PromptTemplate::parse("broken {{x"),
            Err(TemplateError::MalformedPlaceholder { offset: 7, .. })
        ));
        assert!(matches!(
            PromptTemplate::parse("broken x}} here"),
            Err(TemplateError::MalformedPlaceholder { offset: 8, .. })
        ));
        assert!(matches!(
            PromptTemplate::parse("{{ x }}"),
            Err(TemplateError::InvalidIdentifier { .. })
        ));
        assert!(matches!(
            PromptTemplate::parse("{{1x}}"),
            Err(TemplateError::InvalidIdentifier { .. })
        ));
        assert!(matches!(
            PromptTemplate::parse("{{}}"),
            Err(TemplateError::InvalidIdentifier { .. })
        ));
        // single braces are ordinary text
        assert!(PromptTemplate::parse("a {b} c").unwrap().params().is_empty());
    }

    #[test]
    fn direct_substitution_format() {
        let t = PromptTemplate::parse("List {{n}} classic books on {{subject}}.").unwrap();
        let out = t
            .substitute_direct(&args(json!({"n": 5, "subject": "computer science"})))
            .unwrap();
        assert_eq!(
            out,
            "List 'n' classic books on 'subject'.\nwhere 'n' = 5, 'subject' = \"computer science\""
        );
        // params order wins over argument order
        let out = t
            .substitute_direct(&args(json!({"subject": "x", "n": 1})))
            .unwrap();
        assert!(out.ends_with("where 'n' = 1, 'subject' = \"x\""));
    }

    #[test]
    fn direct_substitution_encodes_compact_json() {
        let t = PromptTemplate::parse("Sort {{ns}}.").unwrap();
        let out = t.substitute_direct(&args(json!({"ns": [3, 1, 2]}))).unwrap();
        assert_eq!(out, "Sort 'ns'.\nwhere 'ns' = [3,1,2]");
        let t = PromptTemplate::parse("{{o}} {{b}}").unwrap();
        let out = t
            .substitute_direct(&args(json!({"o": {"k": [true, null]}, "b": false})))
            .unwrap();
        assert_eq!(out, "'o' 'b'\nwhere 'o' = {\"k\":[true,null]}, 'b' = false");
    }

    #[test]
    fn zero_param_template_has_no_where_clause() {
        let t = PromptTemplate::parse("Hello").unwrap();
        assert_eq!(t.substitute_direct(&ArgBinding::new()).unwrap(), "Hello");
    }

    #[test]
    fn binding_errors() {
        let t = PromptTemplate::parse("add {{x}} and {{y}}").unwrap();
        assert_eq!(
            t.substitute_direct(&args(json!({"x": 1}))),
            Err(TemplateError::UnboundParameter("y".into()))
        );
        assert_eq!(
            t.substitute_direct(&args(json!({"x": 1, "y": 2, "z": 3}))),
            Err(TemplateError::UnknownParameter("z".into()))
        );
        assert!(ArgBinding::from_json(json!({"not ok": 1})).is_err());
        assert!(ArgBinding::from_json(json!([1])).is_err());
    }

    #[test]
    fn comment_substitution() {
        let t = PromptTemplate::parse("add {{x}} and {{y}}").unwrap();
        assert_eq!(t.substitute_comment(), "add 'x' and 'y'");
        let t = PromptTemplate::parse("Calculate the factorial of {{n}}").unwrap();
        assert_eq!(t.substitute_comment(), "Calculate the factorial of 'n'");
        assert_eq!(PromptTemplate::parse("plain").unwrap().substitute_comment(), "plain");
    }
}
