//! The answer/parameter type algebra.
//!
//! A [`TypeSchema`] has three jobs:
//!
//! * it renders to the TypeScript type expression embedded in prompts
//!   ([`TypeSchema::render`]),
//! * it validates decoded JSON values coming back from the model or from
//!   generated code ([`validate`]),
//! * it round-trips through a small constructor syntax (`int`, `list(str)`,
//!   `dict({'x': int})`, ...) used by task files ([`TypeSchema::parse`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::template::is_identifier;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("duplicate record field `{0}`")]
    DuplicateField(String),
    #[error("record field `{0}` is not a valid identifier")]
    InvalidFieldName(String),
    #[error("a union needs at least two members, got {0}")]
    UnionTooSmall(usize),
    #[error("literal must be a finite number, boolean or string")]
    InvalidLiteral,
    #[error("schema syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
}

/// Scalar constant allowed inside a [`TypeSchema::Literal`].
#[derive(Debug, Clone, PartialEq)]
pub enum LiteralValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl LiteralValue {
    fn matches(&self, value: &Value) -> bool {
        match (self, value) {
            (LiteralValue::Bool(b), Value::Bool(v)) => b == v,
            (LiteralValue::Text(s), Value::String(v)) => s == v,
            (LiteralValue::Int(i), Value::Number(n)) => match n.as_i64() {
                Some(v) => v == *i,
                None => n.as_f64() == Some(*i as f64),
            },
            (LiteralValue::Float(f), Value::Number(n)) => n.as_f64() == Some(*f),
            _ => false,
        }
    }

    /// The JSON value this literal denotes.
    pub fn to_json(&self) -> Value {
        match self {
            LiteralValue::Int(i) => Value::from(*i),
            LiteralValue::Float(f) => Value::from(*f),
            LiteralValue::Bool(b) => Value::Bool(*b),
            LiteralValue::Text(s) => Value::String(s.clone()),
        }
    }

    /// TypeScript literal token: `123`, `1.5`, `true`, `'yes'`.
    fn render(&self) -> String {
        match self {
            LiteralValue::Int(i) => i.to_string(),
            LiteralValue::Float(f) => format_float(*f),
            LiteralValue::Bool(b) => b.to_string(),
            LiteralValue::Text(s) => quote_single(s),
        }
    }
}

fn format_float(f: f64) -> String {
    // JS number formatting: integral floats print without a fraction.
    if f.fract() == 0.0 && f.abs() < 1e15 {
        format!("{}", f as i64)
    } else {
        format!("{f}")
    }
}

fn quote_single(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('\'');
    out
}

/// Algebraic description of an expected JSON shape.
#[derive(Debug, Clone, PartialEq)]
pub enum TypeSchema {
    Integer,
    Float,
    Boolean,
    Text,
    Literal(LiteralValue),
    List(Box<TypeSchema>),
    Record(Vec<(String, TypeSchema)>),
    Union(Vec<TypeSchema>),
}

impl TypeSchema {
    pub fn list(element: TypeSchema) -> Self {
        TypeSchema::List(Box::new(element))
    }

    pub fn literal_text(s: impl Into<String>) -> Self {
        TypeSchema::Literal(LiteralValue::Text(s.into()))
    }

    pub fn literal_int(i: i64) -> Self {
        TypeSchema::Literal(LiteralValue::Int(i))
    }

    /// Builds a record, rejecting duplicate or non-identifier field names.
    pub fn record<I, S>(fields: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = (S, TypeSchema)>,
        S: Into<String>,
    {
        let fields: Vec<(String, TypeSchema)> =
            fields.into_iter().map(|(n, s)| (n.into(), s)).collect();
        check_fields(&fields)?;
        Ok(TypeSchema::Record(fields))
    }

    pub fn union(members: Vec<TypeSchema>) -> Result<Self, SchemaError> {
        if members.len() < 2 {
            return Err(SchemaError::UnionTooSmall(members.len()));
        }
        Ok(TypeSchema::Union(members))
    }

    /// The fixed `{ reason: string; answer: T }` envelope every direct
    /// response must contain.
    pub fn wrap_response(answer: TypeSchema) -> Self {
        TypeSchema::Record(vec![
            ("reason".to_string(), TypeSchema::Text),
            ("answer".to_string(), answer),
        ])
    }

    /// Checks the structural invariants of the whole tree. Schemas built
    /// through the variants directly (rather than [`TypeSchema::record`] /
    /// [`TypeSchema::union`]) can be checked with this.
    pub fn check(&self) -> Result<(), SchemaError> {
        match self {
            TypeSchema::Literal(LiteralValue::Float(f)) if !f.is_finite() => {
                Err(SchemaError::InvalidLiteral)
            }
            TypeSchema::List(e) => e.check(),
            TypeSchema::Record(fields) => {
                check_fields(fields)?;
                fields.iter().try_for_each(|(_, s)| s.check())
            }
            TypeSchema::Union(members) => {
                if members.len() < 2 {
                    return Err(SchemaError::UnionTooSmall(members.len()));
                }
                members.iter().try_for_each(TypeSchema::check)
            }
            _ => Ok(()),
        }
    }

    /// Renders the TypeScript type expression used inside prompts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out);
        out
    }

    fn render_into(&self, out: &mut String) {
        match self {
            TypeSchema::Integer | TypeSchema::Float => out.push_str("number"),
            TypeSchema::Boolean => out.push_str("boolean"),
            TypeSchema::Text => out.push_str("string"),
            TypeSchema::Literal(l) => out.push_str(&l.render()),
            TypeSchema::List(e) => {
                if matches!(**e, TypeSchema::Union(_)) {
                    out.push('(');
                    e.render_into(out);
                    out.push(')');
                } else {
                    e.render_into(out);
                }
                out.push_str("[]");
            }
            TypeSchema::Record(fields) if fields.is_empty() => out.push_str("{}"),
            TypeSchema::Record(fields) => {
                out.push_str("{ ");
                for (i, (name, schema)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push_str("; ");
                    }
                    out.push_str(name);
                    out.push_str(": ");
                    schema.render_into(out);
                }
                out.push_str(" }");
            }
            TypeSchema::Union(members) => {
                for (i, m) in members.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" | ");
                    }
                    m.render_into(out);
                }
            }
        }
    }

    /// Parses the constructor syntax (`int`, `list(int)`,
    /// `dict({'x': int})`, `union(literal('yes'), literal('no'))`).
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let mut p = SyntaxParser { src: text, pos: 0 };
        let schema = p.schema()?;
        p.skip_ws();
        if p.pos != text.len() {
            return Err(p.error("trailing input"));
        }
        Ok(schema)
    }
}

fn check_fields(fields: &[(String, TypeSchema)]) -> Result<(), SchemaError> {
    for (i, (name, _)) in fields.iter().enumerate() {
        if !is_identifier(name) {
            return Err(SchemaError::InvalidFieldName(name.clone()));
        }
        if fields[..i].iter().any(|(n, _)| n == name) {
            return Err(SchemaError::DuplicateField(name.clone()));
        }
    }
    Ok(())
}

/// Prints the constructor syntax accepted by [`TypeSchema::parse`].
impl fmt::Display for TypeSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeSchema::Integer => f.write_str("int"),
            TypeSchema::Float => f.write_str("float"),
            TypeSchema::Boolean => f.write_str("bool"),
            TypeSchema::Text => f.write_str("str"),
            TypeSchema::Literal(l) => match l {
                LiteralValue::Float(x) if x.fract() == 0.0 => write!(f, "literal({x:.1})"),
                _ => write!(f, "literal({})", l.render()),
            },
            TypeSchema::List(e) => write!(f, "list({e})"),
            TypeSchema::Record(fields) => {
                f.write_str("dict({")?;
                for (i, (n, s)) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "'{n}': {s}")?;
                }
                f.write_str("})")
            }
            TypeSchema::Union(members) => {
                f.write_str("union(")?;
                for (i, m) in members.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{m}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for TypeSchema {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TypeSchema::parse(s)
    }
}

impl Serialize for TypeSchema {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TypeSchema {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        TypeSchema::parse(&text).map_err(serde::de::Error::custom)
    }
}

struct SyntaxParser<'a> {
    src: &'a str,
    pos: usize,
}

impl SyntaxParser<'_> {
    fn error(&self, message: impl Into<String>) -> SchemaError {
        SchemaError::Syntax {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), SchemaError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn word(&mut self) -> &str {
        self.skip_ws();
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(self.rest().len());
        let start = self.pos;
        self.pos += len;
        &self.src[start..self.pos]
    }

    fn schema(&mut self) -> Result<TypeSchema, SchemaError> {
        let start = self.pos;
        let word = self.word().to_string();
        match word.as_str() {
            "int" => Ok(TypeSchema::Integer),
            "float" => Ok(TypeSchema::Float),
            "bool" => Ok(TypeSchema::Boolean),
            "str" => Ok(TypeSchema::Text),
            "literal" => {
                self.expect('(')?;
                let lit = self.literal()?;
                self.expect(')')?;
                Ok(TypeSchema::Literal(lit))
            }
            "list" => {
                self.expect('(')?;
                let e = self.schema()?;
                self.expect(')')?;
                Ok(TypeSchema::list(e))
            }
            "dict" => {
                self.expect('(')?;
                self.expect('{')?;
                let mut fields = Vec::new();
                if !self.eat('}') {
                    loop {
                        let key_at = self.pos;
                        let name = self.string()?;
                        self.expect(':')?;
                        let s = self.schema()?;
                        if fields.iter().any(|(n, _): &(String, _)| *n == name) {
                            self.pos = key_at;
                            return Err(SchemaError::DuplicateField(name));
                        }
                        fields.push((name, s));
                        if self.eat('}') {
                            break;
                        }
                        self.expect(',')?;
                    }
                }
                self.expect(')')?;
                TypeSchema::record(fields)
            }
            "union" => {
                self.expect('(')?;
                let mut members = vec![self.schema()?];
                while self.eat(',') {
                    members.push(self.schema()?);
                }
                self.expect(')')?;
                TypeSchema::union(members)
            }
            "" => Err(self.error("expected a type")),
            other => {
                self.pos = start;
                self.skip_ws();
                Err(self.error(format!("unknown type constructor `{other}`")))
            }
        }
    }

    fn string(&mut self) -> Result<String, SchemaError> {
        self.skip_ws();
        let quote = match self.rest().chars().next() {
            Some(q @ ('\'' | '"')) => q,
            _ => return Err(self.error("expected a quoted string")),
        };
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.rest().char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, e)) => out.push(e),
                    None => break,
                },
                c if c == quote => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                c => out.push(c),
            }
        }
        Err(self.error("unterminated string"))
    }

    fn literal(&mut self) -> Result<LiteralValue, SchemaError> {
        self.skip_ws();
        match self.rest().chars().next() {
            Some('\'' | '"') => Ok(LiteralValue::Text(self.string()?)),
            _ => {
                let len = self
                    .rest()
                    .find(|c: char| !(c.is_ascii_alphanumeric() || "+-._".contains(c)))
                    .unwrap_or(self.rest().len());
                let token = &self.rest()[..len];
                let lit = match token {
                    "true" => LiteralValue::Bool(true),
                    "false" => LiteralValue::Bool(false),
                    t => {
                        if let Ok(i) = t.parse::<i64>() {
                            LiteralValue::Int(i)
                        } else {
                            match t.parse::<f64>() {
                                Ok(f) if f.is_finite() => LiteralValue::Float(f),
                                _ => return Err(self.error(format!("bad literal `{t}`"))),
                            }
                        }
                    }
                };
                self.pos += len;
                Ok(lit)
            }
        }
    }
}

/// Outcome of [`validate`]. Diagnostics are populated only when `ok` is
/// false.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub ok: bool,
    /// Location of the first mismatch, e.g. `answer[2].year`.
    pub path: String,
    pub expected: String,
    pub found: String,
}

impl ValidationReport {
    fn pass() -> Self {
        ValidationReport {
            ok: true,
            ..Default::default()
        }
    }

    fn fail(path: &str, expected: String, found: String) -> Self {
        ValidationReport {
            ok: false,
            path: path.to_string(),
            expected,
            found,
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            f.write_str("ok")
        } else {
            write!(
                f,
                "at {}: expected {}, found {}",
                self.path, self.expected, self.found
            )
        }
    }
}

/// Validates `value` against `schema`, reporting paths relative to `$`.
pub fn validate(schema: &TypeSchema, value: &Value) -> ValidationReport {
    validate_at(schema, value, "$")
}

/// Like [`validate`] but with a caller-chosen root path name.
pub fn validate_at(schema: &TypeSchema, value: &Value, root: &str) -> ValidationReport {
    let mut path = root.to_string();
    check(schema, value, &mut path)
}

fn describe(value: &Value) -> String {
    match value {
        Value::Null => "null".into(),
        Value::Bool(b) => format!("boolean {b}"),
        Value::Number(n) => format!("number {n}"),
        Value::String(_) => "string".into(),
        Value::Array(_) => "array".into(),
        Value::Object(_) => "object".into(),
    }
}

fn is_integral(n: &serde_json::Number) -> bool {
    n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.fract() == 0.0)
}

fn check(schema: &TypeSchema, value: &Value, path: &mut String) -> ValidationReport {
    let mismatch = |path: &str, found: String| ValidationReport::fail(path, schema.render(), found);
    match (schema, value) {
        (TypeSchema::Integer, Value::Number(n)) => {
            if is_integral(n) {
                ValidationReport::pass()
            } else {
                mismatch(path, "non-integral number".into())
            }
        }
        (TypeSchema::Float, Value::Number(_))
        | (TypeSchema::Boolean, Value::Bool(_))
        | (TypeSchema::Text, Value::String(_)) => ValidationReport::pass(),
        (TypeSchema::Literal(l), v) => {
            if l.matches(v) {
                ValidationReport::pass()
            } else {
                let found = match v {
                    Value::String(s) => format!("string {}", Value::String(s.clone())),
                    other => describe(other),
                };
                mismatch(path, found)
            }
        }
        (TypeSchema::List(element), Value::Array(items)) => {
            let base = path.len();
            for (i, item) in items.iter().enumerate() {
                path.push_str(&format!("[{i}]"));
                let report = check(element, item, path);
                path.truncate(base);
                if !report.ok {
                    return report;
                }
            }
            ValidationReport::pass()
        }
        (TypeSchema::Record(fields), Value::Object(map)) => {
            let base = path.len();
            for (name, field_schema) in fields {
                path.push('.');
                path.push_str(name);
                let report = match map.get(name) {
                    Some(v) => check(field_schema, v, path),
                    None => ValidationReport::fail(
                        path,
                        field_schema.render(),
                        "missing field".into(),
                    ),
                };
                path.truncate(base);
                if !report.ok {
                    return report;
                }
            }
            if let Some(extra) = map.keys().find(|k| !fields.iter().any(|(n, _)| n == *k)) {
                return mismatch(path, format!("unexpected field '{extra}'"));
            }
            ValidationReport::pass()
        }
        (TypeSchema::Union(members), v) => {
            if members.iter().any(|m| check(m, v, path).ok) {
                ValidationReport::pass()
            } else {
                mismatch(path, describe(v))
            }
        }
        (_, v) => mismatch(path, describe(v)),
    }
}
