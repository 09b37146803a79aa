//! Generators shared by the property suites.

#![allow(dead_code)]

pub mod golden;

use askit::typeschema::LiteralValue;
use askit::TypeSchema;
use proptest::prelude::*;
use serde_json::{json, Map, Value};

fn field_name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,5}"
}

fn literal() -> impl Strategy<Value = LiteralValue> {
    prop_oneof![
        (-50i64..50).prop_map(LiteralValue::Int),
        any::<bool>().prop_map(LiteralValue::Bool),
        "[a-z ]{0,6}".prop_map(LiteralValue::Text),
    ]
}

pub fn schema() -> impl Strategy<Value = TypeSchema> {
    let leaf = prop_oneof![
        Just(TypeSchema::Integer),
        Just(TypeSchema::Float),
        Just(TypeSchema::Boolean),
        Just(TypeSchema::Text),
        literal().prop_map(TypeSchema::Literal),
    ];
    leaf.prop_recursive(4, 24, 4, |inner| {
        prop_oneof![
            inner.clone().prop_map(TypeSchema::list),
            prop::collection::btree_map(field_name(), inner.clone(), 1..4)
                .prop_map(|fields| TypeSchema::Record(fields.into_iter().collect())),
            prop::collection::vec(inner, 2..4).prop_map(TypeSchema::Union),
        ]
    })
}

/// Values that conform to `schema`.
pub fn value_for(schema: &TypeSchema) -> BoxedStrategy<Value> {
    match schema {
        TypeSchema::Integer => (-1_000_000_000i64..1_000_000_000).prop_map(Value::from).boxed(),
        TypeSchema::Float => prop_oneof![
            (-1e9f64..1e9).prop_map(|x| json!(x)),
            (-1000i64..1000).prop_map(Value::from),
        ]
        .boxed(),
        TypeSchema::Boolean => any::<bool>().prop_map(Value::Bool).boxed(),
        TypeSchema::Text => ".{0,8}".prop_map(Value::String).boxed(),
        TypeSchema::Literal(l) => Just(l.to_json()).boxed(),
        TypeSchema::List(e) => prop::collection::vec(value_for(e), 0..4).prop_map(Value::Array).boxed(),
        TypeSchema::Record(fields) => {
            let names: Vec<String> = fields.iter().map(|(n, _)| n.clone()).collect();
            fields
                .iter()
                .map(|(_, s)| value_for(s))
                .collect::<Vec<_>>()
                .prop_map(move |values| {
                    Value::Object(names.iter().cloned().zip(values).collect::<Map<_, _>>())
                })
                .boxed()
        }
        TypeSchema::Union(members) => {
            let options: Vec<BoxedStrategy<Value>> = members.iter().map(value_for).collect();
            proptest::strategy::Union::new(options).boxed()
        }
    }
}

pub fn schema_and_value() -> impl Strategy<Value = (TypeSchema, Value)> {
    schema().prop_flat_map(|s| {
        let v = value_for(&s);
        (Just(s), v)
    })
}

#[derive(Debug, Clone)]
enum Step {
    Index(usize),
    Key(String),
}

/// Nodes where a single change must break conformance. Union members are
/// not entered: a broken member value may still match a sibling member.
fn sites(schema: &TypeSchema, value: &Value, path: &mut Vec<Step>, out: &mut Vec<(Vec<Step>, TypeSchema)>) {
    out.push((path.clone(), schema.clone()));
    match (schema, value) {
        (TypeSchema::List(e), Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                path.push(Step::Index(i));
                sites(e, item, path, out);
                path.pop();
            }
        }
        (TypeSchema::Record(fields), Value::Object(map)) => {
            for (name, s) in fields {
                path.push(Step::Key(name.clone()));
                sites(s, &map[name], path, out);
                path.pop();
            }
        }
        _ => {}
    }
}

fn node_mut<'a>(value: &'a mut Value, path: &[Step]) -> &'a mut Value {
    path.iter().fold(value, |v, step| match step {
        Step::Index(i) => &mut v[*i],
        Step::Key(k) => &mut v[k.as_str()],
    })
}

/// Replacements for a node of type `schema` holding `current` that never
/// conform.
fn poisons(schema: &TypeSchema, current: &Value) -> Vec<Value> {
    let mut out = vec![Value::Null];
    match schema {
        TypeSchema::Integer => {
            let n = current.as_i64().unwrap_or(0);
            out.push(json!(n as f64 + 0.5));
            out.push(json!(n.to_string()));
        }
        TypeSchema::Float => out.push(json!("1.5")),
        TypeSchema::Boolean => out.push(json!(1)),
        TypeSchema::Text => out.extend([json!(0), json!([])]),
        TypeSchema::Literal(LiteralValue::Text(_)) => out.push(json!(0.5)),
        TypeSchema::Literal(_) => out.push(json!("mutated")),
        TypeSchema::List(_) => out.extend([json!({}), json!("[]")]),
        TypeSchema::Record(fields) => {
            out.push(json!([]));
            let mut extra = current.as_object().cloned().unwrap_or_default();
            extra.insert("__extra".into(), json!(1));
            out.push(Value::Object(extra));
            let mut missing = current.as_object().cloned().unwrap_or_default();
            missing.remove(&fields[0].0);
            out.push(Value::Object(missing));
        }
        _ => {}
    }
    out
}

/// Applies the `pick`-th of all single structural mutations of `value`.
pub fn mutate(schema: &TypeSchema, value: &Value, pick: usize) -> Value {
    let mut found = Vec::new();
    sites(schema, value, &mut Vec::new(), &mut found);
    let mut all = Vec::new();
    for (path, s) in &found {
        let mut v = value.clone();
        let current = node_mut(&mut v, path).clone();
        for poison in poisons(s, &current) {
            all.push((path.clone(), poison));
        }
    }
    let (path, poison) = all[pick % all.len()].clone();
    let mut v = value.clone();
    *node_mut(&mut v, &path) = poison;
    v
}
