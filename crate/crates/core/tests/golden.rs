//! Byte-exact prompt and protocol texts.

mod support;

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};

use askit::codegen::runner::{decode_reply, encode_request};
use askit::engine::feedback_text;
use askit::prompt_codec::{build_codegen, build_direct, parse_answer};
use askit::typeschema::validate_at;
use askit::{ArgBinding, PromptTemplate, TaskSpec, TypeSchema};
use serde_json::json;

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../testdata/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn book_list() -> TypeSchema {
    TypeSchema::list(
        TypeSchema::record([
            ("title", TypeSchema::Text),
            ("author", TypeSchema::Text),
            ("year", TypeSchema::Integer),
        ])
        .unwrap(),
    )
}

#[test]
fn direct_prompt_for_books() {
    let tpl = PromptTemplate::parse("List {{n}} classic books on {{subject}}.").unwrap();
    let args = ArgBinding::new().bind("n", 5).unwrap().bind("subject", "computer science").unwrap();
    let prompt = build_direct(&tpl, &args, &book_list(), &[]).unwrap();
    assert_eq!(prompt.text, golden("books_direct.txt"));
}

#[test]
fn codegen_prompt_for_factorial() {
    let expected = golden("factorial_codegen.txt");
    assert_eq!(support::golden::normalize(&golden("factorial_codegen.reference.txt")), expected);
    let spec = TaskSpec::new(
        "calculateFactorial",
        "Calculate the factorial of {{n}}",
        Some(TypeSchema::Integer),
        Some(vec![("n".into(), TypeSchema::Integer)]),
    )
    .unwrap();
    let prompt = build_codegen(&spec);
    assert_eq!(prompt.text, expected);
    assert_eq!(prompt.target_language_tag, "typescript");
}

#[test]
fn type_table() {
    let rows = [
        ("int", "number"),
        ("float", "number"),
        ("bool", "boolean"),
        ("str", "string"),
        ("literal(123)", "123"),
        ("list(int)", "number[]"),
        // reference text uses `,` separators and no inner spaces
        ("dict({ 'x':int, 'y':int })", "{ x: number; y: number }"),
        ("union(literal('yes'),literal('no'))", "'yes' | 'no'"),
    ];
    let mut renders = Vec::new();
    let mut constructors = Vec::new();
    for (usage, ts) in rows {
        let schema = TypeSchema::parse(usage).unwrap();
        assert_eq!(schema.render(), ts, "{usage}");
        renders.push(schema.render());
        constructors.push(schema.to_string());
    }
    renders.sort();
    renders.dedup();
    assert_eq!(renders.len(), 7, "only int and float share a rendering");
    constructors.sort();
    constructors.dedup();
    assert_eq!(constructors.len(), 8);
}

#[test]
fn xy_record_accepts_object_and_denies_array() {
    let xy = TypeSchema::record([("x", TypeSchema::Float), ("y", TypeSchema::Float)]).unwrap();
    assert_eq!(xy.render(), "{ x: number; y: number }");
    assert!(askit::validate(&xy, &json!({"x": 1, "y": -1})).ok);
    let denied = askit::validate(&xy, &json!([1, -1]));
    assert!(!denied.ok);
    assert_eq!(denied.path, "$");
}

#[test]
fn feedback_texts() {
    let books = book_list();
    let prose = parse_answer("I think these are good books.", &books).unwrap_err();
    assert_eq!(
        feedback_text(&prose),
        "Your response did not contain a JSON code block. Respond again with a JSON code block enclosed with ```json and ```."
    );
    let missing = parse_answer("```json\n{\"reason\": \"r\"}\n```", &books).unwrap_err();
    assert_eq!(
        feedback_text(&missing),
        "Your JSON object did not include the 'answer' field. Respond again including both 'reason' and 'answer'."
    );
    let answer = json!([{"title": "t", "author": "a", "year": 1985}, {"title": "t", "author": "a", "year": "1975"}]);
    let response = format!("```json\n{}\n```", json!({"reason": "", "answer": answer}));
    let wrong = parse_answer(&response, &books).unwrap_err();
    assert_eq!(
        feedback_text(&wrong),
        "The 'answer' field did not match the required type at answer[1].year: expected number, found string. Respond again with a conforming 'answer'."
    );
    let report = validate_at(&books, &answer, "answer");
    assert_eq!(report.path, "answer[1].year");
}

#[test]
fn harness_wire_format() {
    let lines: Vec<String> = golden("wire_protocol.txt").lines().map(str::to_string).collect();
    let ok_args = ArgBinding::new().bind("n", 5).unwrap();
    let bad_args = ArgBinding::new().bind("n", -1).unwrap();
    assert_eq!(encode_request("calculateFactorial", &ok_args), lines[0]);
    assert_eq!(decode_reply(&lines[1]).unwrap(), Ok(json!(120)));
    assert_eq!(encode_request("calculateFactorial", &bad_args), lines[2]);
    assert_eq!(decode_reply(&lines[3]).unwrap(), Err("RangeError: negative input".to_string()));

    // both harnesses answer with exactly these bytes
    let js = "exports.calculateFactorial = function ({ n }) {\n  if (n < 0) throw new RangeError('negative input');\n  let r = 1;\n  for (let i = 2; i <= n; i++) r *= i;\n  return r;\n};\n";
    let py = "def calculateFactorial(*, n):\n    if n < 0:\n        raise RangeError('negative input')\n    r = 1\n    for i in range(2, n + 1):\n        r *= i\n    return r\n\nclass RangeError(Exception):\n    pass\n";
    let toolchain = askit::Toolchain::from_env();
    for (program, harness, module_name, module) in [
        (&toolchain.node, include_str!("../src/codegen/harness.js"), "module.js", js),
        (&toolchain.python, include_str!("../src/codegen/harness.py"), "module.py", py),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let harness_file = if module_name.ends_with(".js") { "harness.js" } else { "harness.py" };
        std::fs::write(dir.path().join(harness_file), harness).unwrap();
        std::fs::write(dir.path().join(module_name), module).unwrap();
        let mut cmd = Command::new(program);
        cmd.current_dir(dir.path()).arg(harness_file);
        if harness_file == "harness.py" {
            cmd.arg(dir.path()).arg(module_name);
        }
        let mut child = cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::null()).spawn().unwrap();
        let mut stdin = child.stdin.take().unwrap();
        writeln!(stdin, "{}\n{}", lines[0], lines[2]).unwrap();
        drop(stdin);
        let replies: Vec<String> = BufReader::new(child.stdout.take().unwrap()).lines().map(Result::unwrap).collect();
        child.wait().unwrap();
        assert_eq!(replies, [lines[1].clone(), lines[3].clone()], "{harness_file}");
    }
}
