//! Rebuilds `testdata/fixtures.jsonl` from hand-written model responses.
//!
//! Each exchange goes through the real prompt builders and retry loops with
//! a scripted client wrapped in a [`Recorder`], so the stored fixture keys
//! are exactly the ones a replay client will look up.
//!
//! ```text
//! cargo run -p askit-core --example record_fixtures [tasks.json] [fixtures.jsonl]
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use askit::llm_client::DEFAULT_MODEL;
use askit::taskfile::{TaskEntry, TaskFile};
use askit::{ArgBinding, Askit, CodegenConfig, DefineOptions, DefinedFunction, Recorder, ScriptedClient, Toolchain};
use serde_json::{json, Value};

fn envelope(reason: &str, answer: Value) -> String {
    format!(
        "Here is my answer.\n\n```json\n{}\n```",
        json!({"reason": reason, "answer": answer})
    )
}

fn typescript(body: &str) -> String {
    format!("Sure! Here is the implementation:\n\n```typescript\n{}\n```\n", body.trim())
}

/// Candidates returned, in order, when asked to implement each task.
fn code_responses(name: &str) -> Vec<String> {
    let bodies: &[&str] = match name {
        "calculateFactorial" | "factorial" => &[r#"
export function NAME({n}: {n: number}): number {
  let result = 1;
  for (let i = 2; i <= n; i++) {
    result *= i;
  }
  return result;
}"#],
        "sumNumbers" => &[r#"
export function sumNumbers({ns}: {ns: number[]}): number {
  return ns.reduce((acc, x) => acc + x, 0);
}"#],
        "sortNumbers" => &[r#"
export function sortNumbers({ns}: {ns: number[]}): number[] {
  return [...ns].sort((a, b) => a - b);
}"#],
        "reverseString" => &[r#"
export function reverseString({s}: {s: string}): string {
  return s.split('').reverse().join('');
}"#],
        "isPalindrome" => &[r#"
export function isPalindrome({n}: {n: number}): boolean {
  const s = String(n);
  return s === s.split('').reverse().join('');
}"#],
        // first candidate runs one step too far and must be rejected by
        // the test example
        "fibonacci" => &[
            r#"
export function fibonacci({n}: {n: number}): number[] {
  const seq = [0, 1];
  for (let i = 2; i <= n + 1; i++) {
    seq.push(seq[i - 1] + seq[i - 2]);
  }
  return seq;
}"#,
            r#"
export function fibonacci({n}: {n: number}): number[] {
  const seq: number[] = [];
  let a = 0;
  let b = 1;
  while (a <= n) {
    seq.push(a);
    [a, b] = [b, a + b];
  }
  return seq;
}"#,
        ],
        other => panic!("no code written for {other}"),
    };
    bodies.iter().map(|b| typescript(&b.replace("NAME", name))).collect()
}

fn define(askit: &Askit, entry: &TaskEntry) -> DefinedFunction {
    let mut options = DefineOptions::named(&entry.name)
        .fewshot(entry.fewshot.clone())
        .tests(entry.tests.clone());
    options.param_schemas = entry.param_schemas().unwrap();
    askit
        .define(entry.return_schema().unwrap(), &entry.template, options)
        .unwrap()
}

fn recording(fixtures: &Path, responses: Vec<String>) -> Askit {
    let scripted = ScriptedClient::new(responses).with_model(DEFAULT_MODEL);
    Askit::new(Arc::new(Recorder::new(scripted, fixtures).unwrap()))
}

fn main() {
    let mut argv = std::env::args().skip(1);
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../testdata");
    let tasks = argv.next().map_or(root.join("tasks.json"), PathBuf::from);
    let fixtures = argv.next().map_or(root.join("fixtures.jsonl"), PathBuf::from);
    let file = TaskFile::load(&tasks).unwrap();
    let _ = std::fs::remove_file(&fixtures);

    // direct answers that double as the expected test outputs
    for entry in file.tasks.iter().filter(|t| t.is_intersecting()) {
        for test in &entry.tests {
            let reason = format!("Applying the task to {} gives {}.", test.input.to_json(), test.output);
            let askit = recording(&fixtures, vec![envelope(&reason, test.output.clone())]);
            define(&askit, entry).call(&test.input).unwrap();
        }
    }

    let books = json!([
        {"title": "Structure and Interpretation of Computer Programs", "author": "Harold Abelson and Gerald Jay Sussman", "year": 1985},
        {"title": "The Art of Computer Programming", "author": "Donald E. Knuth", "year": 1968},
        {"title": "Introduction to Algorithms", "author": "Thomas H. Cormen, Charles E. Leiserson, Ronald L. Rivest and Clifford Stein", "year": 1990},
        {"title": "Gödel, Escher, Bach: an Eternal Golden Braid", "author": "Douglas Hofstadter", "year": 1979},
        {"title": "The Mythical Man-Month", "author": "Frederick P. Brooks Jr.", "year": 1975}
    ]);
    let askit = recording(
        &fixtures,
        vec![
            "Some classic books on computer science are SICP, TAOCP, CLRS, GEB and The Mythical Man-Month.".into(),
            envelope("These five books are widely regarded as classics of the field.", books),
        ],
    );
    let args = ArgBinding::new().bind("n", 5).unwrap().bind("subject", "computer science").unwrap();
    define(&askit, file.get("getBooks").unwrap()).call(&args).unwrap();

    let askit = recording(
        &fixtures,
        vec![envelope(
            "The review calls the product fantastic and says it exceeds expectations.",
            json!("positive"),
        )],
    );
    let args = ArgBinding::new()
        .bind("review", "The product is fantastic. It exceeds all my expectations.")
        .unwrap();
    define(&askit, file.get("getSentiment").unwrap()).call(&args).unwrap();

    let cache = tempfile::tempdir().unwrap();
    let config = CodegenConfig {
        cache_dir: cache.path().to_path_buf(),
        toolchain: Toolchain::from_env(),
        ..CodegenConfig::default()
    };
    for entry in file.tasks.iter().filter(|t| t.codable) {
        let askit = recording(&fixtures, code_responses(&entry.name));
        let compiled = define(&askit, entry).compile(&config).unwrap();
        eprintln!("{}: {} retries", entry.name, compiled.generated().retries_used);
    }
    eprintln!("wrote {}", fixtures.display());
}
