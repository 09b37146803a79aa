use std::path::PathBuf;
use std::sync::Arc;

use askit::codegen::{output_equal, Allowlist, CodegenError};
use askit::taskfile::TaskFile;
use askit::{
    ApiError, ArgBinding, Askit, CodegenConfig, DefineOptions, Example, LlmClient, ReplayClient, ScriptedClient,
    TargetLanguage, Toolchain, TypeSchema,
};
use serde_json::json;

const FIB_OFF_BY_ONE: &str = "```typescript\nexport function fibonacci({n}: {n: number}): number[] {\n  const seq = [0, 1];\n  for (let i = 2; i <= n + 1; i++) {\n    seq.push(seq[i - 1] + seq[i - 2]);\n  }\n  return seq;\n}\n```";
const FIB_RIGHT: &str = "```typescript\nexport function fibonacci({n}: {n: number}): number[] {\n  const seq: number[] = [];\n  let a = 0;\n  let b = 1;\n  while (a <= n) {\n    seq.push(a);\n    [a, b] = [b, a + b];\n  }\n  return seq;\n}\n```";
const FACTORIAL_TS: &str = "```typescript\nexport function calculateFactorial({n}: {n: number}): number {\n  let r = 1;\n  for (let i = 2; i <= n; i++) r *= i;\n  return r;\n}\n```";

fn testdata() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../testdata")
}

fn config(dir: &tempfile::TempDir) -> CodegenConfig {
    CodegenConfig {
        cache_dir: dir.path().to_path_buf(),
        toolchain: Toolchain::from_env(),
        ..CodegenConfig::default()
    }
}

fn factorial_options() -> DefineOptions {
    DefineOptions::named("calculateFactorial")
        .params(vec![("n".into(), TypeSchema::Integer)])
        .tests(vec![Example::new(json!({"n": 5}), json!(120)).unwrap()])
}

#[test]
fn wrong_candidate_is_rejected_by_tests() {
    let dir = tempfile::tempdir().unwrap();
    let client = Arc::new(ScriptedClient::new([FIB_OFF_BY_ONE, FIB_RIGHT]));
    let askit = Askit::new(client.clone());
    let fib = askit
        .define(
            Some(TypeSchema::list(TypeSchema::Integer)),
            "Generate the Fibonacci sequence up to {{n}}.",
            DefineOptions::named("fibonacci")
                .params(vec![("n".into(), TypeSchema::Integer)])
                .tests(vec![Example::new(json!({"n": 5}), json!([0, 1, 1, 2, 3, 5])).unwrap()]),
        )
        .unwrap();
    let compiled = fib.compile(&config(&dir)).unwrap();
    assert_eq!(compiled.generated().retries_used, 1);
    assert_eq!(client.call_count(), 2);
    assert!(compiled.generated().cache_path.exists());
    let args = ArgBinding::new().bind("n", 5).unwrap();
    assert_eq!(compiled.call(&args).unwrap(), json!([0, 1, 1, 2, 3, 5]));
}

#[test]
fn generation_happens_once() {
    let dir = tempfile::tempdir().unwrap();
    let client = Arc::new(ScriptedClient::new([FACTORIAL_TS]));
    let askit = Askit::new(client.clone());
    let f = askit
        .define(Some(TypeSchema::Integer), "Calculate the factorial of {{n}}", factorial_options())
        .unwrap();
    let first = f.compile(&config(&dir)).unwrap();
    assert_eq!(client.call_count(), 1);
    let second = f.compile(&config(&dir)).unwrap();
    assert_eq!(client.call_count(), 1);
    assert_eq!(first.generated().cache_path, second.generated().cache_path);
    for n in 0..100 {
        let args = ArgBinding::new().bind("n", n % 10).unwrap();
        let expected: u64 = (1..=(n % 10) as u64).product();
        assert_eq!(second.call(&args).unwrap(), json!(expected));
    }
    assert_eq!(client.call_count(), 1);
}

#[test]
fn concurrent_compiles_generate_once() {
    let dir = tempfile::tempdir().unwrap();
    // a single scripted response: a second generation would fail
    let client = Arc::new(ScriptedClient::new([FACTORIAL_TS]));
    let askit = Askit::new(client.clone());
    let f = askit
        .define(Some(TypeSchema::Integer), "Calculate the factorial of {{n}}", factorial_options())
        .unwrap();
    let cfg = config(&dir);
    let paths: Vec<PathBuf> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..6)
            .map(|_| s.spawn(|| f.compile(&cfg).unwrap().generated().cache_path.clone()))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(client.call_count(), 1);
    assert!(paths.windows(2).all(|w| w[0] == w[1]));
    let sources: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "ts"))
        .collect();
    assert_eq!(sources.len(), 1);
}

#[test]
fn direct_and_compiled_paths_agree() {
    let file = TaskFile::load(&testdata().join("tasks.json")).unwrap();
    let replay = Arc::new(ReplayClient::open(askit::llm_client::DEFAULT_MODEL, &testdata().join("fixtures.jsonl")).unwrap());
    let askit = Askit::new(replay.clone());
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir);
    for name in ["factorial", "sumNumbers", "sortNumbers", "reverseString", "isPalindrome"] {
        let entry = file.get(name).unwrap();
        let mut options = DefineOptions::named(name).tests(entry.tests.clone());
        options.param_schemas = entry.param_schemas().unwrap();
        let f = askit.define(entry.return_schema().unwrap(), &entry.template, options).unwrap();
        let compiled = f.compile(&cfg).unwrap();
        for test in &entry.tests {
            let direct = f.call(&test.input).unwrap().value;
            let code = compiled.call(&test.input).unwrap();
            assert!(output_equal(&direct, &code), "{name}: {direct} vs {code}");
            assert!(output_equal(&test.output, &code), "{name}: {code}");
        }
    }
}

#[test]
fn python_target_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let wrong = "```python\ndef calculateFactorial(*, n: int) -> int:\n    return n\n```";
    let right = "```python\ndef calculateFactorial(*, n: int) -> int:\n    result = 1\n    for i in range(2, n + 1):\n        result *= i\n    return result\n```";
    let client = Arc::new(ScriptedClient::new([wrong, right]));
    let askit = Askit::new(client.clone());
    let f = askit
        .define(
            Some(TypeSchema::Integer),
            "Calculate the factorial of {{n}}",
            factorial_options().language(TargetLanguage::Python),
        )
        .unwrap();
    let compiled = f.compile(&config(&dir)).unwrap();
    assert_eq!(compiled.generated().retries_used, 1);
    assert!(compiled.generated().cache_path.to_str().unwrap().ends_with(".py"));
    let prompt = client.requests()[0].messages()[0].content.clone();
    assert!(prompt.contains("```python\ndef calculateFactorial(*, n: int) -> int:"), "{prompt}");
    let args = ArgBinding::new().bind("n", 6).unwrap();
    assert_eq!(compiled.call(&args).unwrap(), json!(720));
}

#[test]
fn failures_before_any_model_call() {
    let client = Arc::new(ScriptedClient::new(Vec::<String>::new()));
    let askit = Askit::new(client.clone());
    let f = askit
        .define(Some(TypeSchema::Integer), "Calculate the factorial of {{n}}", factorial_options())
        .unwrap();
    assert!(matches!(f.call(&ArgBinding::new()), Err(ApiError::Template(_))));

    let void = askit
        .define(None, "Append {{review}} to {{filename}}", DefineOptions::named("appendReview"))
        .unwrap();
    let args = ArgBinding::new().bind("review", "ok").unwrap().bind("filename", "a.csv").unwrap();
    assert!(matches!(void.call(&args), Err(ApiError::VoidAnswer(_))));

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&dir);
    cfg.codable_allowlist = Some(Allowlist {
        names: ["somethingElse".to_string()].into(),
        units: Default::default(),
    });
    assert!(matches!(f.compile(&cfg), Err(ApiError::NotCodable(_))));
    assert!(matches!(
        void.compile(&config(&dir)),
        Err(ApiError::Codegen(CodegenError::MissingParamSchemas(_)))
    ));
    assert_eq!(client.call_count(), 0);
}
