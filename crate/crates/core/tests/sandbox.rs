//! Generated code runs in a child process confined to its scratch
//! directory.

use std::path::PathBuf;
use std::time::Duration;

use askit::codegen::{ExecError, TargetLanguage, Toolchain, Worker};
use askit::ArgBinding;
use serde_json::json;

fn outside_target(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("askit-escape-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_file(&dir);
    dir
}

fn spawn(source: &str, entry: &str, lang: TargetLanguage) -> Worker {
    Worker::spawn(source, entry, lang, &Toolchain::from_env(), Duration::from_secs(5)).unwrap()
}

fn no_args() -> ArgBinding {
    ArgBinding::new()
}

#[test]
fn typescript_write_outside_scratch_fails() {
    let target = outside_target("ts");
    let source = format!(
        "import * as fs from 'fs';\nexport function escape(): string {{\n  fs.writeFileSync({:?}, 'pwned');\n  return 'done';\n}}\n",
        target.to_str().unwrap()
    );
    let mut worker = spawn(&source, "escape", TargetLanguage::TypeScript);
    let err = worker.call(&no_args()).unwrap_err();
    match err {
        ExecError::Execution { message, .. } => assert!(message.contains("restricted") || message.contains("denied"), "{message}"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(!target.exists());
}

#[test]
fn typescript_write_inside_scratch_is_allowed() {
    let source = "import * as fs from 'fs';\nexport function keep({text}: {text: string}): string {\n  fs.writeFileSync('note.txt', text);\n  return fs.readFileSync('note.txt', 'utf8');\n}\n";
    let mut worker = spawn(source, "keep", TargetLanguage::TypeScript);
    let args = ArgBinding::new().bind("text", "kept").unwrap();
    assert_eq!(worker.call(&args).unwrap(), json!("kept"));
    assert!(worker.scratch_dir().join("note.txt").exists());
}

#[test]
fn typescript_cannot_spawn_processes() {
    let source = "import * as cp from 'child_process';\nexport function shell(): string {\n  return cp.execSync('echo hi').toString();\n}\n";
    let mut worker = spawn(source, "shell", TargetLanguage::TypeScript);
    assert!(matches!(worker.call(&no_args()), Err(ExecError::Execution { .. })));
}

#[test]
fn python_write_outside_scratch_fails() {
    let target = outside_target("py");
    let source = format!(
        "def escape():\n    with open({:?}, 'w') as f:\n        f.write('pwned')\n    return 'done'\n",
        target.to_str().unwrap()
    );
    let mut worker = spawn(&source, "escape", TargetLanguage::Python);
    match worker.call(&no_args()).unwrap_err() {
        ExecError::Execution { message, .. } => assert!(message.contains("PermissionError"), "{message}"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(!target.exists());
}

#[test]
fn python_cannot_spawn_processes_or_open_sockets() {
    let source = "import subprocess, socket\n\ndef shell():\n    return subprocess.run(['true']).returncode\n\ndef dial():\n    socket.create_connection(('127.0.0.1', 9))\n    return 'connected'\n";
    let mut worker = spawn(source, "shell", TargetLanguage::Python);
    assert!(matches!(worker.call(&no_args()), Err(ExecError::Execution { .. })));
    let mut worker = spawn(source, "dial", TargetLanguage::Python);
    match worker.call(&no_args()).unwrap_err() {
        ExecError::Execution { message, .. } => assert!(message.contains("socket.connect"), "{message}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn runaway_code_times_out_and_worker_is_retired() {
    for (lang, source) in [
        (TargetLanguage::TypeScript, "export function spin(): number {\n  while (true) {}\n}\n"),
        (TargetLanguage::Python, "def spin():\n    while True:\n        pass\n"),
    ] {
        let mut worker =
            Worker::spawn(source, "spin", lang, &Toolchain::from_env(), Duration::from_millis(500)).unwrap();
        assert!(matches!(worker.call(&no_args()), Err(ExecError::Timeout(_))), "{lang}");
        assert!(!worker.is_alive());
    }
}

#[test]
fn crashing_process_is_reported() {
    let mut worker = spawn(
        "export function die(): number {\n  process.exit(7);\n}\n",
        "die",
        TargetLanguage::TypeScript,
    );
    match worker.call(&no_args()).unwrap_err() {
        ExecError::Execution { message, .. } => assert!(message.contains("exit"), "{message}"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(!worker.is_alive());
}

#[test]
fn thrown_errors_keep_the_worker_alive() {
    let mut worker = spawn(
        "def check(*, n: int) -> int:\n    if n < 0:\n        raise ValueError('negative')\n    return n\n",
        "check",
        TargetLanguage::Python,
    );
    let bad = ArgBinding::new().bind("n", -1).unwrap();
    match worker.call(&bad).unwrap_err() {
        ExecError::Execution { message, .. } => assert_eq!(message, "ValueError: negative"),
        other => panic!("unexpected {other:?}"),
    }
    let good = ArgBinding::new().bind("n", 4).unwrap();
    assert_eq!(worker.call(&good).unwrap(), json!(4));
}

#[test]
fn child_environment_is_scrubbed() {
    let mut worker = spawn(
        "import os\n\ndef probe():\n    return sorted(os.environ)\n",
        "probe",
        TargetLanguage::Python,
    );
    let keys = worker.call(&no_args()).unwrap();
    // LC_CTYPE may be added by the interpreter's own locale coercion
    for key in keys.as_array().unwrap() {
        assert!(
            ["HOME", "LC_CTYPE", "PATH", "TMPDIR"].contains(&key.as_str().unwrap()),
            "{key} leaked into the child"
        );
    }
}
