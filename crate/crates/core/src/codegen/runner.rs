//! Executes generated functions in an isolated child process.
//!
//! Each [`Worker`] owns a private scratch directory holding the generated
//! module and a small harness for the target language. The harness speaks
//! a line-delimited JSON protocol on its standard streams:
//!
//! ```text
//! -> {"entry":"add","args":{"x":2,"y":3}}
//! <- {"ok":true,"result":5}
//! <- {"ok":false,"error":"Error: boom"}
//! ```
//!
//! TypeScript modules run under Node's permission model with file-system
//! reads and writes restricted to the scratch directory; Python modules run
//! under an audit hook that denies writes outside it, process spawning and
//! sockets.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde_json::{json, Value};
use tempfile::TempDir;

use super::target::{run_tool, spawn_tool, tsc_command, TargetLanguage, ToolError, Toolchain};
use super::GeneratedFunction;
use crate::template::ArgBinding;

const NODE_HARNESS: &str = include_str!("harness.js");
const PYTHON_HARNESS: &str = include_str!("harness.py");
const TRANSPILE_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("generated code failed: {message}")]
    Execution { message: String, stderr: String },
    #[error("generated code did not answer within {0:?}")]
    Timeout(Duration),
    #[error("harness protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

impl From<std::io::Error> for ExecError {
    fn from(e: std::io::Error) -> Self {
        ExecError::Tool(ToolError::Io(e))
    }
}

/// Encodes one harness request.
pub fn encode_request(entry: &str, args: &ArgBinding) -> String {
    json!({"entry": entry, "args": args.to_json()}).to_string()
}

/// Decodes one harness reply line.
pub fn decode_reply(line: &str) -> Result<Result<Value, String>, ExecError> {
    let reply: Value = serde_json::from_str(line)
        .map_err(|e| ExecError::Protocol(format!("{e}: {}", excerpt(line))))?;
    match reply.get("ok") {
        Some(Value::Bool(true)) => Ok(Ok(reply.get("result").cloned().unwrap_or(Value::Null))),
        Some(Value::Bool(false)) => Ok(Err(reply
            .get("error")
            .and_then(Value::as_str)
            .unwrap_or("unknown error")
            .to_string())),
        _ => Err(ExecError::Protocol(format!("reply lacks `ok`: {}", excerpt(line)))),
    }
}

fn excerpt(s: &str) -> String {
    let mut out: String = s.chars().take(200).collect();
    if out.len() < s.len() {
        out.push('…');
    }
    out
}

fn node_permission_flag(node: &Path) -> &'static str {
    static FLAGS: OnceLock<Mutex<HashMap<PathBuf, &'static str>>> = OnceLock::new();
    let cache = FLAGS.get_or_init(Default::default);
    let mut cache = cache.lock().unwrap_or_else(|e| e.into_inner());
    cache.entry(node.to_path_buf()).or_insert_with(|| {
        let major = Command::new(node)
            .arg("--version")
            .output()
            .ok()
            .and_then(|o| {
                let v = String::from_utf8_lossy(&o.stdout).into_owned();
                v.trim().trim_start_matches('v').split('.').next()?.parse::<u32>().ok()
            })
            .unwrap_or(20);
        if major >= 23 {
            "--permission"
        } else {
            "--experimental-permission"
        }
    })
}

/// A running harness process serving calls for one generated module.
pub struct Worker {
    child: Child,
    stdin: ChildStdin,
    replies: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<String>>,
    timeout: Duration,
    entry: String,
    scratch: TempDir,
    dead: bool,
}

impl std::fmt::Debug for Worker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Worker")
            .field("entry", &self.entry)
            .field("scratch", &self.scratch.path())
            .field("pid", &self.child.id())
            .finish()
    }
}

impl Worker {
    pub fn for_function(f: &GeneratedFunction, toolchain: &Toolchain, timeout: Duration) -> Result<Self, ExecError> {
        Self::spawn(&f.source, &f.entry, f.language, toolchain, timeout)
    }

    /// Prepares a scratch directory for `source` and starts the harness.
    pub fn spawn(
        source: &str,
        entry: &str,
        language: TargetLanguage,
        toolchain: &Toolchain,
        timeout: Duration,
    ) -> Result<Self, ExecError> {
        let scratch = tempfile::Builder::new().prefix("askit-run-").tempdir()?;
        let dir = scratch.path().canonicalize()?;
        let mut cmd = match language {
            TargetLanguage::TypeScript => {
                std::fs::write(dir.join("module.ts"), source)?;
                let out = run_tool(tsc_command(toolchain, &dir, "module.ts", true), TRANSPILE_TIMEOUT)?;
                if !dir.join("module.js").exists() {
                    return Err(ExecError::Execution {
                        message: format!("transpiling failed: {}", out.stdout.trim()),
                        stderr: out.stderr,
                    });
                }
                std::fs::write(dir.join("harness.js"), NODE_HARNESS)?;
                let mut cmd = Command::new(&toolchain.node);
                let scope = dir.to_string_lossy();
                cmd.arg(node_permission_flag(&toolchain.node))
                    .arg(format!("--allow-fs-read={scope}"))
                    .arg(format!("--allow-fs-write={scope}"))
                    .arg("--no-warnings")
                    .arg("harness.js");
                cmd
            }
            TargetLanguage::Python => {
                std::fs::write(dir.join("module.py"), source)?;
                std::fs::write(dir.join("harness.py"), PYTHON_HARNESS)?;
                let mut cmd = Command::new(&toolchain.python);
                cmd.args(["-I", "-u", "harness.py"]).arg(&dir).arg("module.py");
                cmd
            }
        };
        cmd.current_dir(&dir)
            .env_clear()
            .env("HOME", &dir)
            .env("TMPDIR", &dir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Some(path) = std::env::var_os("PATH") {
            cmd.env("PATH", path);
        }

        let mut child = spawn_tool(&mut cmd)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");

        let (tx, replies) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        std::thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(n) = stderr_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut s = sink.lock().unwrap_or_else(|e| e.into_inner());
                // keep the tail; generated code may be chatty
                if s.len() < 64 * 1024 {
                    s.push_str(&String::from_utf8_lossy(&buf[..n]));
                }
            }
        });

        Ok(Worker {
            child,
            stdin,
            replies,
            stderr,
            timeout,
            entry: entry.to_string(),
            scratch,
            dead: false,
        })
    }

    pub fn scratch_dir(&self) -> &Path {
        self.scratch.path()
    }

    /// False once the child has exited or been killed.
    pub fn is_alive(&self) -> bool {
        !self.dead
    }

    fn captured_stderr(&self) -> String {
        self.stderr.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn fail(&mut self) {
        self.dead = true;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    /// Calls the entry point with named arguments.
    pub fn call(&mut self, args: &ArgBinding) -> Result<Value, ExecError> {
        if self.dead {
            return Err(ExecError::Execution {
                message: "worker process is no longer running".into(),
                stderr: self.captured_stderr(),
            });
        }
        let mut request = encode_request(&self.entry, args);
        request.push('\n');
        if self
            .stdin
            .write_all(request.as_bytes())
            .and_then(|_| self.stdin.flush())
            .is_err()
        {
            return Err(self.exited());
        }
        match self.replies.recv_timeout(self.timeout) {
            Ok(Ok(line)) => match decode_reply(&line) {
                Ok(Ok(value)) => Ok(value),
                Ok(Err(message)) => Err(ExecError::Execution {
                    message,
                    stderr: self.captured_stderr(),
                }),
                Err(e) => {
                    self.fail();
                    Err(e)
                }
            },
            Ok(Err(e)) => {
                self.fail();
                Err(ExecError::Protocol(format!("reading reply: {e}")))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.fail();
                Err(ExecError::Timeout(self.timeout))
            }
            Err(RecvTimeoutError::Disconnected) => Err(self.exited()),
        }
    }

    fn exited(&mut self) -> ExecError {
        self.dead = true;
        let status = self.child.wait().ok();
        // give the stderr reader a moment to drain
        std::thread::sleep(Duration::from_millis(20));
        ExecError::Execution {
            message: match status {
                Some(s) => format!("harness exited with {s}"),
                None => "harness exited".into(),
            },
            stderr: self.captured_stderr(),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        if !self.dead {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// One-shot invocation: starts a harness, makes a single call, stops it.
pub fn invoke(
    function: &GeneratedFunction,
    args: &ArgBinding,
    toolchain: &Toolchain,
    timeout: Duration,
) -> Result<Value, ExecError> {
    let mut worker = Worker::for_function(function, toolchain, timeout)?;
    worker.call(args)
}
