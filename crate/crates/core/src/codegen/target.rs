//! Code generation targets and their external toolchains.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::prompt_codec::{Violation, ViolationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetLanguage {
    #[default]
    TypeScript,
    Python,
}

impl TargetLanguage {
    /// Canonical name, also used in cache digests.
    pub fn name(self) -> &'static str {
        match self {
            TargetLanguage::TypeScript => "typescript",
            TargetLanguage::Python => "python",
        }
    }

    /// Fence tag used in codegen prompts.
    pub fn fence_tag(self) -> &'static str {
        self.name()
    }

    /// Fence tags accepted when extracting code from a response.
    pub fn fence_tags(self) -> &'static [&'static str] {
        match self {
            TargetLanguage::TypeScript => &["typescript", "ts"],
            TargetLanguage::Python => &["python", "py"],
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            TargetLanguage::TypeScript => "ts",
            TargetLanguage::Python => "py",
        }
    }

    pub(crate) fn comment_prefix(self) -> &'static str {
        match self {
            TargetLanguage::TypeScript => "// ",
            TargetLanguage::Python => "# ",
        }
    }

    pub(crate) fn indent(self) -> &'static str {
        match self {
            TargetLanguage::TypeScript => "  ",
            TargetLanguage::Python => "    ",
        }
    }

    pub(crate) fn body_open(self) -> &'static str {
        match self {
            TargetLanguage::TypeScript => " {",
            TargetLanguage::Python => ":",
        }
    }

    /// Cheap textual check that `source` defines `entry`.
    pub fn defines(self, source: &str, entry: &str) -> bool {
        let patterns: Vec<String> = match self {
            TargetLanguage::TypeScript => vec![
                format!("function {entry}("),
                format!("function {entry} ("),
                format!("const {entry} ="),
                format!("let {entry} ="),
            ],
            TargetLanguage::Python => vec![format!("def {entry}("), format!("def {entry} (")],
        };
        patterns.iter().any(|p| source.contains(p.as_str()))
    }
}

impl fmt::Display for TargetLanguage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetLanguage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "typescript" | "ts" => Ok(TargetLanguage::TypeScript),
            "python" | "py" => Ok(TargetLanguage::Python),
            other => Err(format!("unsupported target language `{other}`")),
        }
    }
}

/// Executables used to check and run generated code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Toolchain {
    pub node: PathBuf,
    pub tsc: PathBuf,
    pub python: PathBuf,
}

impl Default for Toolchain {
    fn default() -> Self {
        Toolchain {
            node: "node".into(),
            tsc: "tsc".into(),
            python: "python3".into(),
        }
    }
}

impl Toolchain {
    /// Defaults, overridable through `ASKIT_NODE`, `ASKIT_TSC` and
    /// `ASKIT_PYTHON`.
    pub fn from_env() -> Self {
        let mut t = Toolchain::default();
        for (var, slot) in [
            ("ASKIT_NODE", &mut t.node),
            ("ASKIT_TSC", &mut t.tsc),
            ("ASKIT_PYTHON", &mut t.python),
        ] {
            if let Some(v) = std::env::var_os(var).filter(|v| !v.is_empty()) {
                *slot = v.into();
            }
        }
        t
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("toolchain unavailable: `{0}` could not be started")]
    Unavailable(String),
    #[error("`{tool}` did not finish within {timeout:?}")]
    Timeout { tool: String, timeout: Duration },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) struct ToolOutput {
    pub success: bool,
    pub stdout: String,
    pub stderr: String,
}

pub(crate) fn spawn_tool(cmd: &mut Command) -> Result<Child, ToolError> {
    cmd.spawn().map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
            ToolError::Unavailable(cmd.get_program().to_string_lossy().into_owned())
        }
        _ => ToolError::Io(e),
    })
}

/// Runs a command to completion with captured output and a deadline.
pub(crate) fn run_tool(mut cmd: Command, timeout: Duration) -> Result<ToolOutput, ToolError> {
    cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let tool = cmd.get_program().to_string_lossy().into_owned();
    let mut child = spawn_tool(&mut cmd)?;
    let mut out = child.stdout.take().expect("piped stdout");
    let mut err = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = out.read_to_string(&mut s);
        s
    });
    let err_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = err.read_to_string(&mut s);
        s
    });

    let deadline = Instant::now() + timeout;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ToolError::Timeout { tool, timeout });
        }
        std::thread::sleep(Duration::from_millis(2));
    };
    Ok(ToolOutput {
        success: status.success(),
        stdout: out_reader.join().unwrap_or_default(),
        stderr: err_reader.join().unwrap_or_default(),
    })
}

pub(crate) fn tsc_command(toolchain: &Toolchain, dir: &Path, file: &str, emit: bool) -> Command {
    let mut cmd = Command::new(&toolchain.tsc);
    cmd.current_dir(dir)
        .args(["--noCheck", "--pretty", "false", "--target", "es2020", "--module", "commonjs"]);
    if emit {
        cmd.args(["--outDir", "."]);
    } else {
        cmd.arg("--noEmit");
    }
    cmd.arg(file);
    cmd
}

const PY_SYNTAX_CHECK: &str =
    "import sys\nsrc = open(sys.argv[1], encoding='utf-8').read()\ncompile(src, sys.argv[1], 'exec')\n";

const CHECK_TIMEOUT: Duration = Duration::from_secs(60);

/// Parses `source` with the target's own front end, without running it.
///
/// The outer error is a toolchain problem; the inner one is a syntax
/// violation of the candidate.
pub fn syntax_check(
    source: &str,
    language: TargetLanguage,
    toolchain: &Toolchain,
) -> Result<Result<(), Violation>, ToolError> {
    let dir = tempfile::tempdir()?;
    let file = format!("module.{}", language.extension());
    std::fs::write(dir.path().join(&file), source)?;
    let output = match language {
        TargetLanguage::TypeScript => run_tool(tsc_command(toolchain, dir.path(), &file, false), CHECK_TIMEOUT)?,
        TargetLanguage::Python => {
            let mut cmd = Command::new(&toolchain.python);
            cmd.current_dir(dir.path()).args(["-I", "-c", PY_SYNTAX_CHECK, &file]);
            run_tool(cmd, CHECK_TIMEOUT)?
        }
    };
    if output.success {
        return Ok(Ok(()));
    }
    let diagnostics = match language {
        TargetLanguage::TypeScript => output.stdout.trim().to_string(),
        TargetLanguage::Python => output
            .stderr
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("syntax error")
            .trim()
            .to_string(),
    };
    let diagnostics = if diagnostics.is_empty() {
        output.stderr.trim().to_string()
    } else {
        diagnostics
    };
    Ok(Err(Violation::new(ViolationKind::SyntaxError, diagnostics)))
}
