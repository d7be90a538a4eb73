use std::path::PathBuf;

use crate::sandbox::{self, Limits};

use super::script::{run_text, ExecLimits};

/// Executes an extractor script on a serialized tree and returns its
/// `line<TAB>identifier` output.
pub trait ScriptRunner: Send + Sync {
    fn name(&self) -> &str;
    fn run(&self, script: &str, tree: &str) -> Result<String, String>;
}

/// Interprets scripts in process.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmbeddedRunner {
    pub limits: ExecLimits,
}

impl ScriptRunner for EmbeddedRunner {
    fn name(&self) -> &str {
        "embedded"
    }

    fn run(&self, script: &str, tree: &str) -> Result<String, String> {
        run_text(script, tree, self.limits)
    }
}

/// Runs scripts in a child process under the sandbox limits. The script
/// path is passed as the last argument and the tree on stdin.
#[derive(Debug, Clone)]
pub struct ProcessRunner {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub limits: Limits,
}

impl ProcessRunner {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        ProcessRunner { program: program.into(), args, limits: Limits::default() }
    }
}

impl ScriptRunner for ProcessRunner {
    fn name(&self) -> &str {
        "process"
    }

    fn run(&self, script: &str, tree: &str) -> Result<String, String> {
        let file = tempfile::Builder::new().suffix(".walk").tempfile().map_err(|e| e.to_string())?;
        std::fs::write(file.path(), script).map_err(|e| e.to_string())?;
        let mut args = self.args.clone();
        args.push(file.path().to_string_lossy().into_owned());
        let out = sandbox::run(&self.program, &args, tree, self.limits).map_err(|e| format!("cannot start runner: {e}"))?;
        if out.timed_out {
            return Err(format!("script exceeded {}s", self.limits.timeout.as_secs()));
        }
        if !out.success() {
            let msg = out.stderr.trim();
            return Err(if msg.is_empty() { format!("runner exited with {:?}", out.exit_code) } else { msg.to_string() });
        }
        Ok(out.stdout)
    }
}
