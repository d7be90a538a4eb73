//! Child-process execution with limits, and an audit of everything the
//! analysis spawned or sent over the network.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

static NETWORK_CALLS: AtomicU64 = AtomicU64::new(0);
static SANDBOX_SEQ: AtomicU64 = AtomicU64::new(0);
static SPAWNED: Mutex<Vec<String>> = Mutex::new(Vec::new());

/// Program names that would mean the analysis compiled or built code.
pub const COMPILERS: &[&str] = &[
    "javac", "java", "mvn", "gradle", "ant", "kotlinc", "gcc", "g++", "cc", "c++", "clang", "clang++", "rustc", "cargo",
    "make", "cmake", "ninja", "go", "tsc", "dotnet", "msbuild", "scalac", "sbt", "bazel",
];

pub fn note_network_call() {
    NETWORK_CALLS.fetch_add(1, Ordering::SeqCst);
}

pub fn network_calls() -> u64 {
    NETWORK_CALLS.load(Ordering::SeqCst)
}

/// Base names of every program spawned so far in this process.
pub fn spawned_programs() -> Vec<String> {
    SPAWNED.lock().expect("spawn log").clone()
}

pub fn compiler_spawned() -> bool {
    spawned_programs().iter().any(|p| COMPILERS.contains(&p.as_str()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub timeout: Duration,
    /// Address-space cap in MiB; `None` leaves it unlimited.
    pub memory_mb: Option<u64>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { timeout: Duration::from_secs(10), memory_mb: Some(256) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessOutcome {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
}

impl ProcessOutcome {
    pub fn success(&self) -> bool {
        !self.timed_out && self.exit_code == Some(0)
    }
}

fn base_name(program: &Path) -> String {
    program.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

struct ScratchDir(PathBuf);

impl ScratchDir {
    fn create() -> std::io::Result<ScratchDir> {
        let seq = SANDBOX_SEQ.fetch_add(1, Ordering::SeqCst);
        let dir = std::env::temp_dir().join(format!("sinkflow-sbx-{}-{seq}", std::process::id()));
        std::fs::create_dir_all(&dir)?;
        let mut perms = std::fs::metadata(&dir)?.permissions();
        perms.set_readonly(true);
        std::fs::set_permissions(&dir, perms)?;
        Ok(ScratchDir(dir))
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        if let Ok(meta) = std::fs::metadata(&self.0) {
            let mut perms = meta.permissions();
            #[allow(clippy::permissions_set_readonly_false)]
            perms.set_readonly(false);
            let _ = std::fs::set_permissions(&self.0, perms);
        }
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

/// Runs `program` with `stdin` piped in, a read-only scratch working
/// directory, a cleared environment and the given limits.
pub fn run(program: &Path, args: &[String], stdin: &str, limits: Limits) -> std::io::Result<ProcessOutcome> {
    SPAWNED.lock().expect("spawn log").push(base_name(program));
    let scratch = ScratchDir::create()?;
    let mut cmd = match limits.memory_mb {
        Some(mb) if cfg!(unix) => {
            let mut c = Command::new("/bin/sh");
            c.arg("-c").arg(format!("ulimit -v {} 2>/dev/null; exec \"$0\" \"$@\"", mb * 1024)).arg(program).args(args);
            c
        }
        _ => {
            let mut c = Command::new(program);
            c.args(args);
            c
        }
    };
    cmd.current_dir(&scratch.0)
        .env_clear()
        .env("PATH", std::env::var("PATH").unwrap_or_default())
        .env("TMPDIR", &scratch.0)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mut child = cmd.spawn()?;
    let mut child_in = child.stdin.take().expect("piped stdin");
    let input = stdin.to_string();
    let writer = std::thread::spawn(move || {
        let _ = child_in.write_all(input.as_bytes());
    });
    let mut out = child.stdout.take().expect("piped stdout");
    let mut err = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut s = Vec::new();
        let _ = out.read_to_end(&mut s);
        s
    });
    let err_reader = std::thread::spawn(move || {
        let mut s = Vec::new();
        let _ = err.read_to_end(&mut s);
        s
    });
    let deadline = Instant::now() + limits.timeout;
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if Instant::now() >= deadline {
            timed_out = true;
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let _ = writer.join();
    let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
    Ok(ProcessOutcome { exit_code: status.and_then(|s| s.code()), stdout, stderr, timed_out })
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    #[test]
    fn echoes_stdin_and_logs_spawn() {
        let out = run(Path::new("/bin/cat"), &[], "hello", Limits::default()).unwrap();
        assert!(out.success());
        assert_eq!(out.stdout, "hello");
        assert!(spawned_programs().contains(&"cat".to_string()));
    }

    #[test]
    fn timeout_kills_child() {
        let limits = Limits { timeout: Duration::from_millis(200), memory_mb: None };
        let out = run(Path::new("/bin/sleep"), &["5".to_string()], "", limits).unwrap();
        assert!(out.timed_out);
    }

    #[test]
    fn scratch_directory_is_read_only() {
        let out = run(
            Path::new("/bin/sh"),
            &["-c".to_string(), "touch x 2>/dev/null && echo wrote || echo denied".to_string()],
            "",
            Limits::default(),
        )
        .unwrap();
        let probe = ScratchDir::create().unwrap();
        let privileged = std::fs::write(probe.0.join("probe"), "x").is_ok();
        if !privileged {
            assert_eq!(out.stdout.trim(), "denied");
        }
    }
}
