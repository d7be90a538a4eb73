//! Path feasibility: constraint programs synthesized by the model, run
//! through a prover, repaired on errors and backed by a direct judgment.

mod encode;
pub mod smt;
mod validate;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::sandbox::{self, Limits};

pub use encode::{encode_path, with_skeleton, EncodeError, SKELETON_HEAD, SKELETON_TAIL};
pub use validate::{
    execute, fallback_direct, synthesize_validator, synthesize_validator_capped, validate_path, validate_path_capped,
    FeasibilityError, FeasibilityVerdict, Method,
    SolverProgram, Synthesis, MAX_VALIDATOR_FIXES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Satisfiable,
    Unsatisfiable,
    Unknown,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub status: SolverStatus,
    /// Constant name to printed value, when satisfiable and a model was
    /// printed.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub model: BTreeMap<String, String>,
    /// Prover diagnostics; non-empty exactly when the status is `Error`.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub diagnostic: String,
}

impl SolverOutcome {
    pub fn error(diagnostic: impl Into<String>) -> SolverOutcome {
        let mut d = diagnostic.into();
        if d.trim().is_empty() {
            d = "prover failed without output".into();
        }
        SolverOutcome { status: SolverStatus::Error, model: BTreeMap::new(), diagnostic: d }
    }

    fn plain(status: SolverStatus) -> SolverOutcome {
        SolverOutcome { status, model: BTreeMap::new(), diagnostic: String::new() }
    }
}

/// Maps prover output to an outcome. Error lines printed before the first
/// `sat`/`unsat`/`unknown` make the run an error; later ones (a model
/// request after `unsat`) are ignored.
pub fn parse_prover_output(stdout: &str, stderr: &str) -> SolverOutcome {
    let mut errors = Vec::new();
    let lines: Vec<&str> = stdout.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let t = line.trim();
        let status = match t {
            "sat" => SolverStatus::Satisfiable,
            "unsat" => SolverStatus::Unsatisfiable,
            "unknown" => SolverStatus::Unknown,
            "" => continue,
            _ => {
                errors.push(t.to_string());
                continue;
            }
        };
        if !errors.is_empty() {
            return SolverOutcome::error(errors.join("\n"));
        }
        let mut out = SolverOutcome::plain(status);
        if status == SolverStatus::Satisfiable {
            out.model = parse_model(&lines[i + 1..].join("\n"));
        }
        return out;
    }
    errors.extend(stderr.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string));
    SolverOutcome::error(errors.join("\n"))
}

fn parse_model(text: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let (items, _) = smt::read_sexps(text);
    for item in items {
        let smt::Sexp::List(defs, _) = item else { continue };
        for d in defs {
            let smt::Sexp::List(parts, _) = d else { continue };
            if let [head, name, _, _, value] = parts.as_slice() {
                if let (Some("define-fun"), Some(n)) = (head.atom(), name.atom()) {
                    out.insert(n.to_string(), value.to_string());
                }
            }
        }
    }
    out
}

pub trait Prover: Send + Sync {
    fn name(&self) -> String;
    /// Runs a complete SMT-LIB script.
    fn run(&self, script: &str) -> SolverOutcome;
}

/// The in-process interpreter of [`smt`].
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinProver;

impl Prover for BuiltinProver {
    fn name(&self) -> String {
        "builtin".into()
    }

    fn run(&self, script: &str) -> SolverOutcome {
        parse_prover_output(&smt::run_script(script), "")
    }
}

/// An external prover reading SMT-LIB on stdin, such as `z3 -in`.
#[derive(Debug, Clone)]
pub struct ExternalProver {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ExternalProver {
    pub fn z3(program: impl Into<PathBuf>) -> ExternalProver {
        ExternalProver { program: program.into(), args: vec!["-in".into()], timeout: Duration::from_secs(10) }
    }
}

impl Prover for ExternalProver {
    fn name(&self) -> String {
        self.program.display().to_string()
    }

    fn run(&self, script: &str) -> SolverOutcome {
        let limits = Limits { timeout: self.timeout, memory_mb: Some(1024) };
        match sandbox::run(&self.program, &self.args, script, limits) {
            Ok(p) if p.timed_out => SolverOutcome::plain(SolverStatus::Unknown),
            Ok(p) => parse_prover_output(&p.stdout, &p.stderr),
            Err(e) => SolverOutcome::error(format!("cannot start prover `{}`: {e}", self.program.display())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_mapping() {
        let o = parse_prover_output("sat\n(\n  (define-fun x () Int\n    (- 5))\n)\n", "");
        assert_eq!(o.status, SolverStatus::Satisfiable);
        assert_eq!(o.model["x"], "(- 5)");
        assert!(o.diagnostic.is_empty());
        let o = parse_prover_output("unsat\n(error \"line 3 column 1: model is not available\")\n", "");
        assert_eq!(o.status, SolverStatus::Unsatisfiable);
        let o = parse_prover_output("(error \"line 2 column 12: unknown constant y\")\nsat\n", "");
        assert_eq!(o.status, SolverStatus::Error);
        assert!(o.diagnostic.contains("unknown constant y"));
        let o = parse_prover_output("", "");
        assert_eq!(o.status, SolverStatus::Error);
        assert!(!o.diagnostic.is_empty());
    }

    #[test]
    fn builtin_prover_examples() {
        let p = BuiltinProver;
        let o = p.run(&with_skeleton("(declare-const x Int)\n(assert (and (> x 1) (< x (- 1))))"));
        assert_eq!(o.status, SolverStatus::Unsatisfiable);
        let o = p.run(&with_skeleton("(declare-const x Int)\n(assert (> x 0))"));
        assert_eq!(o.status, SolverStatus::Satisfiable);
        assert_eq!(o.model["x"], "1");
        let o = p.run(&with_skeleton("(assert (> x 0))"));
        assert_eq!(o.status, SolverStatus::Error);
    }

    #[test]
    fn missing_external_prover_is_an_error() {
        let p = ExternalProver::z3("/nonexistent/z3");
        assert_eq!(p.run("(check-sat)").status, SolverStatus::Error);
    }
}
