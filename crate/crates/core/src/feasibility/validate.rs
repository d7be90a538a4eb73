use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{bindings, parse_code_block, parse_yes_no, Client, LlmError};
use crate::paths::{DataflowPath, PathInfo};

use super::encode::{with_skeleton, SKELETON_HEAD, SKELETON_TAIL};
use super::{Prover, SolverOutcome, SolverStatus};

/// Repair rounds allowed after the first synthesis prompt.
pub const MAX_VALIDATOR_FIXES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// A model-written constraint body with its repair history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverProgram {
    /// Declarations and assertions, without the skeleton lines.
    pub text: String,
    pub fix_count: usize,
    pub path_id: String,
    /// Earlier bodies with the diagnostic each one produced.
    #[serde(default)]
    pub history: Vec<(String, String)>,
}

impl SolverProgram {
    pub fn script(&self) -> String {
        with_skeleton(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synthesis {
    pub program: SolverProgram,
    /// Outcome of the last execution.
    pub outcome: SolverOutcome,
    /// False when every round ended in an error.
    pub succeeded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Synthesized,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    pub method: Method,
    pub fix_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<SolverOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<SolverProgram>,
    /// Reply to the direct question, when the fallback ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn execute(program: &SolverProgram, prover: &dyn Prover) -> SolverOutcome {
    prover.run(&program.script())
}

/// Asks for a constraint body, runs it and feeds prover errors back, at
/// most [`MAX_VALIDATOR_FIXES`] times.
pub fn synthesize_validator(
    info: &PathInfo,
    path_id: &str,
    client: &Client,
    prover: &dyn Prover,
) -> Result<Synthesis, FeasibilityError> {
    synthesize_validator_capped(info, path_id, client, prover, MAX_VALIDATOR_FIXES)
}

/// [`synthesize_validator`] with a lower repair cap; values above
/// [`MAX_VALIDATOR_FIXES`] are clamped.
pub fn synthesize_validator_capped(
    info: &PathInfo,
    path_id: &str,
    client: &Client,
    prover: &dyn Prover,
    max_fixes: usize,
) -> Result<Synthesis, FeasibilityError> {
    let max_fixes = max_fixes.min(MAX_VALIDATOR_FIXES);
    let rendered = info.render();
    let json = info.to_json();
    let mut program = SolverProgram { text: String::new(), fix_count: 0, path_id: path_id.to_string(), history: Vec::new() };
    let mut last_error = String::new();
    loop {
        let mut b = bindings([
            ("path_info", rendered.clone()),
            ("path_json", json.clone()),
            ("skeleton_head", SKELETON_HEAD.to_string()),
            ("skeleton_tail", SKELETON_TAIL.to_string()),
        ]);
        let template = if program.fix_count == 0 && program.history.is_empty() {
            "validator.synthesize"
        } else {
            b.insert("previous_program".into(), program.text.clone());
            b.insert("error".into(), last_error.clone());
            "validator.repair"
        };
        let outcome = match client.complete(template, b) {
            Ok(resp) => match parse_code_block(&resp.text) {
                Some(code) if !code.trim().is_empty() => {
                    program.text = code;
                    execute(&program, prover)
                }
                _ => {
                    program.text = resp.text.clone();
                    SolverOutcome::error("the reply contains no constraints")
                }
            },
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(e) => {
                program.text.clear();
                SolverOutcome::error(format!("no reply: {e}"))
            }
        };
        if outcome.status != SolverStatus::Error {
            return Ok(Synthesis { program, outcome, succeeded: true });
        }
        if program.fix_count >= max_fixes {
            return Ok(Synthesis { program, outcome, succeeded: false });
        }
        program.history.push((program.text.clone(), outcome.diagnostic.clone()));
        last_error = outcome.diagnostic;
        program.fix_count += 1;
    }
}

/// Asks the model directly whether the path can execute.
pub fn fallback_direct(info: &PathInfo, client: &Client) -> Result<FeasibilityVerdict, FeasibilityError> {
    let resp = client.complete("feasibility.direct", bindings([("path_info", info.render()), ("path_json", info.to_json())]))?;
    let mut warnings = Vec::new();
    let feasible = match parse_yes_no(&resp.text) {
        Some(b) => b,
        None => {
            let w = "direct feasibility answer is unparseable; keeping the path".to_string();
            warn!("{w}");
            warnings.push(w);
            true
        }
    };
    Ok(FeasibilityVerdict {
        feasible,
        method: Method::Fallback,
        fix_count: 0,
        outcome: None,
        program: None,
        fallback_answer: Some(resp.text),
        warnings,
    })
}

pub fn validate_path(
    path: &DataflowPath,
    info: &PathInfo,
    client: &Client,
    prover: &dyn Prover,
) -> Result<FeasibilityVerdict, FeasibilityError> {
    validate_path_capped(path, info, client, prover, MAX_VALIDATOR_FIXES)
}

pub fn validate_path_capped(
    path: &DataflowPath,
    info: &PathInfo,
    client: &Client,
    prover: &dyn Prover,
    max_fixes: usize,
) -> Result<FeasibilityVerdict, FeasibilityError> {
    let synthesis = synthesize_validator_capped(info, &path.id(), client, prover, max_fixes)?;
    if !synthesis.succeeded {
        let mut v = fallback_direct(info, client)?;
        v.fix_count = synthesis.program.fix_count;
        v.outcome = Some(synthesis.outcome);
        v.program = Some(synthesis.program);
        return Ok(v);
    }
    let mut warnings = Vec::new();
    let feasible = match synthesis.outcome.status {
        SolverStatus::Unsatisfiable => false,
        SolverStatus::Satisfiable => true,
        SolverStatus::Unknown | SolverStatus::Error => {
            let w = format!("prover could not decide {}; keeping the path", path.notation());
            warn!("{w}");
            warnings.push(w);
            true
        }
    };
    Ok(FeasibilityVerdict {
        feasible,
        method: Method::Synthesized,
        fix_count: synthesis.program.fix_count,
        outcome: Some(synthesis.outcome),
        program: Some(synthesis.program),
        fallback_answer: None,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::feasibility::{encode_path, BuiltinProver};
    use crate::llm::ScriptedBackend;
    use crate::paths::{Hop, Link, Step};
    use crate::syntax::{Role, ValueRef};

    fn abs_path() -> PathInfo {
        PathInfo {
            frames: vec!["run".into(), "scale".into()],
            steps: vec![
                Step::Source { var: "x".into(), line: 9, frame: 0, assume: Some("x == 0".into()) },
                Step::Bind { arg: "x".into(), param: "b".into(), line: 13, from: 0, to: 1 },
                Step::Guard { cond: "Math.abs(b) > 1".into(), taken: true, line: 3, frame: 1 },
                Step::Sink { var: "b".into(), line: 4, frame: 1 },
            ],
        }
    }

    fn fence(body: &str) -> String {
        format!("Here are the constraints.\n```smt2\n{body}```\n")
    }

    fn scripted(errors: usize, good: &str) -> (Arc<ScriptedBackend>, Client) {
        let b = Arc::new(ScriptedBackend::new());
        let bad = fence("(assert (> (abs b) 1))\n");
        b.push("validator.synthesize", if errors > 0 { bad.clone() } else { fence(good) });
        for i in 1..=errors.min(3) {
            b.push("validator.repair", if i < errors { bad.clone() } else { fence(good) });
        }
        b.push("feasibility.direct", "b is 0 so |b| > 1 fails.\nAnswer: No");
        let c = Client::new(b.clone());
        (b, c)
    }

    #[test]
    fn fix_counts_follow_error_count() {
        let good = encode_path(&abs_path()).unwrap();
        for errors in 0..=4 {
            let (backend, client) = scripted(errors, &good);
            let info = abs_path();
            let syn = synthesize_validator(&info, "p", &client, &BuiltinProver).unwrap();
            assert_eq!(syn.program.fix_count, errors.min(3), "errors={errors}");
            assert_eq!(syn.succeeded, errors <= 3);
            assert_eq!(syn.program.history.len(), errors.min(3));
            let stats = client.stats();
            assert_eq!(stats.issued_with_prefix("validator."), (errors.min(3) + 1) as u64);
            drop(backend);
        }
    }

    #[test]
    fn four_errors_fall_back() {
        let good = encode_path(&abs_path()).unwrap();
        let (_b, client) = scripted(4, &good);
        let v = validate_path(&dummy_path_with_hops(), &abs_path(), &client, &BuiltinProver).unwrap();
        assert_eq!(v.method, Method::Fallback);
        assert_eq!(v.fix_count, 3);
        assert!(!v.feasible);
        assert_eq!(client.stats().issued_for("feasibility.direct"), 1);
        assert!(client.stats().issued_with_prefix("validator.") <= 4);
    }

    #[test]
    fn lower_cap_falls_back_sooner_and_higher_cap_is_clamped() {
        let good = encode_path(&abs_path()).unwrap();
        let (_b, client) = scripted(2, &good);
        let syn = synthesize_validator_capped(&abs_path(), "p", &client, &BuiltinProver, 1).unwrap();
        assert!(!syn.succeeded);
        assert_eq!(syn.program.fix_count, 1);
        let (_b, client) = scripted(4, &good);
        let syn = synthesize_validator_capped(&abs_path(), "p", &client, &BuiltinProver, 9).unwrap();
        assert_eq!(syn.program.fix_count, 3);
        assert_eq!(client.stats().issued_with_prefix("validator."), 4);
    }

    #[test]
    fn repaired_program_refutes() {
        let good = encode_path(&abs_path()).unwrap();
        let (_b, client) = scripted(1, &good);
        let v = validate_path(&dummy_path_with_hops(), &abs_path(), &client, &BuiltinProver).unwrap();
        assert_eq!(v.method, Method::Synthesized);
        assert_eq!(v.fix_count, 1);
        assert!(!v.feasible);
        let p = v.program.unwrap();
        assert!(p.history[0].1.contains("unknown constant b"));
    }

    #[test]
    fn unknown_and_unparseable_keep_the_path() {
        let b = Arc::new(ScriptedBackend::new());
        b.push("validator.synthesize", fence("(declare-const x Int)\n(declare-const y Int)\n(assert (= (* x y) 7))\n"));
        let client = Client::new(b.clone());
        let v = validate_path(&dummy_path_with_hops(), &abs_path(), &client, &BuiltinProver).unwrap();
        assert!(v.feasible);
        assert_eq!(v.outcome.unwrap().status, SolverStatus::Unknown);
        assert_eq!(v.warnings.len(), 1);

        b.push("feasibility.direct", "I am not sure.");
        let v = fallback_direct(&abs_path(), &client).unwrap();
        assert!(v.feasible);
        assert_eq!(v.method, Method::Fallback);
        assert_eq!(v.warnings.len(), 1);
    }

    #[test]
    fn replies_without_code_count_as_errors() {
        let b = Arc::new(ScriptedBackend::new());
        b.push("validator.synthesize", "");
        b.push("validator.repair", fence("(assert true)\n"));
        let client = Client::new(b);
        let syn = synthesize_validator(&abs_path(), "p", &client, &BuiltinProver).unwrap();
        assert!(syn.succeeded);
        assert_eq!(syn.program.fix_count, 1);
    }

    fn dummy_path_with_hops() -> DataflowPath {
        let hop = |name: &str, line, role, function: &str, frame, link| Hop {
            value: ValueRef { unit: "A.java".into(), line, identifier: name.into(), role },
            function: function.into(),
            frame,
            link,
        };
        DataflowPath {
            hops: vec![hop("x", 9, Role::Source, "run", 0, None), hop("b", 4, Role::Sink, "scale", 1, Some(Link::Bind))],
        }
    }
}
