//! Inter-procedural source-to-sink paths stitched from function summaries,
//! and the ordered path information the feasibility phase consumes.

mod info;
mod stitch;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::expr::parse_expr;
use crate::syntax::ValueRef;

pub use info::{collect_path_info, CfgIndex, PathError};
pub use stitch::{replay, stitch, StitchConfig, StitchOutput};

/// How two consecutive hops of a path are connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// An intra-procedural fact from the summary store.
    Fact,
    /// Call argument to callee parameter.
    Bind,
    /// Returned value to the variable receiving the call result.
    Return,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub value: ValueRef,
    /// Function holding the value.
    pub function: String,
    /// Stack frame of the hop; a call or a return opens a new frame.
    pub frame: usize,
    /// Link from the previous hop; `None` on the first hop.
    pub link: Option<Link>,
}

/// A chain of values from a source to a sink.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DataflowPath {
    pub hops: Vec<Hop>,
}

impl DataflowPath {
    pub fn source(&self) -> &ValueRef {
        &self.hops[0].value
    }

    pub fn sink(&self) -> &ValueRef {
        &self.hops[self.hops.len() - 1].value
    }

    /// Functions in the order the path enters them.
    pub fn function_trace(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for h in &self.hops {
            if out.last() != Some(&h.function.as_str()) {
                out.push(&h.function);
            }
        }
        out
    }

    /// `x@9 -> z@13 -> b@2 -> b@4`.
    pub fn notation(&self) -> String {
        self.hops.iter().map(|h| h.value.notation()).collect::<Vec<_>>().join(" -> ")
    }

    /// Stable identifier derived from the hop list.
    pub fn id(&self) -> String {
        let s = self.sink();
        format!("{}:{}->{}:{}#{}", self.source().unit, self.source().notation(), s.unit, s.notation(), self.hops.len())
    }
}

/// One ordered item of path information.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    /// The source value enters; `assume` is the detector's assumption about
    /// it, e.g. `x == 0`.
    Source { var: String, line: usize, frame: usize, assume: Option<String> },
    Assign { lhs: String, rhs: String, line: usize, frame: usize },
    /// A variable written on some but not all paths of the segment.
    Havoc { var: String, line: usize, frame: usize },
    Bind { arg: String, param: String, line: usize, from: usize, to: usize },
    Return { expr: String, out: String, line: usize, from: usize, to: usize },
    Guard { cond: String, taken: bool, line: usize, frame: usize },
    Sink { var: String, line: usize, frame: usize },
}

impl Step {
    pub fn line(&self) -> usize {
        match self {
            Step::Source { line, .. }
            | Step::Assign { line, .. }
            | Step::Havoc { line, .. }
            | Step::Bind { line, .. }
            | Step::Return { line, .. }
            | Step::Guard { line, .. }
            | Step::Sink { line, .. } => *line,
        }
    }

    /// Whether the step copies a value unchanged: a plain variable on the
    /// right-hand side, argument or returned expression.
    pub fn is_value_preserving(&self) -> bool {
        let plain = |text: &str| parse_expr(text).ok().and_then(|e| e.as_var().map(str::to_string)).is_some();
        match self {
            Step::Assign { rhs, .. } => plain(rhs),
            Step::Bind { arg, .. } => plain(arg),
            Step::Return { expr, .. } => plain(expr),
            Step::Havoc { .. } => false,
            Step::Source { .. } | Step::Guard { .. } | Step::Sink { .. } => true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathInfo {
    /// Function id of each frame.
    pub frames: Vec<String>,
    pub steps: Vec<Step>,
}

impl PathInfo {
    pub fn guards(&self) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(|s| matches!(s, Step::Guard { .. }))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("path info serializes")
    }

    pub fn from_json(text: &str) -> Result<PathInfo, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Human-readable rendering used in prompts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, f) in self.frames.iter().enumerate() {
            let _ = writeln!(out, "Frame {i} runs `{f}`.");
        }
        for (i, step) in self.steps.iter().enumerate() {
            let n = i + 1;
            let _ = match step {
                Step::Source { var, line, frame, assume } => match assume {
                    Some(a) => writeln!(out, "{n}. line {line} (frame {frame}): source value `{var}`, assume `{a}`"),
                    None => writeln!(out, "{n}. line {line} (frame {frame}): source value `{var}`"),
                },
                Step::Assign { lhs, rhs, line, frame } => {
                    writeln!(out, "{n}. line {line} (frame {frame}): `{lhs} = {rhs}`")
                }
                Step::Havoc { var, line, frame } => {
                    writeln!(out, "{n}. line {line} (frame {frame}): `{var}` may be overwritten with an unknown value")
                }
                Step::Bind { arg, param, line, from, to } => writeln!(
                    out,
                    "{n}. line {line}: argument `{arg}` (frame {from}) is passed to parameter `{param}` (frame {to})"
                ),
                Step::Return { expr, out: o, line, from, to } => writeln!(
                    out,
                    "{n}. line {line}: `{expr}` (frame {from}) is returned into `{o}` (frame {to})"
                ),
                Step::Guard { cond, taken, line, frame } => {
                    let holds = if *taken { "true" } else { "false" };
                    writeln!(out, "{n}. line {line} (frame {frame}): branch condition `{cond}` is {holds}")
                }
                Step::Sink { var, line, frame } => writeln!(out, "{n}. line {line} (frame {frame}): sink value `{var}`"),
            };
        }
        out
    }
}
