//! Compilation-free front-end: parsing, per-function control-flow graphs,
//! interface values and a name-resolved call graph.
//!
//! Everything here operates on concrete syntax trees produced by an
//! error-recovering incremental parser, so partially written or
//! uncompilable files still yield functions, CFGs and values.

mod callgraph;
mod cfg;
mod interface;
pub mod sexp;
mod tree;

pub use callgraph::{call_graph, CallEdge, CallGraph, UnresolvedCall};
pub use cfg::{build_cfg, Cfg, CfgError, Edge, Guard, NodeId, Statement, StmtKind};
pub use interface::{interface_values, ArgSite, CallSite, InterfaceValues, OutSite, RetSite};
pub use tree::{parse_unit, FunctionInfo, Language, Param, ParseError, SourceUnit, SyntaxTree};

use serde::{Deserialize, Serialize};
use std::fmt;

/// What a program value stands for in an analysis run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Sink,
    Param,
    Ret,
    Arg,
    Out,
    Intermediate,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Source => "source",
            Role::Sink => "sink",
            Role::Param => "param",
            Role::Ret => "ret",
            Role::Arg => "arg",
            Role::Out => "out",
            Role::Intermediate => "intermediate",
        }
    }
}

/// A program value `identifier@line` inside one unit.
///
/// `(identifier, line, unit)` is the identity of a value; the role records
/// why it was collected and does not take part in [`ValueRef::key`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ValueRef {
    pub unit: String,
    pub line: usize,
    pub identifier: String,
    pub role: Role,
}

/// Role-free identity of a [`ValueRef`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ValueKey {
    pub unit: String,
    pub line: usize,
    pub identifier: String,
}

impl ValueRef {
    pub fn new(unit: impl Into<String>, line: usize, identifier: impl Into<String>, role: Role) -> Self {
        ValueRef { unit: unit.into(), line, identifier: identifier.into(), role }
    }

    pub fn key(&self) -> ValueKey {
        ValueKey { unit: self.unit.clone(), line: self.line, identifier: self.identifier.clone() }
    }

    pub fn with_role(&self, role: Role) -> ValueRef {
        ValueRef { role, ..self.clone() }
    }

    /// The `x@9` notation.
    pub fn notation(&self) -> String {
        format!("{}@{}", self.identifier, self.line)
    }
}

impl fmt::Display for ValueRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}@{}", self.unit, self.identifier, self.line)
    }
}

impl fmt::Display for ValueKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}@{}", self.unit, self.identifier, self.line)
    }
}
