//! Ground truth for a loop-free mini language: def-use closure of a
//! function and exhaustive feasibility of a path over a small integer
//! domain. The [`OracleBackend`] answers prompts from these instead of a
//! model.

mod backend;
mod closure;
mod feasible;
pub mod mini;

use thiserror::Error;

use crate::expr::ExprError;

pub use backend::OracleBackend;
pub use closure::{def_use_graph, oracle_closure, DefUseGraph, FactClosure, Occurrence};
pub use feasible::{oracle_feasible, DEFAULT_DOMAIN};
pub use mini::{parse_function, parse_numbered, MiniFunction, MiniStmt};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("malformed function text: {0}")]
    Malformed(String),
    #[error("line {line}: `{construct}` is outside the mini language")]
    Unsupported { line: usize, construct: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("guard cannot be enumerated: {0}")]
    UnsupportedGuard(String),
    #[error("{combinations} value combinations exceed the enumeration budget")]
    TooLarge { combinations: u128 },
}
