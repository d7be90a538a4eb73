//! Bundled source fixtures shared by tests, benches and examples.

use std::path::PathBuf;

use crate::paths::{CfgIndex, DataflowPath, Hop, Link};
use crate::syntax::{parse_unit, Role, SyntaxTree, ValueRef};

/// Two-function divide-by-zero example: user input at line 9, divisors at
/// lines 4, 11 and 14, and a guard at line 3 that makes line 4 unreachable
/// for a zero divisor.
pub const MOTIVATING_EXAMPLE: &str = include_str!("../assets/fixtures/MotivatingExample.java");
pub const MOTIVATING_FILE: &str = "MotivatingExample.java";

/// The crate's asset directory: fixtures, suites and cassettes.
pub fn assets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets")
}

pub struct Motivating {
    pub tree: SyntaxTree,
    pub index: CfgIndex,
    /// `x@9 -> z@13 -> b@2 -> b@4`, blocked by the guard.
    pub infeasible: DataflowPath,
    /// `x@9 -> z@13 -> b@2 -> b@5 -> y@13 -> y@14`.
    pub feasible: DataflowPath,
}

pub fn motivating() -> Motivating {
    let tree = parse_unit(MOTIVATING_FILE, MOTIVATING_EXAMPLE.as_bytes()).expect("fixture parses");
    let (index, _) = CfgIndex::build(std::slice::from_ref(&tree));
    let scale = tree.functions()[0].id.clone();
    let run = tree.functions()[1].id.clone();
    let hop = |f: &str, ident: &str, line, role, frame, link| Hop {
        value: ValueRef::new(MOTIVATING_FILE, line, ident, role),
        function: f.to_string(),
        frame,
        link,
    };
    let prefix = vec![
        hop(&run, "x", 9, Role::Source, 0, None),
        hop(&run, "z", 13, Role::Arg, 0, Some(Link::Fact)),
        hop(&scale, "b", 2, Role::Param, 1, Some(Link::Bind)),
    ];
    let mut infeasible = prefix.clone();
    infeasible.push(hop(&scale, "b", 4, Role::Sink, 1, Some(Link::Fact)));
    let mut feasible = prefix;
    feasible.extend([
        hop(&scale, "b", 5, Role::Ret, 1, Some(Link::Fact)),
        hop(&run, "y", 13, Role::Out, 0, Some(Link::Return)),
        hop(&run, "y", 14, Role::Sink, 0, Some(Link::Fact)),
    ]);
    Motivating { tree, index, infeasible: DataflowPath { hops: infeasible }, feasible: DataflowPath { hops: feasible } }
}
