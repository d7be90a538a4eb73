use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cfg::build_cfg;
use super::interface::interface_values;
use super::tree::SyntaxTree;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallEdge {
    pub caller: String,
    pub line: usize,
    pub callee: String,
    /// Set when more than one corpus function carries the callee's name.
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnresolvedCall {
    pub caller: String,
    pub line: usize,
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallGraph {
    pub edges: Vec<CallEdge>,
    pub unresolved: Vec<UnresolvedCall>,
}

impl CallGraph {
    pub fn callees_at<'a>(&'a self, caller: &'a str, line: usize) -> impl Iterator<Item = &'a CallEdge> + 'a {
        self.edges.iter().filter(move |e| e.caller == caller && e.line == line)
    }

    pub fn callers_of<'a>(&'a self, callee: &'a str) -> impl Iterator<Item = &'a CallEdge> + 'a {
        self.edges.iter().filter(move |e| e.callee == callee)
    }
}

/// Resolves calls by simple name against every function in the corpus.
/// Library calls land in [`CallGraph::unresolved`].
pub fn call_graph(trees: &[SyntaxTree]) -> CallGraph {
    let mut by_name: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for tree in trees {
        for f in tree.functions() {
            by_name.entry(f.name.as_str()).or_default().push(f.id.as_str());
        }
    }
    let mut graph = CallGraph::default();
    for tree in trees {
        for f in tree.functions() {
            // a function whose CFG cannot be built still has resolvable calls
            let iv = match build_cfg(f, tree) {
                Ok(cfg) => interface_values(f, &cfg, tree),
                Err(_) => continue,
            };
            for call in &iv.calls {
                match by_name.get(call.callee.as_str()) {
                    Some(targets) => {
                        let ambiguous = targets.len() > 1;
                        for target in targets {
                            graph.edges.push(CallEdge {
                                caller: f.id.clone(),
                                line: call.line,
                                callee: target.to_string(),
                                ambiguous,
                            });
                        }
                    }
                    None => graph.unresolved.push(UnresolvedCall {
                        caller: f.id.clone(),
                        line: call.line,
                        name: call.callee.clone(),
                    }),
                }
            }
        }
    }
    graph.edges.sort();
    graph.edges.dedup();
    graph.unresolved.sort();
    graph.unresolved.dedup();
    graph
}
