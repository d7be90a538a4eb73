use std::collections::BTreeMap;

use thiserror::Error;

use super::{DataflowPath, Hop, Link, PathInfo, Step};
use crate::syntax::{build_cfg, interface_values, Cfg, CfgError, FunctionInfo, Guard, InterfaceValues, NodeId, Role, SyntaxTree};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("function `{0}` is not in the CFG index")]
    UnknownFunction(String),
    #[error("{function}: no statement covers line {line}")]
    LineNotFound { function: String, line: usize },
    #[error("path has no hops")]
    Empty,
}

/// Per-function CFG and interface values for every function of a corpus.
#[derive(Debug, Clone, Default)]
pub struct CfgIndex {
    functions: BTreeMap<String, IndexedFunction>,
}

#[derive(Debug, Clone)]
pub struct IndexedFunction {
    pub info: FunctionInfo,
    pub cfg: Cfg,
    pub values: InterfaceValues,
}

impl CfgIndex {
    /// Builds CFGs for every function of `trees`. Functions whose CFG
    /// cannot be built are skipped and returned with their error.
    pub fn build(trees: &[SyntaxTree]) -> (CfgIndex, Vec<CfgError>) {
        let mut index = CfgIndex::default();
        let mut errors = Vec::new();
        for tree in trees {
            for f in tree.functions() {
                match build_cfg(f, tree) {
                    Ok(cfg) => {
                        let values = interface_values(f, &cfg, tree);
                        index.functions.insert(f.id.clone(), IndexedFunction { info: f.clone(), cfg, values });
                    }
                    Err(e) => errors.push(e),
                }
            }
        }
        (index, errors)
    }

    pub fn get(&self, function: &str) -> Option<&IndexedFunction> {
        self.functions.get(function)
    }

    pub fn functions(&self) -> impl Iterator<Item = &IndexedFunction> {
        self.functions.values()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// The innermost indexed function of `unit` spanning `line`.
    pub fn function_at(&self, unit: &str, line: usize) -> Option<&IndexedFunction> {
        self.functions
            .values()
            .filter(|f| f.info.unit == unit && f.info.contains_line(line))
            .min_by_key(|f| f.info.end_line - f.info.start_line)
    }
}

fn entry_node(f: &IndexedFunction, hop: &Hop) -> Result<NodeId, PathError> {
    if hop.link == Some(Link::Bind) || hop.value.role == Role::Param || hop.value.line == f.info.header_line {
        return Ok(f.cfg.entry);
    }
    node_at(f, hop.value.line)
}

fn node_at(f: &IndexedFunction, line: usize) -> Result<NodeId, PathError> {
    f.cfg
        .node_at_line(line)
        .ok_or_else(|| PathError::LineNotFound { function: f.info.id.clone(), line })
}

/// Guards, assignments and havocs on the CFG segment between two nodes.
fn segment(f: &IndexedFunction, from: NodeId, to: NodeId, frame: usize) -> Vec<Step> {
    let cfg = &f.cfg;
    if from == to {
        return Vec::new();
    }
    let reach = cfg.forward_reach(from, None, None);
    if !reach[to] {
        log::warn!("{}: no forward path from node {from} to node {to}; segment left unconstrained", f.info.id);
        return Vec::new();
    }
    let mut steps: Vec<(usize, NodeId, usize, Step)> = Vec::new();
    for (i, e) in cfg.edges.iter().enumerate() {
        let Guard::Cond { text, holds } = &e.guard else { continue };
        if e.back || !reach[e.from] {
            continue;
        }
        if !cfg.forward_reach(from, Some(i), None)[to] {
            let line = cfg.node(e.from).line;
            steps.push((line, e.from, 1, Step::Guard { cond: text.clone(), taken: *holds, line, frame }));
        }
    }
    for node in &cfg.nodes {
        if node.id == from || node.id == to || node.assigns.is_empty() || !reach[node.id] {
            continue;
        }
        if !cfg.forward_reach(node.id, None, None)[to] {
            continue;
        }
        let dominates = !cfg.forward_reach(from, None, Some(node.id))[to];
        for (lhs, rhs) in &node.assigns {
            let step = if dominates {
                Step::Assign { lhs: lhs.clone(), rhs: rhs.clone(), line: node.line, frame }
            } else {
                Step::Havoc { var: lhs.clone(), line: node.line, frame }
            };
            steps.push((node.line, node.id, 0, step));
        }
    }
    steps.sort_by_key(|(line, id, order, _)| (*line, *id, *order));
    steps.into_iter().map(|(_, _, _, s)| s).collect()
}

/// Orders the path's assignments, branch conditions and bindings as they
/// execute. `assume` is a detector assumption about the source with `{var}`
/// standing for the source variable, such as `{var} == 0`.
pub fn collect_path_info(path: &DataflowPath, index: &CfgIndex, assume: Option<&str>) -> Result<PathInfo, PathError> {
    let first = path.hops.first().ok_or(PathError::Empty)?;
    let lookup = |id: &str| index.get(id).ok_or_else(|| PathError::UnknownFunction(id.to_string()));
    let mut frames: Vec<String> = Vec::new();
    for h in &path.hops {
        if frames.len() <= h.frame {
            frames.resize(h.frame + 1, String::new());
        }
        frames[h.frame] = h.function.clone();
    }
    let mut steps = vec![Step::Source {
        var: first.value.identifier.clone(),
        line: first.value.line,
        frame: first.frame,
        assume: assume.map(|a| a.replace("{var}", &first.value.identifier)),
    }];
    for pair in path.hops.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        match b.link {
            Some(Link::Bind) => {
                let caller = lookup(&a.function)?;
                let callee = lookup(&b.function)?;
                let arg = caller
                    .values
                    .arg_sites
                    .iter()
                    .find(|s| s.value.key() == a.value.key() && s.callee == callee.info.name)
                    .map(|s| s.arg_text.clone())
                    .unwrap_or_else(|| a.value.identifier.clone());
                steps.push(Step::Bind {
                    arg,
                    param: b.value.identifier.clone(),
                    line: a.value.line,
                    from: a.frame,
                    to: b.frame,
                });
            }
            Some(Link::Return) => {
                let callee = lookup(&a.function)?;
                let expr = callee
                    .values
                    .ret_sites
                    .iter()
                    .find(|s| s.value.key() == a.value.key())
                    .map(|s| s.expr.clone())
                    .unwrap_or_else(|| a.value.identifier.clone());
                steps.push(Step::Return {
                    expr,
                    out: b.value.identifier.clone(),
                    line: b.value.line,
                    from: a.frame,
                    to: b.frame,
                });
            }
            Some(Link::Fact) | None => {
                let f = lookup(&a.function)?;
                let from = entry_node(f, a)?;
                let to = node_at(f, b.value.line)?;
                steps.extend(segment(f, from, to, a.frame));
            }
        }
    }
    let last = path.hops.last().ok_or(PathError::Empty)?;
    steps.push(Step::Sink { var: last.value.identifier.clone(), line: last.value.line, frame: last.frame });
    Ok(PathInfo { frames, steps })
}
