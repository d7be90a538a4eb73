//! Line-level control-flow graphs built directly from syntax trees.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::Node;

use super::tree::{end_line_of, line_of, FunctionInfo, SyntaxTree};

pub type NodeId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CfgError {
    #[error("{function}: malformed `{construct}` header at line {line}")]
    MalformedHeader { function: String, construct: String, line: usize },
    #[error("{function}: declaration not found in its syntax tree")]
    MissingFunction { function: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StmtKind {
    Entry,
    Exit,
    Simple,
    Return,
    Branch,
    LoopHeader,
    Jump,
    Throw,
    Try,
    /// An error-recovery region of the tree kept as an opaque statement.
    Recovered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub id: NodeId,
    pub line: usize,
    pub end_line: usize,
    /// Statement text; for branch and loop headers, the condition text.
    pub text: String,
    pub kind: StmtKind,
    /// `(target, value)` pairs written by this statement, as source text.
    pub assigns: Vec<(String, String)>,
    /// Returned expression text for `return` statements.
    pub returned: Option<String>,
}

/// Edge label: the boolean expression under which the target runs right
/// after the source.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Guard {
    Always,
    Cond { text: String, holds: bool },
}

impl Guard {
    pub fn when(text: impl Into<String>, holds: bool) -> Guard {
        Guard::Cond { text: text.into(), holds }
    }

    pub fn text(&self) -> String {
        match self {
            Guard::Always => "true".to_string(),
            Guard::Cond { text, holds: true } => text.clone(),
            Guard::Cond { text, holds: false } => format!("!({text})"),
        }
    }

    pub fn is_always(&self) -> bool {
        matches!(self, Guard::Always)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub guard: Guard,
    /// Loop back-edge; path enumeration cuts these.
    pub back: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cfg {
    pub function: String,
    pub nodes: Vec<Statement>,
    pub edges: Vec<Edge>,
    pub entry: NodeId,
    pub exit: NodeId,
}

impl Cfg {
    pub fn node(&self, id: NodeId) -> &Statement {
        &self.nodes[id]
    }

    pub fn out_edges(&self, id: NodeId) -> impl Iterator<Item = (usize, &Edge)> + '_ {
        self.edges.iter().enumerate().filter(move |(_, e)| e.from == id)
    }

    pub fn in_edges(&self, id: NodeId) -> impl Iterator<Item = (usize, &Edge)> + '_ {
        self.edges.iter().enumerate().filter(move |(_, e)| e.to == id)
    }

    /// Statements excluding the synthetic entry and exit.
    pub fn statement_count(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn has_loops(&self) -> bool {
        self.edges.iter().any(|e| e.back)
    }

    /// The innermost statement whose span covers `line`.
    pub fn node_at_line(&self, line: usize) -> Option<NodeId> {
        self.nodes
            .iter()
            .filter(|n| !matches!(n.kind, StmtKind::Entry | StmtKind::Exit))
            .filter(|n| n.line <= line && line <= n.end_line)
            .min_by_key(|n| (n.end_line - n.line, std::cmp::Reverse(n.line), n.id))
            .map(|n| n.id)
    }

    /// Nodes reachable from `from` without crossing back-edges, and
    /// optionally avoiding one edge or one node.
    pub(crate) fn forward_reach(&self, from: NodeId, skip_edge: Option<usize>, skip_node: Option<NodeId>) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        if Some(from) == skip_node {
            return seen;
        }
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(n) = queue.pop_front() {
            for (i, e) in self.out_edges(n) {
                if e.back || Some(i) == skip_edge || Some(e.to) == skip_node || seen[e.to] {
                    continue;
                }
                seen[e.to] = true;
                queue.push_back(e.to);
            }
        }
        seen
    }

    /// Every entry-to-exit path with back-edges cut, as edge index lists.
    /// Stops after `limit` paths.
    pub fn acyclic_paths(&self, limit: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        self.walk_paths(self.entry, &mut stack, &mut out, limit);
        out
    }

    fn walk_paths(&self, at: NodeId, stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, limit: usize) {
        if out.len() >= limit {
            return;
        }
        if at == self.exit {
            out.push(stack.clone());
            return;
        }
        let next: Vec<(usize, NodeId)> = self.out_edges(at).filter(|(_, e)| !e.back).map(|(i, e)| (i, e.to)).collect();
        for (i, to) in next {
            stack.push(i);
            self.walk_paths(to, stack, out, limit);
            stack.pop();
        }
    }
}

struct LoopCtx {
    breaks: Vec<Pending>,
    continues: Vec<Pending>,
    is_switch: bool,
}

type Pending = (NodeId, Guard);

struct Builder<'t> {
    tree: &'t SyntaxTree,
    function: String,
    nodes: Vec<Statement>,
    edges: Vec<Edge>,
    loops: Vec<LoopCtx>,
    to_exit: Vec<Pending>,
}

pub fn build_cfg(func: &FunctionInfo, tree: &SyntaxTree) -> Result<Cfg, CfgError> {
    let decl = tree
        .function_node(func)
        .ok_or_else(|| CfgError::MissingFunction { function: func.id.clone() })?;
    let mut b = Builder {
        tree,
        function: func.id.clone(),
        nodes: Vec::new(),
        edges: Vec::new(),
        loops: Vec::new(),
        to_exit: Vec::new(),
    };
    let entry = b.push_node(func.header_line, func.header_line, "entry".into(), StmtKind::Entry, vec![]);
    let mut open = vec![(entry, Guard::Always)];
    if let Some(body) = decl.child_by_field_name("body") {
        open = b.stmt(body, open)?;
    }
    open.append(&mut b.to_exit);
    let exit = b.push_node(func.end_line, func.end_line, "exit".into(), StmtKind::Exit, vec![]);
    for (from, guard) in open {
        b.edges.push(Edge { from, to: exit, guard, back: false });
    }
    Ok(prune(Cfg { function: func.id.clone(), nodes: b.nodes, edges: b.edges, entry, exit }))
}

/// Drops statements unreachable from entry (dead code after jumps) and
/// renumbers the rest.
fn prune(cfg: Cfg) -> Cfg {
    let mut seen = vec![false; cfg.nodes.len()];
    let mut queue = VecDeque::from([cfg.entry]);
    seen[cfg.entry] = true;
    while let Some(n) = queue.pop_front() {
        for e in cfg.edges.iter().filter(|e| e.from == n) {
            if !seen[e.to] {
                seen[e.to] = true;
                queue.push_back(e.to);
            }
        }
    }
    seen[cfg.exit] = true;
    if seen.iter().all(|s| *s) {
        return cfg;
    }
    let mut remap = vec![usize::MAX; cfg.nodes.len()];
    let mut nodes = Vec::new();
    for (old, mut node) in cfg.nodes.into_iter().enumerate() {
        if seen[old] {
            remap[old] = nodes.len();
            node.id = nodes.len();
            nodes.push(node);
        }
    }
    let edges = cfg
        .edges
        .into_iter()
        .filter(|e| seen[e.from] && seen[e.to])
        .map(|e| Edge { from: remap[e.from], to: remap[e.to], ..e })
        .collect();
    Cfg { function: cfg.function, nodes, edges, entry: remap[cfg.entry], exit: remap[cfg.exit] }
}

fn squash(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_parens(node: Node<'_>) -> Node<'_> {
    let mut node = node;
    while node.kind() == "parenthesized_expression" {
        match node.named_child(0) {
            Some(inner) => node = inner,
            None => break,
        }
    }
    node
}

impl<'t> Builder<'t> {
    fn text(&self, node: Node<'_>) -> String {
        squash(self.tree.node_text(node))
    }

    fn push_node(&mut self, line: usize, end_line: usize, text: String, kind: StmtKind, preds: Vec<Pending>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Statement { id, line, end_line, text, kind, assigns: Vec::new(), returned: None });
        for (from, guard) in preds {
            self.edges.push(Edge { from, to: id, guard, back: false });
        }
        id
    }

    fn connect_back(&mut self, preds: Vec<Pending>, to: NodeId) {
        for (from, guard) in preds {
            self.edges.push(Edge { from, to, guard, back: true });
        }
    }

    fn condition(&self, header: Node<'_>, field: &str, construct: &str) -> Result<Option<String>, CfgError> {
        let Some(cond) = header.child_by_field_name(field) else {
            return Ok(None);
        };
        if cond.has_error() || cond.is_missing() {
            return Err(CfgError::MalformedHeader {
                function: self.function.clone(),
                construct: construct.into(),
                line: line_of(cond),
            });
        }
        let inner = strip_parens(cond);
        if inner.is_missing() || inner.kind() == "parenthesized_expression" {
            return Err(CfgError::MalformedHeader {
                function: self.function.clone(),
                construct: construct.into(),
                line: line_of(cond),
            });
        }
        Ok(Some(self.text(inner)))
    }

    fn malformed(&self, node: Node<'_>, construct: &str) -> CfgError {
        CfgError::MalformedHeader { function: self.function.clone(), construct: construct.into(), line: line_of(node) }
    }

    fn simple(&mut self, node: Node<'_>, preds: Vec<Pending>) -> Vec<Pending> {
        let text = self.text(node);
        let id = self.push_node(line_of(node), end_line_of(node), text, StmtKind::Simple, preds);
        let assigns = collect_assigns(self.tree, node);
        self.nodes[id].assigns = assigns;
        vec![(id, Guard::Always)]
    }

    fn block(&mut self, node: Node<'_>, mut open: Vec<Pending>) -> Result<Vec<Pending>, CfgError> {
        let mut cursor = node.walk();
        let children: Vec<Node<'_>> = node.named_children(&mut cursor).collect();
        for child in children {
            open = self.stmt(child, open)?;
        }
        Ok(open)
    }

    fn stmt(&mut self, node: Node<'_>, preds: Vec<Pending>) -> Result<Vec<Pending>, CfgError> {
        match node.kind() {
            "block" | "constructor_body" | "switch_block_statement_group" => self.block(node, preds),
            "line_comment" | "block_comment" | "local_class_declaration" | "class_declaration" | ";" => Ok(preds),
            "labeled_statement" => {
                let mut cursor = node.walk();
                let inner = node.named_children(&mut cursor).filter(|c| c.kind() != "identifier").last();
                match inner {
                    Some(inner) => self.stmt(inner, preds),
                    None => Ok(preds),
                }
            }
            "synchronized_statement" => match node.child_by_field_name("body") {
                Some(body) => self.stmt(body, preds),
                None => Ok(preds),
            },
            "if_statement" => self.if_stmt(node, preds),
            "while_statement" => self.while_stmt(node, preds),
            "for_statement" => self.for_stmt(node, preds),
            "enhanced_for_statement" => self.foreach_stmt(node, preds),
            "do_statement" => self.do_stmt(node, preds),
            "switch_expression" | "switch_statement" => self.switch_stmt(node, preds),
            "try_statement" | "try_with_resources_statement" => self.try_stmt(node, preds),
            "return_statement" => {
                let text = self.text(node);
                let id = self.push_node(line_of(node), end_line_of(node), text, StmtKind::Return, preds);
                let mut cursor = node.walk();
                let returned = node.named_children(&mut cursor).find(|c| !c.is_extra()).map(|e| self.text(e));
                self.nodes[id].returned = returned;
                self.to_exit.push((id, Guard::Always));
                Ok(vec![])
            }
            "throw_statement" => {
                let text = self.text(node);
                let id = self.push_node(line_of(node), end_line_of(node), text, StmtKind::Throw, preds);
                self.to_exit.push((id, Guard::Always));
                Ok(vec![])
            }
            "break_statement" => {
                let text = self.text(node);
                let id = self.push_node(line_of(node), end_line_of(node), text, StmtKind::Jump, preds);
                match self.loops.last_mut() {
                    Some(ctx) => ctx.breaks.push((id, Guard::Always)),
                    None => self.to_exit.push((id, Guard::Always)),
                }
                Ok(vec![])
            }
            "continue_statement" => {
                let text = self.text(node);
                let id = self.push_node(line_of(node), end_line_of(node), text, StmtKind::Jump, preds);
                match self.loops.iter_mut().rev().find(|c| !c.is_switch) {
                    Some(ctx) => ctx.continues.push((id, Guard::Always)),
                    None => self.to_exit.push((id, Guard::Always)),
                }
                Ok(vec![])
            }
            "ERROR" => {
                let text = self.text(node);
                let id = self.push_node(line_of(node), end_line_of(node), text, StmtKind::Recovered, preds);
                Ok(vec![(id, Guard::Always)])
            }
            _ if node.is_missing() => Ok(preds),
            _ => Ok(self.simple(node, preds)),
        }
    }

    fn if_stmt(&mut self, node: Node<'_>, preds: Vec<Pending>) -> Result<Vec<Pending>, CfgError> {
        let cond = self.condition(node, "condition", "if")?.ok_or_else(|| self.malformed(node, "if"))?;
        let cond_node = node.child_by_field_name("condition").unwrap_or(node);
        let id = self.push_node(line_of(node), end_line_of(cond_node), cond.clone(), StmtKind::Branch, preds);
        let mut out = match node.child_by_field_name("consequence") {
            Some(then) => self.stmt(then, vec![(id, Guard::when(cond.clone(), true))])?,
            None => vec![(id, Guard::when(cond.clone(), true))],
        };
        match node.child_by_field_name("alternative") {
            Some(alt) => out.extend(self.stmt(alt, vec![(id, Guard::when(cond, false))])?),
            None => out.push((id, Guard::when(cond, false))),
        }
        Ok(out)
    }

    fn loop_body(&mut self, body: Option<Node<'_>>, preds: Vec<Pending>, is_switch: bool) -> Result<(Vec<Pending>, LoopCtx), CfgError> {
        self.loops.push(LoopCtx { breaks: vec![], continues: vec![], is_switch });
        let result = match body {
            Some(body) => self.stmt(body, preds),
            None => Ok(preds),
        };
        let ctx = self.loops.pop().expect("loop context pushed above");
        Ok((result?, ctx))
    }

    fn while_stmt(&mut self, node: Node<'_>, preds: Vec<Pending>) -> Result<Vec<Pending>, CfgError> {
        let cond = self.condition(node, "condition", "while")?.ok_or_else(|| self.malformed(node, "while"))?;
        let cond_node = node.child_by_field_name("condition").unwrap_or(node);
        let header = self.push_node(line_of(node), end_line_of(cond_node), cond.clone(), StmtKind::LoopHeader, preds);
        let (body_out, ctx) = self.loop_body(node.child_by_field_name("body"), vec![(header, Guard::when(cond.clone(), true))], false)?;
        self.connect_back(body_out, header);
        self.connect_back(ctx.continues, header);
        let mut out = vec![(header, Guard::when(cond, false))];
        out.extend(ctx.breaks);
        Ok(out)
    }

    fn for_stmt(&mut self, node: Node<'_>, preds: Vec<Pending>) -> Result<Vec<Pending>, CfgError> {
        let mut open = preds;
        let mut cursor = node.walk();
        let inits: Vec<Node<'_>> = node.children_by_field_name("init", &mut cursor).collect();
        for init in inits {
            open = self.simple(init, open);
        }
        let cond = self.condition(node, "condition", "for")?.unwrap_or_else(|| "true".to_string());
        let header_end = node.child_by_field_name("condition").map(end_line_of).unwrap_or(line_of(node));
        let header = self.push_node(line_of(node), header_end, cond.clone(), StmtKind::LoopHeader, open);
        let (body_out, ctx) = self.loop_body(node.child_by_field_name("body"), vec![(header, Guard::when(cond.clone(), true))], false)?;
        let mut tail = body_out;
        tail.extend(ctx.continues);
        let mut cursor = node.walk();
        let updates: Vec<Node<'_>> = node.children_by_field_name("update", &mut cursor).collect();
        for update in updates {
            tail = self.simple(update, tail);
        }
        self.connect_back(tail, header);
        let mut out = vec![(header, Guard::when(cond, false))];
        out.extend(ctx.breaks);
        Ok(out)
    }

    fn foreach_stmt(&mut self, node: Node<'_>, preds: Vec<Pending>) -> Result<Vec<Pending>, CfgError> {
        let value = node.child_by_field_name("value").ok_or_else(|| self.malformed(node, "for"))?;
        if value.has_error() {
            return Err(self.malformed(value, "for"));
        }
        let coll = self.text(value);
        let cond = format!("{coll}.iterator().hasNext()");
        let header = self.push_node(line_of(node), end_line_of(value), cond.clone(), StmtKind::LoopHeader, preds);
        if let Some(name) = node.child_by_field_name("name") {
            let name = self.text(name);
            self.nodes[header].assigns.push((name, format!("{coll}.iterator().next()")));
        }
        let (body_out, ctx) = self.loop_body(node.child_by_field_name("body"), vec![(header, Guard::when(cond.clone(), true))], false)?;
        self.connect_back(body_out, header);
        self.connect_back(ctx.continues, header);
        let mut out = vec![(header, Guard::when(cond, false))];
        out.extend(ctx.breaks);
        Ok(out)
    }

    fn do_stmt(&mut self, node: Node<'_>, preds: Vec<Pending>) -> Result<Vec<Pending>, CfgError> {
        let first = self.nodes.len();
        let (body_out, ctx) = self.loop_body(node.child_by_field_name("body"), preds, false)?;
        let cond = self.condition(node, "condition", "do")?.ok_or_else(|| self.malformed(node, "do"))?;
        let cond_node = node.child_by_field_name("condition").unwrap_or(node);
        let mut into = body_out;
        into.extend(ctx.continues);
        let header = self.push_node(line_of(cond_node), end_line_of(cond_node), cond.clone(), StmtKind::LoopHeader, into);
        let target = if first < header { first } else { header };
        self.edges.push(Edge { from: header, to: target, guard: Guard::when(cond.clone(), true), back: true });
        let mut out = vec![(header, Guard::when(cond, false))];
        out.extend(ctx.breaks);
        Ok(out)
    }

    fn switch_stmt(&mut self, node: Node<'_>, preds: Vec<Pending>) -> Result<Vec<Pending>, CfgError> {
        let subject = self.condition(node, "condition", "switch")?.ok_or_else(|| self.malformed(node, "switch"))?;
        let cond_node = node.child_by_field_name("condition").unwrap_or(node);
        let header = self.push_node(line_of(node), end_line_of(cond_node), subject.clone(), StmtKind::Branch, preds);
        let Some(body) = node.child_by_field_name("body") else {
            return Ok(vec![(header, Guard::Always)]);
        };
        let mut all_labels = Vec::new();
        let mut groups = Vec::new();
        let mut cursor = body.walk();
        for group in body.named_children(&mut cursor) {
            if !matches!(group.kind(), "switch_block_statement_group" | "switch_rule") {
                continue;
            }
            let mut labels = Vec::new();
            let mut is_default = false;
            let mut c2 = group.walk();
            for child in group.named_children(&mut c2) {
                if child.kind() == "switch_label" {
                    let mut c3 = child.walk();
                    let values: Vec<String> = child.named_children(&mut c3).map(|v| self.text(v)).collect();
                    if values.is_empty() {
                        is_default = true;
                    }
                    labels.extend(values);
                }
            }
            all_labels.extend(labels.iter().cloned());
            groups.push((group, labels, is_default));
        }
        let default_text = if all_labels.is_empty() {
            "true".to_string()
        } else {
            all_labels.iter().map(|l| format!("{subject} == {l}")).collect::<Vec<_>>().join(" || ")
        };
        self.loops.push(LoopCtx { breaks: vec![], continues: vec![], is_switch: true });
        let mut fallthrough: Vec<Pending> = Vec::new();
        let mut has_default = false;
        let mut rule_outs = Vec::new();
        for (group, labels, is_default) in groups {
            let guard = if is_default {
                has_default = true;
                if all_labels.is_empty() {
                    Guard::Always
                } else {
                    Guard::when(default_text.clone(), false)
                }
            } else {
                let text = labels.iter().map(|l| format!("{subject} == {l}")).collect::<Vec<_>>().join(" || ");
                Guard::when(text, true)
            };
            let mut preds = vec![(header, guard)];
            preds.append(&mut fallthrough);
            let mut c2 = group.walk();
            let stmts: Vec<Node<'_>> = group.named_children(&mut c2).filter(|c| c.kind() != "switch_label").collect();
            let mut open = preds;
            for s in stmts {
                open = self.stmt(s, open)?;
            }
            if group.kind() == "switch_rule" {
                rule_outs.extend(open);
            } else {
                fallthrough = open;
            }
        }
        let ctx = self.loops.pop().expect("switch context pushed above");
        let mut out = fallthrough;
        out.extend(rule_outs);
        out.extend(ctx.breaks);
        if let Some(outer) = self.loops.iter_mut().rev().find(|c| !c.is_switch) {
            outer.continues.extend(ctx.continues);
        } else {
            self.to_exit.extend(ctx.continues);
        }
        if !has_default {
            let guard = if all_labels.is_empty() { Guard::Always } else { Guard::when(default_text, false) };
            out.push((header, guard));
        }
        Ok(out)
    }

    fn try_stmt(&mut self, node: Node<'_>, preds: Vec<Pending>) -> Result<Vec<Pending>, CfgError> {
        let id = self.push_node(line_of(node), line_of(node), "try".into(), StmtKind::Try, preds);
        let mut open = vec![(id, Guard::Always)];
        if let Some(resources) = node.child_by_field_name("resources") {
            let mut cursor = resources.walk();
            let items: Vec<Node<'_>> = resources.named_children(&mut cursor).collect();
            for r in items {
                open = self.simple(r, open);
            }
        }
        let mut out = match node.child_by_field_name("body") {
            Some(body) => self.stmt(body, open)?,
            None => open,
        };
        let mut finally = None;
        let mut cursor = node.walk();
        let children: Vec<Node<'_>> = node.named_children(&mut cursor).collect();
        for child in children {
            match child.kind() {
                "catch_clause" => {
                    if let Some(body) = child.child_by_field_name("body") {
                        out.extend(self.stmt(body, vec![(id, Guard::Always)])?);
                    }
                }
                "finally_clause" => finally = Some(child),
                _ => {}
            }
        }
        if let Some(fin) = finally {
            let mut cursor = fin.walk();
            let block = fin.named_children(&mut cursor).find(|c| c.kind() == "block");
            if let Some(block) = block {
                out = self.stmt(block, out)?;
            }
        }
        Ok(out)
    }
}

/// `(target, value)` pairs a simple statement writes.
pub(crate) fn collect_assigns(tree: &SyntaxTree, node: Node<'_>) -> Vec<(String, String)> {
    let mut out = Vec::new();
    match node.kind() {
        "local_variable_declaration" | "resource" => {
            let mut cursor = node.walk();
            for decl in node.named_children(&mut cursor) {
                if decl.kind() == "variable_declarator" {
                    if let (Some(name), Some(value)) = (decl.child_by_field_name("name"), decl.child_by_field_name("value")) {
                        out.push((squash(tree.node_text(name)), squash(tree.node_text(value))));
                    }
                }
            }
            if node.kind() == "resource" {
                if let (Some(name), Some(value)) = (node.child_by_field_name("name"), node.child_by_field_name("value")) {
                    out.push((squash(tree.node_text(name)), squash(tree.node_text(value))));
                }
            }
        }
        "expression_statement" => {
            if let Some(expr) = node.named_child(0) {
                expr_assigns(tree, expr, &mut out);
            }
        }
        _ => {
            expr_assigns(tree, node, &mut out);
        }
    }
    out
}

fn expr_assigns(tree: &SyntaxTree, expr: Node<'_>, out: &mut Vec<(String, String)>) -> Option<String> {
    match expr.kind() {
        "assignment_expression" => {
            let left = expr.child_by_field_name("left")?;
            let right = expr.child_by_field_name("right")?;
            let op = expr.child_by_field_name("operator").map(|o| tree.node_text(o)).unwrap_or("=");
            let lhs = squash(tree.node_text(left));
            let rhs = match expr_assigns(tree, right, out) {
                Some(inner_target) => inner_target,
                None => squash(tree.node_text(right)),
            };
            let value = if op == "=" {
                rhs
            } else {
                let bin = op.trim_end_matches('=');
                format!("{lhs} {bin} ({rhs})")
            };
            out.push((lhs.clone(), value));
            Some(lhs)
        }
        "update_expression" => {
            let text = squash(tree.node_text(expr));
            let (target, op) = if let Some(t) = text.strip_suffix("++") {
                (t.trim().to_string(), "+")
            } else if let Some(t) = text.strip_suffix("--") {
                (t.trim().to_string(), "-")
            } else if let Some(t) = text.strip_prefix("++") {
                (t.trim().to_string(), "+")
            } else if let Some(t) = text.strip_prefix("--") {
                (t.trim().to_string(), "-")
            } else {
                return None;
            };
            out.push((target.clone(), format!("{target} {op} 1")));
            Some(target)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::syntax::parse_unit;

    fn cfg_of(src: &str, index: usize) -> Cfg {
        let tree = parse_unit("T.java", src.as_bytes()).unwrap();
        build_cfg(&tree.functions()[index], &tree).unwrap()
    }

    fn check_invariants(cfg: &Cfg) {
        assert_eq!(cfg.in_edges(cfg.entry).count(), 0, "entry has predecessors");
        assert_eq!(cfg.out_edges(cfg.exit).count(), 0, "exit has successors");
        let mut seen = vec![false; cfg.nodes.len()];
        let mut stack = vec![cfg.entry];
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend(cfg.out_edges(n).map(|(_, e)| e.to));
        }
        assert!(seen.iter().all(|s| *s), "unreachable node in {cfg:#?}");
    }

    #[test]
    fn single_return_is_a_chain() {
        let cfg = cfg_of("class A { int f() { return 1; } }", 0);
        check_invariants(&cfg);
        assert_eq!(cfg.statement_count(), 1);
        assert!(cfg.edges.iter().all(|e| e.guard.is_always()));
        assert_eq!(cfg.edges.len(), 2);
    }

    #[test]
    fn straight_line_body_has_five_interior_nodes() {
        let src = "class A { void f(int p) {\n int a = p;\n int b = a;\n a = b + 1;\n b = a * 2;\n g(a, b);\n} }";
        let cfg = cfg_of(src, 0);
        check_invariants(&cfg);
        assert_eq!(cfg.statement_count(), 5);
        assert_eq!(cfg.nodes.len(), 7);
        assert!(cfg.edges.iter().all(|e| e.guard.text() == "true"));
        let lines: Vec<usize> = cfg.nodes.iter().map(|n| n.line).collect();
        assert_eq!(lines, [1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn guarded_division_has_condition_and_negation() {
        let tree = parse_unit("MotivatingExample.java", fixtures::MOTIVATING_EXAMPLE.as_bytes()).unwrap();
        let cfg = build_cfg(&tree.functions()[0], &tree).unwrap();
        check_invariants(&cfg);
        let branch = cfg.node_at_line(3).unwrap();
        assert_eq!(cfg.node(branch).kind, StmtKind::Branch);
        let guards: Vec<String> = cfg.out_edges(branch).map(|(_, e)| e.guard.text()).collect();
        assert_eq!(guards, ["Math.abs(b) > 1", "!(Math.abs(b) > 1)"]);
        let ret4 = cfg.node_at_line(4).unwrap();
        assert_eq!(cfg.node(ret4).returned.as_deref(), Some("a / b"));
    }

    #[test]
    fn loops_keep_back_edges() {
        let src = "class A { void f(int n) {\n while (n > 0) {\n n = n - 1;\n }\n for (int i = 0; i < 3; i++) { g(i); }\n do { n++; } while (n < 5);\n} }";
        let cfg = cfg_of(src, 0);
        check_invariants(&cfg);
        assert!(cfg.has_loops());
        let back: Vec<&Edge> = cfg.edges.iter().filter(|e| e.back).collect();
        assert_eq!(back.len(), 3);
        let do_back = back.iter().find(|e| e.guard.text() == "n < 5").expect("do-while back edge");
        assert_eq!(cfg.node(do_back.to).text, "n++;");
        let header = cfg.node_at_line(2).unwrap();
        assert_eq!(cfg.node(header).kind, StmtKind::LoopHeader);
    }

    #[test]
    fn malformed_if_header_names_line() {
        let src = "class A { void f(int n) {\n int a = 1;\n if (a > ) {\n a = 2;\n }\n} }";
        let tree = parse_unit("T.java", src.as_bytes()).unwrap();
        let err = build_cfg(&tree.functions()[0], &tree).unwrap_err();
        assert!(matches!(err, CfgError::MalformedHeader { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn dead_code_is_pruned() {
        let src = "class A { int f(int n) {\n return n;\n } }";
        let cfg = cfg_of(src, 0);
        check_invariants(&cfg);
        let src = "class A { void f(int n) {\n while (true) { break; }\n g(n);\n } }";
        let cfg = cfg_of(src, 0);
        check_invariants(&cfg);
    }

    #[test]
    fn switch_and_try_are_connected() {
        let src = "class A { void f(int n) {\n switch (n) {\n case 1: g(1); break;\n case 2: g(2);\n default: g(3);\n }\n try { g(4); } catch (Exception e) { g(5); } finally { g(6); }\n} }";
        let cfg = cfg_of(src, 0);
        check_invariants(&cfg);
        let header = cfg.node_at_line(2).unwrap();
        let guards: Vec<String> = cfg.out_edges(header).map(|(_, e)| e.guard.text()).collect();
        assert_eq!(guards, ["n == 1", "n == 2", "!(n == 1 || n == 2)"]);
    }

    #[test]
    fn assignments_are_recorded() {
        let src = "class A { void f(int n) {\n int a = n, b;\n a += 2;\n b = a = n;\n n++;\n} }";
        let cfg = cfg_of(src, 0);
        let at = |l| cfg.node(cfg.node_at_line(l).unwrap()).assigns.clone();
        assert_eq!(at(2), vec![("a".to_string(), "n".to_string())]);
        assert_eq!(at(3), vec![("a".to_string(), "a + (2)".to_string())]);
        assert_eq!(at(4), vec![("a".to_string(), "n".to_string()), ("b".to_string(), "a".to_string())]);
        assert_eq!(at(5), vec![("n".to_string(), "n + 1".to_string())]);
    }
}
