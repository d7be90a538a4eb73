use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::{Node, Parser, Tree};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{path}: input is not valid UTF-8 (byte {offset})")]
    Encoding { path: String, offset: usize },
    #[error("{path}: parser failed to produce a tree")]
    Parser { path: String },
}

/// The analyzed language. One front-end is bundled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[default]
    Java,
}

impl Language {
    pub fn extensions(self) -> &'static [&'static str] {
        match self {
            Language::Java => &["java"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub path: String,
    pub text: String,
    pub language: Language,
}

impl SourceUnit {
    /// 1-based line text, without the trailing newline.
    pub fn line(&self, line: usize) -> Option<&str> {
        if line == 0 {
            return None;
        }
        self.text.split('\n').nth(line - 1).map(|l| l.strip_suffix('\r').unwrap_or(l))
    }

    pub fn line_count(&self) -> usize {
        if self.text.is_empty() {
            0
        } else {
            self.text.split('\n').count()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub line: usize,
}

/// A method or constructor found in a unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionInfo {
    /// `unit::Class.method@line`, unique within a run.
    pub id: String,
    pub name: String,
    pub qualified_name: String,
    pub unit: String,
    pub params: Vec<Param>,
    /// Line of the declaration header (where the name appears).
    pub header_line: usize,
    /// First and last line of the whole declaration, body included.
    pub start_line: usize,
    pub end_line: usize,
    /// Line of the opening brace of the body.
    pub body_start_line: usize,
    pub(crate) byte_range: (usize, usize),
}

impl FunctionInfo {
    pub fn contains_line(&self, line: usize) -> bool {
        line >= self.start_line && line <= self.end_line
    }
}

/// A parsed unit. Trees always exist, even for files with syntax errors;
/// recovery regions are listed in [`SyntaxTree::error_lines`].
#[derive(Debug, Clone)]
pub struct SyntaxTree {
    unit: Arc<SourceUnit>,
    tree: Tree,
    functions: Vec<FunctionInfo>,
    error_lines: Vec<usize>,
}

pub fn parse_unit(path: &str, bytes: &[u8]) -> Result<SyntaxTree, ParseError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ParseError::Encoding { path: path.to_string(), offset: e.valid_up_to() })?;
    let unit = SourceUnit { path: path.to_string(), text: text.to_string(), language: Language::Java };
    SyntaxTree::parse(unit)
}

impl SyntaxTree {
    pub fn parse(unit: SourceUnit) -> Result<SyntaxTree, ParseError> {
        let mut parser = Parser::new();
        parser
            .set_language(&tree_sitter_java::LANGUAGE.into())
            .map_err(|_| ParseError::Parser { path: unit.path.clone() })?;
        let tree = parser
            .parse(&unit.text, None)
            .ok_or_else(|| ParseError::Parser { path: unit.path.clone() })?;
        let mut error_lines = Vec::new();
        collect_errors(tree.root_node(), &mut error_lines);
        error_lines.sort_unstable();
        error_lines.dedup();
        let mut functions = Vec::new();
        collect_functions(tree.root_node(), &unit, &mut Vec::new(), &mut functions);
        Ok(SyntaxTree { unit: Arc::new(unit), tree, functions, error_lines })
    }

    pub fn unit(&self) -> &SourceUnit {
        &self.unit
    }

    pub fn path(&self) -> &str {
        &self.unit.path
    }

    pub fn text(&self) -> &str {
        &self.unit.text
    }

    pub fn root(&self) -> Node<'_> {
        self.tree.root_node()
    }

    pub fn functions(&self) -> &[FunctionInfo] {
        &self.functions
    }

    pub fn has_errors(&self) -> bool {
        !self.error_lines.is_empty()
    }

    /// Lines holding an error-recovery or missing-token node.
    pub fn error_lines(&self) -> &[usize] {
        &self.error_lines
    }

    pub fn node_text(&self, node: Node<'_>) -> &str {
        &self.unit.text[node.byte_range()]
    }

    /// The declaration node of `func`.
    pub fn function_node(&self, func: &FunctionInfo) -> Option<Node<'_>> {
        let (start, end) = func.byte_range;
        let mut node = self.root().descendant_for_byte_range(start, end)?;
        loop {
            if node.byte_range() == (start..end) && is_function_kind(node.kind()) {
                return Some(node);
            }
            node = node.parent()?;
        }
    }

    /// Source text of a function with each line prefixed by its number,
    /// the form shown to models and parsed by the oracle.
    pub fn numbered_function_text(&self, func: &FunctionInfo) -> String {
        let mut out = String::new();
        for line in func.start_line..=func.end_line {
            let text = self.unit.line(line).unwrap_or("");
            out.push_str(&format!("{line}: {text}\n"));
        }
        out
    }
}

pub(crate) fn line_of(node: Node<'_>) -> usize {
    node.start_position().row + 1
}

pub(crate) fn end_line_of(node: Node<'_>) -> usize {
    node.end_position().row + 1
}

fn is_function_kind(kind: &str) -> bool {
    matches!(kind, "method_declaration" | "constructor_declaration" | "compact_constructor_declaration")
}

fn collect_errors(node: Node<'_>, out: &mut Vec<usize>) {
    if node.is_error() || node.is_missing() {
        out.push(line_of(node));
    }
    if !node.has_error() {
        return;
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect_errors(child, out);
    }
}

fn collect_functions(node: Node<'_>, unit: &SourceUnit, scope: &mut Vec<String>, out: &mut Vec<FunctionInfo>) {
    let kind = node.kind();
    let pushed = match kind {
        "class_declaration" | "interface_declaration" | "enum_declaration" | "record_declaration" => {
            let name = node
                .child_by_field_name("name")
                .map(|n| unit.text[n.byte_range()].to_string())
                .unwrap_or_else(|| "<anonymous>".to_string());
            scope.push(name);
            true
        }
        _ => false,
    };
    if is_function_kind(kind) {
        if let Some(info) = function_info(node, unit, scope) {
            out.push(info);
        }
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect_functions(child, unit, scope, out);
    }
    if pushed {
        scope.pop();
    }
}

fn function_info(node: Node<'_>, unit: &SourceUnit, scope: &[String]) -> Option<FunctionInfo> {
    let name_node = node.child_by_field_name("name")?;
    let name = unit.text[name_node.byte_range()].to_string();
    if name.is_empty() {
        return None;
    }
    let body = node.child_by_field_name("body");
    let mut params = Vec::new();
    if let Some(list) = node.child_by_field_name("parameters") {
        let mut cursor = list.walk();
        for p in list.named_children(&mut cursor) {
            if !matches!(p.kind(), "formal_parameter" | "spread_parameter" | "receiver_parameter") {
                continue;
            }
            let pname = p.child_by_field_name("name").or_else(|| {
                // spread_parameter keeps its name inside a variable_declarator
                let mut c = p.walk();
                let found = p
                    .named_children(&mut c)
                    .find(|n| n.kind() == "variable_declarator")
                    .and_then(|d| d.child_by_field_name("name"));
                found
            });
            if let Some(pn) = pname {
                params.push(Param { name: unit.text[pn.byte_range()].to_string(), line: line_of(pn) });
            }
        }
    }
    let qualified_name = if scope.is_empty() { name.clone() } else { format!("{}.{}", scope.join("."), name) };
    let header_line = line_of(name_node);
    Some(FunctionInfo {
        id: format!("{}::{}@{}", unit.path, qualified_name, header_line),
        name,
        qualified_name,
        unit: unit.path.clone(),
        params,
        header_line,
        start_line: line_of(node),
        end_line: end_line_of(node),
        body_start_line: body.map(line_of).unwrap_or(header_line),
        byte_range: (node.start_byte(), node.end_byte()),
    })
}
