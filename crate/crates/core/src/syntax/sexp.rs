//! Line-annotated S-expression form of a syntax tree.
//!
//! ```text
//! (binary_expression 4:4
//!   left: (identifier 4:4 "a")
//!   operator: "/"
//!   right: (identifier 4:4 "b"))
//! ```
//!
//! Named leaves carry their source text; anonymous tokens appear only when
//! they sit in a field (operators). Error-recovery regions are `ERROR`
//! nodes and inserted tokens are `(MISSING l:l "kind")`.

use std::fmt::Write as _;

use thiserror::Error;
use tree_sitter::Node;

use super::tree::{end_line_of, line_of, SyntaxTree};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SexpNode {
    pub kind: String,
    pub field: Option<String>,
    pub line: usize,
    pub end_line: usize,
    /// Leaf text for named leaves and tokens.
    pub text: Option<String>,
    /// Anonymous token (`operator: "/"`).
    pub token: bool,
    pub children: Vec<SexpNode>,
}

impl SexpNode {
    pub fn child(&self, field: &str) -> Option<&SexpNode> {
        self.children.iter().find(|c| c.field.as_deref() == Some(field))
    }

    /// Leaf text, or the leaf texts of the subtree concatenated in order.
    pub fn flat_text(&self) -> String {
        match &self.text {
            Some(t) => t.clone(),
            None => {
                let mut s = String::new();
                for c in &self.children {
                    s.push_str(&c.flat_text());
                }
                s
            }
        }
    }

    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a SexpNode, &[&'a SexpNode])) {
        let mut ancestors = Vec::new();
        self.walk_inner(&mut ancestors, f);
    }

    fn walk_inner<'a>(&'a self, ancestors: &mut Vec<&'a SexpNode>, f: &mut dyn FnMut(&'a SexpNode, &[&'a SexpNode])) {
        f(self, ancestors);
        ancestors.push(self);
        for c in &self.children {
            c.walk_inner(ancestors, f);
        }
        ancestors.pop();
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(SexpNode::size).sum::<usize>()
    }
}

pub fn serialize(tree: &SyntaxTree) -> String {
    let mut out = String::new();
    write_node(tree, tree.root(), None, 0, &mut out);
    out.push('\n');
    out
}

fn quote(text: &str) -> String {
    serde_json::to_string(text).expect("string serialization cannot fail")
}

fn write_node(tree: &SyntaxTree, node: Node<'_>, field: Option<&str>, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    if let Some(f) = field {
        let _ = write!(out, "{f}: ");
    }
    let (line, end) = (line_of(node), end_line_of(node));
    if node.is_missing() {
        let _ = write!(out, "(MISSING {line}:{end} {})", quote(node.kind()));
        return;
    }
    if !node.is_named() {
        out.push_str(&quote(tree.node_text(node)));
        return;
    }
    let kind = if node.is_error() { "ERROR" } else { node.kind() };
    let _ = write!(out, "({kind} {line}:{end}");
    let mut cursor = node.walk();
    let mut children = Vec::new();
    for (i, child) in node.children(&mut cursor).enumerate() {
        let name = node.field_name_for_child(i as u32);
        if child.is_named() || child.is_missing() || (name.is_some() && !child.is_extra()) {
            children.push((child, name));
        }
    }
    if children.is_empty() {
        let _ = write!(out, " {})", quote(tree.node_text(node)));
        return;
    }
    for (child, name) in children {
        out.push('\n');
        write_node(tree, child, name, depth + 1, out);
    }
    out.push(')');
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("tree text line {line}: {message}")]
pub struct SexpError {
    pub line: usize,
    pub message: String,
}

/// Parses the serialized form back into a tree.
pub fn parse(text: &str) -> Result<SexpNode, SexpError> {
    let mut p = SexpParser { chars: text.char_indices().peekable(), text, line: 1 };
    p.skip_ws();
    let node = p.node(None, 0)?;
    p.skip_ws();
    if p.chars.peek().is_some() {
        return Err(p.error("trailing input after root node"));
    }
    Ok(node)
}

struct SexpParser<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    text: &'a str,
    line: usize,
}

impl SexpParser<'_> {
    fn error(&self, message: &str) -> SexpError {
        SexpError { line: self.line, message: message.to_string() }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some((_, c)) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn word(&mut self) -> String {
        let mut s = String::new();
        while let Some(&(_, c)) = self.chars.peek() {
            if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }

    fn string(&mut self) -> Result<String, SexpError> {
        let start = match self.chars.peek() {
            Some(&(i, '"')) => i,
            _ => return Err(self.error("expected string")),
        };
        self.bump();
        let mut escaped = false;
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated string")),
                Some('\\') if !escaped => escaped = true,
                Some('"') if !escaped => break,
                Some(_) => escaped = false,
            }
        }
        let end = self.chars.peek().map(|&(i, _)| i).unwrap_or(self.text.len());
        serde_json::from_str(&self.text[start..end]).map_err(|e| self.error(&format!("bad string literal: {e}")))
    }

    fn node(&mut self, field: Option<String>, parent_line: usize) -> Result<SexpNode, SexpError> {
        match self.chars.peek() {
            Some((_, '"')) => {
                let text = self.string()?;
                return Ok(SexpNode {
                    kind: "token".into(),
                    field,
                    line: parent_line,
                    end_line: parent_line,
                    text: Some(text),
                    token: true,
                    children: vec![],
                });
            }
            Some((_, '(')) => {
                self.bump();
            }
            _ => return Err(self.error("expected `(` or string")),
        }
        let kind = self.word();
        if kind.is_empty() {
            return Err(self.error("missing node kind"));
        }
        self.skip_ws();
        let span = self.word();
        let (line, end_line) = span
            .split_once(':')
            .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
            .ok_or_else(|| self.error(&format!("bad line span `{span}`")))?;
        let mut node = SexpNode { kind, field, line, end_line, text: None, token: false, children: vec![] };
        loop {
            self.skip_ws();
            match self.chars.peek() {
                None => return Err(self.error("unterminated node")),
                Some((_, ')')) => {
                    self.bump();
                    break;
                }
                Some((_, '"')) if node.children.is_empty() && node.text.is_none() => {
                    let text = self.string()?;
                    self.skip_ws();
                    if matches!(self.chars.peek(), Some((_, ')'))) {
                        node.text = Some(text);
                    } else {
                        node.children.push(SexpNode {
                            kind: "token".into(),
                            field: None,
                            line,
                            end_line: line,
                            text: Some(text),
                            token: true,
                            children: vec![],
                        });
                    }
                }
                Some((_, '(')) | Some((_, '"')) => {
                    let child = self.node(None, line)?;
                    node.children.push(child);
                }
                Some(_) => {
                    let label = self.word();
                    let Some(name) = label.strip_suffix(':') else {
                        return Err(self.error(&format!("unexpected `{label}`")));
                    };
                    self.skip_ws();
                    let child = self.node(Some(name.to_string()), line)?;
                    node.children.push(child);
                }
            }
        }
        Ok(node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::syntax::parse_unit;

    #[test]
    fn division_is_serialized_with_operator() {
        let tree = parse_unit("A.java", b"class A {\n int f(int a, int b) {\n return a / b;\n }\n}").unwrap();
        let text = serialize(&tree);
        assert!(text.contains("(binary_expression 3:3\n"), "{text}");
        assert!(text.contains("operator: \"/\""));
        assert!(text.contains("right: (identifier 3:3 \"b\")"));
    }

    #[test]
    fn roundtrip_preserves_structure() {
        let tree = parse_unit("M.java", fixtures::MOTIVATING_EXAMPLE.as_bytes()).unwrap();
        let text = serialize(&tree);
        let node = parse(&text).unwrap();
        assert_eq!(node.kind, "program");
        assert_eq!((node.line, node.end_line), (1, 17));
        let mut idents = Vec::new();
        node.walk(&mut |n, _| {
            if n.kind == "identifier" && n.line == 9 {
                idents.push(n.flat_text());
            }
        });
        assert_eq!(idents, ["x", "input", "nextInt"]);
    }

    #[test]
    fn errors_and_missing_tokens_are_marked() {
        let tree = parse_unit("A.java", b"class A {\n void f() {\n int a = 1;\n").unwrap();
        let text = serialize(&tree);
        assert!(text.contains("MISSING") || text.contains("ERROR"), "{text}");
        parse(&text).unwrap();
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(parse("(program 1:1").is_err());
        assert!(parse("(program x)").is_err());
        assert!(parse("program").is_err());
    }

    #[test]
    fn empty_file_serializes() {
        let tree = parse_unit("E.java", b"").unwrap();
        let node = parse(&serialize(&tree)).unwrap();
        assert_eq!(node.kind, "program");
    }
}
