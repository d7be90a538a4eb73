//! The walk dialect: rule scripts matched against the serialized syntax
//! tree.
//!
//! ```text
//! rule divisor
//!   match binary_expression
//!   where operator in ["/", "%"]
//!   emit right
//! end
//! ```
//!
//! A rule fires on every node whose kind is listed after `match` (or any
//! node for `*`) and for which all `where` lines hold. `emit PATH` prints
//! the node at PATH when it is an identifier; `emit each identifier in
//! PATH` prints every identifier below it; `emit each variable in PATH`
//! skips method names, field names and capitalized qualifiers.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use regex::Regex;
use thiserror::Error;

use crate::syntax::sexp::SexpNode;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScriptError {
    #[error("script line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("step limit of {0} exceeded")]
    StepLimit(u64),
    #[error("time limit of {0:?} exceeded")]
    Timeout(Duration),
}

#[derive(Debug, Clone)]
enum Seg {
    SelfNode,
    Parent,
    Field(String),
}

type Path = Vec<Seg>;

#[derive(Debug, Clone)]
enum Test {
    Exists,
    Is(Vec<String>),
    Eq(String),
    Ne(String),
    In(Vec<String>),
    Matches(Regex),
    Calls(Vec<String>),
    Mentions(Vec<String>),
}

#[derive(Debug, Clone)]
enum Cond {
    Atom(Path, Test),
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EmitMode {
    Node,
    Identifiers,
    Variables,
}

#[derive(Debug, Clone)]
struct Emit {
    mode: EmitMode,
    path: Path,
}

#[derive(Debug, Clone)]
struct Rule {
    name: String,
    kinds: Option<Vec<String>>,
    conds: Vec<Cond>,
    emits: Vec<Emit>,
}

#[derive(Debug, Clone)]
pub struct Script {
    rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Str(String),
    Punct(char),
    Op(&'static str),
}

fn tokenize(text: &str, line: usize) -> Result<Vec<Tok>, ScriptError> {
    let err = |message: String| ScriptError::Syntax { line, message };
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if c == '"' {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i] != '"' {
                if chars[i] == '\\' {
                    i += 1;
                }
                i += 1;
            }
            if i >= chars.len() {
                return Err(err("unterminated string".into()));
            }
            i += 1;
            let raw: String = chars[start..i].iter().collect();
            let s: String = serde_json::from_str(&raw).map_err(|e| err(format!("bad string {raw}: {e}")))?;
            out.push(Tok::Str(s));
        } else if c == '=' && chars.get(i + 1) == Some(&'=') {
            out.push(Tok::Op("=="));
            i += 2;
        } else if c == '!' && chars.get(i + 1) == Some(&'=') {
            out.push(Tok::Op("!="));
            i += 2;
        } else if "[](),|".contains(c) {
            out.push(Tok::Punct(c));
            i += 1;
        } else if c.is_alphanumeric() || c == '_' || c == '.' || c == '*' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.' || chars[i] == '*') {
                i += 1;
            }
            out.push(Tok::Word(chars[start..i].iter().collect()));
        } else {
            return Err(err(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct CondParser {
    toks: Vec<Tok>,
    at: usize,
    line: usize,
}

impl CondParser {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ScriptError> {
        Err(ScriptError::Syntax { line: self.line, message: message.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn or(&mut self) -> Result<Cond, ScriptError> {
        let mut left = self.and()?;
        while self.is_word("or") {
            self.at += 1;
            let right = self.and()?;
            left = Cond::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<Cond, ScriptError> {
        let mut left = self.unary()?;
        while self.is_word("and") {
            self.at += 1;
            let right = self.unary()?;
            left = Cond::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Cond, ScriptError> {
        if self.is_word("not") {
            self.at += 1;
            return Ok(Cond::Not(Box::new(self.unary()?)));
        }
        if self.peek() == Some(&Tok::Punct('(')) {
            self.at += 1;
            let c = self.or()?;
            if self.next() != Some(Tok::Punct(')')) {
                return self.err("expected `)`");
            }
            return Ok(c);
        }
        self.atom()
    }

    fn string(&mut self) -> Result<String, ScriptError> {
        match self.next() {
            Some(Tok::Str(s)) => Ok(s),
            _ => self.err("expected a quoted string"),
        }
    }

    fn list(&mut self) -> Result<Vec<String>, ScriptError> {
        if self.next() != Some(Tok::Punct('[')) {
            return self.err("expected `[`");
        }
        let mut items = Vec::new();
        loop {
            if self.peek() == Some(&Tok::Punct(']')) {
                self.at += 1;
                return Ok(items);
            }
            items.push(self.string()?);
            match self.next() {
                Some(Tok::Punct(',')) => {}
                Some(Tok::Punct(']')) => return Ok(items),
                _ => return self.err("expected `,` or `]` in list"),
            }
        }
    }

    fn atom(&mut self) -> Result<Cond, ScriptError> {
        let path = match self.next() {
            Some(Tok::Word(w)) => parse_path(&w, self.line)?,
            _ => return self.err("expected a path"),
        };
        let test = match self.next() {
            Some(Tok::Word(w)) => match w.as_str() {
                "exists" => Test::Exists,
                "is" => {
                    let mut kinds = vec![self.word()?];
                    while self.peek() == Some(&Tok::Punct('|')) {
                        self.at += 1;
                        kinds.push(self.word()?);
                    }
                    Test::Is(kinds)
                }
                "in" => Test::In(self.list()?),
                "matches" => {
                    let s = self.string()?;
                    match Regex::new(&s) {
                        Ok(r) => Test::Matches(r),
                        Err(e) => return self.err(format!("bad regex: {e}")),
                    }
                }
                "calls" => Test::Calls(self.list()?),
                "mentions" => Test::Mentions(self.list()?),
                other => return self.err(format!("unknown test `{other}`")),
            },
            Some(Tok::Op("==")) => Test::Eq(self.string()?),
            Some(Tok::Op("!=")) => Test::Ne(self.string()?),
            _ => return self.err("expected a test after the path"),
        };
        Ok(Cond::Atom(path, test))
    }

    fn word(&mut self) -> Result<String, ScriptError> {
        match self.next() {
            Some(Tok::Word(w)) => Ok(w),
            _ => self.err("expected a node kind"),
        }
    }
}

fn parse_path(text: &str, line: usize) -> Result<Path, ScriptError> {
    let mut out = Vec::new();
    for seg in text.split('.') {
        out.push(match seg {
            "self" => Seg::SelfNode,
            "parent" => Seg::Parent,
            "" => return Err(ScriptError::Syntax { line, message: format!("empty segment in path `{text}`") }),
            s if s.chars().all(|c| c.is_alphanumeric() || c == '_') => Seg::Field(s.to_string()),
            s => return Err(ScriptError::Syntax { line, message: format!("bad path segment `{s}`") }),
        });
    }
    Ok(out)
}

impl Script {
    pub fn parse(text: &str) -> Result<Script, ScriptError> {
        let mut rules = Vec::new();
        let mut current: Option<(usize, Rule)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = strip_comment(raw).trim().to_string();
            if content.is_empty() {
                continue;
            }
            let (head, rest) = content.split_once(char::is_whitespace).unwrap_or((&content, ""));
            let rest = rest.trim();
            let err = |message: String| ScriptError::Syntax { line, message };
            match (head, current.as_mut()) {
                ("rule", None) => {
                    if rest.is_empty() {
                        return Err(err("rule needs a name".into()));
                    }
                    current = Some((line, Rule { name: rest.to_string(), kinds: None, conds: vec![], emits: vec![] }));
                }
                ("rule", Some(_)) => return Err(err("previous rule is missing `end`".into())),
                ("match", Some((_, r))) => {
                    if rest == "*" {
                        r.kinds = None;
                    } else {
                        let kinds: Vec<String> = rest.split('|').map(|k| k.trim().to_string()).collect();
                        if kinds.iter().any(|k| k.is_empty() || !k.chars().all(|c| c.is_alphanumeric() || c == '_')) {
                            return Err(err(format!("bad node kinds `{rest}`")));
                        }
                        r.kinds = Some(kinds);
                    }
                }
                ("where", Some((_, r))) => {
                    let mut p = CondParser { toks: tokenize(rest, line)?, at: 0, line };
                    let c = p.or()?;
                    if p.at != p.toks.len() {
                        return Err(err("unexpected text after condition".into()));
                    }
                    r.conds.push(c);
                }
                ("emit", Some((_, r))) => {
                    let words: Vec<&str> = rest.split_whitespace().collect();
                    let emit = match words.as_slice() {
                        [p] => Emit { mode: EmitMode::Node, path: parse_path(p, line)? },
                        ["each", "identifier", "in", p] => Emit { mode: EmitMode::Identifiers, path: parse_path(p, line)? },
                        ["each", "variable", "in", p] => Emit { mode: EmitMode::Variables, path: parse_path(p, line)? },
                        _ => return Err(err(format!("bad emit `{rest}`"))),
                    };
                    r.emits.push(emit);
                }
                ("end", Some(_)) => {
                    let (start, r) = current.take().expect("open rule");
                    if r.emits.is_empty() {
                        return Err(ScriptError::Syntax { line: start, message: format!("rule `{}` emits nothing", r.name) });
                    }
                    rules.push(r);
                }
                (kw @ ("match" | "where" | "emit" | "end"), None) => {
                    return Err(err(format!("`{kw}` outside a rule")));
                }
                (other, _) => return Err(err(format!("unknown keyword `{other}`"))),
            }
        }
        if let Some((line, r)) = current {
            return Err(ScriptError::Syntax { line, message: format!("rule `{}` is missing `end`", r.name) });
        }
        Ok(Script { rules })
    }

    pub fn rule_names(&self) -> Vec<&str> {
        self.rules.iter().map(|r| r.name.as_str()).collect()
    }
}

fn strip_comment(raw: &str) -> String {
    let mut in_str = false;
    let mut escaped = false;
    let mut out = String::new();
    for c in raw.chars() {
        if in_str {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
        } else if c == '"' {
            in_str = true;
        } else if c == '#' {
            break;
        }
        out.push(c);
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct ExecLimits {
    pub max_steps: u64,
    pub timeout: Duration,
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits { max_steps: 5_000_000, timeout: Duration::from_secs(10) }
    }
}

struct Exec {
    steps: u64,
    limits: ExecLimits,
    start: Instant,
}

impl Exec {
    fn tick(&mut self) -> Result<(), ScriptError> {
        self.steps += 1;
        if self.steps > self.limits.max_steps {
            return Err(ScriptError::StepLimit(self.limits.max_steps));
        }
        if self.steps % 4096 == 0 && self.start.elapsed() > self.limits.timeout {
            return Err(ScriptError::Timeout(self.limits.timeout));
        }
        Ok(())
    }
}

/// Node and its ancestors, root first.
fn resolve<'a>(node: &'a SexpNode, ancestors: &[&'a SexpNode], path: &Path) -> Option<(&'a SexpNode, Vec<&'a SexpNode>)> {
    let mut cur = node;
    let mut chain: Vec<&'a SexpNode> = ancestors.to_vec();
    for seg in path {
        match seg {
            Seg::SelfNode => {}
            Seg::Parent => {
                cur = chain.pop()?;
            }
            Seg::Field(f) => {
                let child = cur.child(f)?;
                chain.push(cur);
                cur = child;
            }
        }
    }
    Some((cur, chain))
}

fn any_in_subtree(node: &SexpNode, exec: &mut Exec, f: &dyn Fn(&SexpNode) -> bool) -> Result<bool, ScriptError> {
    exec.tick()?;
    if f(node) {
        return Ok(true);
    }
    for c in &node.children {
        if any_in_subtree(c, exec, f)? {
            return Ok(true);
        }
    }
    Ok(false)
}

fn eval(c: &Cond, node: &SexpNode, ancestors: &[&SexpNode], exec: &mut Exec) -> Result<bool, ScriptError> {
    exec.tick()?;
    Ok(match c {
        Cond::Not(inner) => !eval(inner, node, ancestors, exec)?,
        Cond::And(a, b) => eval(a, node, ancestors, exec)? && eval(b, node, ancestors, exec)?,
        Cond::Or(a, b) => eval(a, node, ancestors, exec)? || eval(b, node, ancestors, exec)?,
        Cond::Atom(path, test) => {
            let Some((target, _)) = resolve(node, ancestors, path) else { return Ok(false) };
            match test {
                Test::Exists => true,
                Test::Is(kinds) => kinds.iter().any(|k| *k == target.kind),
                Test::Eq(s) => target.flat_text() == *s,
                Test::Ne(s) => target.flat_text() != *s,
                Test::In(items) => {
                    let t = target.flat_text();
                    items.iter().any(|i| *i == t)
                }
                Test::Matches(re) => re.is_match(&target.flat_text()),
                Test::Calls(names) => any_in_subtree(target, exec, &|n| {
                    n.kind == "method_invocation" && n.child("name").is_some_and(|m| names.contains(&m.flat_text()))
                })?,
                Test::Mentions(texts) => any_in_subtree(target, exec, &|n| {
                    n.children.is_empty() && n.text.as_ref().is_some_and(|t| texts.iter().any(|x| t.contains(x.as_str())))
                })?,
            }
        }
    })
}

fn collect_identifiers(node: &SexpNode, parent: Option<&SexpNode>, variables: bool, out: &mut Vec<(usize, String)>) {
    if node.kind == "identifier" {
        let text = node.text.clone().unwrap_or_default();
        let skip = variables
            && match (parent, node.field.as_deref()) {
                (Some(p), Some("name")) if p.kind == "method_invocation" => true,
                (Some(p), Some("field")) if p.kind == "field_access" => true,
                (Some(p), Some("object")) if matches!(p.kind.as_str(), "method_invocation" | "field_access") => {
                    text.starts_with(char::is_uppercase)
                }
                _ => false,
            };
        if !skip {
            out.push((node.line, text));
        }
    }
    for c in &node.children {
        collect_identifiers(c, Some(node), variables, out);
    }
}

/// Runs `script` over the tree and returns the hits in output order:
/// sorted by line and identifier, without duplicates.
pub fn execute(script: &Script, tree: &SexpNode, limits: ExecLimits) -> Result<Vec<(usize, String)>, ScriptError> {
    let mut exec = Exec { steps: 0, limits, start: Instant::now() };
    let mut hits = BTreeSet::new();
    let mut nodes: Vec<(&SexpNode, Vec<&SexpNode>)> = Vec::new();
    tree.walk(&mut |n, anc| nodes.push((n, anc.to_vec())));
    for (node, ancestors) in &nodes {
        for rule in &script.rules {
            exec.tick()?;
            if let Some(kinds) = &rule.kinds {
                if !kinds.contains(&node.kind) {
                    continue;
                }
            }
            let mut ok = true;
            for c in &rule.conds {
                if !eval(c, node, ancestors, &mut exec)? {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            for e in &rule.emits {
                let Some((target, chain)) = resolve(node, ancestors, &e.path) else { continue };
                match e.mode {
                    EmitMode::Node => {
                        if target.kind == "identifier" {
                            hits.insert((target.line, target.text.clone().unwrap_or_default()));
                        }
                    }
                    EmitMode::Identifiers | EmitMode::Variables => {
                        let mut found = Vec::new();
                        collect_identifiers(target, chain.last().copied(), e.mode == EmitMode::Variables, &mut found);
                        hits.extend(found);
                    }
                }
            }
        }
    }
    Ok(hits.into_iter().collect())
}

/// Parses both inputs and prints hits in the `line<TAB>identifier` form.
pub fn run_text(script: &str, tree: &str, limits: ExecLimits) -> Result<String, String> {
    let script = Script::parse(script).map_err(|e| e.to_string())?;
    let tree = crate::syntax::sexp::parse(tree).map_err(|e| e.to_string())?;
    let hits = execute(&script, &tree, limits).map_err(|e| e.to_string())?;
    Ok(hits.into_iter().map(|(l, id)| format!("{l}\t{id}\n")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::MOTIVATING_EXAMPLE;
    use crate::syntax::{parse_unit, sexp};

    fn tree(src: &str) -> SexpNode {
        let t = parse_unit("T.java", src.as_bytes()).unwrap();
        sexp::parse(&sexp::serialize(&t)).unwrap()
    }

    fn run(script: &str, src: &str) -> Vec<(usize, String)> {
        execute(&Script::parse(script).unwrap(), &tree(src), ExecLimits::default()).unwrap()
    }

    const DIVISORS: &str = r#"
rule divisor   # a / b
  match binary_expression
  where operator in ["/", "%"]
  emit right
end
rule compound
  match assignment_expression
  where operator == "/=" or operator == "%="
  emit right
end
"#;

    #[test]
    fn divisors_of_the_motivating_example() {
        let hits = run(DIVISORS, MOTIVATING_EXAMPLE);
        assert_eq!(hits, vec![(4, "b".into()), (11, "y".into()), (14, "y".into())]);
        let hits = run(DIVISORS, "class A { void f(int a, int b) { a /= b; a = a % (b); } }");
        assert_eq!(hits, vec![(1, "b".into())]);
    }

    #[test]
    fn calls_and_variables() {
        let script = r#"
rule input
  match variable_declarator
  where value calls ["nextInt"]
  emit name
end
"#;
        assert_eq!(run(script, MOTIVATING_EXAMPLE), vec![(9, "x".into())]);
        let sink = r#"
rule writer
  match method_invocation
  where name in ["println"] and object calls ["getWriter"]
  emit each variable in arguments
end
"#;
        let src = "class A {\n void f(R response, String d) {\n response.getWriter().println(\"<p>\" + d + Util.NAME + o.x);\n }\n}";
        assert_eq!(run(sink, src), vec![(3, "d".into()), (3, "o".into())]);
        let all = sink.replace("each variable", "each identifier");
        assert_eq!(run(&all, src).len(), 5);
    }

    #[test]
    fn mentions_and_regex_and_parent() {
        let script = r#"
rule zero
  match variable_declarator
  where value matches "^0+(\\.0*)?[fFdDlL]?$" or value mentions ["MIN_VALUE"]
  emit name
end
rule under_return
  match identifier
  where parent is return_statement
  emit self
end
"#;
        let src = "class A {\n int f() {\n int a = 0;\n float b = 0.0f;\n int c = Integer.MIN_VALUE;\n int d = 10;\n return a;\n }\n}";
        assert_eq!(run(script, src), vec![(3, "a".into()), (4, "b".into()), (5, "c".into()), (7, "a".into())]);
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let e = Script::parse("rule a\n  match x\n  where value frobs [\"y\"]\n  emit name\nend").unwrap_err();
        assert_eq!(e, ScriptError::Syntax { line: 3, message: "unknown test `frobs`".into() });
        assert!(matches!(Script::parse("rule a\n emit name\n"), Err(ScriptError::Syntax { line: 1, .. })));
        assert!(matches!(Script::parse("emit x"), Err(ScriptError::Syntax { line: 1, .. })));
        assert!(matches!(Script::parse("rule a\n where x matches \"(\"\n emit x\nend"), Err(ScriptError::Syntax { line: 2, .. })));
        assert!(Script::parse("# nothing\n").unwrap().rule_names().is_empty());
    }

    #[test]
    fn step_limit_stops_runaway_scripts() {
        let s = Script::parse("rule all\n match *\n where self mentions [\"zz\"]\n emit self\nend").unwrap();
        let r = execute(&s, &tree(MOTIVATING_EXAMPLE), ExecLimits { max_steps: 100, timeout: Duration::from_secs(10) });
        assert_eq!(r, Err(ScriptError::StepLimit(100)));
    }

    #[test]
    fn empty_file_yields_nothing() {
        assert!(run(DIVISORS, "").is_empty());
    }

    #[test]
    fn text_interface() {
        let t = parse_unit("T.java", MOTIVATING_EXAMPLE.as_bytes()).unwrap();
        let out = run_text(DIVISORS, &sexp::serialize(&t), ExecLimits::default()).unwrap();
        assert_eq!(out, "4\tb\n11\ty\n14\ty\n");
        assert!(run_text("rule", "", ExecLimits::default()).unwrap_err().contains("line 1"));
    }
}
