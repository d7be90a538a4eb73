use crate::expr::{lex, BinOp, Expr, TokKind, Token, TokenStream};

use super::OracleError;

/// A statement of the loop-free mini language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MiniStmt {
    /// `x = e`, `T x = e`, `x op= e`, `x++`.
    Assign { line: usize, target: String, value: Expr, compound: Option<BinOp> },
    /// `T x;`
    Declare { line: usize, name: String },
    /// A call used as a statement.
    Eval { line: usize, expr: Expr },
    Return { line: usize, value: Option<Expr> },
    If { line: usize, cond: Expr, then: Vec<MiniStmt>, otherwise: Vec<MiniStmt> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniFunction {
    pub name: String,
    pub header_line: usize,
    /// Parameter names with the line each is declared on.
    pub params: Vec<(String, usize)>,
    pub body: Vec<MiniStmt>,
}

const REJECTED: &[&str] = &[
    "for", "while", "do", "try", "catch", "finally", "switch", "throw", "break", "continue", "synchronized", "case",
    "default", "goto", "yield", "assert",
];

const MODIFIERS: &[&str] = &["final", "static", "public", "private", "protected", "abstract", "synchronized", "native"];

/// Parses the numbered function text produced by
/// [`crate::syntax::SyntaxTree::numbered_function_text`]:
/// one `N: source` line per source line.
pub fn parse_numbered(text: &str) -> Result<MiniFunction, OracleError> {
    let mut first = None;
    let mut expected = 0;
    let mut source = String::new();
    for raw in text.lines() {
        if raw.trim().is_empty() {
            continue;
        }
        let (num, rest) = raw
            .split_once(':')
            .ok_or_else(|| OracleError::Malformed(format!("line without number: `{raw}`")))?;
        let n: usize = num.trim().parse().map_err(|_| OracleError::Malformed(format!("bad line number in `{raw}`")))?;
        match first {
            None => {
                first = Some(n);
                expected = n;
            }
            Some(_) if n != expected => {
                return Err(OracleError::Malformed(format!("line {n} follows line {}", expected - 1)));
            }
            Some(_) => {}
        }
        expected += 1;
        source.push_str(rest.strip_prefix(' ').unwrap_or(rest));
        source.push('\n');
    }
    let first = first.ok_or_else(|| OracleError::Malformed("empty function text".into()))?;
    parse_function(&source, first)
}

/// Parses one method declaration whose first line is `first_line`.
pub fn parse_function(source: &str, first_line: usize) -> Result<MiniFunction, OracleError> {
    let tokens = lex(source, first_line)?;
    let mut ts = TokenStream::new(&tokens);
    while ts.is_at("@") {
        ts.next_token();
        ts.ident()?;
        if ts.is_at("(") {
            skip_balanced(&mut ts, "(", ")")?;
        }
    }
    let open = tokens
        .iter()
        .position(|t| t.kind == TokKind::Punct && t.text == "(")
        .ok_or_else(|| OracleError::Malformed("no parameter list".into()))?;
    let name_tok = open
        .checked_sub(1)
        .map(|i| &tokens[i])
        .filter(|t| t.kind == TokKind::Ident)
        .ok_or_else(|| OracleError::Malformed("no function name".into()))?;
    ts.reset(open);
    let params = parse_params(&mut ts)?;
    while !ts.is_at("{") {
        if ts.next_token().is_none() {
            return Err(OracleError::Malformed("no function body".into()));
        }
    }
    let body = block(&mut ts)?;
    Ok(MiniFunction { name: name_tok.text.clone(), header_line: name_tok.line, params, body })
}

fn skip_balanced(ts: &mut TokenStream<'_>, open: &str, close: &str) -> Result<(), OracleError> {
    ts.expect(open)?;
    let mut depth = 1;
    while depth > 0 {
        let t = ts.next_token().ok_or_else(|| OracleError::Malformed(format!("unbalanced `{open}`")))?;
        if t.kind == TokKind::Punct {
            if t.text == open {
                depth += 1;
            } else if t.text == close {
                depth -= 1;
            }
        }
    }
    Ok(())
}

fn parse_params(ts: &mut TokenStream<'_>) -> Result<Vec<(String, usize)>, OracleError> {
    ts.expect("(")?;
    let mut params = Vec::new();
    let mut last_ident: Option<&Token> = None;
    let mut depth = 0;
    loop {
        let t = ts.next_token().ok_or_else(|| OracleError::Malformed("unterminated parameter list".into()))?;
        match (t.kind.clone(), t.text.as_str()) {
            (TokKind::Punct, "<") => depth += 1,
            (TokKind::Punct, ">") => depth -= 1,
            (TokKind::Punct, ">>") => depth -= 2,
            (TokKind::Punct, "," | ")") if depth == 0 => {
                if let Some(p) = last_ident.take() {
                    params.push((p.text.clone(), p.line));
                }
                if t.text == ")" {
                    return Ok(params);
                }
            }
            (TokKind::Ident, _) => last_ident = Some(t),
            _ => {}
        }
    }
}

fn block(ts: &mut TokenStream<'_>) -> Result<Vec<MiniStmt>, OracleError> {
    ts.expect("{")?;
    let mut out = Vec::new();
    loop {
        if ts.eat("}") {
            return Ok(out);
        }
        if ts.peek().is_none() {
            return Err(OracleError::Malformed("unterminated block".into()));
        }
        statement(ts, &mut out)?;
    }
}

fn statement(ts: &mut TokenStream<'_>, out: &mut Vec<MiniStmt>) -> Result<(), OracleError> {
    let t = ts.peek().expect("caller checked");
    let line = t.line;
    if t.kind == TokKind::Ident && REJECTED.contains(&t.text.as_str()) {
        return Err(OracleError::Unsupported { line, construct: t.text.clone() });
    }
    if ts.is_at("{") {
        let inner = block(ts)?;
        out.extend(inner);
        return Ok(());
    }
    if ts.eat(";") {
        return Ok(());
    }
    if ts.eat("if") {
        ts.expect("(")?;
        let cond = ts.expr()?;
        ts.expect(")")?;
        let mut then = Vec::new();
        branch(ts, &mut then)?;
        let mut otherwise = Vec::new();
        if ts.eat("else") {
            branch(ts, &mut otherwise)?;
        }
        out.push(MiniStmt::If { line, cond, then, otherwise });
        return Ok(());
    }
    if ts.eat("return") {
        let value = if ts.is_at(";") { None } else { Some(ts.expr()?) };
        ts.expect(";")?;
        out.push(MiniStmt::Return { line, value });
        return Ok(());
    }
    if ts.is_at("++") || ts.is_at("--") {
        let op = if ts.is_at("++") { BinOp::Add } else { BinOp::Sub };
        ts.next_token();
        let name = ts.ident()?.text.clone();
        ts.expect(";")?;
        out.push(MiniStmt::Assign { line, target: name, value: Expr::Int(1), compound: Some(op) });
        return Ok(());
    }
    while ts.peek().is_some_and(|t| t.kind == TokKind::Ident && MODIFIERS.contains(&t.text.as_str())) {
        ts.next_token();
    }
    let start = ts.position();
    if let Some(decls) = declaration(ts)? {
        out.extend(decls);
        return Ok(());
    }
    ts.reset(start);
    if let (Some(a), Some(b)) = (ts.peek(), ts.peek_at(1)) {
        if a.kind == TokKind::Ident && b.kind == TokKind::Punct {
            let compound = match b.text.as_str() {
                "=" => Some(None),
                "+=" => Some(Some(BinOp::Add)),
                "-=" => Some(Some(BinOp::Sub)),
                "*=" => Some(Some(BinOp::Mul)),
                "/=" => Some(Some(BinOp::Div)),
                "%=" => Some(Some(BinOp::Rem)),
                "++" | "--" => {
                    let op = if b.text == "++" { BinOp::Add } else { BinOp::Sub };
                    ts.next_token();
                    ts.next_token();
                    ts.expect(";")?;
                    out.push(MiniStmt::Assign { line, target: a.text.clone(), value: Expr::Int(1), compound: Some(op) });
                    return Ok(());
                }
                "." | "[" => {
                    return assignment_to_member(ts, out, line);
                }
                _ => None,
            };
            if let Some(compound) = compound {
                ts.next_token();
                ts.next_token();
                let value = ts.expr()?;
                ts.expect(";")?;
                out.push(MiniStmt::Assign { line, target: a.text.clone(), value, compound });
                return Ok(());
            }
        }
    }
    let expr = ts.expr()?;
    if !matches!(expr, Expr::Call { .. } | Expr::New { .. }) {
        return Err(OracleError::Unsupported { line, construct: "expression statement".into() });
    }
    ts.expect(";")?;
    out.push(MiniStmt::Eval { line, expr });
    Ok(())
}

/// `a.f = e;` and `a[i] = e;` are outside the subset; calls such as
/// `a.f(x);` are not.
fn assignment_to_member(ts: &mut TokenStream<'_>, out: &mut Vec<MiniStmt>, line: usize) -> Result<(), OracleError> {
    let start = ts.position();
    let expr = ts.expr()?;
    if ts.is_at("=") || ts.peek().is_some_and(|t| t.text.ends_with('=') && t.text.len() == 2 && t.text != "==") {
        return Err(OracleError::Unsupported { line, construct: "field or array store".into() });
    }
    if !matches!(expr, Expr::Call { .. }) {
        ts.reset(start);
        return Err(OracleError::Unsupported { line, construct: "expression statement".into() });
    }
    ts.expect(";")?;
    out.push(MiniStmt::Eval { line, expr });
    Ok(())
}

fn branch(ts: &mut TokenStream<'_>, out: &mut Vec<MiniStmt>) -> Result<(), OracleError> {
    if ts.peek().is_none() {
        return Err(OracleError::Malformed("missing branch body".into()));
    }
    statement(ts, out)
}

/// `Type name [= e] {, name [= e]};` or `None` when the tokens do not start
/// a declaration.
fn declaration(ts: &mut TokenStream<'_>) -> Result<Option<Vec<MiniStmt>>, OracleError> {
    if !skip_type(ts) {
        return Ok(None);
    }
    match (ts.peek(), ts.peek_at(1)) {
        (Some(n), Some(after)) if n.kind == TokKind::Ident && matches!(after.text.as_str(), "=" | ";" | ",") => {}
        _ => return Ok(None),
    }
    let mut out = Vec::new();
    loop {
        let name = ts.ident()?;
        if ts.eat("=") {
            let value = ts.expr()?;
            out.push(MiniStmt::Assign { line: name.line, target: name.text.clone(), value, compound: None });
        } else {
            out.push(MiniStmt::Declare { line: name.line, name: name.text.clone() });
        }
        if ts.eat(";") {
            return Ok(Some(out));
        }
        ts.expect(",")?;
    }
}

fn skip_type(ts: &mut TokenStream<'_>) -> bool {
    if !ts.peek().is_some_and(|t| t.kind == TokKind::Ident) {
        return false;
    }
    ts.next_token();
    while ts.is_at(".") && ts.peek_at(1).is_some_and(|t| t.kind == TokKind::Ident) {
        ts.next_token();
        ts.next_token();
    }
    if ts.is_at("<") {
        let mut depth = 0i32;
        loop {
            match ts.next_token() {
                Some(t) if t.text == "<" => depth += 1,
                Some(t) if t.text == ">" => depth -= 1,
                Some(t) if t.text == ">>" => depth -= 2,
                Some(t) if t.kind == TokKind::Ident || t.text == "," || t.text == "?" || t.text == "." => {}
                _ => return false,
            }
            if depth <= 0 {
                break;
            }
        }
    }
    while ts.is_at("[") && ts.peek_at(1).is_some_and(|t| t.text == "]") {
        ts.next_token();
        ts.next_token();
    }
    true
}

impl MiniFunction {
    /// Every statement line of the body in source order, nested ones included.
    pub fn statement_lines(&self) -> Vec<usize> {
        fn walk(stmts: &[MiniStmt], out: &mut Vec<usize>) {
            for s in stmts {
                match s {
                    MiniStmt::Assign { line, .. }
                    | MiniStmt::Declare { line, .. }
                    | MiniStmt::Eval { line, .. }
                    | MiniStmt::Return { line, .. } => out.push(*line),
                    MiniStmt::If { line, then, otherwise, .. } => {
                        out.push(*line);
                        walk(then, out);
                        walk(otherwise, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }
}
