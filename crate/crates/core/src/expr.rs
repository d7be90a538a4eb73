//! Tokens and expressions of the analyzed language's expression fragment.
//!
//! Guards and assignment right-hand sides are carried around as source
//! text; this module turns that text into [`Expr`] trees for the oracle,
//! the path-info collector and the reference constraint encoder.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokKind {
    Ident,
    Int,
    Dec,
    Str,
    Char,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    pub text: String,
    pub line: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("line {line}: unexpected character `{ch}`")]
    Lex { line: usize, ch: char },
    #[error("line {line}: unterminated literal")]
    Unterminated { line: usize },
    #[error("line {line}: expected {expected}, found `{found}`")]
    Syntax { line: usize, expected: String, found: String },
    #[error("line {line}: integer literal `{text}` out of range")]
    Range { line: usize, text: String },
}

const PUNCT: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "...", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=",
    "&=", "|=", "^=", "<<", ">>", "->", "::", "+", "-", "*", "/", "%", "<", ">", "=", "!", "~", "?", ":", ";", ",",
    ".", "(", ")", "[", "]", "{", "}", "&", "|", "^", "@",
];

/// Splits source text into tokens, skipping whitespace and comments.
/// Lines start at `first_line`.
pub fn lex(text: &str, first_line: usize) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = first_line;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            loop {
                if i + 1 >= chars.len() {
                    return Err(ExprError::Unterminated { line });
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    i += 2;
                    break;
                }
                if chars[i] == '\n' {
                    line += 1;
                }
                i += 1;
            }
            continue;
        }
        if c.is_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                i += 1;
            }
            out.push(Token { kind: TokKind::Ident, text: chars[start..i].iter().collect(), line });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            let mut dec = false;
            if c == '0' && matches!(chars.get(i + 1), Some('x') | Some('X')) {
                i += 2;
                while i < chars.len() && (chars[i].is_ascii_hexdigit() || chars[i] == '_') {
                    i += 1;
                }
            } else {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' && chars.get(i + 1).is_none_or(|d| d.is_ascii_digit() || !d.is_alphabetic()) {
                    dec = true;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && matches!(chars[i], 'e' | 'E') {
                    dec = true;
                    i += 1;
                    if i < chars.len() && matches!(chars[i], '+' | '-') {
                        i += 1;
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            if i < chars.len() && matches!(chars[i], 'f' | 'F' | 'd' | 'D') {
                dec = true;
                i += 1;
            } else if i < chars.len() && matches!(chars[i], 'l' | 'L') {
                i += 1;
            }
            let kind = if dec { TokKind::Dec } else { TokKind::Int };
            out.push(Token { kind, text: chars[start..i].iter().collect(), line });
            continue;
        }
        if c == '"' || c == '\'' {
            let start = i;
            i += 1;
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(ExprError::Unterminated { line }),
                    Some('\\') => i += 2,
                    Some(&q) if q == c => {
                        i += 1;
                        break;
                    }
                    Some(_) => i += 1,
                }
            }
            let kind = if c == '"' { TokKind::Str } else { TokKind::Char };
            out.push(Token { kind, text: chars[start..i].iter().collect(), line });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 4)].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                out.push(Token { kind: TokKind::Punct, text: p.to_string(), line });
                i += p.chars().count();
            }
            None => return Err(ExprError::Lex { line, ch: c }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Plus,
    Not,
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    BitAnd,
    BitOr,
    BitXor,
    Shl,
    Shr,
    UShr,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::BitAnd => "&",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::UShr => ">>>",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::BitOr => 3,
            BinOp::BitXor => 4,
            BinOp::BitAnd => 5,
            BinOp::Eq | BinOp::Ne => 6,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 7,
            BinOp::Shl | BinOp::Shr | BinOp::UShr => 8,
            BinOp::Add | BinOp::Sub => 9,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 10,
        }
    }

    fn from_token(text: &str) -> Option<BinOp> {
        Some(match text {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            "&" => BinOp::BitAnd,
            "|" => BinOp::BitOr,
            "^" => BinOp::BitXor,
            "<<" => BinOp::Shl,
            ">>" => BinOp::Shr,
            ">>>" => BinOp::UShr,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    /// Decimal literal without its type suffix.
    Dec(String),
    Bool(bool),
    Str(String),
    Char(String),
    Null,
    /// A variable or a dotted name such as `Integer.MIN_VALUE`.
    Name(Vec<String>),
    Call { target: Option<Box<Expr>>, name: String, args: Vec<Expr> },
    New { class: String, args: Vec<Expr> },
    Index(Box<Expr>, Box<Expr>),
    Field(Box<Expr>, String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
    Cast(String, Box<Expr>),
}

const PRIMITIVES: &[&str] = &["int", "long", "short", "byte", "char", "float", "double", "boolean"];

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Name(vec![name.to_string()])
    }

    /// The variable name when the expression is a plain local variable,
    /// looking through parentheses and casts.
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Expr::Name(parts) if parts.len() == 1 => Some(&parts[0]),
            Expr::Cast(_, inner) => inner.as_var(),
            _ => None,
        }
    }

    /// Local variables read by the expression, in first-occurrence order.
    /// Dotted names contribute their first segment unless it looks like a
    /// class name.
    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        let mut push = |s: &str| {
            if !out.iter().any(|o| o == s) {
                out.push(s.to_string());
            }
        };
        match self {
            Expr::Name(parts) => {
                let head = &parts[0];
                if parts.len() == 1 || !head.starts_with(char::is_uppercase) {
                    push(head);
                }
            }
            Expr::Call { target, args, .. } => {
                match target.as_deref() {
                    Some(Expr::Name(p)) if p[0].starts_with(char::is_uppercase) => {}
                    Some(t) => t.collect_vars(out),
                    None => {}
                }
                for a in args {
                    a.collect_vars(out);
                }
            }
            Expr::New { args, .. } => {
                for a in args {
                    a.collect_vars(out);
                }
            }
            Expr::Index(a, b) | Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Field(a, _) | Expr::Unary(_, a) | Expr::Cast(_, a) => a.collect_vars(out),
            Expr::Cond(a, b, c) => {
                a.collect_vars(out);
                b.collect_vars(out);
                c.collect_vars(out);
            }
            Expr::Int(_) | Expr::Dec(_) | Expr::Bool(_) | Expr::Str(_) | Expr::Char(_) | Expr::Null => {}
        }
    }

    pub fn has_decimal(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Dec(_)));
        found
    }

    /// Pre-order traversal.
    pub fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Call { target, args, .. } => {
                if let Some(t) = target {
                    t.visit(f);
                }
                for a in args {
                    a.visit(f);
                }
            }
            Expr::New { args, .. } => {
                for a in args {
                    a.visit(f);
                }
            }
            Expr::Index(a, b) | Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Field(a, _) | Expr::Unary(_, a) | Expr::Cast(_, a) => a.visit(f),
            Expr::Cond(a, b, c) => {
                a.visit(f);
                b.visit(f);
                c.visit(f);
            }
            _ => {}
        }
    }

    /// `Math.abs(e)` and friends, returning the argument.
    pub fn abs_arg(&self) -> Option<&Expr> {
        match self {
            Expr::Call { target, name, args } if name == "abs" && args.len() == 1 => match target.as_deref() {
                None => Some(&args[0]),
                Some(Expr::Name(p)) if p.len() == 1 && (p[0] == "Math" || p[0] == "StrictMath") => Some(&args[0]),
                _ => None,
            },
            _ => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(n) => write!(f, "{n}"),
            Expr::Dec(s) | Expr::Str(s) | Expr::Char(s) => f.write_str(s),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Null => f.write_str("null"),
            Expr::Name(parts) => f.write_str(&parts.join(".")),
            Expr::Call { target, name, args } => {
                if let Some(t) = target {
                    write!(f, "{t}.")?;
                }
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::New { class, args } => {
                write!(f, "new {class}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Index(a, b) => write!(f, "{a}[{b}]"),
            Expr::Field(a, name) => write!(f, "{a}.{name}"),
            Expr::Unary(op, a) => {
                let s = match op {
                    UnOp::Neg => "-",
                    UnOp::Plus => "+",
                    UnOp::Not => "!",
                    UnOp::BitNot => "~",
                };
                write!(f, "{s}{a}")
            }
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Cond(c, a, b) => write!(f, "({c} ? {a} : {b})"),
            Expr::Cast(t, a) => write!(f, "(({t}) {a})"),
        }
    }
}

/// Parses one complete expression.
pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    let tokens = lex(text, 1)?;
    let mut p = TokenStream::new(&tokens);
    let e = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(ExprError::Syntax { line: t.line, expected: "end of expression".into(), found: t.text.clone() });
    }
    Ok(e)
}

/// Cursor over a token slice with an expression parser on top.
pub struct TokenStream<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> TokenStream<'a> {
    pub fn new(tokens: &'a [Token]) -> Self {
        TokenStream { tokens, pos: 0 }
    }

    pub fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    pub fn peek_at(&self, ahead: usize) -> Option<&'a Token> {
        self.tokens.get(self.pos + ahead)
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn reset(&mut self, pos: usize) {
        self.pos = pos;
    }

    pub fn is_at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text && t.kind != TokKind::Str)
    }

    pub fn next_token(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos)?;
        self.pos += 1;
        Some(t)
    }

    /// Line of the next token, or of the last one at end of input.
    pub fn line(&self) -> usize {
        self.peek().or_else(|| self.tokens.last()).map_or(0, |t| t.line)
    }

    pub fn error(&self, expected: &str) -> ExprError {
        ExprError::Syntax {
            line: self.line(),
            expected: expected.to_string(),
            found: self.peek().map_or_else(|| "end of input".to_string(), |t| t.text.clone()),
        }
    }

    pub fn eat(&mut self, text: &str) -> bool {
        if self.is_at(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, text: &str) -> Result<&'a Token, ExprError> {
        if self.is_at(text) {
            Ok(self.next_token().expect("peeked"))
        } else {
            Err(self.error(&format!("`{text}`")))
        }
    }

    pub fn ident(&mut self) -> Result<&'a Token, ExprError> {
        match self.peek() {
            Some(t) if t.kind == TokKind::Ident => {
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.error("identifier")),
        }
    }

    pub fn expr(&mut self) -> Result<Expr, ExprError> {
        let cond = self.binary(1)?;
        if self.eat("?") {
            let a = self.expr()?;
            self.expect(":")?;
            let b = self.expr()?;
            return Ok(Expr::Cond(Box::new(cond), Box::new(a), Box::new(b)));
        }
        Ok(cond)
    }

    fn binary(&mut self, min: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let Some(t) = self.peek() else { break };
            if t.kind != TokKind::Punct {
                break;
            }
            let Some(op) = BinOp::from_token(&t.text) else { break };
            let prec = op.precedence();
            if prec < min {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        let op = match self.peek().map(|t| (t.kind.clone(), t.text.as_str())) {
            Some((TokKind::Punct, "-")) => Some(UnOp::Neg),
            Some((TokKind::Punct, "+")) => Some(UnOp::Plus),
            Some((TokKind::Punct, "!")) => Some(UnOp::Not),
            Some((TokKind::Punct, "~")) => Some(UnOp::BitNot),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let inner = self.unary()?;
            if op == UnOp::Neg {
                if let Expr::Int(n) = inner {
                    return Ok(Expr::Int(-n));
                }
            }
            return Ok(Expr::Unary(op, Box::new(inner)));
        }
        if self.is_at("(") {
            if let (Some(ty), Some(close)) = (self.peek_at(1), self.peek_at(2)) {
                if ty.kind == TokKind::Ident && PRIMITIVES.contains(&ty.text.as_str()) && close.text == ")" {
                    self.pos += 3;
                    let inner = self.unary()?;
                    return Ok(Expr::Cast(ty.text.clone(), Box::new(inner)));
                }
            }
        }
        self.postfix()
    }

    fn args(&mut self) -> Result<Vec<Expr>, ExprError> {
        self.expect("(")?;
        let mut args = Vec::new();
        if self.eat(")") {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(")") {
                return Ok(args);
            }
            self.expect(",")?;
        }
    }

    fn postfix(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.primary()?;
        loop {
            if self.is_at(".") {
                self.pos += 1;
                let name = self.ident()?.text.clone();
                if self.is_at("(") {
                    let args = self.args()?;
                    e = Expr::Call { target: Some(Box::new(e)), name, args };
                } else {
                    e = match e {
                        Expr::Name(mut parts) => {
                            parts.push(name);
                            Expr::Name(parts)
                        }
                        other => Expr::Field(Box::new(other), name),
                    };
                }
            } else if self.is_at("[") {
                self.pos += 1;
                let idx = self.expr()?;
                self.expect("]")?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let Some(t) = self.peek() else {
            return Err(self.error("expression"));
        };
        match t.kind {
            TokKind::Int => {
                self.pos += 1;
                parse_int(&t.text).map(Expr::Int).ok_or_else(|| ExprError::Range { line: t.line, text: t.text.clone() })
            }
            TokKind::Dec => {
                self.pos += 1;
                Ok(Expr::Dec(t.text.trim_end_matches(['f', 'F', 'd', 'D']).replace('_', "")))
            }
            TokKind::Str => {
                self.pos += 1;
                Ok(Expr::Str(t.text.clone()))
            }
            TokKind::Char => {
                self.pos += 1;
                Ok(Expr::Char(t.text.clone()))
            }
            TokKind::Ident => {
                self.pos += 1;
                match t.text.as_str() {
                    "true" => return Ok(Expr::Bool(true)),
                    "false" => return Ok(Expr::Bool(false)),
                    "null" => return Ok(Expr::Null),
                    "new" => {
                        let mut class = self.ident()?.text.clone();
                        while self.eat(".") {
                            class.push('.');
                            class.push_str(&self.ident()?.text);
                        }
                        let args = self.args()?;
                        return Ok(Expr::New { class, args });
                    }
                    _ => {}
                }
                if self.is_at("(") {
                    let args = self.args()?;
                    return Ok(Expr::Call { target: None, name: t.text.clone(), args });
                }
                Ok(Expr::Name(vec![t.text.clone()]))
            }
            TokKind::Punct if t.text == "(" => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            TokKind::Punct => Err(self.error("expression")),
        }
    }
}

fn parse_int(text: &str) -> Option<i64> {
    let t = text.trim_end_matches(['l', 'L']).replace('_', "");
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        return i64::from_str_radix(hex, 16).ok();
    }
    t.parse().ok()
}
