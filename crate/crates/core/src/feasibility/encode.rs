//! Reference encoding of path information as SMT-LIB constraints.
//!
//! Every write creates a new version of a variable, named
//! `{var}_{frame}_{version}`; reads before any write in a frame use version
//! 0 and are unconstrained. Absolute value is encoded with `abs`; other
//! calls, array elements, divisions and non-linear products become fresh
//! constants. Fields and globals share one fresh constant per name.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::expr::{parse_expr, BinOp, Expr, UnOp};
use crate::paths::{PathInfo, Step};

/// Lines the harness puts before the constraints.
pub const SKELETON_HEAD: &str = "(set-option :produce-models true)";
/// Lines the harness puts after the constraints.
pub const SKELETON_TAIL: &str = "(check-sat)\n(get-model)";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("cannot parse `{text}`: {message}")]
    Parse { text: String, message: String },
    #[error("`{0}` is used both as a number and as a condition")]
    SortClash(String),
    #[error("unsupported literal `{0}`")]
    Literal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sort {
    Bool,
    Num,
}

struct Encoder {
    real: bool,
    /// Output lines in order.
    asserts: Vec<String>,
    /// Current version and sort of each (frame, variable).
    current: HashMap<(usize, String), (usize, Sort)>,
    next: HashMap<(usize, String), usize>,
    globals: BTreeMap<String, (String, Sort)>,
    fresh: usize,
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

impl Encoder {
    fn sort_name(&self, s: Sort) -> &'static str {
        match (s, self.real) {
            (Sort::Bool, _) => "Bool",
            (Sort::Num, false) => "Int",
            (Sort::Num, true) => "Real",
        }
    }

    fn declare(&mut self, name: &str, s: Sort) {
        let line = format!("(declare-const {name} {})", self.sort_name(s));
        self.asserts.push(line);
    }

    fn num(&self, v: i64) -> String {
        let body = if self.real { format!("{}.0", v.unsigned_abs()) } else { v.unsigned_abs().to_string() };
        if v < 0 {
            format!("(- {body})")
        } else {
            body
        }
    }

    fn fresh(&mut self, label: &str, s: Sort) -> String {
        self.fresh += 1;
        let name = format!("{label}!{}", self.fresh);
        self.declare(&name, s);
        name
    }

    fn write(&mut self, frame: usize, var: &str, s: Sort) -> String {
        let key = (frame, var.to_string());
        let v = self.next.get(&key).copied().unwrap_or(1);
        self.next.insert(key.clone(), v + 1);
        self.current.insert(key, (v, s));
        let name = format!("{}_{frame}_{v}", sanitize(var));
        self.declare(&name, s);
        name
    }

    fn read(&mut self, frame: usize, var: &str, s: Sort) -> Result<String, EncodeError> {
        let key = (frame, var.to_string());
        match self.current.get(&key) {
            Some((v, have)) if *have == s => Ok(format!("{}_{frame}_{v}", sanitize(var))),
            Some(_) => Err(EncodeError::SortClash(var.to_string())),
            None => {
                self.current.insert(key, (0, s));
                let name = format!("{}_{frame}_0", sanitize(var));
                self.declare(&name, s);
                Ok(name)
            }
        }
    }

    fn global(&mut self, text: &str, s: Sort) -> Result<String, EncodeError> {
        if let Some((name, have)) = self.globals.get(text) {
            return if *have == s { Ok(name.clone()) } else { Err(EncodeError::SortClash(text.to_string())) };
        }
        let name = format!("g!{}", sanitize(text));
        self.declare(&name, s);
        self.globals.insert(text.to_string(), (name.clone(), s));
        Ok(name)
    }

    fn decimal(&self, text: &str) -> Result<String, EncodeError> {
        let ok = !text.is_empty() && text.chars().all(|c| c.is_ascii_digit() || c == '.') && text.matches('.').count() <= 1;
        if !ok {
            return Err(EncodeError::Literal(text.to_string()));
        }
        let t = if text.starts_with('.') { format!("0{text}") } else { text.to_string() };
        let t = if t.ends_with('.') { format!("{t}0") } else { t };
        Ok(if t.contains('.') { t } else { format!("{t}.0") })
    }

    fn term(&mut self, frame: usize, e: &Expr, s: Sort) -> Result<String, EncodeError> {
        let want = |got: Sort| if got == s { Ok(()) } else { Err(EncodeError::SortClash(e.to_string())) };
        Ok(match e {
            Expr::Int(i) => {
                want(Sort::Num)?;
                self.num(*i)
            }
            Expr::Dec(d) => {
                want(Sort::Num)?;
                self.decimal(d)?
            }
            Expr::Bool(b) => {
                want(Sort::Bool)?;
                b.to_string()
            }
            Expr::Null => self.global("null", s)?,
            Expr::Str(t) | Expr::Char(t) => self.global(&format!("literal {t}"), s)?,
            Expr::Name(parts) if parts.len() == 1 => self.read(frame, &parts[0], s)?,
            Expr::Name(parts) => match (parts[0].as_str(), parts[parts.len() - 1].as_str()) {
                ("Integer", "MIN_VALUE") => self.num(i32::MIN as i64),
                ("Integer", "MAX_VALUE") => self.num(i32::MAX as i64),
                ("Long", "MIN_VALUE") => self.num(i64::MIN),
                ("Long", "MAX_VALUE") => self.num(i64::MAX),
                _ => self.global(&parts.join("."), s)?,
            },
            Expr::Field(..) => self.global(&e.to_string(), s)?,
            Expr::Index(..) | Expr::New { .. } => self.fresh("element", s),
            Expr::Call { .. } => match e.abs_arg() {
                Some(arg) => {
                    want(Sort::Num)?;
                    format!("(abs {})", self.term(frame, arg, Sort::Num)?)
                }
                None => self.fresh("call", s),
            },
            Expr::Cast(t, inner) if t == "boolean" => self.term(frame, inner, s)?,
            Expr::Cast(_, inner) => self.term(frame, inner, s)?,
            Expr::Unary(UnOp::Neg, inner) => {
                want(Sort::Num)?;
                format!("(- {})", self.term(frame, inner, Sort::Num)?)
            }
            Expr::Unary(UnOp::Plus, inner) => self.term(frame, inner, s)?,
            Expr::Unary(UnOp::Not, inner) => {
                want(Sort::Bool)?;
                format!("(not {})", self.term(frame, inner, Sort::Bool)?)
            }
            Expr::Unary(UnOp::BitNot, _) => self.fresh("bits", s),
            Expr::Cond(c, a, b) => {
                let c = self.term(frame, c, Sort::Bool)?;
                let a = self.term(frame, a, s)?;
                let b = self.term(frame, b, s)?;
                format!("(ite {c} {a} {b})")
            }
            Expr::Binary(op, l, r) if op.is_logical() => {
                want(Sort::Bool)?;
                let a = self.term(frame, l, Sort::Bool)?;
                let b = self.term(frame, r, Sort::Bool)?;
                format!("({} {a} {b})", if *op == BinOp::And { "and" } else { "or" })
            }
            Expr::Binary(op @ (BinOp::Eq | BinOp::Ne), l, r) => {
                want(Sort::Bool)?;
                let side = if boolean_shaped(l) || boolean_shaped(r) { Sort::Bool } else { Sort::Num };
                let a = self.term(frame, l, side)?;
                let b = self.term(frame, r, side)?;
                if *op == BinOp::Eq {
                    format!("(= {a} {b})")
                } else {
                    format!("(not (= {a} {b}))")
                }
            }
            Expr::Binary(op, l, r) if op.is_comparison() => {
                want(Sort::Bool)?;
                let a = self.term(frame, l, Sort::Num)?;
                let b = self.term(frame, r, Sort::Num)?;
                format!("({} {a} {b})", op.symbol())
            }
            Expr::Binary(op @ (BinOp::Add | BinOp::Sub), l, r) => {
                want(Sort::Num)?;
                let a = self.term(frame, l, Sort::Num)?;
                let b = self.term(frame, r, Sort::Num)?;
                format!("({} {a} {b})", op.symbol())
            }
            Expr::Binary(BinOp::Mul, l, r) if is_literal(l) || is_literal(r) => {
                want(Sort::Num)?;
                let a = self.term(frame, l, Sort::Num)?;
                let b = self.term(frame, r, Sort::Num)?;
                format!("(* {a} {b})")
            }
            Expr::Binary(op @ (BinOp::Div | BinOp::Rem), l, r) => {
                want(Sort::Num)?;
                let _ = self.term(frame, l, Sort::Num)?;
                let d = self.term(frame, r, Sort::Num)?;
                // the path continues past the division only with a non-zero divisor
                self.asserts.push(format!("(assert (not (= {d} {})))", self.num(0)));
                self.fresh(if *op == BinOp::Div { "quot" } else { "rem" }, Sort::Num)
            }
            Expr::Binary(..) => {
                want(Sort::Num)?;
                self.fresh("arith", Sort::Num)
            }
        })
    }

    fn step(&mut self, step: &Step) -> Result<(), EncodeError> {
        match step {
            Step::Source { var, frame, assume, .. } => {
                self.write(*frame, var, Sort::Num);
                if let Some(a) = assume {
                    let t = self.term(*frame, &parse(a)?, Sort::Bool)?;
                    self.asserts.push(format!("(assert {t})"));
                }
            }
            Step::Assign { lhs, rhs, frame, .. } => {
                let e = parse(rhs)?;
                let s = if boolean_shaped(&e) { Sort::Bool } else { Sort::Num };
                let t = self.term(*frame, &e, s)?;
                let v = self.write(*frame, lhs, s);
                self.asserts.push(format!("(assert (= {v} {t}))"));
            }
            Step::Havoc { var, frame, .. } => {
                let s = self.current.get(&(*frame, var.clone())).map_or(Sort::Num, |(_, s)| *s);
                self.write(*frame, var, s);
            }
            Step::Bind { arg: value, param: into, from, to, .. } | Step::Return { expr: value, out: into, from, to, .. } => {
                let e = parse(value)?;
                let s = if boolean_shaped(&e) { Sort::Bool } else { Sort::Num };
                let t = self.term(*from, &e, s)?;
                let v = self.write(*to, into, s);
                self.asserts.push(format!("(assert (= {v} {t}))"));
            }
            Step::Guard { cond, taken, frame, line } => {
                let t = self.term(*frame, &parse(cond)?, Sort::Bool)?;
                let body = if *taken { t } else { format!("(not {t})") };
                self.asserts.push(format!("; line {line}"));
                self.asserts.push(format!("(assert {body})"));
            }
            Step::Sink { .. } => {}
        }
        Ok(())
    }
}

fn parse(text: &str) -> Result<Expr, EncodeError> {
    parse_expr(text).map_err(|e| EncodeError::Parse { text: text.to_string(), message: e.to_string() })
}

fn is_literal(e: &Expr) -> bool {
    match e {
        Expr::Int(_) | Expr::Dec(_) => true,
        Expr::Unary(UnOp::Neg | UnOp::Plus, inner) => is_literal(inner),
        _ => false,
    }
}

fn boolean_shaped(e: &Expr) -> bool {
    match e {
        Expr::Bool(_) | Expr::Unary(UnOp::Not, _) => true,
        Expr::Binary(op, ..) => op.is_comparison() || op.is_logical(),
        _ => false,
    }
}

fn step_exprs(step: &Step) -> Vec<&str> {
    match step {
        Step::Source { assume, .. } => assume.iter().map(String::as_str).collect(),
        Step::Assign { rhs, .. } => vec![rhs],
        Step::Bind { arg, .. } => vec![arg],
        Step::Return { expr, .. } => vec![expr],
        Step::Guard { cond, .. } => vec![cond],
        Step::Havoc { .. } | Step::Sink { .. } => vec![],
    }
}

/// Declarations and assertions for `info`, without the skeleton lines.
pub fn encode_path(info: &PathInfo) -> Result<String, EncodeError> {
    let mut real = false;
    for step in &info.steps {
        for text in step_exprs(step) {
            real |= parse(text)?.has_decimal();
        }
    }
    let mut enc = Encoder {
        real,
        asserts: Vec::new(),
        current: HashMap::new(),
        next: HashMap::new(),
        globals: BTreeMap::new(),
        fresh: 0,
    };
    for step in &info.steps {
        enc.step(step)?;
    }
    let mut out = String::new();
    for line in &enc.asserts {
        let _ = writeln!(out, "{line}");
    }
    Ok(out)
}

/// The full prover input for a constraint body.
pub fn with_skeleton(body: &str) -> String {
    let mut out = String::from(SKELETON_HEAD);
    out.push('\n');
    out.push_str(body);
    if !body.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(SKELETON_TAIL);
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::smt::run_script;

    fn status(info: &PathInfo) -> String {
        let body = encode_path(info).unwrap();
        run_script(&with_skeleton(&body)).lines().next().unwrap_or("").to_string()
    }

    fn guarded(taken: bool) -> PathInfo {
        PathInfo {
            frames: vec!["run".into(), "scale".into()],
            steps: vec![
                Step::Source { var: "x".into(), line: 9, frame: 0, assume: Some("x == 0".into()) },
                Step::Assign { lhs: "z".into(), rhs: "x".into(), line: 12, frame: 0 },
                Step::Bind { arg: "z".into(), param: "b".into(), line: 13, from: 0, to: 1 },
                Step::Guard { cond: "Math.abs(b) > 1".into(), taken, line: 3, frame: 1 },
                Step::Sink { var: "b".into(), line: 4, frame: 1 },
            ],
        }
    }

    #[test]
    fn empty_path_is_satisfiable() {
        assert_eq!(encode_path(&PathInfo::default()).unwrap(), "");
        assert_eq!(status(&PathInfo::default()), "sat");
    }

    #[test]
    fn abs_guard_with_zero_binding() {
        let body = encode_path(&guarded(true)).unwrap();
        assert!(body.contains("(declare-const b_1_1 Int)"));
        assert!(body.contains("(assert (= b_1_1 z_0_1))"));
        assert!(body.contains("(assert (> (abs b_1_1) 1))"));
        assert_eq!(status(&guarded(true)), "unsat");
        assert_eq!(status(&guarded(false)), "sat");
    }

    #[test]
    fn versions_globals_and_calls() {
        let info = PathInfo {
            frames: vec!["f".into()],
            steps: vec![
                Step::Assign { lhs: "a".into(), rhs: "a + 1".into(), line: 2, frame: 0 },
                Step::Guard { cond: "a > Config.LIMIT && check(a)".into(), taken: true, line: 3, frame: 0 },
                Step::Guard { cond: "Config.LIMIT < 0".into(), taken: true, line: 4, frame: 0 },
            ],
        };
        let body = encode_path(&info).unwrap();
        assert!(body.contains("(assert (= a_0_1 (+ a_0_0 1)))"));
        assert_eq!(body.matches("(declare-const g!Config_LIMIT Int)").count(), 1);
        assert!(body.contains("(declare-const call!1 Bool)"));
        assert_eq!(status(&info), "sat");
    }

    #[test]
    fn decimals_switch_to_reals() {
        let info = PathInfo {
            frames: vec!["f".into()],
            steps: vec![
                Step::Source { var: "data".into(), line: 1, frame: 0, assume: Some("data == 0".into()) },
                Step::Guard { cond: "Math.abs(data) > 0.000001".into(), taken: true, line: 2, frame: 0 },
            ],
        };
        let body = encode_path(&info).unwrap();
        assert!(body.contains("(declare-const data_0_1 Real)"));
        assert!(body.contains("(= data_0_1 0.0)"));
        assert_eq!(status(&info), "unsat");
    }

    #[test]
    fn division_requires_nonzero_divisor() {
        let info = PathInfo {
            frames: vec!["f".into()],
            steps: vec![
                Step::Source { var: "x".into(), line: 1, frame: 0, assume: Some("x == 0".into()) },
                Step::Assign { lhs: "r".into(), rhs: "10 / x".into(), line: 2, frame: 0 },
            ],
        };
        assert_eq!(status(&info), "unsat");
    }

    #[test]
    fn boolean_clash_is_reported() {
        let info = PathInfo {
            frames: vec!["f".into()],
            steps: vec![
                Step::Assign { lhs: "p".into(), rhs: "a > 1".into(), line: 1, frame: 0 },
                Step::Guard { cond: "p + 1 > 2".into(), taken: true, line: 2, frame: 0 },
            ],
        };
        assert!(matches!(encode_path(&info), Err(EncodeError::SortClash(_))));
    }
}
