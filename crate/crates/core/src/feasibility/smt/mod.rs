//! A small SMT-LIB 2 interpreter for quantifier-free linear integer and
//! real arithmetic with booleans.
//!
//! Supported commands: `set-logic`, `set-option`, `set-info`,
//! `declare-const`, nullary `declare-fun` and `define-fun`, `assert`,
//! `push`, `pop`, `check-sat`, `get-model`, `echo` and `exit`. Errors are
//! printed in the usual `(error "line L column C: ...")` form and the
//! interpreter continues with the next command.

mod arith;
mod reader;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use arith::{solve, ArithResult, Lin, Rel, Q};
use reader::{read_all, Pos};
pub use reader::{read_all as read_sexps, ReadError, Sexp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Bool,
    Int,
    Real,
}

impl Sort {
    fn name(self) -> &'static str {
        match self {
            Sort::Bool => "Bool",
            Sort::Int => "Int",
            Sort::Real => "Real",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Term {
    Num(Q, Sort),
    BoolLit(bool),
    Var(String, Sort),
    App(String, Vec<Term>, Sort),
}

impl Term {
    fn sort(&self) -> Sort {
        match self {
            Term::Num(_, s) | Term::Var(_, s) | Term::App(_, _, s) => *s,
            Term::BoolLit(_) => Sort::Bool,
        }
    }
}

struct Error {
    pos: Pos,
    message: String,
}

fn err<T>(pos: Pos, message: impl Into<String>) -> Result<T, Error> {
    Err(Error { pos, message: message.into() })
}

/// Boolean structure in negation normal form over arithmetic atoms.
#[derive(Debug, Clone)]
enum F {
    True,
    False,
    /// `lin rel 0`, or `lin != 0` when `ne` is set.
    Atom(Lin, Rel, bool),
    BVar(String, bool),
    /// An atom outside linear arithmetic.
    Opaque,
    And(Vec<F>),
    Or(Vec<F>),
}

#[derive(Default)]
struct Interp {
    consts: BTreeMap<String, Sort>,
    defs: BTreeMap<String, Term>,
    /// Declaration order for model printing.
    order: Vec<String>,
    assertions: Vec<Term>,
    scopes: Vec<(usize, Vec<String>)>,
    last: Option<Outcome>,
    fresh: usize,
    /// Integer auxiliaries introduced for `div` and `mod`.
    aux_ints: BTreeSet<String>,
    out: String,
}

#[derive(Debug, Clone)]
enum Outcome {
    Sat(BTreeMap<String, Q>, BTreeMap<String, bool>),
    Unsat,
    Unknown(String),
}

const ARITH_OPS: &[&str] = &["+", "-", "*", "/", "div", "mod", "abs", "to_real", "to_int"];
const CMP_OPS: &[&str] = &["<", "<=", ">", ">="];
const MAX_BRANCHES: usize = 20_000;

impl Interp {
    fn error(&mut self, e: Error) {
        let _ = writeln!(self.out, "(error \"line {} column {}: {}\")", e.pos.line, e.pos.col, e.message.replace('"', "'"));
    }

    fn sort_of(&self, s: &Sexp) -> Result<Sort, Error> {
        match s.atom() {
            Some("Int") => Ok(Sort::Int),
            Some("Real") => Ok(Sort::Real),
            Some("Bool") => Ok(Sort::Bool),
            Some(other) => err(s.pos(), format!("unknown sort '{other}'")),
            None => err(s.pos(), "unsupported sort"),
        }
    }

    fn declare(&mut self, name: &str, sort: Sort, pos: Pos) -> Result<(), Error> {
        if self.consts.contains_key(name) || self.defs.contains_key(name) {
            return err(pos, format!("invalid declaration, constant '{name}' (with the given signature) already declared"));
        }
        self.consts.insert(name.to_string(), sort);
        self.order.push(name.to_string());
        if let Some((_, names)) = self.scopes.last_mut() {
            names.push(name.to_string());
        }
        Ok(())
    }

    fn command(&mut self, cmd: &Sexp) -> Result<bool, Error> {
        let Sexp::List(items, pos) = cmd else {
            return err(cmd.pos(), "invalid command, '(' expected");
        };
        let pos = *pos;
        let Some(head) = items.first().and_then(Sexp::atom) else {
            return err(pos, "invalid command, symbol expected");
        };
        match head {
            "set-logic" | "set-option" | "set-info" => {}
            "declare-const" => {
                let [_, name, sort] = items.as_slice() else {
                    return err(pos, "invalid declaration, expected name and sort");
                };
                let n = name.atom().ok_or(Error { pos: name.pos(), message: "invalid constant name".into() })?;
                let s = self.sort_of(sort)?;
                self.declare(n, s, name.pos())?;
            }
            "declare-fun" => {
                let [_, name, args, sort] = items.as_slice() else {
                    return err(pos, "invalid function declaration");
                };
                let n = name.atom().ok_or(Error { pos: name.pos(), message: "invalid function name".into() })?;
                if !matches!(args, Sexp::List(a, _) if a.is_empty()) {
                    return err(args.pos(), format!("unsupported: function '{n}' with arguments"));
                }
                let s = self.sort_of(sort)?;
                self.declare(n, s, name.pos())?;
            }
            "define-fun" => {
                let [_, name, args, sort, body] = items.as_slice() else {
                    return err(pos, "invalid function definition");
                };
                let n = name.atom().ok_or(Error { pos: name.pos(), message: "invalid function name".into() })?;
                if !matches!(args, Sexp::List(a, _) if a.is_empty()) {
                    return err(args.pos(), format!("unsupported: function '{n}' with arguments"));
                }
                let s = self.sort_of(sort)?;
                let t = self.term(body)?;
                let t = coerce(t, s, body.pos())?;
                if self.consts.contains_key(n) || self.defs.contains_key(n) {
                    return err(name.pos(), format!("invalid declaration, function '{n}' already declared"));
                }
                self.defs.insert(n.to_string(), t);
                if let Some((_, names)) = self.scopes.last_mut() {
                    names.push(n.to_string());
                }
            }
            "assert" => {
                let [_, body] = items.as_slice() else {
                    return err(pos, "invalid assert command, expected one term");
                };
                let t = self.term(body)?;
                if t.sort() != Sort::Bool {
                    return err(body.pos(), "invalid assertion, expression must have Bool sort");
                }
                self.assertions.push(t);
            }
            "push" => {
                let n = count_arg(items, pos)?;
                for _ in 0..n {
                    self.scopes.push((self.assertions.len(), Vec::new()));
                }
            }
            "pop" => {
                let n = count_arg(items, pos)?;
                for _ in 0..n {
                    let Some((len, names)) = self.scopes.pop() else {
                        return err(pos, "pop: not enough scopes");
                    };
                    self.assertions.truncate(len);
                    for name in names {
                        self.consts.remove(&name);
                        self.defs.remove(&name);
                        self.order.retain(|o| *o != name);
                    }
                }
            }
            "check-sat" => {
                let outcome = self.check();
                let word = match &outcome {
                    Outcome::Sat(..) => "sat",
                    Outcome::Unsat => "unsat",
                    Outcome::Unknown(why) => {
                        log::debug!("check-sat unknown: {why}");
                        "unknown"
                    }
                };
                self.out.push_str(word);
                self.out.push('\n');
                self.last = Some(outcome);
            }
            "get-model" => match self.last.clone() {
                Some(Outcome::Sat(nums, bools)) => self.print_model(&nums, &bools),
                _ => return err(pos, "model is not available"),
            },
            "echo" => {
                if let Some(Sexp::Str(s, _)) = items.get(1) {
                    self.out.push_str(s);
                    self.out.push('\n');
                }
            }
            "exit" => return Ok(false),
            other => return err(pos, format!("unsupported command '{other}'")),
        }
        Ok(true)
    }

    fn print_model(&mut self, nums: &BTreeMap<String, Q>, bools: &BTreeMap<String, bool>) {
        let mut text = String::from("(\n");
        for name in &self.order {
            let sort = self.consts[name];
            let value = match sort {
                Sort::Bool => bools.get(name).copied().unwrap_or(false).to_string(),
                Sort::Int | Sort::Real => render_num(&nums.get(name).cloned().unwrap_or_else(Q::zero), sort),
            };
            let _ = writeln!(text, "  (define-fun {name} () {}\n    {value})", sort.name());
        }
        text.push_str(")\n");
        self.out.push_str(&text);
    }

    fn term(&mut self, s: &Sexp) -> Result<Term, Error> {
        match s {
            Sexp::Str(_, p) => err(*p, "string literals are not supported"),
            Sexp::Atom(a, p) => self.atom_term(a, *p),
            Sexp::List(items, p) => {
                let Some(head) = items.first() else { return err(*p, "invalid empty application") };
                let Some(op) = head.atom() else { return err(head.pos(), "invalid function application") };
                if op == "let" {
                    return self.let_term(items, *p);
                }
                let args = items[1..].iter().map(|a| self.term(a)).collect::<Result<Vec<_>, _>>()?;
                self.apply(op, args, head.pos())
            }
        }
    }

    fn let_term(&mut self, items: &[Sexp], p: Pos) -> Result<Term, Error> {
        let [_, Sexp::List(binds, _), body] = items else { return err(p, "invalid let") };
        let mut saved = Vec::new();
        for b in binds {
            let Sexp::List(pair, bp) = b else { return err(b.pos(), "invalid let binding") };
            let [name, value] = pair.as_slice() else { return err(*bp, "invalid let binding") };
            let n = name.atom().ok_or(Error { pos: name.pos(), message: "invalid let binding".into() })?;
            let t = self.term(value)?;
            saved.push((n.to_string(), t));
        }
        let mut previous = Vec::new();
        for (n, t) in saved {
            previous.push((n.clone(), self.defs.insert(n, t)));
        }
        let out = self.term(body);
        for (n, old) in previous.into_iter().rev() {
            match old {
                Some(t) => self.defs.insert(n, t),
                None => self.defs.remove(&n),
            };
        }
        out
    }

    fn atom_term(&self, a: &str, p: Pos) -> Result<Term, Error> {
        if a == "true" {
            return Ok(Term::BoolLit(true));
        }
        if a == "false" {
            return Ok(Term::BoolLit(false));
        }
        if a.chars().next().is_some_and(|c| c.is_ascii_digit()) {
            return parse_numeral(a).ok_or(Error { pos: p, message: format!("invalid numeral '{a}'") });
        }
        if let Some(t) = self.defs.get(a) {
            return Ok(t.clone());
        }
        match self.consts.get(a) {
            Some(s) => Ok(Term::Var(a.to_string(), *s)),
            None => err(p, format!("unknown constant {a}")),
        }
    }

    fn apply(&mut self, op: &str, args: Vec<Term>, p: Pos) -> Result<Term, Error> {
        let sorts: Vec<Sort> = args.iter().map(Term::sort).collect();
        let all = |s: Sort| sorts.iter().all(|x| *x == s);
        let numeric = sorts.iter().all(|s| matches!(s, Sort::Int | Sort::Real));
        let arity_min = |n: usize| if args.len() < n { err(p, format!("invalid number of arguments to '{op}'")) } else { Ok(()) };
        match op {
            "and" | "or" | "xor" | "=>" | "not" => {
                if !all(Sort::Bool) {
                    return err(p, format!("invalid function application '{op}', arguments must be Bool"));
                }
                if op == "not" && args.len() != 1 {
                    return err(p, "invalid number of arguments to 'not'");
                }
                if op == "=>" || op == "xor" {
                    arity_min(2)?;
                }
                Ok(Term::App(op.to_string(), args, Sort::Bool))
            }
            "=" | "distinct" => {
                arity_min(2)?;
                if all(Sort::Bool) {
                    Ok(Term::App(op.to_string(), args, Sort::Bool))
                } else if numeric {
                    Ok(Term::App(op.to_string(), unify(args), Sort::Bool))
                } else {
                    err(p, format!("Sorts {} and {} are incompatible", sorts[0].name(), sorts[1].name()))
                }
            }
            "ite" => {
                let [c, a, b] = <[Term; 3]>::try_from(args).map_err(|_| Error { pos: p, message: "invalid number of arguments to 'ite'".into() })?;
                if c.sort() != Sort::Bool {
                    return err(p, "invalid ite, condition must be Bool");
                }
                let (a, b, s) = match (a.sort(), b.sort()) {
                    (x, y) if x == y => {
                        let s = x;
                        (a, b, s)
                    }
                    (Sort::Int | Sort::Real, Sort::Int | Sort::Real) => {
                        let v = unify(vec![a, b]);
                        let [a, b] = <[Term; 2]>::try_from(v).expect("two terms");
                        (a, b, Sort::Real)
                    }
                    (x, y) => return err(p, format!("Sorts {} and {} are incompatible", x.name(), y.name())),
                };
                Ok(Term::App("ite".into(), vec![c, a, b], s))
            }
            _ if CMP_OPS.contains(&op) => {
                arity_min(2)?;
                if !numeric {
                    return err(p, format!("invalid function application '{op}', arguments must be numeric"));
                }
                Ok(Term::App(op.to_string(), unify(args), Sort::Bool))
            }
            _ if ARITH_OPS.contains(&op) => {
                arity_min(1)?;
                if !numeric {
                    return err(p, format!("invalid function application '{op}', arguments must be numeric"));
                }
                match op {
                    "div" | "mod" => {
                        if args.len() != 2 || !all(Sort::Int) {
                            return err(p, format!("invalid function application '{op}', expects two Int arguments"));
                        }
                        Ok(Term::App(op.to_string(), args, Sort::Int))
                    }
                    "abs" => {
                        if args.len() != 1 {
                            return err(p, "invalid number of arguments to 'abs'");
                        }
                        let s = sorts[0];
                        Ok(Term::App("abs".into(), args, s))
                    }
                    "to_real" => Ok(Term::App("to_real".into(), args, Sort::Real)),
                    "to_int" => Ok(Term::App("to_int".into(), args, Sort::Int)),
                    "/" => Ok(Term::App("/".into(), unify(args), Sort::Real)),
                    _ => {
                        let s = if all(Sort::Int) { Sort::Int } else { Sort::Real };
                        Ok(Term::App(op.to_string(), unify(args), s))
                    }
                }
            }
            _ => {
                if self.consts.contains_key(op) || self.defs.contains_key(op) {
                    return err(p, format!("invalid function application, '{op}' is a constant"));
                }
                err(p, format!("unknown function/constant {op}"))
            }
        }
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        let name = format!("{prefix}!{}", self.fresh);
        self.aux_ints.insert(name.clone());
        name
    }

    /// Arithmetic term as guarded linear cases.
    fn cases(&mut self, t: &Term) -> Result<Vec<(Vec<F>, Lin)>, ()> {
        match t {
            Term::Num(v, _) => Ok(vec![(vec![], Lin::constant(v.clone()))]),
            Term::Var(n, _) => Ok(vec![(vec![], Lin::var(n))]),
            Term::BoolLit(_) => Err(()),
            Term::App(op, args, _) => match op.as_str() {
                "+" => {
                    let mut acc = vec![(vec![], Lin::default())];
                    for a in args {
                        acc = self.combine(acc, a, |x, y| Some(x.add(y)))?;
                    }
                    Ok(acc)
                }
                "-" if args.len() == 1 => Ok(self.cases(&args[0])?.into_iter().map(|(c, l)| (c, l.neg())).collect()),
                "-" => {
                    let mut acc = self.cases(&args[0])?;
                    for a in &args[1..] {
                        acc = self.combine(acc, a, |x, y| Some(x.sub(y)))?;
                    }
                    Ok(acc)
                }
                "*" => {
                    let mut acc = vec![(vec![], Lin::constant(Q::one()))];
                    for a in args {
                        acc = self.combine(acc, a, |x, y| {
                            if x.is_constant() {
                                Some(y.scale(&x.constant))
                            } else if y.is_constant() {
                                Some(x.scale(&y.constant))
                            } else {
                                None
                            }
                        })?;
                    }
                    Ok(acc)
                }
                "/" => {
                    let mut acc = self.cases(&args[0])?;
                    for a in &args[1..] {
                        acc = self.combine(acc, a, |x, y| {
                            if y.is_constant() && !y.constant.is_zero() {
                                Some(x.scale(&(Q::one() / &y.constant)))
                            } else {
                                None
                            }
                        })?;
                    }
                    Ok(acc)
                }
                "div" | "mod" => {
                    let num = self.cases(&args[0])?;
                    let den = self.cases(&args[1])?;
                    let mut out = Vec::new();
                    for (c1, x) in &num {
                        for (c2, k) in &den {
                            if !k.is_constant() || k.constant.is_zero() {
                                return Err(());
                            }
                            let quot = self.fresh("div");
                            let rem = self.fresh("mod");
                            let k_abs = k.constant.abs();
                            // x = k*q + r with 0 <= r < |k|
                            let def = x.sub(&Lin::var(&quot).scale(&k.constant)).sub(&Lin::var(&rem));
                            let mut conds: Vec<F> = c1.iter().chain(c2).cloned().collect();
                            conds.push(F::Atom(def, Rel::Eq, false));
                            conds.push(F::Atom(Lin::var(&rem).neg(), Rel::Le, false));
                            conds.push(F::Atom(Lin::var(&rem).sub(&Lin::constant(k_abs)), Rel::Lt, false));
                            let result = if op == "div" { Lin::var(&quot) } else { Lin::var(&rem) };
                            out.push((conds, result));
                        }
                    }
                    Ok(out)
                }
                "abs" => {
                    let mut out = Vec::new();
                    for (c, l) in self.cases(&args[0])? {
                        let mut pos = c.clone();
                        pos.push(F::Atom(l.neg(), Rel::Le, false));
                        out.push((pos, l.clone()));
                        let mut neg = c;
                        neg.push(F::Atom(l.clone(), Rel::Lt, false));
                        out.push((neg, l.neg()));
                    }
                    Ok(out)
                }
                "to_real" => self.cases(&args[0]),
                "ite" => {
                    let yes = self.formula(&args[0], true);
                    let no = self.formula(&args[0], false);
                    let mut out = Vec::new();
                    for (mut c, l) in self.cases(&args[1])? {
                        c.push(yes.clone());
                        out.push((c, l));
                    }
                    for (mut c, l) in self.cases(&args[2])? {
                        c.push(no.clone());
                        out.push((c, l));
                    }
                    Ok(out)
                }
                _ => Err(()),
            },
        }
    }

    fn combine(
        &mut self,
        acc: Vec<(Vec<F>, Lin)>,
        t: &Term,
        f: impl Fn(&Lin, &Lin) -> Option<Lin>,
    ) -> Result<Vec<(Vec<F>, Lin)>, ()> {
        let right = self.cases(t)?;
        let mut out = Vec::new();
        for (c1, l1) in &acc {
            for (c2, l2) in &right {
                let l = f(l1, l2).ok_or(())?;
                out.push((c1.iter().chain(c2).cloned().collect(), l));
            }
        }
        if out.len() > 4096 {
            return Err(());
        }
        Ok(out)
    }

    /// `lhs rel rhs` for every pair of cases.
    fn compare(&mut self, a: &Term, b: &Term, build: impl Fn(Lin, Lin) -> F) -> F {
        let (Ok(ca), Ok(cb)) = (self.cases(a), self.cases(b)) else { return F::Opaque };
        let mut alts = Vec::new();
        for (c1, l1) in &ca {
            for (c2, l2) in &cb {
                let mut conj: Vec<F> = c1.iter().chain(c2).cloned().collect();
                conj.push(build(l1.clone(), l2.clone()));
                alts.push(F::And(conj));
            }
        }
        F::Or(alts)
    }

    fn formula(&mut self, t: &Term, positive: bool) -> F {
        match t {
            Term::BoolLit(b) => {
                if *b == positive {
                    F::True
                } else {
                    F::False
                }
            }
            Term::Var(n, _) => F::BVar(n.clone(), positive),
            Term::Num(..) => F::Opaque,
            Term::App(op, args, _) => match op.as_str() {
                "not" => self.formula(&args[0], !positive),
                "and" | "or" => {
                    let parts: Vec<F> = args.iter().map(|a| self.formula(a, positive)).collect();
                    if (op == "and") == positive {
                        F::And(parts)
                    } else {
                        F::Or(parts)
                    }
                }
                "=>" => {
                    // a1 => a2 => ... => an
                    let (last, init) = args.split_last().expect("arity checked");
                    if positive {
                        let mut parts: Vec<F> = init.iter().map(|a| self.formula(a, false)).collect();
                        parts.push(self.formula(last, true));
                        F::Or(parts)
                    } else {
                        let mut parts: Vec<F> = init.iter().map(|a| self.formula(a, true)).collect();
                        parts.push(self.formula(last, false));
                        F::And(parts)
                    }
                }
                "xor" => {
                    let mut acc = args[0].clone();
                    for a in &args[1..] {
                        acc = Term::App("distinct".into(), vec![acc, a.clone()], Sort::Bool);
                    }
                    self.formula(&acc, positive)
                }
                "ite" => {
                    let c = self.formula(&args[0], true);
                    let nc = self.formula(&args[0], false);
                    let a = self.formula(&args[1], positive);
                    let b = self.formula(&args[2], positive);
                    F::Or(vec![F::And(vec![c, a]), F::And(vec![nc, b])])
                }
                "=" | "distinct" if args[0].sort() == Sort::Bool => {
                    let mut parts = Vec::new();
                    let equal = op == "=";
                    if equal {
                        for w in args.windows(2) {
                            parts.push(self.iff(&w[0], &w[1], true));
                        }
                    } else {
                        for i in 0..args.len() {
                            for j in i + 1..args.len() {
                                parts.push(self.iff(&args[i], &args[j], false));
                            }
                        }
                    }
                    let whole = F::And(parts);
                    if positive {
                        whole
                    } else {
                        negate(whole)
                    }
                }
                "=" | "distinct" => {
                    let equal = (op == "=") == positive;
                    let mut parts = Vec::new();
                    if op == "=" {
                        for w in args.windows(2) {
                            parts.push(self.compare(&w[0], &w[1], |a, b| F::Atom(a.sub(&b), Rel::Eq, false)));
                        }
                    } else {
                        for i in 0..args.len() {
                            for j in i + 1..args.len() {
                                parts.push(self.compare(&args[i], &args[j], |a, b| F::Atom(a.sub(&b), Rel::Eq, true)));
                            }
                        }
                    }
                    let whole = F::And(parts);
                    if equal == (op == "=") {
                        whole
                    } else {
                        negate(whole)
                    }
                }
                "<" | "<=" | ">" | ">=" => {
                    let mut parts = Vec::new();
                    for w in args.windows(2) {
                        let (a, b) = (&w[0], &w[1]);
                        // normalize to a - b rel 0 / b - a rel 0
                        let f = match op.as_str() {
                            "<" => self.compare(a, b, |x, y| F::Atom(x.sub(&y), Rel::Lt, false)),
                            "<=" => self.compare(a, b, |x, y| F::Atom(x.sub(&y), Rel::Le, false)),
                            ">" => self.compare(a, b, |x, y| F::Atom(y.sub(&x), Rel::Lt, false)),
                            _ => self.compare(a, b, |x, y| F::Atom(y.sub(&x), Rel::Le, false)),
                        };
                        parts.push(f);
                    }
                    let whole = F::And(parts);
                    if positive {
                        whole
                    } else {
                        negate(whole)
                    }
                }
                _ => F::Opaque,
            },
        }
    }

    fn iff(&mut self, a: &Term, b: &Term, equal: bool) -> F {
        let pa = self.formula(a, true);
        let na = self.formula(a, false);
        let pb = self.formula(b, equal);
        let nb = self.formula(b, !equal);
        F::Or(vec![F::And(vec![pa, pb]), F::And(vec![na, nb])])
    }

    fn check(&mut self) -> Outcome {
        let assertions = self.assertions.clone();
        let parts: Vec<F> = assertions.iter().map(|a| self.formula(a, true)).collect();
        let ints: BTreeSet<String> = self
            .consts
            .iter()
            .filter(|(_, s)| **s == Sort::Int)
            .map(|(n, _)| n.clone())
            .chain(self.aux_ints.iter().cloned())
            .collect();
        let mut search = Search { ints, branches: 0, unknown: None };
        let mut agenda: Vec<&F> = parts.iter().collect();
        agenda.reverse();
        match search.run(agenda, Vec::new(), BTreeMap::new(), false) {
            Some((nums, bools)) => {
                let nums = nums.into_iter().filter(|(k, _)| self.consts.contains_key(k)).collect();
                Outcome::Sat(nums, bools)
            }
            None => match search.unknown {
                Some(why) => Outcome::Unknown(why),
                None => Outcome::Unsat,
            },
        }
    }
}

/// Negation of an NNF formula.
fn negate(f: F) -> F {
    match f {
        F::True => F::False,
        F::False => F::True,
        F::Atom(l, Rel::Le, false) => F::Atom(l.neg(), Rel::Lt, false),
        F::Atom(l, Rel::Lt, false) => F::Atom(l.neg(), Rel::Le, false),
        F::Atom(l, Rel::Eq, ne) => F::Atom(l, Rel::Eq, !ne),
        F::Atom(l, r, true) => F::Atom(l, r, false),
        F::BVar(n, p) => F::BVar(n, !p),
        F::Opaque => F::Opaque,
        F::And(v) => F::Or(v.into_iter().map(negate).collect()),
        F::Or(v) => F::And(v.into_iter().map(negate).collect()),
    }
}

struct Search {
    ints: BTreeSet<String>,
    branches: usize,
    unknown: Option<String>,
}

type Model = (BTreeMap<String, Q>, BTreeMap<String, bool>);

impl Search {
    /// Depth-first over the disjunctive normal form; `opaque` marks that
    /// some atom of the current conjunction was dropped.
    fn run(&mut self, mut agenda: Vec<&F>, lits: Vec<(Lin, Rel)>, bools: BTreeMap<String, bool>, opaque: bool) -> Option<Model> {
        let mut lits = lits;
        let mut bools = bools;
        let mut opaque = opaque;
        while let Some(f) = agenda.pop() {
            match f {
                F::True => {}
                F::False => return None,
                F::Opaque => opaque = true,
                F::BVar(n, p) => match bools.get(n) {
                    Some(v) if v != p => return None,
                    _ => {
                        bools.insert(n.clone(), *p);
                    }
                },
                F::Atom(l, r, false) => {
                    if l.is_constant() {
                        let ok = match r {
                            Rel::Le => !l.constant.is_positive(),
                            Rel::Lt => l.constant.is_negative(),
                            Rel::Eq => l.constant.is_zero(),
                        };
                        if !ok {
                            return None;
                        }
                    } else {
                        lits.push((l.clone(), *r));
                    }
                }
                F::Atom(l, _, true) => {
                    let lt = F::Atom(l.clone(), Rel::Lt, false);
                    let gt = F::Atom(l.neg(), Rel::Lt, false);
                    let either = [lt, gt];
                    for alt in &either {
                        let mut next = agenda.clone();
                        next.push(alt);
                        if let Some(m) = self.run(next, lits.clone(), bools.clone(), opaque) {
                            return Some(m);
                        }
                    }
                    return None;
                }
                F::And(parts) => agenda.extend(parts.iter().rev()),
                F::Or(alts) => {
                    for alt in alts {
                        let mut next = agenda.clone();
                        next.push(alt);
                        if let Some(m) = self.run(next, lits.clone(), bools.clone(), opaque) {
                            return Some(m);
                        }
                        if self.branches > MAX_BRANCHES {
                            self.unknown.get_or_insert_with(|| "case split limit reached".into());
                            return None;
                        }
                    }
                    return None;
                }
            }
        }
        self.branches += 1;
        match solve(&lits, &self.ints) {
            ArithResult::Unsat => None,
            ArithResult::Unknown(why) => {
                self.unknown.get_or_insert(why);
                None
            }
            ArithResult::Sat(model) if !opaque => Some((model, bools)),
            ArithResult::Sat(_) => {
                self.unknown.get_or_insert_with(|| "non-linear or unsupported term".into());
                None
            }
        }
    }
}

fn count_arg(items: &[Sexp], pos: Pos) -> Result<usize, Error> {
    match items.get(1) {
        None => Ok(1),
        Some(s) => s.atom().and_then(|a| a.parse().ok()).ok_or(Error { pos, message: "invalid scope count".into() }),
    }
}

fn parse_numeral(a: &str) -> Option<Term> {
    if let Some((i, f)) = a.split_once('.') {
        let digits = format!("{i}{f}");
        let num: BigInt = digits.parse().ok()?;
        let den = num_traits::pow(BigInt::from(10), f.len());
        return Some(Term::Num(BigRational::new(num, den), Sort::Real));
    }
    let n: BigInt = a.parse().ok()?;
    Some(Term::Num(Q::from_integer(n), Sort::Int))
}

fn coerce(t: Term, sort: Sort, p: Pos) -> Result<Term, Error> {
    match (t.sort(), sort) {
        (a, b) if a == b => Ok(t),
        (Sort::Int, Sort::Real) => Ok(Term::App("to_real".into(), vec![t], Sort::Real)),
        (a, b) => err(p, format!("Sorts {} and {} are incompatible", a.name(), b.name())),
    }
}

/// Lifts integer arguments to reals when the arguments mix sorts.
fn unify(args: Vec<Term>) -> Vec<Term> {
    if args.iter().any(|a| a.sort() == Sort::Real) {
        args.into_iter()
            .map(|a| if a.sort() == Sort::Int { Term::App("to_real".into(), vec![a], Sort::Real) } else { a })
            .collect()
    } else {
        args
    }
}

fn render_num(v: &Q, sort: Sort) -> String {
    let body = |x: &Q| -> String {
        if sort == Sort::Int || x.is_integer() {
            let n = x.to_integer();
            if sort == Sort::Real {
                format!("{n}.0")
            } else {
                n.to_string()
            }
        } else {
            format!("(/ {}.0 {}.0)", x.numer(), x.denom())
        }
    };
    if v.is_negative() {
        format!("(- {})", body(&-v.clone()))
    } else {
        body(v)
    }
}

/// Runs an SMT-LIB script and returns what the prover prints.
pub fn run_script(text: &str) -> String {
    let (commands, read_error) = read_all(text);
    let mut interp = Interp::default();
    for c in &commands {
        match interp.command(c) {
            Ok(true) => {}
            Ok(false) => return interp.out,
            Err(e) => interp.error(e),
        }
    }
    if let Some(e) = read_error {
        interp.error(Error { pos: e.pos, message: e.message });
    }
    interp.out
}
