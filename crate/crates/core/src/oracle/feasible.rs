use std::collections::HashMap;
use std::ops::RangeInclusive;

use crate::expr::{parse_expr, BinOp, Expr, UnOp};
use crate::paths::{PathInfo, Step};

use super::OracleError;

pub const DEFAULT_DOMAIN: RangeInclusive<i64> = -8..=8;

const BUDGET: u128 = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Int,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Val {
    Int(i64),
    Bool(bool),
}

enum Fail {
    /// The concrete run is impossible: a guard or assumption is violated,
    /// or a division by zero aborts the path.
    Blocked,
    Unsupported(String),
}

enum Op {
    Source { frame: usize, var: String, assume: Option<Expr> },
    Assign { frame: usize, lhs: String, rhs: Expr },
    Havoc { frame: usize, var: String },
    Copy { from: usize, to: usize, value: Expr, into: String },
    Check { frame: usize, cond: Expr, want: bool },
}

fn parse(text: &str) -> Result<Expr, OracleError> {
    parse_expr(text).map_err(|e| OracleError::UnsupportedGuard(format!("`{text}`: {e}")))
}

fn compile(info: &PathInfo) -> Result<Vec<Op>, OracleError> {
    let mut ops = Vec::new();
    for step in &info.steps {
        ops.push(match step {
            Step::Source { var, frame, assume, .. } => Op::Source {
                frame: *frame,
                var: var.clone(),
                assume: assume.as_deref().map(parse).transpose()?,
            },
            Step::Assign { lhs, rhs, frame, .. } => Op::Assign { frame: *frame, lhs: lhs.clone(), rhs: parse(rhs)? },
            Step::Havoc { var, frame, .. } => Op::Havoc { frame: *frame, var: var.clone() },
            Step::Bind { arg, param, from, to, .. } => {
                Op::Copy { from: *from, to: *to, value: parse(arg)?, into: param.clone() }
            }
            Step::Return { expr, out, from, to, .. } => {
                Op::Copy { from: *from, to: *to, value: parse(expr)?, into: out.clone() }
            }
            Step::Guard { cond, taken, frame, .. } => Op::Check { frame: *frame, cond: parse(cond)?, want: *taken },
            Step::Sink { .. } => continue,
        });
    }
    Ok(ops)
}

/// One concrete execution of the compiled path.
struct Machine<'a> {
    discover: bool,
    keys: &'a mut Vec<(String, Ty)>,
    values: &'a [Val],
    frames: HashMap<(usize, String), Val>,
    step: usize,
    ordinal: usize,
}

impl Machine<'_> {
    fn free(&mut self, key: String, ty: Ty) -> Result<Val, Fail> {
        match self.keys.iter().position(|(k, _)| *k == key) {
            Some(i) if self.discover => Ok(default(self.keys[i].1)),
            Some(i) => {
                let v = self.values[i];
                match (v, ty) {
                    (Val::Int(_), Ty::Int) | (Val::Bool(_), Ty::Bool) => Ok(v),
                    _ => Err(Fail::Unsupported(format!("`{key}` used as both integer and boolean"))),
                }
            }
            None if self.discover => {
                self.keys.push((key, ty));
                Ok(default(ty))
            }
            None => Err(Fail::Unsupported(format!("value `{key}` appeared after discovery"))),
        }
    }

    fn fresh(&mut self, label: &str, ty: Ty) -> Result<Val, Fail> {
        self.ordinal += 1;
        let key = format!("{label}#{}.{}", self.step, self.ordinal);
        self.free(key, ty)
    }

    fn read(&mut self, frame: usize, name: &str, ty: Ty) -> Result<Val, Fail> {
        if let Some(v) = self.frames.get(&(frame, name.to_string())) {
            return Ok(*v);
        }
        let v = self.free(format!("{frame}:{name}"), ty)?;
        self.frames.insert((frame, name.to_string()), v);
        Ok(v)
    }

    fn int(&mut self, frame: usize, e: &Expr) -> Result<i64, Fail> {
        match self.eval(frame, e, Ty::Int)? {
            Val::Int(i) => Ok(i),
            Val::Bool(_) => Err(Fail::Unsupported(format!("`{e}` is boolean where an integer is needed"))),
        }
    }

    fn bool(&mut self, frame: usize, e: &Expr) -> Result<bool, Fail> {
        match self.eval(frame, e, Ty::Bool)? {
            Val::Bool(b) => Ok(b),
            Val::Int(_) => Err(Fail::Unsupported(format!("`{e}` is an integer where a condition is needed"))),
        }
    }

    fn divide(&self, a: i64, b: i64, rem: bool) -> Result<i64, Fail> {
        if b == 0 {
            return if self.discover { Ok(0) } else { Err(Fail::Blocked) };
        }
        Ok(if rem { a.wrapping_rem(b) } else { a.wrapping_div(b) })
    }

    fn eval(&mut self, frame: usize, e: &Expr, ty: Ty) -> Result<Val, Fail> {
        Ok(match e {
            Expr::Int(i) => Val::Int(*i),
            Expr::Bool(b) => Val::Bool(*b),
            Expr::Name(parts) if parts.len() == 1 => self.read(frame, &parts[0], ty)?,
            Expr::Name(parts) => match (parts[0].as_str(), parts[parts.len() - 1].as_str()) {
                ("Integer", "MIN_VALUE") => Val::Int(i32::MIN as i64),
                ("Integer", "MAX_VALUE") => Val::Int(i32::MAX as i64),
                ("Long", "MIN_VALUE") => Val::Int(i64::MIN),
                ("Long", "MAX_VALUE") => Val::Int(i64::MAX),
                _ => self.free(format!("global:{}", parts.join(".")), ty)?,
            },
            Expr::Field(..) => self.free(format!("global:{e}"), ty)?,
            Expr::Index(..) => self.fresh("element", ty)?,
            Expr::Call { .. } => match e.abs_arg() {
                Some(arg) => Val::Int(self.int(frame, arg)?.wrapping_abs()),
                None => self.fresh("call", ty)?,
            },
            Expr::Cast(t, inner) if matches!(t.as_str(), "int" | "long" | "short" | "byte") => {
                Val::Int(self.int(frame, inner)?)
            }
            Expr::Cast(t, inner) if t == "boolean" => Val::Bool(self.bool(frame, inner)?),
            Expr::Unary(UnOp::Neg, inner) => Val::Int(self.int(frame, inner)?.wrapping_neg()),
            Expr::Unary(UnOp::Plus, inner) => Val::Int(self.int(frame, inner)?),
            Expr::Unary(UnOp::BitNot, inner) => Val::Int(!self.int(frame, inner)?),
            Expr::Unary(UnOp::Not, inner) => Val::Bool(!self.bool(frame, inner)?),
            Expr::Cond(c, a, b) => {
                let c = self.bool(frame, c)?;
                let a = self.eval(frame, a, ty)?;
                let b = self.eval(frame, b, ty)?;
                if c {
                    a
                } else {
                    b
                }
            }
            Expr::Binary(op, l, r) if op.is_logical() => {
                let a = self.bool(frame, l)?;
                let b = self.bool(frame, r)?;
                Val::Bool(if *op == BinOp::And { a && b } else { a || b })
            }
            Expr::Binary(op @ (BinOp::Eq | BinOp::Ne), l, r) => {
                let side = if boolean_shaped(l) || boolean_shaped(r) { Ty::Bool } else { Ty::Int };
                let a = self.eval(frame, l, side)?;
                let b = self.eval(frame, r, side)?;
                if std::mem::discriminant(&a) != std::mem::discriminant(&b) {
                    return Err(Fail::Unsupported(format!("`{e}` compares values of different types")));
                }
                Val::Bool((a == b) == (*op == BinOp::Eq))
            }
            Expr::Binary(op, l, r) => {
                let a = self.int(frame, l)?;
                let b = self.int(frame, r)?;
                match op {
                    BinOp::Lt => Val::Bool(a < b),
                    BinOp::Le => Val::Bool(a <= b),
                    BinOp::Gt => Val::Bool(a > b),
                    BinOp::Ge => Val::Bool(a >= b),
                    BinOp::Add => Val::Int(a.wrapping_add(b)),
                    BinOp::Sub => Val::Int(a.wrapping_sub(b)),
                    BinOp::Mul => Val::Int(a.wrapping_mul(b)),
                    BinOp::Div => Val::Int(self.divide(a, b, false)?),
                    BinOp::Rem => Val::Int(self.divide(a, b, true)?),
                    BinOp::BitAnd => Val::Int(a & b),
                    BinOp::BitOr => Val::Int(a | b),
                    BinOp::BitXor => Val::Int(a ^ b),
                    BinOp::Shl => Val::Int(a.wrapping_shl(b as u32)),
                    BinOp::Shr => Val::Int(a.wrapping_shr(b as u32)),
                    BinOp::UShr => Val::Int(((a as u64).wrapping_shr(b as u32)) as i64),
                    _ => return Err(Fail::Unsupported(format!("operator in `{e}`"))),
                }
            }
            other => return Err(Fail::Unsupported(format!("`{other}`"))),
        })
    }

    fn check(&mut self, ok: bool) -> Result<(), Fail> {
        if ok || self.discover {
            Ok(())
        } else {
            Err(Fail::Blocked)
        }
    }

    fn run(&mut self, ops: &[Op]) -> Result<(), Fail> {
        for (i, op) in ops.iter().enumerate() {
            self.step = i;
            self.ordinal = 0;
            match op {
                Op::Source { frame, var, assume } => {
                    let v = self.fresh("source", Ty::Int)?;
                    self.frames.insert((*frame, var.clone()), v);
                    if let Some(a) = assume {
                        let ok = self.bool(*frame, a)?;
                        self.check(ok)?;
                    }
                }
                Op::Assign { frame, lhs, rhs } => {
                    let ty = if boolean_shaped(rhs) { Ty::Bool } else { Ty::Int };
                    let v = self.eval(*frame, rhs, ty)?;
                    self.frames.insert((*frame, lhs.clone()), v);
                }
                Op::Havoc { frame, var } => {
                    let ty = match self.frames.get(&(*frame, var.clone())) {
                        Some(Val::Bool(_)) => Ty::Bool,
                        _ => Ty::Int,
                    };
                    let v = self.fresh("havoc", ty)?;
                    self.frames.insert((*frame, var.clone()), v);
                }
                Op::Copy { from, to, value, into } => {
                    let ty = if boolean_shaped(value) { Ty::Bool } else { Ty::Int };
                    let v = self.eval(*from, value, ty)?;
                    self.frames.insert((*to, into.clone()), v);
                }
                Op::Check { frame, cond, want } => {
                    let b = self.bool(*frame, cond)?;
                    self.check(b == *want)?;
                }
            }
        }
        Ok(())
    }
}

fn default(ty: Ty) -> Val {
    match ty {
        Ty::Int => Val::Int(0),
        Ty::Bool => Val::Bool(false),
    }
}

fn boolean_shaped(e: &Expr) -> bool {
    match e {
        Expr::Bool(_) | Expr::Unary(UnOp::Not, _) => true,
        Expr::Binary(op, ..) => op.is_comparison() || op.is_logical(),
        _ => false,
    }
}

/// Whether some assignment of `domain` values (and both booleans) to the
/// free values of the path satisfies every guard and assumption, under the
/// path's assignments and bindings.
///
/// Free values are source reads, havocked variables, variables read before
/// any assignment, calls other than absolute value, fields and globals.
pub fn oracle_feasible(info: &PathInfo, domain: RangeInclusive<i64>) -> Result<bool, OracleError> {
    let ops = compile(info)?;
    let mut keys = Vec::new();
    let mut m = Machine { discover: true, keys: &mut keys, values: &[], frames: HashMap::new(), step: 0, ordinal: 0 };
    match m.run(&ops) {
        Ok(()) | Err(Fail::Blocked) => {}
        Err(Fail::Unsupported(why)) => return Err(OracleError::UnsupportedGuard(why)),
    }
    let choices: Vec<Vec<Val>> = keys
        .iter()
        .map(|(_, ty)| match ty {
            Ty::Int => domain.clone().map(Val::Int).collect(),
            Ty::Bool => vec![Val::Bool(false), Val::Bool(true)],
        })
        .collect();
    let combinations = choices.iter().try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128)).unwrap_or(u128::MAX);
    if combinations > BUDGET {
        return Err(OracleError::TooLarge { combinations });
    }
    if choices.iter().any(Vec::is_empty) {
        return Ok(false);
    }
    let mut index = vec![0usize; choices.len()];
    loop {
        let values: Vec<Val> = index.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
        let mut m = Machine {
            discover: false,
            keys: &mut keys,
            values: &values,
            frames: HashMap::new(),
            step: 0,
            ordinal: 0,
        };
        match m.run(&ops) {
            Ok(()) => return Ok(true),
            Err(Fail::Blocked) => {}
            Err(Fail::Unsupported(why)) => return Err(OracleError::UnsupportedGuard(why)),
        }
        let mut k = 0;
        loop {
            if k == index.len() {
                return Ok(false);
            }
            index[k] += 1;
            if index[k] < choices[k].len() {
                break;
            }
            index[k] = 0;
            k += 1;
        }
    }
}
