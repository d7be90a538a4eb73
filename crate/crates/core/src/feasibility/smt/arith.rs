//! Linear arithmetic over rationals and integers: Fourier-Motzkin
//! elimination with model reconstruction, integer tightening and
//! branch-and-bound.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// `sum(coeffs[x] * x) + constant`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Lin {
    pub coeffs: BTreeMap<String, Q>,
    pub constant: Q,
}

impl Lin {
    pub fn constant(c: Q) -> Lin {
        Lin { coeffs: BTreeMap::new(), constant: c }
    }

    pub fn var(name: &str) -> Lin {
        Lin { coeffs: BTreeMap::from([(name.to_string(), Q::one())]), constant: Q::zero() }
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add(&self, other: &Lin) -> Lin {
        let mut out = self.clone();
        for (v, c) in &other.coeffs {
            let e = out.coeffs.entry(v.clone()).or_insert_with(Q::zero);
            *e += c;
            if e.is_zero() {
                out.coeffs.remove(v);
            }
        }
        out.constant += &other.constant;
        out
    }

    pub fn scale(&self, k: &Q) -> Lin {
        if k.is_zero() {
            return Lin::default();
        }
        Lin {
            coeffs: self.coeffs.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn neg(&self) -> Lin {
        self.scale(&q(-1))
    }

    pub fn sub(&self, other: &Lin) -> Lin {
        self.add(&other.neg())
    }

    fn eval(&self, model: &BTreeMap<String, Q>) -> Q {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            acc += c * model.get(v).cloned().unwrap_or_else(Q::zero);
        }
        acc
    }

    /// Replaces `var` by `by`.
    fn substitute(&self, var: &str, by: &Lin) -> Lin {
        match self.coeffs.get(var) {
            None => self.clone(),
            Some(c) => {
                let mut rest = self.clone();
                rest.coeffs.remove(var);
                rest.add(&by.scale(c))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rel {
    /// `lin <= 0`
    Le,
    /// `lin < 0`
    Lt,
    /// `lin = 0`
    Eq,
}

pub type Constraint = (Lin, Rel);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArithResult {
    Sat(BTreeMap<String, Q>),
    Unsat,
    Unknown(String),
}

const MAX_CONSTRAINTS: usize = 4000;
const MAX_BRANCH_DEPTH: usize = 48;

fn holds_constant(c: &Q, rel: Rel) -> bool {
    match rel {
        Rel::Le => !c.is_positive(),
        Rel::Lt => c.is_negative(),
        Rel::Eq => c.is_zero(),
    }
}

fn floor(x: &Q) -> Q {
    Q::from_integer(x.floor().to_integer())
}

fn ceil(x: &Q) -> Q {
    Q::from_integer(x.ceil().to_integer())
}

/// Integer-only constraints get integral coefficients and tightened
/// bounds. `None` means the constraint alone is unsatisfiable.
fn tighten(c: Constraint, ints: &BTreeSet<String>) -> Option<Constraint> {
    let (lin, rel) = c;
    if lin.is_constant() || !lin.coeffs.keys().all(|v| ints.contains(v)) {
        return Some((lin, rel));
    }
    let denom = lin.coeffs.values().chain([&lin.constant]).fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    let lin = lin.scale(&Q::from_integer(denom));
    let g = lin.coeffs.values().fold(BigInt::zero(), |acc, c| acc.gcd(c.numer()));
    let g = Q::from_integer(g);
    let mut coeffs = lin.coeffs.clone();
    for c in coeffs.values_mut() {
        *c = &*c / &g;
    }
    let k = &lin.constant / &g;
    match rel {
        Rel::Eq if !k.is_integer() => None,
        Rel::Eq => Some((Lin { coeffs, constant: k }, Rel::Eq)),
        Rel::Le => Some((Lin { coeffs, constant: ceil(&k) }, Rel::Le)),
        Rel::Lt => {
            // sum + k < 0 over integers is sum + floor(k) + 1 <= 0
            Some((Lin { coeffs, constant: floor(&k) + Q::one() }, Rel::Le))
        }
    }
}

struct Stage {
    var: String,
    constraints: Vec<Constraint>,
}

enum Elim {
    Sat(BTreeMap<String, Q>),
    Unsat,
    TooLarge,
}

/// Rational feasibility with a witness.
fn fourier_motzkin(constraints: Vec<Constraint>, ints: &BTreeSet<String>) -> Elim {
    let mut substitutions: Vec<(String, Lin)> = Vec::new();
    let mut work: Vec<Constraint> = Vec::new();
    let mut eqs: Vec<Lin> = Vec::new();
    for (lin, rel) in constraints {
        if rel == Rel::Eq {
            eqs.push(lin);
        } else {
            work.push((lin, rel));
        }
    }
    while let Some(eq) = eqs.pop() {
        let pick = eq.coeffs.iter().find(|(v, _)| !ints.contains(*v)).or_else(|| eq.coeffs.iter().next());
        let Some((var, coef)) = pick.map(|(v, c)| (v.clone(), c.clone())) else {
            if !eq.constant.is_zero() {
                return Elim::Unsat;
            }
            continue;
        };
        let mut rest = eq.clone();
        rest.coeffs.remove(&var);
        let by = rest.scale(&(-Q::one() / coef));
        for e in &mut eqs {
            *e = e.substitute(&var, &by);
        }
        for (lin, _) in &mut work {
            *lin = lin.substitute(&var, &by);
        }
        for (_, s) in &mut substitutions {
            *s = s.substitute(&var, &by);
        }
        substitutions.push((var, by));
    }
    let mut stages: Vec<Stage> = Vec::new();
    loop {
        let mut remaining = Vec::new();
        for (lin, rel) in work.drain(..) {
            if lin.is_constant() {
                if !holds_constant(&lin.constant, rel) {
                    return Elim::Unsat;
                }
            } else {
                remaining.push((lin, rel));
            }
        }
        remaining.sort();
        remaining.dedup();
        if remaining.is_empty() {
            break;
        }
        if remaining.len() > MAX_CONSTRAINTS {
            return Elim::TooLarge;
        }
        let vars: BTreeSet<&String> = remaining.iter().flat_map(|(l, _)| l.coeffs.keys()).collect();
        // eliminate the variable producing the fewest combinations
        let var = vars
            .into_iter()
            .min_by_key(|v| {
                let lo = remaining.iter().filter(|(l, _)| l.coeffs.get(*v).is_some_and(|c| c.is_negative())).count();
                let hi = remaining.iter().filter(|(l, _)| l.coeffs.get(*v).is_some_and(|c| c.is_positive())).count();
                lo * hi
            })
            .expect("non-constant constraints mention a variable")
            .clone();
        let (with, without): (Vec<Constraint>, Vec<Constraint>) =
            remaining.into_iter().partition(|(l, _)| l.coeffs.contains_key(&var));
        let lowers: Vec<&Constraint> = with.iter().filter(|(l, _)| l.coeffs[&var].is_negative()).collect();
        let uppers: Vec<&Constraint> = with.iter().filter(|(l, _)| l.coeffs[&var].is_positive()).collect();
        work = without;
        for (ll, lr) in &lowers {
            for (ul, ur) in &uppers {
                let a_l = -ll.coeffs[&var].clone();
                let a_u = ul.coeffs[&var].clone();
                let combined = ll.scale(&a_u).add(&ul.scale(&a_l));
                let rel = if *lr == Rel::Lt || *ur == Rel::Lt { Rel::Lt } else { Rel::Le };
                work.push((combined, rel));
            }
        }
        stages.push(Stage { var, constraints: with });
    }
    let mut model: BTreeMap<String, Q> = BTreeMap::new();
    for stage in stages.iter().rev() {
        let mut lower: Option<(Q, bool)> = None;
        let mut upper: Option<(Q, bool)> = None;
        for (lin, rel) in &stage.constraints {
            let a = lin.coeffs[&stage.var].clone();
            let mut rest = lin.clone();
            rest.coeffs.remove(&stage.var);
            let bound = -rest.eval(&model) / &a;
            let strict = *rel == Rel::Lt;
            if a.is_positive() {
                if upper.as_ref().is_none_or(|(u, s)| bound < *u || (bound == *u && strict && !s)) {
                    upper = Some((bound, strict));
                }
            } else if lower.as_ref().is_none_or(|(l, s)| bound > *l || (bound == *l && strict && !s)) {
                lower = Some((bound, strict));
            }
        }
        let is_int = ints.contains(&stage.var);
        let fits_upper = |v: &Q| upper.as_ref().is_none_or(|(u, s)| if *s { v < u } else { v <= u });
        let value = match (&lower, &upper) {
            (Some((l, s)), _) if is_int => {
                let c = if *s && l.is_integer() { l + Q::one() } else { ceil(l) };
                if fits_upper(&c) {
                    c
                } else {
                    midpoint(&lower, &upper)
                }
            }
            (None, Some((u, s))) if is_int => {
                if *s && u.is_integer() {
                    u - Q::one()
                } else {
                    floor(u)
                }
            }
            _ => midpoint(&lower, &upper),
        };
        model.insert(stage.var.clone(), value);
    }
    for (var, by) in substitutions.iter().rev() {
        let v = by.eval(&model);
        model.insert(var.clone(), v);
    }
    Elim::Sat(model)
}

fn midpoint(lower: &Option<(Q, bool)>, upper: &Option<(Q, bool)>) -> Q {
    match (lower, upper) {
        (Some((l, _)), Some((u, _))) => (l + u) / q(2),
        (Some((l, s)), None) => {
            if *s {
                l + Q::one()
            } else {
                l.clone()
            }
        }
        (None, Some((u, s))) => {
            if *s {
                u - Q::one()
            } else {
                u.clone()
            }
        }
        (None, None) => Q::zero(),
    }
}

/// Decides a conjunction of linear constraints. Variables in `ints` must
/// take integer values.
pub fn solve(constraints: &[Constraint], ints: &BTreeSet<String>) -> ArithResult {
    let mut budget = 2000usize;
    branch(constraints.to_vec(), ints, 0, &mut budget)
}

fn branch(constraints: Vec<Constraint>, ints: &BTreeSet<String>, depth: usize, budget: &mut usize) -> ArithResult {
    if *budget == 0 || depth > MAX_BRANCH_DEPTH {
        return ArithResult::Unknown("integer branch-and-bound limit reached".into());
    }
    *budget -= 1;
    let mut tightened = Vec::with_capacity(constraints.len());
    for c in constraints {
        match tighten(c, ints) {
            Some(c) => tightened.push(c),
            None => return ArithResult::Unsat,
        }
    }
    let model = match fourier_motzkin(tightened.clone(), ints) {
        Elim::Unsat => return ArithResult::Unsat,
        Elim::TooLarge => return ArithResult::Unknown("too many constraints after elimination".into()),
        Elim::Sat(m) => m,
    };
    let fractional = model.iter().find(|(v, x)| ints.contains(*v) && !x.is_integer());
    let Some((var, value)) = fractional else {
        return ArithResult::Sat(model);
    };
    let down = (Lin::var(var).sub(&Lin::constant(floor(value))), Rel::Le);
    let up = (Lin::constant(ceil(value)).sub(&Lin::var(var)), Rel::Le);
    let mut unknown = None;
    for extra in [down, up] {
        let mut next = tightened.clone();
        next.push(extra);
        match branch(next, ints, depth + 1, budget) {
            ArithResult::Sat(m) => return ArithResult::Sat(m),
            ArithResult::Unsat => {}
            u @ ArithResult::Unknown(_) => unknown = Some(u),
        }
    }
    unknown.unwrap_or(ArithResult::Unsat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(terms: &[(&str, i64)], c: i64) -> Lin {
        let mut l = Lin::constant(q(c));
        for (v, k) in terms {
            l = l.add(&Lin::var(v).scale(&q(*k)));
        }
        l
    }

    fn ints(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn check(cs: &[Constraint], model: &BTreeMap<String, Q>) -> bool {
        cs.iter().all(|(l, r)| holds_constant(&l.eval(model), *r))
    }

    #[test]
    fn contradictory_bounds() {
        // x > 1 and x < -1
        let cs = [(lin(&[("x", -1)], 1), Rel::Lt), (lin(&[("x", 1)], 1), Rel::Lt)];
        assert_eq!(solve(&cs, &ints(&["x"])), ArithResult::Unsat);
    }

    #[test]
    fn satisfiable_with_model() {
        let cs = [(lin(&[("x", -1)], 0), Rel::Lt)];
        let ArithResult::Sat(m) = solve(&cs, &ints(&["x"])) else { panic!() };
        assert!(check(&cs, &m));
        assert!(m["x"].is_integer());
    }

    #[test]
    fn integer_gap_is_unsat_but_rational_is_sat() {
        // 2x = 1
        let cs = [(lin(&[("x", 2)], -1), Rel::Eq)];
        assert_eq!(solve(&cs, &ints(&["x"])), ArithResult::Unsat);
        assert!(matches!(solve(&cs, &ints(&[])), ArithResult::Sat(_)));
        // 0 < 3x < 3 has no integer solution
        let cs = [(lin(&[("x", -3)], 0), Rel::Lt), (lin(&[("x", 3)], -3), Rel::Lt)];
        assert_eq!(solve(&cs, &ints(&["x"])), ArithResult::Unsat);
    }

    #[test]
    fn branch_and_bound_finds_integer_point() {
        // 2x + 2y = 6, x - y >= 1 / 2  -> x = 2, y = 1
        let cs = [
            (lin(&[("x", 2), ("y", 2)], -6), Rel::Eq),
            (lin(&[("x", -2), ("y", 2)], 1), Rel::Le),
            (lin(&[("x", 1)], -5), Rel::Le),
            (lin(&[("y", -1)], 0), Rel::Le),
        ];
        let ArithResult::Sat(m) = solve(&cs, &ints(&["x", "y"])) else { panic!() };
        assert!(check(&cs, &m));
    }

    #[test]
    fn equalities_chain_through_substitution() {
        // a = b, b = c, c = 0, a != 0 expressed as a > 0
        let cs = [
            (lin(&[("a", 1), ("b", -1)], 0), Rel::Eq),
            (lin(&[("b", 1), ("c", -1)], 0), Rel::Eq),
            (lin(&[("c", 1)], 0), Rel::Eq),
            (lin(&[("a", -1)], 0), Rel::Lt),
        ];
        assert_eq!(solve(&cs, &ints(&["a", "b", "c"])), ArithResult::Unsat);
    }
}
