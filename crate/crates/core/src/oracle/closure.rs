use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::expr::Expr;

use super::mini::{MiniFunction, MiniStmt};

/// A variable occurrence `name@line`.
pub type Occurrence = (String, usize);

/// Def-use graph of a mini function over occurrences. Definitions and uses
/// of one variable on one line share a node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefUseGraph {
    pub nodes: Vec<Occurrence>,
    /// Single-step edges: reaching definition to use, and right-hand-side
    /// use to the defined variable.
    pub edges: BTreeSet<(usize, usize)>,
}

impl DefUseGraph {
    pub fn index_of(&self, name: &str, line: usize) -> Option<usize> {
        self.nodes.iter().position(|(n, l)| n == name && *l == line)
    }

    fn node(&mut self, name: &str, line: usize) -> usize {
        match self.index_of(name, line) {
            Some(i) => i,
            None => {
                self.nodes.push((name.to_string(), line));
                self.nodes.len() - 1
            }
        }
    }

    fn edge(&mut self, from: usize, to: usize) {
        if from != to {
            self.edges.insert((from, to));
        }
    }
}

/// All pairs `a@m -> b@n` where the value at `a@m` reaches `b@n`,
/// reflexive pairs included.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FactClosure {
    pub graph: DefUseGraph,
    pub pairs: BTreeSet<(Occurrence, Occurrence)>,
}

impl FactClosure {
    pub fn holds(&self, from: (&str, usize), to: (&str, usize)) -> bool {
        self.pairs.contains(&((from.0.to_string(), from.1), (to.0.to_string(), to.1)))
    }

    /// Shortest chain of occurrences from `from` to `to`, both included.
    pub fn witness(&self, from: (&str, usize), to: (&str, usize)) -> Option<Vec<Occurrence>> {
        let g = &self.graph;
        let s = g.index_of(from.0, from.1)?;
        let t = g.index_of(to.0, to.1)?;
        let mut parent = vec![usize::MAX; g.nodes.len()];
        parent[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(n) = queue.pop_front() {
            if n == t {
                let mut chain = vec![g.nodes[t].clone()];
                let mut at = t;
                while at != s {
                    at = parent[at];
                    chain.push(g.nodes[at].clone());
                }
                chain.reverse();
                return Some(chain);
            }
            for &(a, b) in g.edges.range((n, 0)..(n + 1, 0)) {
                debug_assert_eq!(a, n);
                if parent[b] == usize::MAX {
                    parent[b] = n;
                    queue.push_back(b);
                }
            }
        }
        None
    }
}

type Reaching = BTreeMap<String, BTreeSet<usize>>;

/// Builds the single-step def-use graph of `f`.
pub fn def_use_graph(f: &MiniFunction) -> DefUseGraph {
    let mut g = DefUseGraph::default();
    let mut state = Reaching::new();
    for (p, line) in &f.params {
        let n = g.node(p, *line);
        state.insert(p.clone(), BTreeSet::from([n]));
    }
    walk(&f.body, Some(state), &mut g);
    g
}

fn uses(g: &mut DefUseGraph, state: &Reaching, vars: &[String], line: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for v in vars {
        let n = g.node(v, line);
        if let Some(defs) = state.get(v) {
            for &d in defs {
                g.edge(d, n);
            }
        }
        out.push(n);
    }
    out
}

fn walk(stmts: &[MiniStmt], mut state: Option<Reaching>, g: &mut DefUseGraph) -> Option<Reaching> {
    for s in stmts {
        let st = state.as_mut()?;
        match s {
            MiniStmt::Assign { line, target, value, compound } => {
                let mut vars = value.vars();
                if compound.is_some() && !vars.contains(target) {
                    vars.push(target.clone());
                }
                let used = uses(g, st, &vars, *line);
                let def = g.node(target, *line);
                for u in used {
                    g.edge(u, def);
                }
                st.insert(target.clone(), BTreeSet::from([def]));
            }
            MiniStmt::Declare { name, .. } => {
                st.insert(name.clone(), BTreeSet::new());
            }
            MiniStmt::Eval { line, expr } => {
                let used = uses(g, st, &expr.vars(), *line);
                if let Expr::Call { target: Some(recv), args, .. } = expr {
                    if let Some(r) = recv.as_var() {
                        let arg_vars: Vec<String> = args.iter().flat_map(Expr::vars).collect();
                        let def = g.node(r, *line);
                        for (u, name) in used.iter().zip(expr.vars()) {
                            if arg_vars.contains(&name) {
                                g.edge(*u, def);
                            }
                        }
                        st.insert(r.to_string(), BTreeSet::from([def]));
                    }
                }
            }
            MiniStmt::Return { line, value } => {
                if let Some(v) = value {
                    uses(g, st, &v.vars(), *line);
                }
                state = None;
            }
            MiniStmt::If { line, cond, then, otherwise } => {
                uses(g, st, &cond.vars(), *line);
                let a = walk(then, state.clone(), g);
                let b = walk(otherwise, state.clone(), g);
                state = match (a, b) {
                    (None, None) => None,
                    (Some(x), None) | (None, Some(x)) => Some(x),
                    (Some(mut x), Some(y)) => {
                        for (k, defs) in y {
                            x.entry(k).or_default().extend(defs);
                        }
                        Some(x)
                    }
                };
            }
        }
    }
    state
}

/// Reflexive-transitive closure of the def-use graph by breadth-first
/// search from every node.
pub fn oracle_closure(f: &MiniFunction) -> FactClosure {
    let graph = def_use_graph(f);
    let n = graph.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &graph.edges {
        adj[a].push(b);
    }
    let mut pairs = BTreeSet::new();
    for s in 0..n {
        let mut seen = vec![false; n];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(x) = queue.pop_front() {
            pairs.insert((graph.nodes[s].clone(), graph.nodes[x].clone()));
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
    }
    FactClosure { graph, pairs }
}
