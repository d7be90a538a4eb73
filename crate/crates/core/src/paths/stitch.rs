use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CfgIndex, DataflowPath, Hop, Link};
use crate::summarizer::FunctionSummary;
use crate::syntax::{CallGraph, Role, ValueKey, ValueRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StitchConfig {
    /// Deepest call stack a path may build, and the most returns it may
    /// take past the function it started in.
    pub max_depth: usize,
    pub max_paths_per_pair: usize,
}

impl Default for StitchConfig {
    fn default() -> Self {
        StitchConfig { max_depth: 5, max_paths_per_pair: 64 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StitchOutput {
    pub paths: Vec<DataflowPath>,
    /// Truncation notes from the depth and path-count bounds.
    pub warnings: Vec<String>,
}

#[derive(Clone)]
struct Frame {
    caller: String,
    line: usize,
    frame: usize,
}

struct Search<'a> {
    summaries: &'a BTreeMap<String, FunctionSummary>,
    graph: &'a CallGraph,
    index: &'a CfgIndex,
    sinks: BTreeSet<ValueKey>,
    config: StitchConfig,
    found: BTreeMap<(ValueKey, ValueKey), BTreeSet<DataflowPath>>,
    warnings: BTreeSet<String>,
    next_frame: usize,
}

impl Search<'_> {
    fn record(&mut self, hops: &[Hop]) {
        let mut path = DataflowPath { hops: hops.to_vec() };
        let last = path.hops.len() - 1;
        path.hops[0].value.role = Role::Source;
        path.hops[last].value.role = Role::Sink;
        renumber(std::slice::from_mut(&mut path));
        let key = (path.source().key(), path.sink().key());
        let bucket = self.found.entry(key).or_default();
        if bucket.len() >= self.config.max_paths_per_pair && !bucket.contains(&path) {
            self.warnings.insert(format!(
                "{} -> {}: more than {} paths, extra paths dropped",
                path.source(),
                path.sink(),
                self.config.max_paths_per_pair
            ));
            return;
        }
        bucket.insert(path);
    }

    fn dfs(&mut self, hops: &mut Vec<Hop>, stack: &mut Vec<Frame>, ups: usize) {
        let here = hops.last().expect("non-empty path").clone();
        if hops.len() > 1 && self.sinks.contains(&here.value.key()) {
            self.record(hops);
            return;
        }
        let seen = |hops: &[Hop], v: &ValueRef, frame_depth: usize| {
            hops.iter().any(|h| h.value.key() == v.key() && h.frame == frame_depth)
        };
        let Some(func) = self.index.get(&here.function) else { return };
        let func = func.clone();
        // intra-procedural facts from this value
        if let Some(summary) = self.summaries.get(&here.function) {
            let ends: Vec<ValueRef> = summary.facts_from(&here.value.key()).map(|f| f.end.clone()).collect();
            for end in ends {
                if end.key() == here.value.key() || seen(hops, &end, here.frame) {
                    continue;
                }
                let role = if self.sinks.contains(&end.key()) { Role::Sink } else { end.role };
                hops.push(Hop { value: end.with_role(role), function: here.function.clone(), frame: here.frame, link: Some(Link::Fact) });
                self.dfs(hops, stack, ups);
                hops.pop();
            }
        }
        // argument into a callee parameter
        let sites: Vec<_> = func.values.arg_sites.iter().filter(|s| s.value.key() == here.value.key()).cloned().collect();
        for site in sites {
            for edge in self.graph.callees_at(&here.function, here.value.line) {
                let Some(callee) = self.index.get(&edge.callee) else { continue };
                if callee.info.name != site.callee {
                    continue;
                }
                let Some(param) = callee.info.params.get(site.index) else { continue };
                if stack.len() >= self.config.max_depth {
                    self.warnings.insert(format!("{}: call depth bound {} reached", here.value, self.config.max_depth));
                    continue;
                }
                let frame = self.next_frame;
                self.next_frame += 1;
                let value = ValueRef::new(&callee.info.unit, param.line, &param.name, Role::Param);
                stack.push(Frame { caller: here.function.clone(), line: here.value.line, frame: here.frame });
                hops.push(Hop { value, function: callee.info.id.clone(), frame, link: Some(Link::Bind) });
                self.dfs(hops, stack, ups);
                hops.pop();
                stack.pop();
            }
        }
        // returned value into the receiving variable of the caller
        if !func.values.ret_sites.iter().any(|s| s.value.key() == here.value.key()) {
            return;
        }
        let targets: Vec<(String, usize, Option<usize>)> = match stack.last() {
            Some(f) => vec![(f.caller.clone(), f.line, Some(f.frame))],
            None => self.graph.callers_of(&here.function).map(|e| (e.caller.clone(), e.line, None)).collect(),
        };
        for (caller_id, line, frame) in targets {
            let Some(caller) = self.index.get(&caller_id) else { continue };
            let outs: Vec<ValueRef> = caller
                .values
                .out_sites
                .iter()
                .filter(|o| o.value.line == line && o.callee == func.info.name)
                .map(|o| o.value.clone())
                .collect();
            for out in outs {
                let (frame, popped, ups) = match frame {
                    Some(fr) => (fr, stack.pop(), ups),
                    None if ups >= self.config.max_depth => {
                        self.warnings.insert(format!("{}: return depth bound {} reached", here.value, self.config.max_depth));
                        continue;
                    }
                    None => {
                        let fr = self.next_frame;
                        self.next_frame += 1;
                        (fr, None, ups + 1)
                    }
                };
                if !seen(hops, &out, frame) {
                    hops.push(Hop { value: out.with_role(Role::Out), function: caller_id.clone(), frame, link: Some(Link::Return) });
                    self.dfs(hops, stack, ups);
                    hops.pop();
                }
                if let Some(p) = popped {
                    stack.push(p);
                }
            }
        }
    }
}

/// Concatenates summary facts across argument-to-parameter and
/// return-to-output edges, depth first from every source.
///
/// Frames are numbered per path in the order they are entered, with the
/// source's frame 0. Paths come back deduplicated and sorted by source and
/// sink position.
pub fn stitch(
    summaries: &BTreeMap<String, FunctionSummary>,
    graph: &CallGraph,
    sources: &[ValueRef],
    sinks: &[ValueRef],
    index: &CfgIndex,
    config: StitchConfig,
) -> StitchOutput {
    let mut search = Search {
        summaries,
        graph,
        index,
        sinks: sinks.iter().map(ValueRef::key).collect(),
        config,
        found: BTreeMap::new(),
        warnings: BTreeSet::new(),
        next_frame: 0,
    };
    for src in sources {
        let Some(f) = index.function_at(&src.unit, src.line) else {
            search.warnings.insert(format!("{src}: source outside every indexed function"));
            continue;
        };
        search.next_frame = 1;
        let mut hops = vec![Hop { value: src.with_role(Role::Source), function: f.info.id.clone(), frame: 0, link: None }];
        search.dfs(&mut hops, &mut Vec::new(), 0);
    }
    let mut paths: Vec<DataflowPath> = search.found.into_values().flatten().collect();
    paths.sort_by(|a, b| {
        let ka = (&a.source().unit, a.source().line, &a.sink().unit, a.sink().line);
        let kb = (&b.source().unit, b.source().line, &b.sink().unit, b.sink().line);
        ka.cmp(&kb).then_with(|| a.cmp(b))
    });
    paths.dedup();
    StitchOutput { paths, warnings: search.warnings.into_iter().collect() }
}

/// Makes frame numbers dense in order of first appearance.
fn renumber(paths: &mut [DataflowPath]) {
    for p in paths {
        let mut map = BTreeMap::new();
        for h in &mut p.hops {
            let n = map.len();
            h.frame = *map.entry(h.frame).or_insert(n);
        }
    }
}

/// Re-derives every link of `path` from the summaries and the call graph.
pub fn replay(path: &DataflowPath, summaries: &BTreeMap<String, FunctionSummary>, graph: &CallGraph, index: &CfgIndex) -> bool {
    if path.hops.is_empty() || path.hops[0].link.is_some() {
        return false;
    }
    path.hops.windows(2).all(|w| {
        let (a, b) = (&w[0], &w[1]);
        match b.link {
            Some(Link::Fact) => {
                a.function == b.function
                    && a.frame == b.frame
                    && summaries
                        .get(&a.function)
                        .is_some_and(|s| s.facts.iter().any(|f| f.start.key() == a.value.key() && f.end.key() == b.value.key()))
            }
            Some(Link::Bind) => {
                let (Some(caller), Some(callee)) = (index.get(&a.function), index.get(&b.function)) else { return false };
                graph.callees_at(&a.function, a.value.line).any(|e| e.callee == b.function)
                    && caller.values.arg_sites.iter().any(|s| {
                        s.value.key() == a.value.key()
                            && s.callee == callee.info.name
                            && callee.info.params.get(s.index).is_some_and(|p| p.name == b.value.identifier && p.line == b.value.line)
                    })
            }
            Some(Link::Return) => {
                let (Some(callee), Some(caller)) = (index.get(&a.function), index.get(&b.function)) else { return false };
                graph.callees_at(&b.function, b.value.line).any(|e| e.callee == a.function)
                    && callee.values.ret_sites.iter().any(|s| s.value.key() == a.value.key())
                    && caller.values.out_sites.iter().any(|o| o.value.key() == b.value.key() && o.callee == callee.info.name)
            }
            None => false,
        }
    })
}
