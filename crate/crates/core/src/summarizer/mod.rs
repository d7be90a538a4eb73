//! Per-function dataflow summaries from prompted fact queries.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::llm::{bindings, fingerprint, parse_yes_no, Client, LlmError};
use crate::paths::CfgIndex;
use crate::syntax::{Role, ValueKey, ValueRef};

/// One question: does `start` affect `end` inside `function`?
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactQuery {
    pub function: String,
    pub function_name: String,
    pub start: ValueRef,
    pub end: ValueRef,
    /// Numbered function text.
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    pub explanation: String,
    /// Fingerprint of the exchange that produced the answer.
    pub exchange: String,
    /// False when neither the query nor its retry carried an answer line.
    pub parsed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub start: ValueRef,
    pub end: ValueRef,
    pub exchange: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSummary {
    pub function: String,
    pub facts: Vec<Fact>,
    /// Pairs whose answers could not be parsed or whose query failed.
    pub unanswered: Vec<(ValueRef, ValueRef)>,
}

impl FunctionSummary {
    pub fn facts_from<'a>(&'a self, start: &'a ValueKey) -> impl Iterator<Item = &'a Fact> + 'a {
        self.facts.iter().filter(move |f| f.start.key() == *start)
    }

    pub fn pairs(&self) -> BTreeSet<(ValueKey, ValueKey)> {
        self.facts.iter().map(|f| (f.start.key(), f.end.key())).collect()
    }
}

fn merge_role(set: &mut BTreeMap<ValueKey, ValueRef>, v: &ValueRef) {
    set.entry(v.key()).or_insert_with(|| v.clone());
}

/// Starts are sources, parameters and call outputs of the function; ends
/// are sinks, call arguments and returned values. In loop-free functions a
/// pair whose end precedes its start is dropped.
pub fn candidate_pairs(
    index: &CfgIndex,
    function: &str,
    code: &str,
    sources: &[ValueRef],
    sinks: &[ValueRef],
) -> Vec<FactQuery> {
    let Some(f) = index.get(function) else {
        return Vec::new();
    };
    let inside = |v: &&ValueRef| v.unit == f.info.unit && f.info.contains_line(v.line);
    let mut starts = BTreeMap::new();
    let mut ends = BTreeMap::new();
    for v in sources.iter().filter(inside) {
        merge_role(&mut starts, &v.with_role(Role::Source));
    }
    for v in f.values.v_par.iter().chain(&f.values.v_out) {
        merge_role(&mut starts, v);
    }
    for v in sinks.iter().filter(inside) {
        merge_role(&mut ends, &v.with_role(Role::Sink));
    }
    for v in f.values.v_arg.iter().chain(&f.values.v_ret) {
        merge_role(&mut ends, v);
    }
    let prune = !f.cfg.has_loops();
    let mut out = Vec::new();
    for s in starts.values() {
        for e in ends.values() {
            if s.key() == e.key() || (prune && e.line < s.line) {
                continue;
            }
            out.push(FactQuery {
                function: f.info.id.clone(),
                function_name: f.info.name.clone(),
                start: s.clone(),
                end: e.clone(),
                code: code.to_string(),
            });
        }
    }
    out.sort_by(|a, b| (a.start.line, &a.start.identifier, a.end.line, &a.end.identifier).cmp(&(b.start.line, &b.start.identifier, b.end.line, &b.end.identifier)));
    out
}

fn query_bindings(q: &FactQuery) -> BTreeMap<String, String> {
    bindings([
        ("function_name", q.function_name.clone()),
        ("code", q.code.clone()),
        ("start", q.start.notation()),
        ("start_var", q.start.identifier.clone()),
        ("start_line", q.start.line.to_string()),
        ("end", q.end.notation()),
        ("end_var", q.end.identifier.clone()),
        ("end_line", q.end.line.to_string()),
    ])
}

/// Asks the model whether the fact holds. A reply without an answer line
/// gets one retry with a format reminder; a second miss yields
/// `holds = false` with `parsed = false`.
pub fn query_fact(q: &FactQuery, client: &Client) -> Result<Verdict, LlmError> {
    let mut last = Verdict { holds: false, explanation: String::new(), exchange: String::new(), parsed: false };
    for template_id in ["summarize.fact", "summarize.fact_retry"] {
        let req = client.request(template_id, query_bindings(q))?;
        let resp = client.send(&req)?;
        let exchange = fingerprint(&req);
        if let Some(holds) = parse_yes_no(&resp.text) {
            return Ok(Verdict { holds, explanation: resp.text, exchange, parsed: true });
        }
        last = Verdict { holds: false, explanation: resp.text, exchange, parsed: false };
    }
    log::warn!(
        "{}: no answer line for {} -> {}; treating as no fact",
        q.function,
        q.start.notation(),
        q.end.notation()
    );
    Ok(last)
}

/// Queries every pair and keeps the facts that hold. Fatal client errors
/// abort; other per-pair errors mark the pair unanswered.
pub fn summarize_function(function: &str, pairs: &[FactQuery], client: &Client) -> Result<FunctionSummary, LlmError> {
    let mut summary = FunctionSummary { function: function.to_string(), ..FunctionSummary::default() };
    for q in pairs {
        match query_fact(q, client) {
            Ok(v) if v.holds => summary.facts.push(Fact { start: q.start.clone(), end: q.end.clone(), exchange: v.exchange }),
            Ok(v) if !v.parsed => summary.unanswered.push((q.start.clone(), q.end.clone())),
            Ok(_) => {}
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => {
                log::warn!("{function}: query {} -> {} failed: {e}", q.start.notation(), q.end.notation());
                summary.unanswered.push((q.start.clone(), q.end.clone()));
            }
        }
    }
    summary.facts.dedup_by(|a, b| a.start.key() == b.start.key() && a.end.key() == b.end.key());
    Ok(summary)
}

/// Summaries keyed by function text and detector spec.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryStore {
    entries: BTreeMap<String, FunctionSummary>,
}

impl SummaryStore {
    pub fn key(unit: &str, code: &str, spec_id: &str) -> String {
        let mut h = Sha256::new();
        h.update(unit.as_bytes());
        h.update([0]);
        h.update(code.as_bytes());
        h.update([0]);
        h.update(spec_id.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn get(&self, key: &str) -> Option<&FunctionSummary> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, key: String, summary: FunctionSummary) {
        if let Some(old) = self.entries.get(&key) {
            debug_assert_eq!(old.pairs(), summary.pairs(), "summary for one function text changed");
        }
        self.entries.insert(key, summary);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns the cached summary or computes and stores it.
    pub fn summarize(
        &mut self,
        unit: &str,
        code: &str,
        spec_id: &str,
        function: &str,
        pairs: &[FactQuery],
        client: &Client,
    ) -> Result<FunctionSummary, LlmError> {
        let key = Self::key(unit, code, spec_id);
        if let Some(s) = self.entries.get(&key) {
            return Ok(s.clone());
        }
        let s = summarize_function(function, pairs, client)?;
        self.insert(key, s.clone());
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn load(path: &Path) -> std::io::Result<SummaryStore> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::llm::ScriptedBackend;
    use crate::syntax::{parse_unit, SyntaxTree};
    use std::sync::Arc;

    fn setup(src: &str) -> (SyntaxTree, CfgIndex) {
        let tree = parse_unit("T.java", src.as_bytes()).unwrap();
        let (index, _) = CfgIndex::build(std::slice::from_ref(&tree));
        (tree, index)
    }

    #[test]
    fn empty_candidate_sets_give_no_pairs() {
        let (tree, index) = setup("class A { void f() { int a = 1; } }");
        let f = &tree.functions()[0];
        assert!(candidate_pairs(&index, &f.id, "", &[], &[]).is_empty());
    }

    #[test]
    fn motivating_entry_pairs_include_source_to_argument() {
        let (tree, index) = setup(fixtures::MOTIVATING_EXAMPLE);
        let run = &tree.functions()[1];
        let src = [ValueRef::new("T.java", 9, "x", Role::Source)];
        let sinks = [ValueRef::new("T.java", 11, "y", Role::Sink), ValueRef::new("T.java", 14, "y", Role::Sink)];
        let pairs = candidate_pairs(&index, &run.id, "", &src, &sinks);
        assert!(pairs.iter().any(|p| p.start.notation() == "x@9" && p.end.notation() == "z@13"));
        assert!(pairs.iter().any(|p| p.start.notation() == "y@13" && p.end.notation() == "y@14"));
        assert!(!pairs.iter().any(|p| p.start.notation() == "y@13" && p.end.line < 13));
    }

    #[test]
    fn loops_disable_line_order_pruning() {
        let looped = "class A {\n  void f(int n) {\n    int s = 0;\n    while (n > 0) {\n      h(s);\n      s = g(n);\n    }\n  }\n}\n";
        let (tree, index) = setup(looped);
        let pairs = candidate_pairs(&index, &tree.functions()[0].id, "", &[], &[]);
        assert!(pairs.iter().any(|p| p.start.notation() == "s@6" && p.end.notation() == "s@5"));
        let straight = "class A {\n  void f(int n) {\n    int s = 0;\n    h(s);\n    s = g(n);\n  }\n}\n";
        let (tree, index) = setup(straight);
        let pairs = candidate_pairs(&index, &tree.functions()[0].id, "", &[], &[]);
        assert!(!pairs.iter().any(|p| p.start.notation() == "s@5" && p.end.notation() == "s@4"));
        assert!(pairs.iter().all(|p| p.end.line >= p.start.line));
    }

    #[test]
    fn unparseable_twice_is_no_fact() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push("summarize.fact", "maybe");
        backend.push("summarize.fact_retry", "still unsure");
        let client = Client::new(backend);
        let q = FactQuery {
            function: "f".into(),
            function_name: "f".into(),
            start: ValueRef::new("u", 1, "a", Role::Param),
            end: ValueRef::new("u", 2, "a", Role::Ret),
            code: "1: int f(int a) {\n2: return a; }\n".into(),
        };
        let v = query_fact(&q, &client).unwrap();
        assert!(!v.holds && !v.parsed);
        assert_eq!(client.stats().total_issued(), 2);
    }

    #[test]
    fn retry_recovers_answer() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push("summarize.fact", "a flows to b");
        backend.push("summarize.fact_retry", "Answer: Yes");
        let client = Client::new(backend);
        let q = FactQuery {
            function: "f".into(),
            function_name: "f".into(),
            start: ValueRef::new("u", 1, "a", Role::Param),
            end: ValueRef::new("u", 2, "a", Role::Ret),
            code: String::new(),
        };
        let s = summarize_function("f", &[q], &client).unwrap();
        assert_eq!(s.facts.len(), 1);
    }

    #[test]
    fn store_does_not_requery() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push("summarize.fact", "Answer: No");
        let client = Client::new(backend);
        let q = FactQuery {
            function: "f".into(),
            function_name: "f".into(),
            start: ValueRef::new("u", 1, "a", Role::Param),
            end: ValueRef::new("u", 2, "b", Role::Ret),
            code: "code".into(),
        };
        let mut store = SummaryStore::default();
        store.summarize("u", "code", "dbz", "f", std::slice::from_ref(&q), &client).unwrap();
        store.summarize("u", "code", "dbz", "f", std::slice::from_ref(&q), &client).unwrap();
        assert_eq!(client.stats().total_issued(), 1);
        assert_eq!(store.len(), 1);
    }
}
