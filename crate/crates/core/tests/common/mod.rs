#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sinkflow_core::detectors::DetectorSpec;
use sinkflow_core::fixtures::assets_dir;
use sinkflow_core::llm::{Backend, Cassette, CassetteBackend, ChatRequest, ChatResponse, LlmError};
use sinkflow_core::oracle::OracleBackend;
use sinkflow_core::feasibility::Method;
use sinkflow_core::paths::{Hop, Link, PathInfo, Step};
use sinkflow_core::pipeline::{BugLabel, BugReport};
use sinkflow_core::syntax::{Role, ValueRef};

pub fn cassette(name: &str) -> Cassette {
    Cassette::load(&assets_dir().join("cassettes").join(name)).expect("committed cassette")
}

pub fn fixture_dir(rel: &str) -> PathBuf {
    assets_dir().join(rel)
}

pub fn oracle_for(detectors: &[DetectorSpec]) -> OracleBackend {
    OracleBackend::new().with_scripts(detectors.iter().flat_map(DetectorSpec::reference_scripts).collect())
}

/// Sends templates with a given prefix to the cassette, everything else to
/// the oracle.
pub struct Routed {
    pub prefix: &'static str,
    pub cassette: CassetteBackend,
    pub oracle: OracleBackend,
}

impl Backend for Routed {
    fn tag(&self) -> &'static str {
        "routed"
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        if req.template_id.starts_with(self.prefix) {
            self.cassette.complete(req)
        } else {
            self.oracle.complete(req)
        }
    }
}

/// Agrees with every fact and feasibility question; everything else goes
/// to the oracle.
pub struct Credulous(pub OracleBackend);

impl Backend for Credulous {
    fn tag(&self) -> &'static str {
        "credulous"
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        match req.template_id.as_str() {
            "summarize.fact" | "summarize.fact_retry" | "feasibility.direct" => {
                Ok(ChatResponse::offline("It clearly does.\nAnswer: Yes", "credulous"))
            }
            _ => self.0.complete(req),
        }
    }
}

pub fn arc<B: Backend + 'static>(b: B) -> Arc<dyn Backend> {
    Arc::new(b)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A class holding one loop-free function in the mini language, one
/// statement per line, with input reads, zero literals, divisions, calls,
/// branches and a return.
pub fn random_function(rng: &mut ChaCha8Rng, class: &str) -> String {
    let vars = ["p", "q", "a", "b", "c"];
    let mut lines = vec![
        format!("public class {class} {{"),
        "    static int f(Scanner input, int p, int q) {".to_string(),
        "        int a = p;".to_string(),
        "        int b = input.nextInt();".to_string(),
        "        int c = 0;".to_string(),
    ];
    let n = rng.random_range(2..=9);
    for _ in 0..n {
        let x = vars[rng.random_range(2..vars.len())];
        let y = vars[rng.random_range(0..vars.len())];
        let z = vars[rng.random_range(0..vars.len())];
        let k = rng.random_range(-3..=5);
        match rng.random_range(0..8) {
            0 => lines.push(format!("        {x} = {y};")),
            1 => lines.push(format!("        {x} = {y} + {z};")),
            2 => lines.push(format!("        {x} = {y} / {z};")),
            3 => lines.push(format!("        {x} = {k};")),
            4 => {
                lines.push(format!("        if ({y} > {k}) {{"));
                lines.push(format!("            {x} = {z};"));
                lines.push("        } else {".to_string());
                lines.push(format!("            {z} = {y} / {x};"));
                lines.push("        }".to_string());
            }
            5 => lines.push(format!("        {x} = g({y}, {z});")),
            6 => lines.push(format!("        {x} = input.nextInt();")),
            _ => {
                lines.push(format!("        if ({y} != {z}) {{"));
                lines.push(format!("            {x} = {y} % {z};"));
                lines.push("        }".to_string());
            }
        }
    }
    let r = vars[rng.random_range(0..vars.len())];
    lines.push(format!("        return {r};"));
    lines.push("    }".to_string());
    lines.push("}".to_string());
    lines.join("\n") + "\n"
}

fn guard(rng: &mut ChaCha8Rng, vars: &[&str]) -> String {
    let v = vars[rng.random_range(0..vars.len())];
    let w = vars[rng.random_range(0..vars.len())];
    let k: i64 = rng.random_range(-4..=4);
    let k2: i64 = rng.random_range(-4..=4);
    let ops = [">", ">=", "<", "<=", "==", "!="];
    let op = ops[rng.random_range(0..ops.len())];
    match rng.random_range(0..7) {
        0 | 1 => format!("{v} {op} {k}"),
        2 => format!("Math.abs({v}) {op} {}", k.abs()),
        3 => format!("{v} {op} {w}"),
        4 => format!("{v} + {k} {op} {w}"),
        5 => format!("{v} > {k} && {w} < {k2}"),
        _ => format!("{v} < {k} || Math.abs({w}) > {}", k2.abs()),
    }
}

/// Ordered path information over small integer constants: a source that
/// may be assumed zero, copies and offsets, branch conditions in both
/// polarities and an optional call binding followed by callee guards.
pub fn random_path(rng: &mut ChaCha8Rng) -> PathInfo {
    let assume = match rng.random_range(0..3) {
        0 => None,
        1 => Some("x == 0".to_string()),
        _ => Some(format!("x == {}", rng.random_range(-3..=3))),
    };
    let mut steps = vec![Step::Source { var: "x".into(), line: 1, frame: 0, assume }];
    let mut line = 2;
    let n = rng.random_range(1..=5);
    let mut havocked = false;
    for _ in 0..n {
        let pick = match rng.random_range(0..4) {
            1 if havocked => 2,
            k => k,
        };
        havocked |= pick == 1;
        let step = match pick {
            0 => {
                let lhs = ["y", "z"][rng.random_range(0..2)];
                let rhs = ["x", "y + 1", "2 * x", "3", "x - z", "-y"][rng.random_range(0..6)];
                Step::Assign { lhs: lhs.into(), rhs: rhs.into(), line, frame: 0 }
            }
            1 => Step::Havoc { var: "z".into(), line, frame: 0 },
            _ => Step::Guard { cond: guard(rng, &["x", "y", "z"]), taken: rng.random_bool(0.5), line, frame: 0 },
        };
        steps.push(step);
        line += 1;
    }
    let frames = if rng.random_bool(0.5) {
        let arg = ["x", "y", "x + 1"][rng.random_range(0..3)];
        steps.push(Step::Bind { arg: arg.into(), param: "b".into(), line, from: 0, to: 1 });
        for _ in 0..rng.random_range(1..=2) {
            line += 1;
            steps.push(Step::Guard { cond: guard(rng, &["b"]), taken: rng.random_bool(0.5), line, frame: 1 });
        }
        steps.push(Step::Sink { var: "b".into(), line: line + 1, frame: 1 });
        vec!["f".to_string(), "g".to_string()]
    } else {
        steps.push(Step::Sink { var: "x".into(), line, frame: 0 });
        vec!["f".to_string()]
    };
    PathInfo { frames, steps }
}

pub fn write_corpus(dir: &Path, files: &[(&str, &str)]) {
    for (name, body) in files {
        std::fs::write(dir.join(name), body).expect("write corpus file");
    }
}

/// A one-hop report with sink and source given as `(file, line)`.
pub fn report(kind: &str, src: (&str, usize), sink: (&str, usize)) -> BugReport {
    let s = ValueRef::new(src.0, src.1, "s", Role::Source);
    let t = ValueRef::new(sink.0, sink.1, "t", Role::Sink);
    BugReport {
        kind: kind.into(),
        message: String::new(),
        source: s.clone(),
        sink: t.clone(),
        hops: vec![
            Hop { value: s, function: "f".into(), frame: 0, link: None },
            Hop { value: t, function: "f".into(), frame: 0, link: Some(Link::Fact) },
        ],
        method: Method::Synthesized,
        audit: Default::default(),
        warnings: vec![],
    }
}

pub fn label(kind: &str, sink: &str, source: Option<&str>) -> BugLabel {
    BugLabel { kind: kind.into(), sink: sink.into(), source: source.map(str::to_string) }
}
