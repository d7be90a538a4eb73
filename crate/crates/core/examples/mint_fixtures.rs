//! Regenerates the committed extractor and validator cassettes.
//!
//! Each session is scripted: faulty replies first, then a correct one, so
//! the recorded sessions have known fix counts. Run with
//! `cargo run -p sinkflow-core --example mint_fixtures`.

use std::sync::Arc;

use sinkflow_core::detectors::builtin_spec;
use sinkflow_core::extractor::{reference_script, synthesize_extractor, EmbeddedRunner, DEFAULT_MAX_FIXES};
use sinkflow_core::feasibility::{encode_path, validate_path, BuiltinProver};
use sinkflow_core::fixtures::{assets_dir, motivating};
use sinkflow_core::llm::{Cassette, Client, ScriptedBackend};
use sinkflow_core::paths::collect_path_info;

/// Extractor fix counts per spec and the faulty rounds that produce them.
fn faulty_rounds(spec_id: &str, reference: &str) -> Vec<String> {
    let drop_rule = |name: &str| {
        let start = reference.find(&format!("rule {name}")).expect("rule present");
        let end = start + reference[start..].find("end\n").expect("rule end") + 4;
        format!("{}{}", &reference[..start], &reference[end..])
    };
    let add_rule = |rule: &str| reference.replace("# END RULES", &format!("{rule}\n# END RULES"));
    match spec_id {
        "dbz.source" => vec![
            drop_rule("zero_declaration"),
            add_rule("rule extreme_constant\n  match variable_declarator\n  where value mentions [\"MIN_VALUE\"]\n  emit name\nend"),
        ],
        "xss.source" => vec![reference.replacen("end\n", "\n", 1)],
        "osci.sink" => vec![drop_rule("process_builder")],
        _ => vec![],
    }
}

fn fence(body: &str, lang: &str) -> String {
    format!("Here is the program.\n```{lang}\n{body}```\n")
}

fn mint_extractors() -> Cassette {
    let mut all = Cassette::new();
    for kind in ["dbz", "xss", "osci"] {
        let d = builtin_spec(kind).expect("builtin");
        for spec in [&d.source, &d.sink] {
            let id = spec.id();
            let reference = reference_script(&id).expect("reference");
            let backend = Arc::new(ScriptedBackend::new());
            let mut replies = faulty_rounds(&id, reference);
            replies.push(reference.to_string());
            for (i, r) in replies.iter().enumerate() {
                let template = if i == 0 { "extractor.synthesize" } else { "extractor.repair" };
                backend.push(template, fence(r, ""));
            }
            let client = Client::new(backend).recording();
            let p = synthesize_extractor(spec, &EmbeddedRunner::default(), &client, DEFAULT_MAX_FIXES).expect("session converges");
            assert_eq!(p.fix_count, replies.len() - 1, "{id}");
            all.merge(&client.recorded().expect("recording")).expect("no conflicts");
            println!("{id}: {} fix(es)", p.fix_count);
        }
    }
    all
}

/// Broken constraint programs, one per kind of prover error.
const BROKEN: [&str; 4] = [
    "(assert (> (abs b) 1))\n",
    "(declare-const b_1_1 Int)\n(assert (> (abs b_1_1) true))\n",
    "(declare-const x_0_1 Int)\n(assert (= x_0_1 0)\n",
    "(declare-fun f (Int) Int)\n(assert (= (f 1) 0))\n",
];

fn mint_validator(errors: usize) -> Cassette {
    let m = motivating();
    let info = collect_path_info(&m.infeasible, &m.index, Some("{var} == 0")).expect("path info");
    let good = encode_path(&info).expect("encodes");
    let backend = Arc::new(ScriptedBackend::new());
    let reply = |round: usize| if round < errors { fence(BROKEN[round], "smt2") } else { fence(&good, "smt2") };
    backend.push("validator.synthesize", reply(0));
    for round in 1..=errors.min(3) {
        backend.push("validator.repair", reply(round));
    }
    if errors > 3 {
        backend.push("feasibility.direct", "With b = 0 the guard |b| > 1 is false, so line 4 is unreachable.\nAnswer: No");
    }
    let client = Client::new(backend).recording();
    let v = validate_path(&m.infeasible, &info, &client, &BuiltinProver).expect("validates");
    assert_eq!(v.fix_count, errors.min(3));
    assert!(!v.feasible);
    println!("validator with {errors} error(s): {:?}, {} fix(es)", v.method, v.fix_count);
    client.recorded().expect("recording")
}

fn main() {
    let dir = assets_dir().join("cassettes");
    std::fs::create_dir_all(&dir).expect("cassette dir");
    mint_extractors().save(&dir.join("extractors.cassette.json")).expect("write");
    for k in 0..=4 {
        mint_validator(k).save(&dir.join(format!("validator_faults_{k}.cassette.json"))).expect("write");
    }
}
