mod common;

use std::path::Path;

use common::*;
use sinkflow_core::fixtures::assets_dir;
use sinkflow_core::pipeline::{
    evaluate_document, preprocess_corpus, run, BackendKind, Evaluation, GroundTruth, PipelineError, ReportDocument, RunConfig,
    RunOutput, Target, DEFAULT_BLOCKLIST,
};

fn suite() -> std::path::PathBuf {
    assets_dir().join("suite").join("dbz")
}

fn sites(out: &RunOutput) -> Vec<(String, usize, String, usize)> {
    out.reports.iter().map(|r| (r.source.unit.clone(), r.source.line, r.sink.unit.clone(), r.sink.line)).collect()
}

fn oracle_run(corpus: &Path) -> RunOutput {
    run(&RunConfig::new(corpus, Target::Builtin("dbz".into()), BackendKind::Oracle)).unwrap()
}

#[test]
fn suite_replay_reproduces_committed_metrics() {
    let mut config = RunConfig::new(suite(), Target::Builtin("dbz".into()), BackendKind::Cassette);
    config.cassette = Some(assets_dir().join("suite").join("dbz.cassette.json"));
    let out = run(&config).unwrap();
    let truth = GroundTruth::load(&suite().join("truth.toml")).unwrap();
    let got = evaluate_document(&out.document(), &truth);
    let text = std::fs::read_to_string(assets_dir().join("suite").join("dbz.expected_metrics.json")).unwrap();
    let want: Evaluation = serde_json::from_str(&text).unwrap();
    assert_eq!(got, want);
    assert_eq!(sites(&out), sites(&oracle_run(&suite())));
}

#[test]
fn oracle_runs_are_deterministic() {
    let a = oracle_run(&suite()).document().to_json();
    let b = oracle_run(&suite()).document().to_json();
    assert_eq!(a, b);
}

#[test]
fn recorded_cassette_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let tape = dir.path().join("run.cassette.json");
    let mut record = RunConfig::new(fixture_dir("fixtures/regressions"), Target::Builtin("dbz".into()), BackendKind::Oracle);
    record.cassette = Some(tape.clone());
    record.record = true;
    let first = run(&record).unwrap();
    assert!(tape.is_file());

    let mut replay = RunConfig::new(fixture_dir("fixtures/regressions"), Target::Builtin("dbz".into()), BackendKind::Cassette);
    replay.cassette = Some(tape);
    let second = run(&replay).unwrap();
    assert_eq!(first.reports, second.reports);
    assert_eq!(second.log.backend, "cassette");
}

#[test]
fn unrecorded_prompt_is_a_backend_error() {
    let dir = tempfile::tempdir().unwrap();
    let tape = dir.path().join("empty.cassette.json");
    std::fs::write(&tape, r#"{"entries":{}}"#).unwrap();
    let mut config = RunConfig::new(suite(), Target::Builtin("dbz".into()), BackendKind::Cassette);
    config.cassette = Some(tape);
    let err = run(&config).unwrap_err();
    assert!(matches!(err, PipelineError::Backend { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

const SMS_SPEC: &str = r#"
[[pair]]
name = "sms_leak"
source = { description = "originating address of an incoming message", example = "String SmsMessage.getDisplayOriginatingAddress()" }
sink = { description = "intent passed to a started service", example = "ComponentName Context.startService(Intent service)" }
"#;

const SMS_JAVA: &str = "class Relay {
    void onReceive(SmsMessage msg, Context ctx) {
        String from = msg.getDisplayOriginatingAddress();
        Intent i = new Intent(from);
        ctx.startService(i);
    }

    void quiet(Context ctx) {
        Intent j = new Intent(\"fixed\");
        ctx.startService(j);
    }
}
";

#[test]
fn custom_pair_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("src");
    std::fs::create_dir(&corpus).unwrap();
    write_corpus(&corpus, &[("Relay.java", SMS_JAVA)]);
    let spec = dir.path().join("pairs.toml");
    std::fs::write(&spec, SMS_SPEC).unwrap();
    let out = run(&RunConfig::new(&corpus, Target::Custom(spec), BackendKind::Oracle)).unwrap();
    assert_eq!(sites(&out), [("Relay.java".to_string(), 3, "Relay.java".to_string(), 5)]);
    assert_eq!(out.reports[0].kind, "sms_leak");
}

#[test]
fn preprocessing_keeps_the_findings() {
    let dir = tempfile::tempdir().unwrap();
    let log = preprocess_corpus(&suite(), dir.path(), DEFAULT_BLOCKLIST).unwrap();
    assert!(log.files >= 12);
    let before = oracle_run(&suite());
    let after = oracle_run(dir.path());
    assert_eq!(sites(&before), sites(&after));
}

#[test]
fn report_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("reports.json");
    let mut config = RunConfig::new(suite(), Target::Builtin("dbz".into()), BackendKind::Oracle);
    config.out = Some(out_path.clone());
    let out = run(&config).unwrap();
    assert_eq!(ReportDocument::load(&out_path).unwrap(), out.document());
}
