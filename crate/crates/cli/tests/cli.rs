use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sinkflow_core::fixtures::{assets_dir, MOTIVATING_EXAMPLE, MOTIVATING_FILE};

fn sinkflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sinkflow")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn suite() -> PathBuf {
    assets_dir().join("suite").join("dbz")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&sinkflow(&[])), 1);
    assert_eq!(code(&sinkflow(&["analyze", "--corpus", "x", "--bug", "nope", "--backend", "oracle"])), 1);
    assert_eq!(code(&sinkflow(&["analyze", "--corpus", "x", "--backend", "oracle"])), 1);
    assert_eq!(code(&sinkflow(&["--help"])), 0);
}

#[test]
fn invalid_configuration_exits_one() {
    let corpus = suite();
    let o = sinkflow(&["analyze", "--corpus", s(&corpus), "--bug", "dbz", "--backend", "oracle", "--temperature", "3"]);
    assert_eq!(code(&o), 1);
    let o = sinkflow(&["analyze", "--corpus", s(&corpus), "--bug", "dbz", "--backend", "cassette"]);
    assert_eq!(code(&o), 1);
    let o = sinkflow(&["analyze", "--corpus", s(&corpus), "--bug", "dbz", "--backend", "oracle", "--max-validator-fixes", "4"]);
    assert_eq!(code(&o), 1);
    let o = sinkflow(&["analyze", "--corpus", "/definitely/missing", "--bug", "dbz", "--backend", "oracle"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn failed_extractor_synthesis_exits_two() {
    let tape = assets_dir().join("cassettes").join("extractors.cassette.json");
    let corpus = suite();
    let o = sinkflow(&[
        "analyze", "--corpus", s(&corpus), "--bug", "dbz", "--backend", "cassette", "--cassette", s(&tape),
        "--max-extractor-fixes", "1",
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn backend_failures_exit_three() {
    let corpus = suite();
    let o = sinkflow(&["analyze", "--corpus", s(&corpus), "--bug", "dbz", "--backend", "cassette", "--cassette", "/missing.json"]);
    assert_eq!(code(&o), 3);
    let tape = assets_dir().join("cassettes").join("extractors.cassette.json");
    let o = sinkflow(&["analyze", "--corpus", s(&corpus), "--bug", "dbz", "--backend", "cassette", "--cassette", s(&tape)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unrecorded"));
}

#[test]
fn analyze_motivating_example() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(MOTIVATING_FILE), MOTIVATING_EXAMPLE).unwrap();
    let o = sinkflow(&["analyze", "--corpus", s(dir.path()), "--bug", "dbz", "--backend", "oracle"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains(&format!("{MOTIVATING_FILE}:14:")), "{out}");
    assert!(out.contains("1 report(s)"), "{out}");
}

#[test]
fn process_runner_matches_embedded() {
    let corpus = suite();
    let base = ["analyze", "--corpus", s(&corpus), "--bug", "dbz", "--backend", "oracle"];
    let embedded = sinkflow(&base);
    let process = sinkflow(&[&base[..], &["--runner", "process"]].concat());
    assert_eq!(code(&process), 0, "{}", String::from_utf8_lossy(&process.stderr));
    assert_eq!(stdout(&embedded), stdout(&process));
}

#[test]
fn evaluate_scores_a_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let reports = dir.path().join("reports.json");
    let corpus = suite();
    let tape = assets_dir().join("suite").join("dbz.cassette.json");
    let o = sinkflow(&[
        "analyze", "--corpus", s(&corpus), "--bug", "dbz", "--backend", "cassette", "--cassette", s(&tape), "--out", s(&reports),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let truth = corpus.join("truth.toml");
    let o = sinkflow(&["evaluate", "--reports", s(&reports), "--truth", s(&truth)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("bugs: precision 0.8750 recall 0.8750 f1 0.8750 (tp 7 fp 1 fn 1)"), "{}", stdout(&o));

    let o = sinkflow(&["evaluate", "--reports", s(&reports), "--truth", s(&truth), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["bugs"]["tp"], 7);

    let o = sinkflow(&["evaluate", "--reports", s(&truth), "--truth", s(&truth)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn preprocess_writes_an_obfuscated_copy() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    std::fs::write(
        src.path().join("Bad.java"),
        "class BadCase {\n    // the bug is here\n    int badSink(int x) { return 1 / x; }\n}\n",
    )
    .unwrap();
    let o = sinkflow(&["preprocess", "--in", s(src.path()), "--out", s(out.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.path().join("Bad.java")).unwrap();
    assert!(!text.to_lowercase().contains("bad"), "{text}");
    assert!(!text.contains("//"), "{text}");
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn run_script_reads_the_tree_from_stdin() {
    use std::io::Write;
    use sinkflow_core::extractor::{reference_script, run_extractor, EmbeddedRunner};
    use sinkflow_core::syntax::{parse_unit, sexp, Role};

    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("sink.walk");
    let text = reference_script("dbz.sink").unwrap();
    std::fs::write(&script, text).unwrap();
    let tree = parse_unit(MOTIVATING_FILE, MOTIVATING_EXAMPLE.as_bytes()).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_sinkflow"))
        .args(["run-script", s(&script)])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(sexp::serialize(&tree).as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0);
    let embedded = run_extractor(text, &tree, Role::Sink, &EmbeddedRunner::default()).unwrap();
    let lines: Vec<String> = embedded.iter().map(|v| format!("{}\t{}", v.line, v.identifier)).collect();
    for l in &lines {
        assert!(stdout(&o).contains(l.as_str()), "{l} missing from {}", stdout(&o));
    }
    assert!(!lines.is_empty());

    let missing = sinkflow(&["run-script", "/no/such/script.walk"]);
    assert_eq!(code(&missing), 1);
    let broken = dir.path().join("broken.walk");
    std::fs::write(&broken, "rule (").unwrap();
    assert_eq!(code(&sinkflow(&["run-script", s(&broken)])), 1);
}
