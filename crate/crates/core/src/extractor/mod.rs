//! Source and sink extraction by synthesized tree-walking scripts.
//!
//! A script is requested from the model with the specification, labeled
//! examples and their serialized trees, run on every example, and sent
//! back with the differences until it reproduces the labels exactly or the
//! fix budget runs out.

mod reference;
mod runner;
pub mod script;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{bindings, parse_code_block, Client, LlmError};
use crate::syntax::{parse_unit, sexp, Role, SyntaxTree, ValueRef};

pub use reference::{builtin_extractor_spec, custom_example, custom_reference, reference_script, reference_scripts};
pub use runner::{EmbeddedRunner, ProcessRunner, ScriptRunner};

pub const DEFAULT_MAX_FIXES: usize = 10;

const BEGIN: &str = "# BEGIN RULES";
const END: &str = "# END RULES";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractorError {
    #[error("invalid extractor spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("extractor synthesis for `{spec_id}` failed after {fix_count} fixes: {summary}")]
    SynthesisFailed { spec_id: String, fix_count: usize, summary: String, report: Box<ValidationReport> },
    #[error("extractor run failed: {0}")]
    Execution(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub name: String,
    pub source: String,
    /// Expected `(line, identifier)` hits.
    pub expected: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    /// Bug kind tag such as `dbz`, or a custom pair name.
    pub kind: String,
    pub role: Role,
    pub description: String,
    pub examples: Vec<LabeledExample>,
}

#[derive(Deserialize)]
struct SpecFile {
    kind: String,
    role: String,
    description: String,
    examples: Vec<String>,
    #[serde(default)]
    expected: Vec<String>,
}

impl ExtractorSpec {
    pub fn id(&self) -> String {
        format!("{}.{}", self.kind, self.role.as_str())
    }

    /// Parses the spec file format, reading example files through `load`.
    pub fn from_toml(text: &str, load: &dyn Fn(&str) -> std::io::Result<String>) -> Result<ExtractorSpec, ExtractorError> {
        let f: SpecFile = toml::from_str(text).map_err(|e| ExtractorError::InvalidSpec(e.to_string()))?;
        let role = match f.role.as_str() {
            "source" => Role::Source,
            "sink" => Role::Sink,
            other => return Err(ExtractorError::InvalidSpec(format!("role must be `source` or `sink`, not `{other}`"))),
        };
        let mut examples = Vec::new();
        for name in &f.examples {
            let source = load(name).map_err(|e| ExtractorError::InvalidSpec(format!("example `{name}`: {e}")))?;
            examples.push(LabeledExample { name: name.clone(), source, expected: Vec::new() });
        }
        for triple in &f.expected {
            let mut parts = triple.rsplitn(3, ':');
            let (Some(id), Some(line), Some(file)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(ExtractorError::InvalidSpec(format!("expected `file:line:identifier`, got `{triple}`")));
            };
            let line: usize = line.parse().map_err(|_| ExtractorError::InvalidSpec(format!("bad line in `{triple}`")))?;
            let ex = examples
                .iter_mut()
                .find(|e| e.name == file)
                .ok_or_else(|| ExtractorError::InvalidSpec(format!("`{triple}` names an unlisted example")))?;
            ex.expected.push((line, id.to_string()));
        }
        for ex in &mut examples {
            ex.expected.sort();
            ex.expected.dedup();
        }
        let spec = ExtractorSpec { kind: f.kind, role, description: f.description, examples };
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<ExtractorSpec, ExtractorError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExtractorError::InvalidSpec(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        ExtractorSpec::from_toml(&text, &|name| std::fs::read_to_string(dir.join(name)))
    }

    /// Every example parses and every label names an identifier on an
    /// existing line.
    pub fn check(&self) -> Result<(), ExtractorError> {
        if self.description.trim().is_empty() {
            return Err(ExtractorError::InvalidSpec("empty description".into()));
        }
        if self.examples.is_empty() {
            return Err(ExtractorError::InvalidSpec("no labeled examples".into()));
        }
        for ex in &self.examples {
            let tree = self.parse_example(ex)?;
            for (line, id) in &ex.expected {
                let text = tree.unit().line(*line).ok_or_else(|| {
                    ExtractorError::InvalidSpec(format!("{}: label {line}:{id} is past the end of the file", ex.name))
                })?;
                if !text.contains(id.as_str()) {
                    return Err(ExtractorError::InvalidSpec(format!("{}: line {line} does not mention `{id}`", ex.name)));
                }
            }
        }
        Ok(())
    }

    fn parse_example(&self, ex: &LabeledExample) -> Result<SyntaxTree, ExtractorError> {
        parse_unit(&ex.name, ex.source.as_bytes()).map_err(|e| ExtractorError::InvalidSpec(format!("{}: {e}", ex.name)))
    }

    fn render_examples(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            let _ = writeln!(out, "File {}:\n```", ex.name);
            for (i, l) in ex.source.lines().enumerate() {
                let _ = writeln!(out, "{}: {l}", i + 1);
            }
            out.push_str("```\nExpected hits:\n");
            if ex.expected.is_empty() {
                out.push_str("(none)\n");
            }
            for (line, id) in &ex.expected {
                let _ = writeln!(out, "{line}\t{id}");
            }
            out.push('\n');
        }
        out
    }

    fn render_trees(&self) -> Result<String, ExtractorError> {
        let mut out = String::new();
        for ex in &self.examples {
            let tree = self.parse_example(ex)?;
            let _ = write!(out, "Tree of {}:\n```\n{}```\n", ex.name, sexp::serialize(&tree));
        }
        Ok(out)
    }

    pub fn skeleton(&self) -> String {
        format!(
            "# walk extractor for {} {}s\n# input: syntax tree on stdin; output: line<TAB>identifier per hit\n{BEGIN}\n{END}\n",
            self.kind,
            self.role.as_str()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorProgram {
    pub spec_id: String,
    pub text: String,
    pub fix_count: usize,
    pub validated: bool,
    /// Earlier scripts with the feedback each one received.
    #[serde(default)]
    pub history: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub example: String,
    pub false_positives: Vec<(usize, String)>,
    pub false_negatives: Vec<(usize, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub examples: Vec<ExampleReport>,
    pub pass: bool,
}

impl ValidationReport {
    /// The repair feedback: each error and each wrong or missing hit with
    /// the text of its line.
    pub fn feedback(&self, spec: &ExtractorSpec) -> String {
        let mut out = String::new();
        for r in &self.examples {
            let source = spec.examples.iter().find(|e| e.name == r.example).map(|e| e.source.as_str()).unwrap_or("");
            let line_text = |l: usize| source.lines().nth(l.wrapping_sub(1)).unwrap_or("").trim().to_string();
            if let Some(e) = &r.error {
                let _ = writeln!(out, "{}: the script failed: {e}", r.example);
            }
            for (l, id) in &r.false_positives {
                let _ = writeln!(out, "{}: unexpected hit {l}\t{id} on `{}`", r.example, line_text(*l));
            }
            for (l, id) in &r.false_negatives {
                let _ = writeln!(out, "{}: missing hit {l}\t{id} on `{}`", r.example, line_text(*l));
            }
        }
        if out.is_empty() {
            out.push_str("all examples match\n");
        }
        out
    }

    fn summary(&self) -> String {
        let fp: usize = self.examples.iter().map(|e| e.false_positives.len()).sum();
        let fnn: usize = self.examples.iter().map(|e| e.false_negatives.len()).sum();
        let errors = self.examples.iter().filter(|e| e.error.is_some()).count();
        format!("{fp} false positives, {fnn} false negatives, {errors} failed runs")
    }
}

/// The rule region of a reply: the text between the skeleton markers when
/// present, otherwise the whole script.
fn rules_region(text: &str) -> String {
    match (text.find(BEGIN), text.find(END)) {
        (Some(b), Some(e)) if b < e => format!("{BEGIN}{}{END}\n", &text[b + BEGIN.len()..e]),
        _ => text.to_string(),
    }
}

fn parse_output(out: &str, unit: &str, role: Role) -> Result<Vec<ValueRef>, ExtractorError> {
    let mut refs = BTreeSet::new();
    for (i, raw) in out.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let parsed = raw.split_once('\t').and_then(|(l, id)| Some((l.trim().parse::<usize>().ok()?, id.trim())));
        match parsed {
            Some((line, id)) if line > 0 && !id.is_empty() && !id.contains(char::is_whitespace) => {
                refs.insert((line, id.to_string()));
            }
            _ => return Err(ExtractorError::Execution(format!("output line {}: expected `line<TAB>identifier`, got `{raw}`", i + 1))),
        }
    }
    Ok(refs.into_iter().map(|(line, id)| ValueRef::new(unit, line, id, role)).collect())
}

/// Runs a script over one tree; refs come back sorted by line and
/// identifier without duplicates.
pub fn run_extractor(
    program: &str,
    tree: &SyntaxTree,
    role: Role,
    runner: &dyn ScriptRunner,
) -> Result<Vec<ValueRef>, ExtractorError> {
    if program.trim().is_empty() {
        return Err(ExtractorError::Execution("empty script".into()));
    }
    let out = runner.run(program, &sexp::serialize(tree)).map_err(ExtractorError::Execution)?;
    parse_output(&out, tree.path(), role)
}

/// Compares the script's hits on every example with the labels.
pub fn validate(program: &str, spec: &ExtractorSpec, runner: &dyn ScriptRunner) -> ValidationReport {
    let mut examples = Vec::new();
    for ex in &spec.examples {
        let expected: BTreeSet<(usize, String)> = ex.expected.iter().cloned().collect();
        let got = spec
            .parse_example(ex)
            .map_err(|e| e.to_string())
            .and_then(|tree| run_extractor(program, &tree, spec.role, runner).map_err(|e| e.to_string()));
        let report = match got {
            Ok(refs) => {
                let got: BTreeSet<(usize, String)> = refs.into_iter().map(|r| (r.line, r.identifier)).collect();
                ExampleReport {
                    example: ex.name.clone(),
                    false_positives: got.difference(&expected).cloned().collect(),
                    false_negatives: expected.difference(&got).cloned().collect(),
                    error: None,
                }
            }
            Err(e) => ExampleReport {
                example: ex.name.clone(),
                false_positives: Vec::new(),
                false_negatives: expected.into_iter().collect(),
                error: Some(e),
            },
        };
        examples.push(report);
    }
    let pass = examples.iter().all(|e| e.false_positives.is_empty() && e.false_negatives.is_empty() && e.error.is_none());
    ValidationReport { examples, pass }
}

/// Requests a script, validates it and repairs it with the validation
/// feedback at most `max_fixes` times.
pub fn synthesize_extractor(
    spec: &ExtractorSpec,
    runner: &dyn ScriptRunner,
    client: &Client,
    max_fixes: usize,
) -> Result<ExtractorProgram, ExtractorError> {
    spec.check()?;
    let id = spec.id();
    let base = bindings([
        ("spec_id", id.clone()),
        ("bug_kind", spec.kind.clone()),
        ("role", spec.role.as_str().to_string()),
        ("description", spec.description.clone()),
        ("examples", spec.render_examples()),
        ("trees", spec.render_trees()?),
        ("skeleton", spec.skeleton()),
    ]);
    let mut program = ExtractorProgram { spec_id: id.clone(), text: String::new(), fix_count: 0, validated: false, history: Vec::new() };
    let mut feedback = String::new();
    loop {
        let mut b = base.clone();
        let template = if program.fix_count == 0 {
            "extractor.synthesize"
        } else {
            b.insert("previous_program".into(), program.text.clone());
            b.insert("feedback".into(), feedback.clone());
            "extractor.repair"
        };
        let resp = client.complete(template, b)?;
        let report = match parse_code_block(&resp.text) {
            Some(code) if !code.trim().is_empty() => {
                program.text = rules_region(&code);
                validate(&program.text, spec, runner)
            }
            _ => {
                program.text = resp.text.clone();
                ValidationReport {
                    examples: vec![ExampleReport {
                        example: "(reply)".into(),
                        false_positives: vec![],
                        false_negatives: vec![],
                        error: Some("the reply contains no script".into()),
                    }],
                    pass: false,
                }
            }
        };
        if report.pass {
            program.validated = true;
            return Ok(program);
        }
        feedback = report.feedback(spec);
        if program.fix_count >= max_fixes {
            return Err(ExtractorError::SynthesisFailed {
                spec_id: id,
                fix_count: program.fix_count,
                summary: report.summary(),
                report: Box::new(report),
            });
        }
        program.history.push((program.text.clone(), feedback.clone()));
        program.fix_count += 1;
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::llm::ScriptedBackend;

    fn spec() -> ExtractorSpec {
        let toml = r#"
kind = "dbz"
role = "sink"
description = "divisors"
examples = ["A.java"]
expected = ["A.java:3:b"]
"#;
        ExtractorSpec::from_toml(toml, &|_| Ok("class A {\n int f(int a, int b) {\n return a / b;\n }\n}\n".into())).unwrap()
    }

    const GOOD: &str = "rule d\n match binary_expression\n where operator == \"/\"\n emit right\nend\n";
    const SPURIOUS: &str = "rule d\n match binary_expression\n where operator == \"/\"\n emit each identifier in self\nend\n";

    #[test]
    fn spec_parsing_and_checks() {
        let s = spec();
        assert_eq!(s.id(), "dbz.sink");
        assert_eq!(s.examples[0].expected, vec![(3, "b".into())]);
        let bad = ExtractorSpec::from_toml(
            "kind = \"dbz\"\nrole = \"sink\"\ndescription = \"d\"\nexamples = [\"A.java\"]\nexpected = [\"A.java:9:b\"]",
            &|_| Ok("class A {}\n".into()),
        );
        assert!(matches!(bad, Err(ExtractorError::InvalidSpec(_))));
        let bad = ExtractorSpec::from_toml("kind = \"dbz\"\nrole = \"both\"\ndescription = \"d\"\nexamples = []", &|_| Ok(String::new()));
        assert!(matches!(bad, Err(ExtractorError::InvalidSpec(_))));
    }

    #[test]
    fn validation_reports_exact_differences() {
        let s = spec();
        let r = validate(GOOD, &s, &EmbeddedRunner::default());
        assert!(r.pass);
        let r = validate(SPURIOUS, &s, &EmbeddedRunner::default());
        assert!(!r.pass);
        assert_eq!(r.examples[0].false_positives, vec![(3, "a".to_string())]);
        assert!(r.examples[0].false_negatives.is_empty());
        let r = validate("rule broken\n", &s, &EmbeddedRunner::default());
        assert_eq!(r.examples[0].false_negatives, vec![(3, "b".to_string())]);
        assert!(r.feedback(&s).contains("missing `end`"));
    }

    #[test]
    fn zero_label_example_validates_empty_script() {
        let s = ExtractorSpec {
            kind: "k".into(),
            role: Role::Source,
            description: "nothing".into(),
            examples: vec![LabeledExample { name: "A.java".into(), source: "class A {}\n".into(), expected: vec![] }],
        };
        let b = Arc::new(ScriptedBackend::new());
        b.push("extractor.synthesize", "```\n# BEGIN RULES\nrule none\n match nothing_here\n emit self\nend\n# END RULES\n```");
        let p = synthesize_extractor(&s, &EmbeddedRunner::default(), &Client::new(b), 10).unwrap();
        assert!(p.validated);
        assert_eq!(p.fix_count, 0);
    }

    #[test]
    fn repair_loop_embeds_feedback_and_counts_fixes() {
        let s = spec();
        let b = Arc::new(ScriptedBackend::new());
        b.push("extractor.synthesize", format!("```\n{SPURIOUS}```"));
        b.push("extractor.repair", "no code here");
        b.push("extractor.repair", format!("```\n{GOOD}```"));
        let client = Client::new(b.clone()).recording();
        let p = synthesize_extractor(&s, &EmbeddedRunner::default(), &client, 10).unwrap();
        assert!(p.validated);
        assert_eq!(p.fix_count, 2);
        assert!(p.history[0].1.contains("unexpected hit 3\ta"));
        let rec = client.recorded().unwrap();
        assert_eq!(rec.count_template("extractor.repair"), 2);
    }

    #[test]
    fn budget_exhaustion_fails_with_report() {
        let s = spec();
        let b = Arc::new(ScriptedBackend::new());
        b.push("extractor.synthesize", format!("```\n{SPURIOUS}```"));
        b.push("extractor.repair", format!("```\n{SPURIOUS}```"));
        let e = synthesize_extractor(&s, &EmbeddedRunner::default(), &Client::new(b.clone()), 1).unwrap_err();
        match e {
            ExtractorError::SynthesisFailed { fix_count, report, .. } => {
                assert_eq!(fix_count, 1);
                assert!(!report.pass);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(b.remaining("extractor.repair"), 0);
    }

    #[test]
    fn output_parsing() {
        let refs = parse_output("3\tb\n3\tb\n1\ta\n", "A.java", Role::Sink).unwrap();
        assert_eq!(refs.iter().map(|r| r.notation()).collect::<Vec<_>>(), vec!["a@1", "b@3"]);
        assert!(parse_output("three\tb\n", "A.java", Role::Sink).is_err());
        assert_eq!(rules_region("junk\n# BEGIN RULES\nx\n# END RULES\nmore"), "# BEGIN RULES\nx\n# END RULES\n");
    }
}
