//! End-to-end orchestration: extraction, summarization, stitching,
//! feasibility and reporting, plus evaluation and corpus preprocessing.

mod evaluate;
mod preprocess;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::detectors::{builtin_spec, load_custom_spec, restriction_check, DetectorError, DetectorSpec};
use crate::extractor::{run_extractor, synthesize_extractor, EmbeddedRunner, ExtractorError, ExtractorSpec, ProcessRunner, ScriptRunner};
use crate::feasibility::{validate_path_capped, BuiltinProver, ExternalProver, FeasibilityError, Method, Prover, MAX_VALIDATOR_FIXES};
use crate::llm::{Backend, Cassette, CassetteBackend, Client, LiveBackend, LiveConfig, LlmError};
use crate::oracle::OracleBackend;
use crate::paths::{collect_path_info, stitch, CfgIndex, DataflowPath, Link, StitchConfig};
use crate::summarizer::{candidate_pairs, FunctionSummary, SummaryStore};
use crate::syntax::{call_graph, parse_unit, Language, Role, SyntaxTree, ValueKey, ValueRef};

pub use evaluate::{evaluate, evaluate_document, f1, BugLabel, Evaluation, GroundTruth, Metrics, Site};
pub use preprocess::{preprocess_corpus, PreprocessLog, DEFAULT_BLOCKLIST};
pub use report::{Audit, BugReport, DetectorLog, ExtractorLog, ReportDocument, RunLog, ValidatorLog, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Extraction,
    Summarization,
    Stitching,
    Feasibility,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Extraction => "extraction",
            Phase::Summarization => "summarization",
            Phase::Stitching => "stitching",
            Phase::Feasibility => "feasibility",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("{phase} phase failed: {message}")]
    Phase { phase: Phase, message: String },
    #[error("{phase} phase: model backend failed: {source}")]
    Backend { phase: Phase, source: LlmError },
}

impl PipelineError {
    /// Process exit code: 1 usage, 2 phase failure, 3 backend failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Input(_) | PipelineError::Detector(_) => 1,
            PipelineError::Phase { .. } => 2,
            PipelineError::Backend { .. } => 3,
        }
    }

    fn backend(phase: Phase, e: LlmError) -> Self {
        PipelineError::Backend { phase, source: e }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Builtin(String),
    Custom(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    Cassette,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProverKind {
    Builtin,
    External(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunnerKind {
    Embedded,
    /// A program that takes the script path as its last argument.
    Process { program: PathBuf, args: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub target: Target,
    pub backend: BackendKind,
    pub model: String,
    pub temperature: f64,
    pub max_extractor_fixes: usize,
    pub max_validator_fixes: usize,
    pub stitch: StitchConfig,
    pub out: Option<PathBuf>,
    pub cassette: Option<PathBuf>,
    /// Write every exchange of the run to `cassette`.
    pub record: bool,
    /// Use the bundled reference extractor when synthesis fails.
    pub extractor_fallback: bool,
    pub prover: ProverKind,
    pub runner: RunnerKind,
}

impl RunConfig {
    pub fn new(corpus: impl Into<PathBuf>, target: Target, backend: BackendKind) -> Self {
        RunConfig {
            corpus: corpus.into(),
            target,
            backend,
            model: crate::llm::DEFAULT_MODEL.into(),
            temperature: 0.0,
            max_extractor_fixes: crate::extractor::DEFAULT_MAX_FIXES,
            max_validator_fixes: MAX_VALIDATOR_FIXES,
            stitch: StitchConfig::default(),
            out: None,
            cassette: None,
            record: false,
            extractor_fallback: false,
            prover: ProverKind::Builtin,
            runner: RunnerKind::Embedded,
        }
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must lie in [0, 2]");
        }
        if self.max_validator_fixes > MAX_VALIDATOR_FIXES {
            return bad("the validator fix cap cannot exceed 3");
        }
        if self.backend == BackendKind::Cassette && self.cassette.is_none() {
            return bad("the cassette backend needs --cassette");
        }
        if self.record && self.cassette.is_none() {
            return bad("recording needs --cassette");
        }
        if self.record && self.backend == BackendKind::Cassette {
            return bad("cannot record while replaying a cassette");
        }
        if self.stitch.max_depth == 0 || self.stitch.max_paths_per_pair == 0 {
            return bad("stitch bounds must be positive");
        }
        Ok(())
    }

    pub fn detectors(&self) -> Result<Vec<DetectorSpec>, PipelineError> {
        Ok(match &self.target {
            Target::Builtin(kind) => vec![builtin_spec(kind)?],
            Target::Custom(path) => load_custom_spec(path)?,
        })
    }
}

/// Limits of one analysis independent of where its inputs came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisOptions {
    pub max_extractor_fixes: usize,
    pub max_validator_fixes: usize,
    pub stitch: StitchConfig,
    pub extractor_fallback: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            max_extractor_fixes: crate::extractor::DEFAULT_MAX_FIXES,
            max_validator_fixes: MAX_VALIDATOR_FIXES,
            stitch: StitchConfig::default(),
            extractor_fallback: false,
        }
    }
}

pub struct Session<'a> {
    pub client: &'a Client,
    pub prover: &'a dyn Prover,
    pub runner: &'a dyn ScriptRunner,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub reports: Vec<BugReport>,
    pub log: RunLog,
}

impl RunOutput {
    pub fn document(&self) -> ReportDocument {
        ReportDocument::new(self.reports.clone(), self.log.clone())
    }
}

/// Parses every source file under `root`; paths in the trees are relative
/// to it. Files the front-end rejects are skipped with a warning.
pub fn load_corpus(root: &Path) -> Result<(Vec<SyntaxTree>, Vec<String>), PipelineError> {
    if !root.is_dir() {
        return Err(PipelineError::Input(format!("corpus {} is not a directory", root.display())));
    }
    let mut trees = Vec::new();
    let mut warnings = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| PipelineError::Input(e.to_string()))?;
        let ext = entry.path().extension().and_then(|e| e.to_str()).unwrap_or("");
        if !entry.file_type().is_file() || !Language::Java.extensions().contains(&ext) {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
        let bytes = std::fs::read(entry.path()).map_err(|e| PipelineError::Input(format!("{rel}: {e}")))?;
        match parse_unit(&rel, &bytes) {
            Ok(t) => trees.push(t),
            Err(e) => warnings.push(format!("{rel}: skipped: {e}")),
        }
    }
    Ok((trees, warnings))
}

fn extract(
    spec: &ExtractorSpec,
    detector: &DetectorSpec,
    trees: &[SyntaxTree],
    session: &Session<'_>,
    options: &AnalysisOptions,
    log: &mut DetectorLog,
    warnings: &mut Vec<String>,
) -> Result<Vec<ValueRef>, PipelineError> {
    let (text, entry) = match synthesize_extractor(spec, session.runner, session.client, options.max_extractor_fixes) {
        Ok(p) => {
            let entry = ExtractorLog { spec_id: p.spec_id.clone(), fix_count: p.fix_count, validated: p.validated, fallback: false };
            (p.text, entry)
        }
        Err(ExtractorError::SynthesisFailed { spec_id, fix_count, summary, .. }) if options.extractor_fallback => {
            let text = detector.reference_scripts().remove(&spec_id).ok_or_else(|| PipelineError::Phase {
                phase: Phase::Extraction,
                message: format!("{spec_id}: synthesis failed ({summary}) and no reference extractor exists"),
            })?;
            warnings.push(format!("{spec_id}: synthesis failed after {fix_count} fixes ({summary}); using the reference extractor"));
            (text, ExtractorLog { spec_id, fix_count, validated: false, fallback: true })
        }
        Err(ExtractorError::Llm(e)) => return Err(PipelineError::backend(Phase::Extraction, e)),
        Err(e) => return Err(PipelineError::Phase { phase: Phase::Extraction, message: e.to_string() }),
    };
    log.extractors.push(entry);
    let mut hits = BTreeSet::new();
    for tree in trees {
        match run_extractor(&text, tree, spec.role, session.runner) {
            Ok(refs) => hits.extend(refs),
            Err(e) => warnings.push(format!("{}: {} extractor: {e}", tree.path(), spec.id())),
        }
    }
    Ok(hits.into_iter().collect())
}

fn exchanges_for(path: &DataflowPath, summaries: &BTreeMap<String, FunctionSummary>) -> Vec<String> {
    let mut out = Vec::new();
    for w in path.hops.windows(2) {
        if w[1].link != Some(Link::Fact) {
            continue;
        }
        let (a, b) = (w[0].value.key(), w[1].value.key());
        if let Some(f) = summaries.get(&w[0].function).and_then(|s| s.facts.iter().find(|f| f.start.key() == a && f.end.key() == b)) {
            out.push(f.exchange.clone());
        }
    }
    out
}

fn analyze_one(
    detector: &DetectorSpec,
    trees: &[SyntaxTree],
    index: &CfgIndex,
    session: &Session<'_>,
    options: &AnalysisOptions,
    warnings: &mut Vec<String>,
) -> Result<(Vec<BugReport>, DetectorLog), PipelineError> {
    let mut log = DetectorLog { kind: detector.kind.clone(), ..DetectorLog::default() };
    let sources = extract(&detector.source, detector, trees, session, options, &mut log, warnings)?;
    let sinks = extract(&detector.sink, detector, trees, session, options, &mut log, warnings)?;
    log.sources = sources.iter().map(|v| v.with_role(Role::Source)).collect();
    log.sinks = sinks.iter().map(|v| v.with_role(Role::Sink)).collect();

    let by_unit: BTreeMap<&str, &SyntaxTree> = trees.iter().map(|t| (t.path(), t)).collect();
    let mut store = SummaryStore::default();
    let mut summaries = BTreeMap::new();
    if !sources.is_empty() && !sinks.is_empty() {
        for f in index.functions() {
            let Some(tree) = by_unit.get(f.info.unit.as_str()) else { continue };
            let code = tree.numbered_function_text(&f.info);
            let pairs = candidate_pairs(index, &f.info.id, &code, &sources, &sinks);
            if pairs.is_empty() {
                continue;
            }
            log.fact_queries += pairs.len();
            let s = store
                .summarize(&f.info.unit, &code, &detector.kind, &f.info.id, &pairs, session.client)
                .map_err(|e| PipelineError::backend(Phase::Summarization, e))?;
            log.functions_summarized += 1;
            log.facts += s.facts.len();
            summaries.insert(f.info.id.clone(), s);
        }
    }

    let graph = call_graph(trees);
    let stitched = stitch(&summaries, &graph, &sources, &sinks, index, options.stitch);
    warnings.extend(stitched.warnings.iter().cloned());
    log.paths = stitched.paths.len();

    let mut reports: BTreeMap<(ValueKey, ValueKey), BugReport> = BTreeMap::new();
    for path in &stitched.paths {
        let info = match collect_path_info(path, index, detector.assume.as_deref()) {
            Ok(i) => i,
            Err(e) => {
                warnings.push(format!("{}: path information unavailable: {e}; path dropped", path.notation()));
                continue;
            }
        };
        let verdict = match validate_path_capped(path, &info, session.client, session.prover, options.max_validator_fixes) {
            Ok(v) => v,
            Err(FeasibilityError::Llm(e)) => return Err(PipelineError::backend(Phase::Feasibility, e)),
        };
        let restriction_holds = restriction_check(&info, detector.restriction);
        log.validations.push(ValidatorLog {
            path_id: path.id(),
            path: path.notation(),
            method: verdict.method,
            fix_count: verdict.fix_count,
            feasible: verdict.feasible,
            restriction_holds,
        });
        warnings.extend(verdict.warnings.iter().cloned());
        if !verdict.feasible || !restriction_holds {
            continue;
        }
        let key = (path.source().key(), path.sink().key());
        reports.entry(key).or_insert_with(|| BugReport {
            kind: detector.kind.clone(),
            message: detector.message_for(&path.source().to_string(), &path.sink().to_string()),
            source: path.source().clone(),
            sink: path.sink().clone(),
            hops: path.hops.clone(),
            method: verdict.method,
            audit: Audit {
                fact_exchanges: exchanges_for(path, &summaries),
                solver_program: (verdict.method == Method::Synthesized).then(|| path.id()),
                validator_fixes: verdict.fix_count,
            },
            warnings: verdict.warnings.clone(),
        });
    }
    Ok((reports.into_values().collect(), log))
}

/// Runs every detector over the parsed corpus.
pub fn analyze(trees: &[SyntaxTree], detectors: &[DetectorSpec], session: &Session<'_>, options: &AnalysisOptions) -> Result<RunOutput, PipelineError> {
    let mut log = RunLog {
        backend: session.client.backend_tag().to_string(),
        model: session.client.model().to_string(),
        files: trees.len(),
        recovered_files: trees.iter().filter(|t| t.has_errors()).map(|t| t.path().to_string()).collect(),
        ..RunLog::default()
    };
    let mut reports = Vec::new();
    if !trees.is_empty() {
        let (index, cfg_errors) = CfgIndex::build(trees);
        log.warnings.extend(cfg_errors.iter().map(|e| e.to_string()));
        for d in detectors {
            let (r, dlog) = analyze_one(d, trees, &index, session, options, &mut log.warnings)?;
            reports.extend(r);
            log.detectors.push(dlog);
        }
    }
    reports.sort_by(|a, b| {
        (&a.sink.unit, a.sink.line, &a.source.unit, a.source.line, &a.kind, &a.sink.identifier, &a.source.identifier).cmp(&(
            &b.sink.unit,
            b.sink.line,
            &b.source.unit,
            b.source.line,
            &b.kind,
            &b.sink.identifier,
            &b.source.identifier,
        ))
    });
    let stats = session.client.stats();
    log.prompts = stats.issued;
    log.cache_hits = stats.cache_hits;
    log.prompt_tokens = stats.prompt_tokens;
    log.completion_tokens = stats.completion_tokens;
    Ok(RunOutput { reports, log })
}

/// Builds the backend named by the configuration.
pub fn make_backend(config: &RunConfig, detectors: &[DetectorSpec]) -> Result<Arc<dyn Backend>, PipelineError> {
    Ok(match config.backend {
        BackendKind::Oracle => {
            let scripts = detectors.iter().flat_map(DetectorSpec::reference_scripts).collect();
            Arc::new(OracleBackend::new().with_scripts(scripts))
        }
        BackendKind::Cassette => {
            let path = config.cassette.as_ref().expect("checked");
            let c = Cassette::load(path).map_err(|e| PipelineError::backend(Phase::Extraction, e))?;
            Arc::new(CassetteBackend::new(c))
        }
        BackendKind::Live => {
            let cfg = LiveConfig::from_env().map_err(|e| PipelineError::backend(Phase::Extraction, e))?;
            Arc::new(LiveBackend::new(cfg).map_err(|e| PipelineError::backend(Phase::Extraction, e))?)
        }
    })
}

/// Loads the corpus, runs the analysis and writes the report and, when
/// recording, the cassette.
pub fn run(config: &RunConfig) -> Result<RunOutput, PipelineError> {
    config.check()?;
    let detectors = config.detectors()?;
    let (trees, parse_warnings) = load_corpus(&config.corpus)?;
    let backend = make_backend(config, &detectors)?;
    let mut client = Client::new(backend).with_model(config.model.clone()).with_temperature(config.temperature);
    if config.record {
        client = client.recording();
    }
    let prover: Box<dyn Prover> = match &config.prover {
        ProverKind::Builtin => Box::new(BuiltinProver),
        ProverKind::External(p) => Box::new(ExternalProver::z3(p.clone())),
    };
    let runner: Box<dyn ScriptRunner> = match &config.runner {
        RunnerKind::Embedded => Box::new(EmbeddedRunner::default()),
        RunnerKind::Process { program, args } => Box::new(ProcessRunner::new(program.clone(), args.clone())),
    };
    let options = AnalysisOptions {
        max_extractor_fixes: config.max_extractor_fixes,
        max_validator_fixes: config.max_validator_fixes,
        stitch: config.stitch,
        extractor_fallback: config.extractor_fallback,
    };
    let session = Session { client: &client, prover: prover.as_ref(), runner: runner.as_ref() };
    let result = analyze(&trees, &detectors, &session, &options);
    if config.record {
        let path = config.cassette.as_ref().expect("checked");
        let mut cassette = if path.exists() { Cassette::load(path).unwrap_or_default() } else { Cassette::new() };
        cassette
            .merge(&client.recorded().expect("recording client"))
            .and_then(|()| cassette.save(path))
            .map_err(|e| PipelineError::Input(format!("cannot write cassette {}: {e}", path.display())))?;
    }
    let mut out = result?;
    let mut warnings = parse_warnings;
    warnings.append(&mut out.log.warnings);
    out.log.warnings = warnings;
    if let Some(path) = &config.out {
        std::fs::write(path, out.document().to_json())
            .map_err(|e| PipelineError::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::MOTIVATING_EXAMPLE;

    fn motivating_corpus() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("MotivatingExample.java"), MOTIVATING_EXAMPLE).unwrap();
        dir
    }

    #[test]
    fn motivating_example_reports_only_the_feasible_divisor() {
        let dir = motivating_corpus();
        let out = run(&RunConfig::new(dir.path(), Target::Builtin("dbz".into()), BackendKind::Oracle)).unwrap();
        let sinks: Vec<usize> = out.reports.iter().map(|r| r.sink.line).collect();
        assert_eq!(sinks, vec![14], "{}", out.document().summary());
        let r = &out.reports[0];
        assert_eq!(r.notation(), "x@9 -> z@13 -> b@2 -> b@5 -> y@13 -> y@14");
        let v = &out.log.detectors[0].validations;
        assert!(v.iter().any(|v| v.path.ends_with("b@4") && !v.feasible));
    }

    #[test]
    fn empty_corpus_issues_no_prompts() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&RunConfig::new(dir.path(), Target::Builtin("dbz".into()), BackendKind::Oracle)).unwrap();
        assert!(out.reports.is_empty());
        assert_eq!(out.log.total_prompts(), 0);
    }

    #[test]
    fn config_checks() {
        let mut c = RunConfig::new("x", Target::Builtin("dbz".into()), BackendKind::Oracle);
        c.temperature = 2.5;
        assert!(matches!(c.check(), Err(PipelineError::Config(_))));
        c.temperature = 0.0;
        c.max_validator_fixes = 4;
        assert!(c.check().is_err());
        c.max_validator_fixes = 2;
        assert!(c.check().is_ok());
        c.backend = BackendKind::Cassette;
        assert!(c.check().is_err());
        assert_eq!(PipelineError::Config(String::new()).exit_code(), 1);
    }
}
