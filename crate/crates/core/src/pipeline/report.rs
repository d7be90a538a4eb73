use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::feasibility::Method;
use crate::paths::Hop;
use crate::syntax::ValueRef;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Audit {
    /// Fingerprints of the fact exchanges behind each intra-procedural hop.
    pub fact_exchanges: Vec<String>,
    /// Path id of the constraint program, when one decided the verdict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_program: Option<String>,
    pub validator_fixes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub kind: String,
    pub message: String,
    pub source: ValueRef,
    pub sink: ValueRef,
    pub hops: Vec<Hop>,
    pub method: Method,
    pub audit: Audit,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl BugReport {
    pub fn notation(&self) -> String {
        self.hops.iter().map(|h| h.value.notation()).collect::<Vec<_>>().join(" -> ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorLog {
    pub spec_id: String,
    pub fix_count: usize,
    pub validated: bool,
    /// The bundled reference script replaced a failed synthesis.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorLog {
    pub path_id: String,
    pub path: String,
    pub method: Method,
    pub fix_count: usize,
    pub feasible: bool,
    pub restriction_holds: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorLog {
    pub kind: String,
    pub extractors: Vec<ExtractorLog>,
    pub sources: Vec<ValueRef>,
    pub sinks: Vec<ValueRef>,
    pub functions_summarized: usize,
    pub fact_queries: usize,
    pub facts: usize,
    pub paths: usize,
    pub validations: Vec<ValidatorLog>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLog {
    pub backend: String,
    pub model: String,
    pub files: usize,
    /// Files parsed with error recovery.
    pub recovered_files: Vec<String>,
    pub detectors: Vec<DetectorLog>,
    pub prompts: BTreeMap<String, u64>,
    pub cache_hits: BTreeMap<String, u64>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub warnings: Vec<String>,
}

impl RunLog {
    pub fn total_prompts(&self) -> u64 {
        self.prompts.values().sum()
    }

    /// Fix counts of every extractor by spec id.
    pub fn extractor_fixes(&self) -> BTreeMap<String, usize> {
        self.detectors.iter().flat_map(|d| &d.extractors).map(|e| (e.spec_id.clone(), e.fix_count)).collect()
    }

    /// Validations per fix count, with fallbacks counted separately.
    pub fn validator_histogram(&self) -> (BTreeMap<usize, usize>, usize) {
        let mut hist = BTreeMap::new();
        let mut fallbacks = 0;
        for v in self.detectors.iter().flat_map(|d| &d.validations) {
            if v.method == Method::Fallback {
                fallbacks += 1;
            } else {
                *hist.entry(v.fix_count).or_default() += 1;
            }
        }
        (hist, fallbacks)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub reports: Vec<BugReport>,
    pub log: RunLog,
}

impl ReportDocument {
    pub fn new(reports: Vec<BugReport>, log: RunLog) -> Self {
        ReportDocument { schema_version: SCHEMA_VERSION, reports, log }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<ReportDocument, PipelineError> {
        let doc: ReportDocument = serde_json::from_str(text).map_err(|e| PipelineError::Input(format!("report file: {e}")))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(PipelineError::Input(format!(
                "report schema version {} is not supported (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<ReportDocument, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
        ReportDocument::from_json(&text)
    }

    /// Plain-text summary for the terminal.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            let _ = writeln!(out, "{}:{}: [{}] {}", r.sink.unit, r.sink.line, r.kind, r.message);
            let _ = writeln!(out, "    path: {}", r.notation());
        }
        let log = &self.log;
        let _ = writeln!(out, "{} report(s) in {} file(s); backend {}", self.reports.len(), log.files, log.backend);
        for (id, fixes) in log.extractor_fixes() {
            let _ = writeln!(out, "extractor {id}: {fixes} fix(es)");
        }
        let (hist, fallbacks) = log.validator_histogram();
        if !hist.is_empty() || fallbacks > 0 {
            let parts: Vec<String> = hist.iter().map(|(k, v)| format!("{v} with {k} fix(es)")).collect();
            let _ = writeln!(out, "validators: {}; {fallbacks} fallback(s)", parts.join(", "));
        }
        let _ = writeln!(out, "prompts: {}", log.total_prompts());
        for w in &log.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}
