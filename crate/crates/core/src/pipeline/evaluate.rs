use std::collections::BTreeSet;
use std::path::Path;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::report::{BugReport, ReportDocument};
use super::PipelineError;

/// A labeled location, `file:line`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub file: String,
    pub line: usize,
}

impl Site {
    pub fn parse(text: &str) -> Result<Site, String> {
        let (file, line) = text.rsplit_once(':').ok_or_else(|| format!("expected `file:line`, got `{text}`"))?;
        let line = line.trim().parse::<usize>().map_err(|_| format!("bad line number in `{text}`"))?;
        if file.is_empty() || line == 0 {
            return Err(format!("expected `file:line`, got `{text}`"));
        }
        Ok(Site { file: file.to_string(), line })
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugLabel {
    pub kind: String,
    pub sink: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(default, rename = "bug")]
    pub bugs: Vec<BugLabel>,
    /// Labeled sources for scoring extraction alone, `file:line`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sinks: Option<Vec<String>>,
}

impl GroundTruth {
    pub fn parse(text: &str) -> Result<GroundTruth, PipelineError> {
        let t: GroundTruth = toml::from_str(text).map_err(|e| PipelineError::Input(format!("truth file: {e}")))?;
        for b in &t.bugs {
            Site::parse(&b.sink).map_err(PipelineError::Input)?;
            if let Some(s) = &b.source {
                Site::parse(s).map_err(PipelineError::Input)?;
            }
        }
        for s in t.sources.iter().chain(&t.sinks).flatten() {
            Site::parse(s).map_err(PipelineError::Input)?;
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<GroundTruth, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
        GroundTruth::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("truth serializes")
    }

    /// Every label names an existing line of a corpus file.
    pub fn check(&self, corpus: &Path) -> Result<(), PipelineError> {
        let sites = self
            .bugs
            .iter()
            .flat_map(|b| std::iter::once(b.sink.as_str()).chain(b.source.as_deref()))
            .chain(self.sources.iter().chain(&self.sinks).flatten().map(String::as_str));
        for text in sites {
            let site = Site::parse(text).map_err(PipelineError::Input)?;
            let body = std::fs::read_to_string(corpus.join(&site.file))
                .map_err(|e| PipelineError::Input(format!("label {site}: {e}")))?;
            if site.line > body.lines().count() {
                return Err(PipelineError::Input(format!("label {site} is past the end of the file")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Labels found by at least one report.
    pub tp: usize,
    /// Reports matching no label.
    pub fp: usize,
    /// Labels no report found.
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Reports matching only labels another report already found.
    #[serde(default)]
    pub duplicates: usize,
}

fn ratio(num: usize, den: usize) -> Ratio<u64> {
    if den == 0 {
        Ratio::from_integer(1)
    } else {
        Ratio::new(num as u64, den as u64)
    }
}

/// Harmonic mean, zero when both are zero.
pub fn f1(precision: Ratio<u64>, recall: Ratio<u64>) -> Ratio<u64> {
    let sum = precision + recall;
    if sum.is_zero() {
        Ratio::zero()
    } else {
        Ratio::from_integer(2) * precision * recall / sum
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Metrics {
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        let as_f64 = |x: Ratio<u64>| x.to_f64().expect("finite");
        Metrics { precision: as_f64(p), recall: as_f64(r), f1: as_f64(f1(p, r)), tp, fp, fn_, duplicates: 0 }
    }
}

fn report_matches(r: &BugReport, label: &BugLabel) -> bool {
    let sink = Site { file: r.sink.unit.clone(), line: r.sink.line };
    let source = Site { file: r.source.unit.clone(), line: r.source.line };
    r.kind.eq_ignore_ascii_case(&label.kind)
        && Site::parse(&label.sink).is_ok_and(|s| s == sink)
        && label.source.as_deref().is_none_or(|s| Site::parse(s).is_ok_and(|s| s == source))
}

/// A report matches a label when kind and sink site agree and, if the
/// label names a source, the source site too.
pub fn evaluate(reports: &[BugReport], truth: &GroundTruth) -> Metrics {
    let mut found = BTreeSet::new();
    let mut fp = 0;
    let mut hits = 0;
    for r in reports {
        let matched: Vec<usize> = truth.bugs.iter().enumerate().filter(|(_, l)| report_matches(r, l)).map(|(i, _)| i).collect();
        if matched.is_empty() {
            fp += 1;
        } else {
            hits += 1;
            found.extend(matched);
        }
    }
    let tp = found.len();
    let mut m = Metrics::from_counts(tp, fp, truth.bugs.len() - tp);
    m.duplicates = hits - hits.min(tp);
    m
}

fn site_metrics(found: &BTreeSet<Site>, labels: &[String]) -> Metrics {
    let labels: BTreeSet<Site> = labels.iter().filter_map(|s| Site::parse(s).ok()).collect();
    let tp = found.intersection(&labels).count();
    Metrics::from_counts(tp, found.len() - tp, labels.len() - tp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub bugs: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sinks: Option<Metrics>,
}

/// Scores the reports and, where the truth labels them, the extracted
/// sources and sinks by site.
pub fn evaluate_document(doc: &ReportDocument, truth: &GroundTruth) -> Evaluation {
    let sites = |role_sink: bool| -> BTreeSet<Site> {
        doc.log
            .detectors
            .iter()
            .flat_map(|d| if role_sink { &d.sinks } else { &d.sources })
            .map(|v| Site { file: v.unit.clone(), line: v.line })
            .collect()
    };
    Evaluation {
        bugs: evaluate(&doc.reports, truth),
        sources: truth.sources.as_ref().map(|l| site_metrics(&sites(false), l)),
        sinks: truth.sinks.as_ref().map(|l| site_metrics(&sites(true), l)),
    }
}
