use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerGrammar {
    /// Free text closed by an `Answer: Yes|No` line.
    YesNo,
    /// A fenced code block.
    Code,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub code: String,
    pub explanation: String,
    /// Final answer line, e.g. `Answer: Yes`.
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub answer: AnswerGrammar,
    pub placeholders: Vec<String>,
    pub preamble: String,
    pub body: String,
    #[serde(default)]
    pub examples: Vec<FewShot>,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([A-Za-z_][A-Za-z0-9_]*)\}\}").expect("static regex"))
}

fn answer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^\W*answer\W*:\W*(yes|no)\b").expect("static regex"))
}

impl PromptTemplate {
    /// Parses a TOML template and checks that the declared placeholders
    /// match the ones used in the text and that every example closes with
    /// an answer line.
    pub fn from_toml(text: &str) -> Result<PromptTemplate, LlmError> {
        let t: PromptTemplate = toml::from_str(text).map_err(|e| LlmError::Template(e.to_string()))?;
        let used = t.used_placeholders();
        let declared: BTreeSet<&str> = t.placeholders.iter().map(String::as_str).collect();
        if let Some(missing) = used.iter().find(|u| !declared.contains(u.as_str())) {
            return Err(LlmError::Template(format!("{}: `{{{{{missing}}}}}` is not declared", t.id)));
        }
        if let Some(unused) = declared.iter().find(|d| !used.contains(**d)) {
            return Err(LlmError::Template(format!("{}: declared placeholder `{unused}` is never used", t.id)));
        }
        for (i, ex) in t.examples.iter().enumerate() {
            if parse_yes_no(&ex.answer).is_none() {
                return Err(LlmError::Template(format!("{}: example {} has no answer marker", t.id, i + 1)));
            }
        }
        Ok(t)
    }

    pub fn used_placeholders(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for text in [&self.preamble, &self.body] {
            for cap in placeholder_re().captures_iter(text) {
                out.insert(cap[1].to_string());
            }
        }
        out
    }

    /// Substitutes bindings verbatim. Unused bindings are ignored; a missing
    /// one is an error naming it.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, LlmError> {
        let mut out = String::new();
        out.push_str(&substitute(&self.id, self.preamble.trim_end(), bindings)?);
        out.push_str("\n\n");
        for (i, ex) in self.examples.iter().enumerate() {
            out.push_str(&format!(
                "Example {}:\n```\n{}```\nExplanation: {}\n{}\n\n",
                i + 1,
                ex.code,
                ex.explanation.trim(),
                ex.answer.trim()
            ));
        }
        out.push_str(&substitute(&self.id, self.body.trim_start(), bindings)?);
        Ok(out)
    }
}

fn substitute(id: &str, text: &str, bindings: &BTreeMap<String, String>) -> Result<String, LlmError> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for cap in placeholder_re().captures_iter(text) {
        let whole = cap.get(0).expect("match");
        let name = &cap[1];
        let value = bindings
            .get(name)
            .ok_or_else(|| LlmError::MissingBinding { template: id.to_string(), placeholder: name.to_string() })?;
        out.push_str(&text[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

/// The last `Answer: Yes|No` marker in a reply, if any.
pub fn parse_yes_no(text: &str) -> Option<bool> {
    answer_re().captures_iter(text).last().map(|c| c[1].eq_ignore_ascii_case("yes"))
}

/// Contents of the last fenced code block, or the whole reply when it has
/// no fence.
pub fn parse_code_block(text: &str) -> Option<String> {
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(block) => blocks.push(block),
                None => current = Some(String::new()),
            }
        } else if let Some(block) = current.as_mut() {
            block.push_str(line);
            block.push('\n');
        }
    }
    match blocks.pop() {
        Some(b) => Some(b),
        None if current.is_none() && !text.trim().is_empty() => Some(format!("{}\n", text.trim_end())),
        None => None,
    }
}

const BUNDLED: &[&str] = &[
    include_str!("../../assets/templates/extractor_synthesize.toml"),
    include_str!("../../assets/templates/extractor_repair.toml"),
    include_str!("../../assets/templates/summarize_fact.toml"),
    include_str!("../../assets/templates/summarize_fact_retry.toml"),
    include_str!("../../assets/templates/validator_synthesize.toml"),
    include_str!("../../assets/templates/validator_repair.toml"),
    include_str!("../../assets/templates/feasibility_direct.toml"),
];

/// The bundled templates by id.
pub fn templates() -> &'static BTreeMap<String, PromptTemplate> {
    static SET: OnceLock<BTreeMap<String, PromptTemplate>> = OnceLock::new();
    SET.get_or_init(|| {
        BUNDLED
            .iter()
            .map(|text| {
                let t = PromptTemplate::from_toml(text).expect("bundled template is valid");
                (t.id.clone(), t)
            })
            .collect()
    })
}

pub fn template(id: &str) -> Result<&'static PromptTemplate, LlmError> {
    templates().get(id).ok_or_else(|| LlmError::UnknownTemplate(id.to_string()))
}
