use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use crate::feasibility::encode_path;
use crate::llm::{Backend, ChatRequest, ChatResponse, LlmError};
use crate::paths::PathInfo;

use super::{oracle_closure, oracle_feasible, parse_numbered, DEFAULT_DOMAIN};

/// Answers prompts from ground truth instead of a model.
///
/// Fact queries are answered from the def-use closure of the numbered
/// function text, direct feasibility questions by enumeration, validator
/// prompts with the reference path encoding and extractor prompts with a
/// reference script looked up by the `spec_id` binding.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    scripts: BTreeMap<String, String>,
    domain: RangeInclusive<i64>,
}

impl Default for OracleBackend {
    fn default() -> Self {
        OracleBackend { scripts: BTreeMap::new(), domain: DEFAULT_DOMAIN }
    }
}

impl OracleBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reference extractor scripts by spec id.
    pub fn with_scripts(mut self, scripts: BTreeMap<String, String>) -> Self {
        self.scripts.extend(scripts);
        self
    }

    pub fn with_domain(mut self, domain: RangeInclusive<i64>) -> Self {
        self.domain = domain;
        self
    }

    fn binding<'a>(req: &'a ChatRequest, name: &str) -> Result<&'a str, LlmError> {
        req.bindings
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| LlmError::Backend(format!("oracle needs the `{name}` binding for `{}`", req.template_id)))
    }

    fn path_info(req: &ChatRequest) -> Result<PathInfo, LlmError> {
        PathInfo::from_json(Self::binding(req, "path_json")?).map_err(|e| LlmError::Backend(format!("path_json: {e}")))
    }

    fn fact(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let code = Self::binding(req, "code")?;
        let f = parse_numbered(code).map_err(|e| LlmError::Backend(e.to_string()))?;
        let closure = oracle_closure(&f);
        let line = |name: &str| -> Result<usize, LlmError> {
            Self::binding(req, name)?.parse().map_err(|_| LlmError::Backend(format!("bad `{name}` binding")))
        };
        let from = (Self::binding(req, "start_var")?, line("start_line")?);
        let to = (Self::binding(req, "end_var")?, line("end_line")?);
        let a = format!("{}@{}", from.0, from.1);
        let b = format!("{}@{}", to.0, to.1);
        Ok(match closure.witness(from, to) {
            Some(chain) => {
                let mut text = String::new();
                for w in chain.windows(2) {
                    text.push_str(&format!("{}@{} flows to {}@{}. ", w[0].0, w[0].1, w[1].0, w[1].1));
                }
                format!("{text}So {a} reaches {b}.\nAnswer: Yes")
            }
            None => format!("No chain of assignments or uses leads from {a} to {b}.\nAnswer: No"),
        })
    }

    fn direct(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let info = Self::path_info(req)?;
        Ok(match oracle_feasible(&info, self.domain.clone()) {
            Ok(true) => "Some input satisfies every branch condition in order.\nAnswer: Yes".into(),
            Ok(false) => "No input satisfies every branch condition in order.\nAnswer: No".into(),
            Err(e) => format!("The conditions cannot be checked exhaustively: {e}."),
        })
    }

    fn validator(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let info = Self::path_info(req)?;
        Ok(match encode_path(&info) {
            Ok(body) => format!("```smt2\n{body}```"),
            Err(e) => format!("The path cannot be encoded: {e}."),
        })
    }

    fn extractor(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let id = Self::binding(req, "spec_id")?;
        match self.scripts.get(id) {
            Some(script) => Ok(format!("```\n{script}```")),
            None => Err(LlmError::Backend(format!("no reference extractor for `{id}`"))),
        }
    }
}

impl Backend for OracleBackend {
    fn tag(&self) -> &'static str {
        "oracle"
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let text = match req.template_id.as_str() {
            "summarize.fact" | "summarize.fact_retry" => self.fact(req)?,
            "feasibility.direct" => self.direct(req)?,
            "validator.synthesize" | "validator.repair" => self.validator(req)?,
            "extractor.synthesize" | "extractor.repair" => self.extractor(req)?,
            other => return Err(LlmError::Backend(format!("oracle cannot answer `{other}`"))),
        };
        Ok(ChatResponse::offline(&text, self.tag()))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fixtures::MOTIVATING_EXAMPLE;
    use crate::llm::{bindings, parse_yes_no, Client};
    use crate::paths::Step;

    fn numbered(source: &str, from: usize, to: usize) -> String {
        source.lines().enumerate().filter(|(i, _)| (from..=to).contains(&(i + 1))).map(|(i, l)| format!("{}: {l}\n", i + 1)).collect()
    }

    fn ask(client: &Client, code: &str, a: (&str, usize), b: (&str, usize)) -> Option<bool> {
        let resp = client
            .complete(
                "summarize.fact",
                bindings([
                    ("function_name", "run".into()),
                    ("code", code.to_string()),
                    ("start", format!("{}@{}", a.0, a.1)),
                    ("start_var", a.0.into()),
                    ("start_line", a.1.to_string()),
                    ("end", format!("{}@{}", b.0, b.1)),
                    ("end_var", b.0.into()),
                    ("end_line", b.1.to_string()),
                ]),
            )
            .unwrap();
        parse_yes_no(&resp.text)
    }

    #[test]
    fn answers_fact_queries() {
        let client = Client::new(Arc::new(OracleBackend::new()));
        let run = numbered(MOTIVATING_EXAMPLE, 8, 15);
        assert_eq!(ask(&client, &run, ("x", 9), ("z", 13)), Some(true));
        assert_eq!(ask(&client, &run, ("z", 12), ("r", 13)), Some(false));
        let scale = numbered(MOTIVATING_EXAMPLE, 2, 6);
        assert_eq!(ask(&client, &scale, ("b", 2), ("b", 4)), Some(true));
    }

    #[test]
    fn answers_direct_and_validator_prompts() {
        let info = PathInfo {
            frames: vec!["run".into(), "scale".into()],
            steps: vec![
                Step::Source { var: "x".into(), line: 9, frame: 0, assume: Some("x == 0".into()) },
                Step::Bind { arg: "x".into(), param: "b".into(), line: 13, from: 0, to: 1 },
                Step::Guard { cond: "Math.abs(b) > 1".into(), taken: true, line: 3, frame: 1 },
            ],
        };
        let client = Client::new(Arc::new(OracleBackend::new()));
        let b = bindings([("path_info", info.render()), ("path_json", info.to_json())]);
        let resp = client.complete("feasibility.direct", b.clone()).unwrap();
        assert_eq!(parse_yes_no(&resp.text), Some(false));
        let guard_free = PathInfo { frames: vec!["f".into()], steps: vec![] };
        let resp = client
            .complete("feasibility.direct", bindings([("path_info", String::new()), ("path_json", guard_free.to_json())]))
            .unwrap();
        assert_eq!(parse_yes_no(&resp.text), Some(true));
        let mut b = b;
        b.insert("skeleton_head".into(), String::new());
        b.insert("skeleton_tail".into(), String::new());
        let resp = client.complete("validator.synthesize", b).unwrap();
        assert!(resp.text.contains("(assert (> (abs b_1_1) 1))"));
    }

    #[test]
    fn unknown_templates_and_missing_scripts_are_errors() {
        let o = OracleBackend::new();
        let req = ChatRequest {
            template_id: "extractor.synthesize".into(),
            bindings: bindings([("spec_id", "dbz.source".into())]),
            prompt: String::new(),
            model: String::new(),
            temperature: 0.0,
        };
        assert!(matches!(o.complete(&req), Err(LlmError::Backend(_))));
        let o = o.with_scripts(BTreeMap::from([("dbz.source".to_string(), "rule a\nend\n".to_string())]));
        assert!(o.complete(&req).unwrap().text.contains("rule a"));
    }
}
