//! Prompt rendering and model access.
//!
//! Every phase talks to models through [`Client::complete`] with a template
//! id and a binding map. The client renders the bundled template, consults
//! its content-addressed cache, forwards misses to a [`Backend`] and can
//! record each exchange into a [`Cassette`].

mod cassette;
mod live;
mod template;

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{fingerprint, Cassette, CassetteBackend, EntryMeta};
pub use live::{LiveBackend, LiveConfig};
pub use template::{parse_code_block, parse_yes_no, template, templates, AnswerGrammar, FewShot, PromptTemplate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("template error: {0}")]
    Template(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}`: no binding for placeholder `{placeholder}`")]
    MissingBinding { template: String, placeholder: String },
    #[error("unrecorded exchange {fingerprint} (template `{template}`)")]
    Unrecorded { fingerprint: String, template: String },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("fingerprint {fingerprint} already recorded with a different response")]
    RecordConflict { fingerprint: String },
    #[error("cassette: {0}")]
    Cassette(String),
}

impl LlmError {
    /// Errors that make continuing the run meaningless (as opposed to a
    /// single bad answer).
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            LlmError::Unrecorded { .. } | LlmError::Transport { .. } | LlmError::RecordConflict { .. } | LlmError::Cassette(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub template_id: String,
    pub bindings: BTreeMap<String, String>,
    /// Rendered prompt text.
    pub prompt: String,
    pub model: String,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub backend: String,
    pub latency_ms: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl ChatResponse {
    pub fn offline(text: &str, backend: &str) -> ChatResponse {
        ChatResponse { text: text.to_string(), backend: backend.to_string(), latency_ms: 0, prompt_tokens: 0, completion_tokens: 0 }
    }
}

pub trait Backend: Send + Sync {
    fn tag(&self) -> &'static str;
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

/// Sends one request to a backend and checks the reply is non-empty.
pub fn complete(req: &ChatRequest, backend: &dyn Backend) -> Result<ChatResponse, LlmError> {
    let start = Instant::now();
    let mut resp = backend.complete(req)?;
    if resp.text.trim().is_empty() {
        return Err(LlmError::EmptyResponse);
    }
    if resp.latency_ms == 0 && backend.tag() == "live" {
        resp.latency_ms = start.elapsed().as_millis() as u64;
    }
    Ok(resp)
}

/// Adds an exchange to a cassette.
pub fn record(req: &ChatRequest, resp: &ChatResponse, cassette: &mut Cassette) -> Result<(), LlmError> {
    cassette.record(req, &resp.text)
}

/// Answers from fixed per-template queues. Used to mint cassettes and to
/// inject faults in tests.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queues: Mutex<BTreeMap<String, VecDeque<String>>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, template_id: &str, text: impl Into<String>) -> &Self {
        self.queues.lock().expect("queue lock").entry(template_id.to_string()).or_default().push_back(text.into());
        self
    }

    pub fn remaining(&self, template_id: &str) -> usize {
        self.queues.lock().expect("queue lock").get(template_id).map_or(0, VecDeque::len)
    }
}

impl Backend for ScriptedBackend {
    fn tag(&self) -> &'static str {
        "scripted"
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut queues = self.queues.lock().expect("queue lock");
        match queues.get_mut(&req.template_id).and_then(VecDeque::pop_front) {
            Some(text) => Ok(ChatResponse::offline(&text, self.tag())),
            None => Err(LlmError::Backend(format!("no scripted reply left for `{}`", req.template_id))),
        }
    }
}

/// Per-template prompt tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptStats {
    /// Requests that reached the backend.
    pub issued: BTreeMap<String, u64>,
    /// Requests answered from the cache.
    pub cache_hits: BTreeMap<String, u64>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl PromptStats {
    pub fn total_issued(&self) -> u64 {
        self.issued.values().sum()
    }

    pub fn issued_for(&self, template_id: &str) -> u64 {
        self.issued.get(template_id).copied().unwrap_or(0)
    }

    /// Prompts issued for templates whose id starts with `prefix`.
    pub fn issued_with_prefix(&self, prefix: &str) -> u64 {
        self.issued.iter().filter(|(k, _)| k.starts_with(prefix)).map(|(_, v)| v).sum()
    }
}

/// Which exchanges the client keeps in its content-addressed cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    Off,
    /// Only extractor synthesis, which is reusable across corpora.
    Synthesis,
    All,
}

impl CachePolicy {
    fn covers(self, template_id: &str) -> bool {
        match self {
            CachePolicy::Off => false,
            CachePolicy::Synthesis => template_id.starts_with("extractor."),
            CachePolicy::All => true,
        }
    }
}

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";

pub struct Client {
    backend: Arc<dyn Backend>,
    model: String,
    temperature: f64,
    policy: CachePolicy,
    cache: Mutex<Cassette>,
    recorder: Option<Mutex<Cassette>>,
    stats: Mutex<PromptStats>,
}

impl Client {
    pub fn new(backend: Arc<dyn Backend>) -> Client {
        Client {
            backend,
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            policy: CachePolicy::Off,
            cache: Mutex::new(Cassette::new()),
            recorder: None,
            stats: Mutex::new(PromptStats::default()),
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Client {
        self.model = model.into();
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Client {
        self.temperature = temperature;
        self
    }

    /// Enables the cache, seeded with previously stored exchanges.
    pub fn with_cache(mut self, policy: CachePolicy, seed: Cassette) -> Client {
        self.policy = policy;
        self.cache = Mutex::new(seed);
        self
    }

    pub fn recording(mut self) -> Client {
        self.recorder = Some(Mutex::new(Cassette::new()));
        self
    }

    pub fn backend_tag(&self) -> &'static str {
        self.backend.tag()
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    /// Renders a bundled template into a request.
    pub fn request(&self, template_id: &str, bindings: BTreeMap<String, String>) -> Result<ChatRequest, LlmError> {
        let prompt = template(template_id)?.render(&bindings)?;
        Ok(ChatRequest { template_id: template_id.to_string(), bindings, prompt, model: self.model.clone(), temperature: self.temperature })
    }

    pub fn complete(&self, template_id: &str, bindings: BTreeMap<String, String>) -> Result<ChatResponse, LlmError> {
        let req = self.request(template_id, bindings)?;
        self.send(&req)
    }

    pub fn send(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let cached = self.policy.covers(&req.template_id);
        if cached {
            let fp = fingerprint(req);
            let hit = self.cache.lock().expect("cache lock").get(&fp).map(str::to_string);
            if let Some(text) = hit {
                *self.stats.lock().expect("stats lock").cache_hits.entry(req.template_id.clone()).or_default() += 1;
                return Ok(ChatResponse::offline(&text, "cache"));
            }
        }
        let resp = complete(req, self.backend.as_ref())?;
        {
            let mut stats = self.stats.lock().expect("stats lock");
            *stats.issued.entry(req.template_id.clone()).or_default() += 1;
            stats.prompt_tokens += resp.prompt_tokens;
            stats.completion_tokens += resp.completion_tokens;
        }
        if cached {
            self.cache.lock().expect("cache lock").record(req, &resp.text)?;
        }
        if let Some(rec) = &self.recorder {
            rec.lock().expect("recorder lock").record(req, &resp.text)?;
        }
        Ok(resp)
    }

    pub fn stats(&self) -> PromptStats {
        self.stats.lock().expect("stats lock").clone()
    }

    pub fn cache_snapshot(&self) -> Cassette {
        self.cache.lock().expect("cache lock").clone()
    }

    pub fn recorded(&self) -> Option<Cassette> {
        self.recorder.as_ref().map(|r| r.lock().expect("recorder lock").clone())
    }
}

pub fn bindings<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted() -> Arc<ScriptedBackend> {
        Arc::new(ScriptedBackend::new())
    }

    #[test]
    fn client_counts_prompts_per_template() {
        let backend = scripted();
        backend.push("feasibility.direct", "Answer: No").push("feasibility.direct", "Answer: Yes");
        let client = Client::new(backend.clone());
        let b = bindings([("path_info", "none".to_string())]);
        assert_eq!(client.complete("feasibility.direct", b.clone()).unwrap().text, "Answer: No");
        assert_eq!(client.complete("feasibility.direct", b).unwrap().text, "Answer: Yes");
        assert_eq!(client.stats().issued_for("feasibility.direct"), 2);
    }

    #[test]
    fn synthesis_cache_answers_repeats() {
        let backend = scripted();
        backend.push("extractor.synthesize", "```\nrule\n```");
        let client = Client::new(backend.clone()).with_cache(CachePolicy::Synthesis, Cassette::new());
        let b = bindings([
            ("bug_kind", "dbz".to_string()),
            ("role", "sink".to_string()),
            ("description", "d".to_string()),
            ("examples", "e".to_string()),
            ("trees", "t".to_string()),
            ("skeleton", "s".to_string()),
        ]);
        client.complete("extractor.synthesize", b.clone()).unwrap();
        let again = client.complete("extractor.synthesize", b).unwrap();
        assert_eq!(again.backend, "cache");
        let stats = client.stats();
        assert_eq!(stats.issued_for("extractor.synthesize"), 1);
        assert_eq!(stats.cache_hits["extractor.synthesize"], 1);
    }

    #[test]
    fn recorder_replays_identically() {
        let backend = scripted();
        backend.push("feasibility.direct", "Answer: No");
        let client = Client::new(backend).recording();
        let b = bindings([("path_info", "p".to_string())]);
        let live = client.complete("feasibility.direct", b.clone()).unwrap();
        let replay = Client::new(Arc::new(CassetteBackend::new(client.recorded().unwrap())));
        assert_eq!(replay.complete("feasibility.direct", b).unwrap().text, live.text);
    }

    #[test]
    fn empty_reply_is_an_error() {
        let backend = scripted();
        backend.push("feasibility.direct", "  ");
        let client = Client::new(backend);
        let err = client.complete("feasibility.direct", bindings([("path_info", "p".to_string())])).unwrap_err();
        assert_eq!(err, LlmError::EmptyResponse);
    }

    #[test]
    fn unknown_template_is_rejected() {
        let client = Client::new(scripted());
        assert!(matches!(client.complete("nope", BTreeMap::new()), Err(LlmError::UnknownTemplate(_))));
    }
}
