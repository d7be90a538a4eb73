use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, ChatRequest, ChatResponse, LlmError};

/// Stable fingerprint of an exchange: SHA-256 over the canonical JSON of
/// template id, bindings, model and temperature.
pub fn fingerprint(req: &ChatRequest) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        template_id: &'a str,
        bindings: &'a BTreeMap<String, String>,
        model: &'a str,
        temperature: String,
    }
    let canonical = Canonical {
        template_id: &req.template_id,
        bindings: &req.bindings,
        model: &req.model,
        temperature: format!("{:.3}", req.temperature),
    };
    let json = serde_json::to_vec(&canonical).expect("canonical form serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryMeta {
    pub template_id: String,
    /// Free-form tag, usually the extractor spec or path the exchange served.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Recorded exchanges keyed by fingerprint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cassette {
    pub entries: BTreeMap<String, String>,
    #[serde(default)]
    pub meta: BTreeMap<String, EntryMeta>,
}

impl Cassette {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json(text: &str) -> Result<Cassette, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::Cassette(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("cassette serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Cassette, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Cassette(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        std::fs::write(path, self.to_json()).map_err(|e| LlmError::Cassette(format!("{}: {e}", path.display())))
    }

    pub fn get(&self, fingerprint: &str) -> Option<&str> {
        self.entries.get(fingerprint).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stores an exchange. Recording the same text twice is a no-op; a
    /// different text under an existing fingerprint is refused.
    pub fn record(&mut self, req: &ChatRequest, text: &str) -> Result<(), LlmError> {
        let fp = fingerprint(req);
        match self.entries.get(&fp) {
            Some(existing) if existing == text => Ok(()),
            Some(_) => Err(LlmError::RecordConflict { fingerprint: fp }),
            None => {
                self.entries.insert(fp.clone(), text.to_string());
                self.meta.insert(
                    fp,
                    EntryMeta { template_id: req.template_id.clone(), label: req.bindings.get("spec_id").cloned() },
                );
                Ok(())
            }
        }
    }

    /// Adds every entry of `other`, failing on conflicting texts.
    pub fn merge(&mut self, other: &Cassette) -> Result<(), LlmError> {
        for (fp, text) in &other.entries {
            match self.entries.get(fp) {
                Some(existing) if existing != text => {
                    return Err(LlmError::RecordConflict { fingerprint: fp.clone() })
                }
                Some(_) => {}
                None => {
                    self.entries.insert(fp.clone(), text.clone());
                    if let Some(m) = other.meta.get(fp) {
                        self.meta.insert(fp.clone(), m.clone());
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of entries recorded for a template.
    pub fn count_template(&self, template_id: &str) -> usize {
        self.meta.values().filter(|m| m.template_id == template_id).count()
    }

    /// Number of entries recorded for a template under one label.
    pub fn count_labeled(&self, template_id: &str, label: &str) -> usize {
        self.meta.values().filter(|m| m.template_id == template_id && m.label.as_deref() == Some(label)).count()
    }
}

/// Replays recorded exchanges; a miss is an error, never a live call.
#[derive(Debug, Clone)]
pub struct CassetteBackend {
    cassette: Cassette,
}

impl CassetteBackend {
    pub fn new(cassette: Cassette) -> Self {
        CassetteBackend { cassette }
    }
}

impl Backend for CassetteBackend {
    fn tag(&self) -> &'static str {
        "cassette"
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let fp = fingerprint(req);
        match self.cassette.get(&fp) {
            Some(text) => Ok(ChatResponse::offline(text, self.tag())),
            None => Err(LlmError::Unrecorded { fingerprint: fp, template: req.template_id.clone() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(id: &str, v: &str) -> ChatRequest {
        let mut bindings = BTreeMap::new();
        bindings.insert("v".to_string(), v.to_string());
        ChatRequest { template_id: id.into(), bindings, prompt: String::new(), model: "m".into(), temperature: 0.0 }
    }

    #[test]
    fn fingerprint_ignores_rendered_prompt() {
        let a = req("t", "1");
        let mut b = a.clone();
        b.prompt = "different rendering".into();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        assert_ne!(fingerprint(&a), fingerprint(&req("t", "2")));
        assert_eq!(fingerprint(&a).len(), 64);
    }

    #[test]
    fn fingerprint_is_stable() {
        let expected = {
            let json = r#"{"template_id":"t","bindings":{"v":"1"},"model":"m","temperature":"0.000"}"#;
            hex::encode(Sha256::digest(json.as_bytes()))
        };
        assert_eq!(fingerprint(&req("t", "1")), expected);
    }

    #[test]
    fn record_then_replay() {
        let mut c = Cassette::new();
        c.record(&req("t", "1"), "hello").unwrap();
        let backend = CassetteBackend::new(c);
        assert_eq!(backend.complete(&req("t", "1")).unwrap().text, "hello");
    }

    #[test]
    fn miss_is_unrecorded() {
        let backend = CassetteBackend::new(Cassette::new());
        let err = backend.complete(&req("t", "1")).unwrap_err();
        assert!(matches!(err, LlmError::Unrecorded { ref fingerprint, .. } if fingerprint.len() == 64));
    }

    #[test]
    fn distinct_requests_two_entries_and_idempotence() {
        let mut c = Cassette::new();
        c.record(&req("t", "1"), "a").unwrap();
        c.record(&req("t", "2"), "b").unwrap();
        c.record(&req("t", "2"), "b").unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn conflicting_record_is_refused() {
        let mut c = Cassette::new();
        c.record(&req("t", "1"), "a").unwrap();
        assert!(matches!(c.record(&req("t", "1"), "b"), Err(LlmError::RecordConflict { .. })));
    }

    #[test]
    fn json_roundtrip() {
        let mut c = Cassette::new();
        c.record(&req("t", "1"), "a\nb").unwrap();
        assert_eq!(Cassette::from_json(&c.to_json()).unwrap(), c);
    }
}
