//! Bug-kind definitions and user-defined source/sink pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::parse_expr;
use crate::extractor::{builtin_extractor_spec, custom_example, custom_reference, reference_script, ExtractorSpec};
use crate::paths::{PathInfo, Step};
use crate::syntax::Role;

pub const BUILTIN_KINDS: &[&str] = &["dbz", "xss", "osci"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DetectorError {
    #[error("unknown bug kind `{0}`; supported kinds are dbz, xss and osci")]
    UnknownKind(String),
    #[error("custom spec: {path}: {message}")]
    Schema { path: String, message: String },
    #[error("cannot read custom spec {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    /// Every link must carry the source value unchanged.
    #[serde(alias = "value-equality")]
    ValueEquality,
    /// Any flow counts.
    Dependence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub kind: String,
    pub source: ExtractorSpec,
    pub sink: ExtractorSpec,
    pub restriction: Restriction,
    /// Uses `{source}` and `{sink}` placeholders.
    pub message: String,
    /// Condition on the source value at entry, `{var}` standing for it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assume: Option<String>,
    /// Method names of a custom pair, `(source, sink)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signatures: Option<(String, String)>,
}

impl DetectorSpec {
    pub fn message_for(&self, source: &str, sink: &str) -> String {
        self.message.replace("{source}", source).replace("{sink}", sink)
    }

    /// Reference scripts keyed by extractor spec id, used by the oracle
    /// backend.
    pub fn reference_scripts(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        match &self.signatures {
            Some((src, snk)) => {
                out.insert(self.source.id(), custom_reference(Role::Source, src));
                out.insert(self.sink.id(), custom_reference(Role::Sink, snk));
            }
            None => {
                for s in [&self.source, &self.sink] {
                    if let Some(text) = reference_script(&s.id()) {
                        out.insert(s.id(), text.to_string());
                    }
                }
            }
        }
        out
    }
}

pub fn builtin_spec(kind: &str) -> Result<DetectorSpec, DetectorError> {
    let kind = kind.to_ascii_lowercase();
    let (restriction, message, assume) = match kind.as_str() {
        "dbz" => (Restriction::ValueEquality, "possible division by zero: {source} reaches divisor {sink}", Some("{var} == 0")),
        "xss" => (Restriction::Dependence, "cross-site scripting: untrusted {source} reaches response output {sink}", None),
        "osci" => (Restriction::Dependence, "OS command injection: untrusted {source} reaches command {sink}", None),
        _ => return Err(DetectorError::UnknownKind(kind)),
    };
    Ok(DetectorSpec {
        source: builtin_extractor_spec(&kind, Role::Source).expect("bundled source spec"),
        sink: builtin_extractor_spec(&kind, Role::Sink).expect("bundled sink spec"),
        kind,
        restriction,
        message: message.to_string(),
        assume: assume.map(str::to_string),
        signatures: None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub description: String,
    /// A method signature such as `String SmsMessage.getDisplayOriginatingAddress()`.
    pub example: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomPair {
    pub name: String,
    pub source: Endpoint,
    pub sink: Endpoint,
    #[serde(default = "default_restriction")]
    pub restriction: Restriction,
}

fn default_restriction() -> Restriction {
    Restriction::Dependence
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomPairSpec {
    pub pair: Vec<CustomPair>,
}

/// The method name in a signature: the identifier right before the
/// parameter list, or the last dotted segment.
pub fn method_name(signature: &str) -> Option<String> {
    let head = signature.split('(').next()?.trim();
    let last = head.rsplit(|c: char| c.is_whitespace() || c == '.' || c == ':').next()?;
    let ok = !last.is_empty() && last.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '$') && !last.starts_with(|c: char| c.is_ascii_digit());
    ok.then(|| last.to_string())
}

impl CustomPairSpec {
    pub fn parse(text: &str) -> Result<CustomPairSpec, DetectorError> {
        let de = toml::Deserializer::new(text);
        let spec: CustomPairSpec = serde_path_to_error::deserialize(de).map_err(|e| DetectorError::Schema {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        spec.check()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("custom spec serializes")
    }

    fn check(&self) -> Result<(), DetectorError> {
        let err = |path: String, message: &str| Err(DetectorError::Schema { path, message: message.to_string() });
        if self.pair.is_empty() {
            return err("pair".into(), "at least one source-sink pair is required");
        }
        let mut names = BTreeSet::new();
        for (i, p) in self.pair.iter().enumerate() {
            if p.name.trim().is_empty() || !p.name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
                return err(format!("pair[{i}].name"), "must be a non-empty word");
            }
            if !names.insert(p.name.as_str()) {
                return err(format!("pair[{i}].name"), "duplicate pair name");
            }
            for (side, e) in [("source", &p.source), ("sink", &p.sink)] {
                if e.description.trim().is_empty() {
                    return err(format!("pair[{i}].{side}.description"), "must not be empty");
                }
                if method_name(&e.example).is_none() {
                    return err(format!("pair[{i}].{side}.example"), "expected a method signature");
                }
            }
        }
        Ok(())
    }

    pub fn detectors(&self) -> Vec<DetectorSpec> {
        self.pair.iter().map(custom_detector).collect()
    }
}

fn custom_detector(p: &CustomPair) -> DetectorSpec {
    let src = method_name(&p.source.example).expect("checked");
    let snk = method_name(&p.sink.example).expect("checked");
    let extractor = |role: Role, e: &Endpoint, m: &str| ExtractorSpec {
        kind: format!("custom.{}", p.name),
        role,
        description: format!("{} ({})", e.description.trim(), e.example.trim()),
        examples: vec![custom_example(role, m)],
    };
    DetectorSpec {
        kind: p.name.clone(),
        source: extractor(Role::Source, &p.source, &src),
        sink: extractor(Role::Sink, &p.sink, &snk),
        restriction: p.restriction,
        message: format!("{}: {{source}} reaches {{sink}}", p.name),
        assume: None,
        signatures: Some((src, snk)),
    }
}

/// One detector per pair in the file.
pub fn load_custom_spec(path: &Path) -> Result<Vec<DetectorSpec>, DetectorError> {
    let text = std::fs::read_to_string(path).map_err(|e| DetectorError::Io(format!("{}: {e}", path.display())))?;
    Ok(CustomPairSpec::parse(&text)?.detectors())
}

/// Whether the path satisfies the restriction. For value equality the
/// source value is followed through the steps: plain copies, bindings and
/// returns carry it, any other write to a carrier drops it, and the sink
/// must still hold it.
pub fn restriction_check(info: &PathInfo, restriction: Restriction) -> bool {
    if restriction == Restriction::Dependence {
        return true;
    }
    let plain = |text: &str| parse_expr(text).ok().and_then(|e| e.as_var().map(str::to_string));
    let mut carriers: BTreeSet<(String, usize)> = BTreeSet::new();
    for step in &info.steps {
        match step {
            Step::Source { var, frame, .. } => {
                carriers.insert((var.clone(), *frame));
            }
            Step::Assign { lhs, rhs, frame, .. } => {
                let copies = plain(rhs).is_some_and(|v| carriers.contains(&(v, *frame)));
                if copies {
                    carriers.insert((lhs.clone(), *frame));
                } else {
                    carriers.remove(&(lhs.clone(), *frame));
                }
            }
            Step::Bind { arg, param, from, to, .. } => {
                if plain(arg).is_some_and(|v| carriers.contains(&(v, *from))) {
                    carriers.insert((param.clone(), *to));
                } else {
                    carriers.remove(&(param.clone(), *to));
                }
            }
            Step::Return { expr, out, from, to, .. } => {
                if plain(expr).is_some_and(|v| carriers.contains(&(v, *from))) {
                    carriers.insert((out.clone(), *to));
                } else {
                    carriers.remove(&(out.clone(), *to));
                }
            }
            Step::Havoc { .. } | Step::Guard { .. } => {}
            Step::Sink { var, frame, .. } => return carriers.contains(&(var.clone(), *frame)),
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMS: &str = r#"
[[pair]]
name = "sms_leak"
source = { description = "originating address of an incoming message", example = "String SmsMessage.getDisplayOriginatingAddress()" }
sink = { description = "intent passed to a started service", example = "ComponentName Context.startService(Intent service)" }
"#;

    #[test]
    fn builtin_kinds() {
        let dbz = builtin_spec("dbz").unwrap();
        assert_eq!(dbz.restriction, Restriction::ValueEquality);
        assert!(dbz.sink.description.to_lowercase().contains("divisor"));
        let xss = builtin_spec("XSS").unwrap();
        let osci = builtin_spec("osci").unwrap();
        assert_eq!(xss.restriction, Restriction::Dependence);
        assert_eq!(osci.restriction, xss.restriction);
        assert_ne!(osci.sink, xss.sink);
        let e = builtin_spec("npd").unwrap_err().to_string();
        assert!(e.contains("dbz") && e.contains("osci"));
        assert_eq!(dbz.reference_scripts().len(), 2);
    }

    #[test]
    fn custom_pair_loads_and_round_trips() {
        let spec = CustomPairSpec::parse(SMS).unwrap();
        let d = spec.detectors();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].restriction, Restriction::Dependence);
        assert_eq!(d[0].signatures, Some(("getDisplayOriginatingAddress".into(), "startService".into())));
        assert_eq!(d[0].source.id(), "custom.sms_leak.source");
        assert!(d[0].source.check().is_ok() && d[0].sink.check().is_ok());
        assert_eq!(CustomPairSpec::parse(&spec.to_toml()).unwrap(), spec);
    }

    #[test]
    fn schema_errors_carry_paths() {
        match CustomPairSpec::parse("pair = []\n") {
            Err(DetectorError::Schema { path, .. }) => assert_eq!(path, "pair"),
            other => panic!("{other:?}"),
        }
        let missing = SMS.replace("description = \"intent passed to a started service\", ", "");
        match CustomPairSpec::parse(&missing) {
            Err(DetectorError::Schema { path, .. }) => assert!(path.contains("sink"), "{path}"),
            other => panic!("{other:?}"),
        }
        let blank = SMS.replace("originating address of an incoming message", " ");
        assert!(matches!(CustomPairSpec::parse(&blank), Err(DetectorError::Schema { path, .. }) if path == "pair[0].source.description"));
    }

    #[test]
    fn method_names_from_signatures() {
        assert_eq!(method_name("String a.b.C.getX()").as_deref(), Some("getX"));
        assert_eq!(method_name("Runtime.exec").as_deref(), Some("exec"));
        assert_eq!(method_name("(int)"), None);
    }

    fn info(steps: Vec<Step>) -> PathInfo {
        PathInfo { frames: vec!["f".into(), "g".into()], steps }
    }

    #[test]
    fn value_equality_follows_copies() {
        let src = Step::Source { var: "x".into(), line: 1, frame: 0, assume: None };
        let copied = info(vec![
            src.clone(),
            Step::Assign { lhs: "z".into(), rhs: "x".into(), line: 2, frame: 0 },
            Step::Bind { arg: "z".into(), param: "b".into(), line: 3, from: 0, to: 1 },
            Step::Return { expr: "b".into(), out: "y".into(), line: 3, from: 1, to: 0 },
            Step::Sink { var: "y".into(), line: 4, frame: 0 },
        ]);
        assert!(restriction_check(&copied, Restriction::ValueEquality));
        let shifted = info(vec![
            src.clone(),
            Step::Assign { lhs: "y".into(), rhs: "x + 1".into(), line: 2, frame: 0 },
            Step::Sink { var: "y".into(), line: 3, frame: 0 },
        ]);
        assert!(!restriction_check(&shifted, Restriction::ValueEquality));
        assert!(restriction_check(&shifted, Restriction::Dependence));
        let overwritten = info(vec![
            src,
            Step::Assign { lhs: "x".into(), rhs: "x * 2".into(), line: 2, frame: 0 },
            Step::Sink { var: "x".into(), line: 3, frame: 0 },
        ]);
        assert!(!restriction_check(&overwritten, Restriction::ValueEquality));
    }
}
