use std::collections::BTreeMap;

use crate::syntax::Role;

use super::{ExtractorSpec, LabeledExample};

macro_rules! asset {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/extractors/", $name))
    };
}

const SPECS: &[(&str, &str, &str, &str)] = &[
    ("dbz.source", asset!("dbz_source.toml"), asset!("dbz_source.walk"), asset!("dbz_source.java")),
    ("dbz.sink", asset!("dbz_sink.toml"), asset!("dbz_sink.walk"), asset!("dbz_sink.java")),
    ("xss.source", asset!("xss_source.toml"), asset!("xss_source.walk"), asset!("xss_source.java")),
    ("xss.sink", asset!("xss_sink.toml"), asset!("xss_sink.walk"), asset!("xss_sink.java")),
    ("osci.source", asset!("osci_source.toml"), asset!("osci_source.walk"), asset!("osci_source.java")),
    ("osci.sink", asset!("osci_sink.toml"), asset!("osci_sink.walk"), asset!("osci_sink.java")),
];

/// The bundled extractor spec for a built-in bug kind.
pub fn builtin_extractor_spec(kind: &str, role: Role) -> Option<ExtractorSpec> {
    let id = format!("{kind}.{}", role.as_str());
    let (_, toml, _, java) = SPECS.iter().find(|s| s.0 == id)?;
    let example = format!("{}_{}.java", kind, role.as_str());
    let spec = ExtractorSpec::from_toml(toml, &|name| {
        if name == example {
            Ok(java.to_string())
        } else {
            Err(std::io::Error::new(std::io::ErrorKind::NotFound, name.to_string()))
        }
    });
    Some(spec.expect("bundled extractor spec is valid"))
}

/// Reference script for a built-in spec id.
pub fn reference_script(spec_id: &str) -> Option<&'static str> {
    SPECS.iter().find(|s| s.0 == spec_id).map(|s| s.2)
}

pub fn reference_scripts() -> BTreeMap<String, String> {
    SPECS.iter().map(|s| (s.0.to_string(), s.2.to_string())).collect()
}

/// Reference script matching calls to `method`: sources report the
/// variable receiving the result, sinks every variable in the arguments.
pub fn custom_reference(role: Role, method: &str) -> String {
    let name = serde_json::to_string(method).expect("string");
    match role {
        Role::Source => format!(
            "# BEGIN RULES\nrule declared\n  match variable_declarator\n  where value calls [{name}]\n  emit name\nend\n\nrule assigned\n  match assignment_expression\n  where right calls [{name}]\n  emit left\nend\n# END RULES\n"
        ),
        _ => format!(
            "# BEGIN RULES\nrule call\n  match method_invocation\n  where name == {name}\n  emit each variable in arguments\nend\n# END RULES\n"
        ),
    }
}

/// A labeled example derived from a method signature: a call whose result
/// is stored for sources, a call taking a variable for sinks.
pub fn custom_example(role: Role, method: &str) -> LabeledExample {
    let (body, expected) = match role {
        Role::Source => (format!("        String v = recv.{method}();\n        String w = recv.other();"), vec![(3, "v".to_string())]),
        _ => (format!("        String w = \"x\";\n        recv.{method}(v);\n        recv.other(w);"), vec![(4, "v".to_string())]),
    };
    LabeledExample {
        name: format!("Custom{}.java", if role == Role::Source { "Source" } else { "Sink" }),
        source: format!("class Example {{\n    void f(Api recv, String v) {{\n{body}\n    }}\n}}\n"),
        expected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::{run_extractor, validate, EmbeddedRunner};
    use crate::fixtures::MOTIVATING_EXAMPLE;
    use crate::syntax::parse_unit;

    #[test]
    fn reference_scripts_reproduce_every_label() {
        for kind in ["dbz", "xss", "osci"] {
            for role in [Role::Source, Role::Sink] {
                let spec = builtin_extractor_spec(kind, role).unwrap();
                let r = validate(reference_script(&spec.id()).unwrap(), &spec, &EmbeddedRunner::default());
                assert!(r.pass, "{}: {r:?}", spec.id());
            }
        }
    }

    #[test]
    fn motivating_example_sources_and_sinks() {
        let tree = parse_unit("MotivatingExample.java", MOTIVATING_EXAMPLE.as_bytes()).unwrap();
        let run = |id: &str, role| -> Vec<String> {
            run_extractor(reference_script(id).unwrap(), &tree, role, &EmbeddedRunner::default())
                .unwrap()
                .iter()
                .map(|r| r.notation())
                .collect()
        };
        assert_eq!(run("dbz.source", Role::Source), vec!["x@9"]);
        assert_eq!(run("dbz.sink", Role::Sink), vec!["b@4", "y@11", "y@14"]);
    }

    #[test]
    fn extreme_constant_rule_is_caught_as_false_positive() {
        let spec = builtin_extractor_spec("dbz", Role::Source).unwrap();
        let base = reference_script("dbz.source").unwrap();
        let extra = "rule extreme\n  match variable_declarator\n  where value mentions [\"MIN_VALUE\"]\n  emit name\nend\n# END RULES";
        let script = base.replace("# END RULES", extra);
        let r = validate(&script, &spec, &EmbeddedRunner::default());
        assert!(!r.pass);
        assert_eq!(r.examples[0].false_positives, vec![(9, "data".to_string())]);
    }

    #[test]
    fn custom_references_validate_on_generated_examples() {
        for role in [Role::Source, Role::Sink] {
            let spec = ExtractorSpec {
                kind: "custom.sms".into(),
                role,
                description: "calls".into(),
                examples: vec![custom_example(role, "getDisplayOriginatingAddress")],
            };
            let r = validate(&custom_reference(role, "getDisplayOriginatingAddress"), &spec, &EmbeddedRunner::default());
            assert!(r.pass, "{r:?}");
        }
    }
}
