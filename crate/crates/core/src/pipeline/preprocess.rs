use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::PipelineError;
use crate::syntax::{parse_unit, Language, SyntaxTree};

pub const DEFAULT_BLOCKLIST: &[&str] = &["bad", "good"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessLog {
    pub files: usize,
    /// Files copied unchanged because they did not parse cleanly.
    pub verbatim: Vec<String>,
    pub renamed: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

struct Spans {
    comments: Vec<(usize, usize)>,
    identifiers: Vec<(usize, usize)>,
}

fn spans(tree: &SyntaxTree) -> Spans {
    let mut out = Spans { comments: Vec::new(), identifiers: Vec::new() };
    let mut cursor = tree.root().walk();
    'walk: loop {
        let node = cursor.node();
        match node.kind() {
            "line_comment" | "block_comment" | "comment" => out.comments.push((node.start_byte(), node.end_byte())),
            "identifier" | "type_identifier" => out.identifiers.push((node.start_byte(), node.end_byte())),
            _ => {}
        }
        if cursor.goto_first_child() {
            continue;
        }
        loop {
            if cursor.goto_next_sibling() {
                continue 'walk;
            }
            if !cursor.goto_parent() {
                break 'walk;
            }
        }
    }
    out
}

fn blocked(ident: &str, blocklist: &[String]) -> bool {
    let lower = ident.to_ascii_lowercase();
    blocklist.iter().any(|b| !b.is_empty() && lower.contains(b.as_str()))
}

/// Blanks comments, keeping their newlines, and applies `renames` to
/// identifiers. Lines left holding only blanks are emptied.
fn rewrite(tree: &SyntaxTree, spans: &Spans, renames: &BTreeMap<String, String>) -> String {
    let text = tree.text();
    let mut edits: Vec<(usize, usize, String)> = Vec::new();
    for &(s, e) in &spans.comments {
        edits.push((s, e, text[s..e].chars().map(|c| if c == '\n' || c == '\r' { c } else { ' ' }).collect()));
    }
    for &(s, e) in &spans.identifiers {
        if let Some(new) = renames.get(&text[s..e]) {
            edits.push((s, e, new.clone()));
        }
    }
    if edits.is_empty() {
        return text.to_string();
    }
    edits.sort_by_key(|(s, _, _)| *s);
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for (s, e, rep) in edits {
        out.push_str(&text[at..s]);
        out.push_str(&rep);
        at = e;
    }
    out.push_str(&text[at..]);
    let had_comment: BTreeSet<usize> = spans
        .comments
        .iter()
        .flat_map(|&(s, e)| {
            let first = text[..s].matches('\n').count();
            first..=first + text[s..e].matches('\n').count()
        })
        .collect();
    let mut lines: Vec<String> = out.split('\n').map(str::to_string).collect();
    for i in had_comment {
        if let Some(l) = lines.get_mut(i) {
            let keep_cr = l.ends_with('\r');
            let trimmed = l.trim_end().to_string();
            *l = if keep_cr { format!("{trimmed}\r") } else { trimmed };
        }
    }
    lines.join("\n")
}

fn fresh_name(old: &str, n: &mut usize, taken: &BTreeSet<String>) -> String {
    loop {
        *n += 1;
        let name = if old.starts_with(|c: char| c.is_ascii_uppercase()) { format!("Obf{n}") } else { format!("obf{n}") };
        if !taken.contains(&name) {
            return name;
        }
    }
}

/// Writes a copy of the corpus under `out` with comments removed and
/// label-leaking identifiers renamed consistently across all files.
pub fn preprocess_corpus(root: &Path, out: &Path, blocklist: &[&str]) -> Result<PreprocessLog, PipelineError> {
    if !root.is_dir() {
        return Err(PipelineError::Input(format!("{} is not a directory", root.display())));
    }
    let blocklist: Vec<String> = blocklist.iter().map(|b| b.to_ascii_lowercase()).collect();
    let io = |e: std::io::Error| PipelineError::Input(e.to_string());
    let mut log = PreprocessLog::default();
    let mut parsed: Vec<(String, SyntaxTree, Spans)> = Vec::new();
    let mut copies: Vec<String> = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| PipelineError::Input(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
        let is_source = entry.path().extension().and_then(|e| e.to_str()).is_some_and(|e| Language::Java.extensions().contains(&e));
        if !is_source {
            copies.push(rel);
            continue;
        }
        let bytes = std::fs::read(entry.path()).map_err(io)?;
        match parse_unit(&rel, &bytes) {
            Ok(tree) if !tree.has_errors() => {
                let s = spans(&tree);
                parsed.push((rel, tree, s));
            }
            Ok(_) | Err(_) => {
                log.warnings.push(format!("{rel}: does not parse cleanly; copied verbatim"));
                log.verbatim.push(rel.clone());
                copies.push(rel);
            }
        }
    }
    let mut all = BTreeSet::new();
    for (_, tree, s) in &parsed {
        for &(a, b) in &s.identifiers {
            all.insert(tree.text()[a..b].to_string());
        }
    }
    let mut n = 0;
    let mut renames = BTreeMap::new();
    for ident in all.iter().filter(|i| blocked(i, &blocklist)) {
        renames.insert(ident.clone(), fresh_name(ident, &mut n, &all));
    }
    for rel in &copies {
        let dst = out.join(rel);
        if let Some(p) = dst.parent() {
            std::fs::create_dir_all(p).map_err(io)?;
        }
        std::fs::copy(root.join(rel), &dst).map_err(io)?;
    }
    for (rel, tree, s) in &parsed {
        let dst = out.join(rel);
        if let Some(p) = dst.parent() {
            std::fs::create_dir_all(p).map_err(io)?;
        }
        std::fs::write(&dst, rewrite(tree, s, &renames)).map_err(io)?;
    }
    log.files = parsed.len() + copies.len();
    log.renamed = renames;
    for w in &log.warnings {
        log::warn!("{w}");
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(files: &[(&str, &str)]) -> (tempfile::TempDir, PreprocessLog) {
        let src = tempfile::tempdir().unwrap();
        for (name, body) in files {
            std::fs::write(src.path().join(name), body).unwrap();
        }
        let out = tempfile::tempdir().unwrap();
        let log = preprocess_corpus(src.path(), out.path(), DEFAULT_BLOCKLIST).unwrap();
        (out, log)
    }

    fn read(dir: &tempfile::TempDir, name: &str) -> String {
        std::fs::read_to_string(dir.path().join(name)).unwrap()
    }

    #[test]
    fn comments_only_file_keeps_its_lines() {
        let body = "// one\n/* two\n   three */\n";
        let (out, _) = run(&[("A.java", body)]);
        let got = read(&out, "A.java");
        assert_eq!(got.lines().count(), body.lines().count());
        assert!(got.lines().all(|l| l.is_empty()));
    }

    #[test]
    fn blocklisted_identifiers_renamed_everywhere() {
        let a = "class A {\n  void badSink(int d) { int q = 1 / d; } // bad\n  void run() { badSink(0); }\n}\n";
        let b = "class B {\n  void f(A a) { a.badSink(2); int goodG2B = 3; }\n}\n";
        let (out, log) = run(&[("A.java", a), ("B.java", b)]);
        let (ga, gb) = (read(&out, "A.java"), read(&out, "B.java"));
        let new = &log.renamed["badSink"];
        assert_eq!(ga.matches(new.as_str()).count(), 2);
        assert_eq!(gb.matches(new.as_str()).count(), 1);
        assert!(!ga.to_lowercase().contains("bad") && !gb.to_lowercase().contains("good"));
        assert_eq!(ga.lines().count(), a.lines().count());
        let tree = parse_unit("A.java", ga.as_bytes()).unwrap();
        assert!(!tree.has_errors());
        assert_eq!(tree.functions()[1].start_line, 3);
    }

    #[test]
    fn clean_files_are_unchanged_and_broken_ones_copied() {
        let clean = "class C {\n  int f(int x) { return x; }\n}\n";
        let broken = "class D {\n  void bad( {\n";
        let (out, log) = run(&[("C.java", clean), ("D.java", broken), ("notes.txt", "bad")]);
        assert_eq!(read(&out, "C.java"), clean);
        assert_eq!(read(&out, "D.java"), broken);
        assert_eq!(read(&out, "notes.txt"), "bad");
        assert_eq!(log.verbatim, vec!["D.java".to_string()]);
        assert_eq!(log.files, 3);
    }

    #[test]
    fn idempotent() {
        let a = "class A {\n  /** doc */\n  int badValue = 0; // trailing\n}\n";
        let (once, _) = run(&[("A.java", a)]);
        let first = read(&once, "A.java");
        let (twice, log) = run(&[("A.java", &first)]);
        assert_eq!(read(&twice, "A.java"), first);
        assert!(log.renamed.is_empty());
    }
}
