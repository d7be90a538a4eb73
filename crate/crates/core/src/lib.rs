//! Compilation-free, customizable source-to-sink dataflow analysis.
//!
//! The pipeline runs in three phases over syntax trees of (possibly
//! uncompilable) source files:
//!
//! 1. source/sink extraction by synthesized tree-walking extractor scripts,
//!    validated against labeled examples and repaired on failure;
//! 2. per-function dataflow summarization by few-shot prompted fact
//!    queries, stitched into inter-procedural paths over the call graph;
//! 3. path-feasibility validation by synthesized constraint programs run
//!    through a theorem prover, with a bounded repair loop and a direct
//!    fallback.
//!
//! Model access goes through [`llm`], whose cassette and oracle backends
//! make every run reproducible offline.

pub mod expr;
pub mod fixtures;
pub mod llm;
pub mod sandbox;
pub mod syntax;
pub mod oracle;
pub mod feasibility;
pub mod paths;
pub mod summarizer;
pub mod extractor;
pub mod detectors;
pub mod pipeline;
