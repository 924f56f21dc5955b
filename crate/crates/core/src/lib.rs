//! Agentic knowledge-graph completion for emerging entities.
//!
//! The crate is organised around the stages of one completion run:
//!
//! - [`kg`]: triples, catalogs, graph indices and relation cardinality.
//! - [`retrieval`]: the basic and advanced retriever tools plus the
//!   chunk → keyword filter → re-rank post-processing pipeline.
//! - [`agent`]: the tool-selection / reflection / answer loop over a
//!   pluggable LLM client, with answer-format checking.
//! - [`linking`]: mapping answer strings to catalog entity ids.
//! - [`metrics`]: Hits@N, MRR and relation-aware Hits@N.
//! - [`builder`]: construction of an emerging-entities benchmark from a
//!   Wikidata-compatible endpoint.
//! - [`cache`] and [`harness`]: the replay cache, run configuration,
//!   concurrent evaluation and reports.

pub mod agent;
pub mod builder;
pub mod cache;
pub mod harness;
pub mod kg;
pub mod linking;
pub mod metrics;
pub mod retrieval;
