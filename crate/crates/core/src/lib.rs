//! Grow a small seed taxonomy into a full taxonomy from an entity-annotated
//! corpus.
//!
//! The pipeline is split into independent stages:
//!
//! - [`corpus`]: JSONL ingestion, noun-occurrence filtering and skip-pattern
//!   co-occurrence counting into a [`corpus::FeatureStore`].
//! - [`typestore`] and [`embeddings`]: the two auxiliary feature sources.
//! - [`similarity`]: sibling and parenthood similarity measures.
//! - [`expansion`]: ensemble width expansion and embedding-offset depth
//!   expansion.
//! - [`taxonomy`]: the tree model, conflict resolution and the iterative
//!   expansion driver.
//! - [`global_opt`]: closed-form per-level parent reassignment.
//! - [`eval`]: ancestor and edge F1 against a gold tree.
//! - [`pipeline`]: configuration, staged execution and run manifests.

pub mod corpus;
pub mod embeddings;
pub mod eval;
pub mod expansion;
pub mod features_cache;
pub mod global_opt;
pub mod pipeline;
pub mod similarity;
pub mod taxonomy;
pub mod term;
pub mod typestore;

pub use term::TermId;
