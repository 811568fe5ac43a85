//! Temporal Bayesian Network over dialogue intents.
//!
//! Pipeline: ingest annotated dialogues into a binary turn-intent matrix,
//! lift it into a lagged design matrix of consecutive USER-turn pairs, learn
//! a forward-only DAG with NOTEARS, fit BDeu conditional probability tables,
//! and answer next-intent queries by exact variable elimination. On top of
//! the model sit a gated causal-insight formatter for prompt injection,
//! reference baselines, and a two-track evaluation harness (ranking fidelity
//! and ground-truth replay).

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod guidance;
pub mod inference;
pub mod parameters;
pub mod seeding;
pub mod structure;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
