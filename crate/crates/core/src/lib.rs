//! Turn natural-language optimization problems into solved (MI)LPs.
//!
//! A description is preprocessed into a [`model::StructuredProblem`]; a
//! manager then routes formulator, programmer and evaluator agents over it
//! until the model solves or the call budget runs out. Every LLM exchange
//! goes through [`llm::LlmClient`], which can record and replay transcripts.

pub mod agents;
pub mod amdl;
pub mod benchmark;
pub mod config;
pub mod execution;
pub mod llm;
pub mod model;
pub mod preprocess;
