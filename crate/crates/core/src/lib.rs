//! Staged translation of formal theorem statements into Rocq.
//!
//! A corpus of theorems, each given informally and as Lean and Isabelle
//! statements, is translated round by round. Every round sends the still
//! untranslated theorems to one model with one prompting strategy, checks
//! each candidate with a statement checker and feeds the checker's errors
//! back on retries. Results are appended to a line-oriented store from which
//! cumulative reports and audit samples are derived.

pub mod backend;
pub mod corpus;
pub mod orchestrator;
pub mod prompting;
pub mod reporting;
pub mod synthetic;
pub mod verifier;
