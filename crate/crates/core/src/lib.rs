//! Knowledge-based diagnosis over a weighted fault/symptom relation.
//!
//! Present symptoms are explained by irredundant fault covers, covers are
//! ranked under a noisy-OR Bayesian model (or a heuristic match score), and
//! the next question is the unobserved symptom with the largest expected
//! entropy reduction. The same knowledge base can be compiled into
//! symptom → fault rules, clustered, and re-weighted from case data.

pub mod clustering;
pub mod covering;
pub mod error;
pub mod exec;
pub mod kb;
pub mod rulegen;
pub mod selection;
pub mod session;
pub mod synth;
pub mod uncertainty;

pub use error::{Error, Result};
pub use exec::Execution;
pub use kb::{
    load_kb, load_kb_str, validate_kb, FaultSet, Finding, KbDocument, KeyPolicy, KnowledgeBase,
    LoadedKb, ObservationState, Severity, SymptomSet, Violation,
};
pub use session::{
    assess, replay, start_session, submit_answer, summary, what_if, FaultMode, SessionConfig,
    SessionState, SessionStatus, SessionSummary, StoppingReason, TranscriptEntry,
};
pub use uncertainty::{ScoredHypothesis, ScoringStrategy};
