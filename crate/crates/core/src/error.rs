use thiserror::Error;

use crate::kb::Violation;

/// Errors returned by the diagnosis engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("knowledge base failed validation ({} violation(s)): {}", .0.len(), summarize(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown fault id {0:?}")]
    UnknownFault(String),
    #[error("unknown symptom id {0:?}")]
    UnknownSymptom(String),
    #[error("symptom {0:?} has no causes")]
    NoCause(String),
    #[error("fault {fault:?} is not linked to symptom {symptom:?}")]
    NoLink { fault: String, symptom: String },
    #[error("symptom {0:?} already observed")]
    AlreadyObserved(String),
    #[error("session is not in progress (status: {0})")]
    NotInProgress(String),
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("item list is empty")]
    EmptyItems,
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scoring strategy {0:?} is not implemented")]
    NotImplemented(String),
    #[error("case file error: {0}")]
    Case(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("{}: {}", v.location, v.message))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
