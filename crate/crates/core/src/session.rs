//! The sequential diagnostic procedure.
//!
//! A session state is a pure function of the knowledge base, the
//! configuration and the answer transcript: every answer rebuilds the
//! candidate list from scratch, so replaying a transcript reproduces the
//! state exactly. Transitions never mutate; they return a new state.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::covering::{irredundant_covers_ix, single_fault_candidates_ix, DEFAULT_MAX_COVER_SIZE};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kb::{Finding, IndexedObservations, KnowledgeBase, ObservationState, SymptomSet};
use crate::selection::QuestionSelector;
use crate::uncertainty::{rank_ix, ScoredHypothesis, Scorer, ScoringStrategy};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultMode {
    #[default]
    SingleFault,
    MultipleFault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub mode: FaultMode,
    pub max_cover_size: usize,
    pub conclusion_threshold: f64,
    pub question_budget: usize,
    pub costs_enabled: bool,
    pub strategy: ScoringStrategy,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: FaultMode::SingleFault,
            max_cover_size: DEFAULT_MAX_COVER_SIZE,
            conclusion_threshold: 0.95,
            question_budget: 50,
            costs_enabled: false,
            strategy: ScoringStrategy::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<Scorer> {
        if self.max_cover_size == 0 {
            return Err(Error::InvalidConfig("max_cover_size must be at least 1".into()));
        }
        if !(self.conclusion_threshold > 0.0 && self.conclusion_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "conclusion_threshold must lie in (0,1], got {}",
                self.conclusion_threshold
            )));
        }
        if self.question_budget == 0 {
            return Err(Error::InvalidConfig("question_budget must be at least 1".into()));
        }
        self.strategy.resolve()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    InProgress,
    Concluded,
    Exhausted,
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionStatus::InProgress => "in-progress",
            SessionStatus::Concluded => "concluded",
            SessionStatus::Exhausted => "exhausted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingReason {
    ThresholdMet,
    NoInformativeQuestion,
    BudgetSpent,
    StillOpen,
}

impl fmt::Display for StoppingReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoppingReason::ThresholdMet => "threshold-met",
            StoppingReason::NoInformativeQuestion => "no-informative-question",
            StoppingReason::BudgetSpent => "budget-spent",
            StoppingReason::StillOpen => "still-open",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub symptom: String,
    pub finding: Finding,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionState {
    #[serde(skip)]
    kb: Arc<KnowledgeBase>,
    config: SessionConfig,
    observations: ObservationState,
    candidates: Vec<ScoredHypothesis>,
    next: Option<String>,
    status: SessionStatus,
    reason: StoppingReason,
    transcript: Vec<TranscriptEntry>,
}

/// Opens a session with no observations.
pub fn start_session(kb: Arc<KnowledgeBase>, config: SessionConfig) -> Result<SessionState> {
    let scorer = config.validate()?;
    SessionState::build(kb, config, scorer, ObservationState::new(), Vec::new())
}

/// Applies one answer, returning the successor state.
pub fn submit_answer(state: &SessionState, symptom: &str, finding: Finding) -> Result<SessionState> {
    state.answer(symptom, finding)
}

/// The state `submit_answer` would produce. The input is never modified,
/// so this is the same transition under a name that reads as a preview.
pub fn what_if(state: &SessionState, symptom: &str, finding: Finding) -> Result<SessionState> {
    state.answer(symptom, finding)
}

/// Rebuilds a session by applying a transcript from the start.
pub fn replay(kb: Arc<KnowledgeBase>, config: SessionConfig, transcript: &[TranscriptEntry]) -> Result<SessionState> {
    let mut state = start_session(kb, config)?;
    for entry in transcript {
        state = state.answer(&entry.symptom, entry.finding)?;
    }
    Ok(state)
}

/// Evaluates a batch of findings at once, without the per-answer checks
/// of an interactive session. The transcript lists the findings in id
/// order. Replaying it may stop earlier, since an interactive session
/// refuses answers once it has concluded.
pub fn assess(kb: Arc<KnowledgeBase>, config: SessionConfig, observations: ObservationState) -> Result<SessionState> {
    let scorer = config.validate()?;
    observations.validate(&kb)?;
    let transcript = observations
        .iter()
        .map(|(symptom, finding)| TranscriptEntry {
            symptom: symptom.to_owned(),
            finding,
        })
        .collect();
    SessionState::build(kb, config, scorer, observations, transcript)
}

impl SessionState {
    fn build(
        kb: Arc<KnowledgeBase>,
        config: SessionConfig,
        scorer: Scorer,
        observations: ObservationState,
        transcript: Vec<TranscriptEntry>,
    ) -> Result<Self> {
        let exec = Execution::default();
        let obs = observations.indexed(&kb)?;
        let candidate_sets = candidate_sets(&kb, &config, &obs)?;
        let candidates = rank_ix(&kb, &candidate_sets, &obs, &scorer, exec)?;

        let concluded = candidates.first().is_some_and(|top| {
            top.posterior >= config.conclusion_threshold
                && top.covers_all
                && (candidates.len() > 1 || !obs.present.is_empty())
        });
        let budget_spent = transcript.len() >= config.question_budget;

        let (next, status, reason) = if concluded {
            (None, SessionStatus::Concluded, StoppingReason::ThresholdMet)
        } else if budget_spent {
            (None, SessionStatus::Exhausted, StoppingReason::BudgetSpent)
        } else {
            let pool = match config.mode {
                FaultMode::SingleFault => candidates.clone(),
                FaultMode::MultipleFault => {
                    let frontier = frontier(&kb, &candidate_sets, config.max_cover_size);
                    rank_ix(&kb, &frontier, &obs, &scorer, exec)?
                }
            };
            let selector = QuestionSelector {
                model: scorer.predictive(),
                costs_enabled: config.costs_enabled,
                exec,
            };
            match selector.choose(&kb, &pool, &observations)? {
                Some(s) => (Some(s), SessionStatus::InProgress, StoppingReason::StillOpen),
                None => (
                    None,
                    SessionStatus::Exhausted,
                    StoppingReason::NoInformativeQuestion,
                ),
            }
        };

        Ok(Self {
            kb,
            config,
            observations,
            candidates,
            next,
            status,
            reason,
            transcript,
        })
    }

    fn answer(&self, symptom: &str, finding: Finding) -> Result<SessionState> {
        if self.status != SessionStatus::InProgress {
            return Err(Error::NotInProgress(self.status.to_string()));
        }
        self.kb.symptom_index(symptom)?;
        if self.observations.is_recorded(symptom) {
            return Err(Error::AlreadyObserved(symptom.to_owned()));
        }
        let scorer = self.config.validate()?;
        let mut observations = self.observations.clone();
        observations.record(symptom, finding);
        let mut transcript = self.transcript.clone();
        transcript.push(TranscriptEntry {
            symptom: symptom.to_owned(),
            finding,
        });
        Self::build(self.kb.clone(), self.config.clone(), scorer, observations, transcript)
    }

    pub fn kb(&self) -> &Arc<KnowledgeBase> {
        &self.kb
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn observations(&self) -> &ObservationState {
        &self.observations
    }

    pub fn candidates(&self) -> &[ScoredHypothesis] {
        &self.candidates
    }

    pub fn next_question(&self) -> Option<&str> {
        self.next.as_deref()
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn stopping_reason(&self) -> StoppingReason {
        self.reason
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn top(&self) -> Option<&ScoredHypothesis> {
        self.candidates.first()
    }

    pub fn summary(&self) -> SessionSummary {
        summary(self)
    }
}

/// Candidate fault sets for the current observations.
fn candidate_sets(kb: &KnowledgeBase, config: &SessionConfig, obs: &IndexedObservations) -> Result<Vec<Vec<usize>>> {
    let mut sets = match config.mode {
        FaultMode::SingleFault => {
            let mut sets: Vec<Vec<usize>> = vec![Vec::new()];
            sets.extend(single_fault_candidates_ix(kb, &obs.present).into_iter().map(|f| vec![f]));
            sets
        }
        FaultMode::MultipleFault => {
            irredundant_covers_ix(kb, &obs.present, config.max_cover_size, Execution::default())?
        }
    };
    if sets.is_empty() {
        // Nothing within the size bound explains the present findings.
        sets.push(Vec::new());
    }
    Ok(sets)
}

/// The covers plus every one-fault extension within the size bound. Used
/// only to pick questions in multiple-fault mode, where the irredundant
/// covers alone cannot express that more faults may be present.
fn frontier(kb: &KnowledgeBase, covers: &[Vec<usize>], max_size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = covers.to_vec();
    for d in covers {
        if d.len() >= max_size {
            continue;
        }
        for f in 0..kb.fault_count() {
            if d.binary_search(&f).is_ok() {
                continue;
            }
            let mut e = d.clone();
            e.push(f);
            e.sort_unstable();
            out.push(e);
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub status: SessionStatus,
    pub stopping_reason: StoppingReason,
    pub explanations: Vec<ScoredHypothesis>,
    pub present: SymptomSet,
    pub absent: SymptomSet,
    /// Present symptoms the top explanation does not account for.
    pub uncovered_symptoms: SymptomSet,
    pub transcript: Vec<TranscriptEntry>,
    pub note: String,
}

pub const POSTERIOR_NOTE: &str =
    "posteriors are normalized over the listed candidate explanations only, not the full joint";

pub fn summary(state: &SessionState) -> SessionSummary {
    let present = state.observations.present();
    let uncovered_symptoms = match state.top() {
        Some(top) => present
            .iter()
            .filter(|s| {
                state
                    .kb
                    .causes(s)
                    .map(|c| c.is_disjoint(&top.faults))
                    .unwrap_or(true)
            })
            .cloned()
            .collect(),
        None => present.clone(),
    };
    SessionSummary {
        status: state.status,
        stopping_reason: state.reason,
        explanations: state.candidates.clone(),
        absent: state.observations.absent(),
        present,
        uncovered_symptoms,
        transcript: state.transcript.clone(),
        note: POSTERIOR_NOTE.into(),
    }
}

pub fn format_fault_set(faults: &crate::kb::FaultSet) -> String {
    if faults.is_empty() {
        "{}".into()
    } else {
        format!("{{{}}}", faults.iter().cloned().collect::<Vec<_>>().join(","))
    }
}

impl SessionSummary {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "status: {} ({})", self.status, self.stopping_reason);
        let _ = writeln!(out, "explanations:");
        for (i, h) in self.explanations.iter().enumerate() {
            let _ = writeln!(
                out,
                "  {:>2}. {:<24} posterior {:.6}  raw {:.6e}{}",
                i + 1,
                format_fault_set(&h.faults),
                h.posterior,
                h.raw_score,
                if h.covers_all { "" } else { "  (does not cover all present symptoms)" }
            );
        }
        let list = |s: &SymptomSet| {
            if s.is_empty() {
                "-".to_string()
            } else {
                s.iter().cloned().collect::<Vec<_>>().join(",")
            }
        };
        let _ = writeln!(out, "present: {}", list(&self.present));
        let _ = writeln!(out, "absent: {}", list(&self.absent));
        let _ = writeln!(out, "uncovered: {}", list(&self.uncovered_symptoms));
        let _ = writeln!(out, "transcript:");
        for e in &self.transcript {
            let _ = writeln!(out, "  {} = {}", e.symptom, e.finding);
        }
        let _ = writeln!(out, "note: {}", self.note);
        out
    }
}
