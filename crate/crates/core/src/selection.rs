//! Choice of the next question: myopic expected entropy reduction of the
//! hypothesis posterior, optionally per unit observation cost.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kb::{KnowledgeBase, ObservationState};
use crate::uncertainty::{NoisyOr, ScoredHypothesis};

/// Questions whose gain does not exceed this are never asked.
pub const GAIN_EPSILON: f64 = 1e-12;

/// Shannon entropy in bits of the posterior column.
pub fn posterior_entropy(ranked: &[ScoredHypothesis]) -> f64 {
    entropy(ranked.iter().map(|h| h.posterior))
}

fn entropy(ps: impl Iterator<Item = f64>) -> f64 {
    ps.filter(|&p| p > 0.0).map(|p| -p * p.log2()).sum()
}

/// Expected information gain, in bits, of observing `symptom`.
pub fn information_gain(
    kb: &KnowledgeBase,
    ranked: &[ScoredHypothesis],
    obs: &ObservationState,
    symptom: &str,
) -> Result<f64> {
    QuestionSelector::default().gain(kb, ranked, obs, symptom)
}

/// The unobserved symptom with the highest gain (or gain per cost), ties
/// to the smaller id; `None` when no question carries information.
pub fn next_question(
    kb: &KnowledgeBase,
    ranked: &[ScoredHypothesis],
    obs: &ObservationState,
    costs_enabled: bool,
) -> Result<Option<String>> {
    QuestionSelector {
        costs_enabled,
        ..QuestionSelector::default()
    }
    .choose(kb, ranked, obs)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuestionSelector {
    pub model: NoisyOr,
    pub costs_enabled: bool,
    pub exec: Execution,
}


/// Candidates with nonzero posterior, in index form.
struct Live {
    faults: Vec<Vec<usize>>,
    posterior: Vec<f64>,
}

impl Live {
    fn new(kb: &KnowledgeBase, ranked: &[ScoredHypothesis]) -> Result<Self> {
        let mut faults = Vec::new();
        let mut posterior = Vec::new();
        for h in ranked.iter().filter(|h| h.posterior > 0.0) {
            faults.push(kb.fault_indices(&h.faults)?);
            posterior.push(h.posterior);
        }
        Ok(Self { faults, posterior })
    }
}

impl QuestionSelector {
    pub fn gain(
        &self,
        kb: &KnowledgeBase,
        ranked: &[ScoredHypothesis],
        obs: &ObservationState,
        symptom: &str,
    ) -> Result<f64> {
        let s = kb.symptom_index(symptom)?;
        if obs.is_recorded(symptom) {
            return Err(Error::AlreadyObserved(symptom.to_owned()));
        }
        let live = Live::new(kb, ranked)?;
        Ok(self.gain_ix(kb, &live, s))
    }

    fn gain_ix(&self, kb: &KnowledgeBase, live: &Live, symptom: usize) -> f64 {
        let likelihood: Vec<f64> = live
            .faults
            .iter()
            .map(|d| self.model.probability_ix(kb, d, symptom))
            .collect();
        if likelihood.windows(2).all(|w| w[0] == w[1]) {
            return 0.0;
        }
        let before = entropy(live.posterior.iter().copied());
        let mut expected_after = 0.0;
        for outcome_present in [true, false] {
            let weights: Vec<f64> = live
                .posterior
                .iter()
                .zip(&likelihood)
                .map(|(&p, &l)| p * if outcome_present { l } else { 1.0 - l })
                .collect();
            let mass: f64 = weights.iter().sum();
            if mass > 0.0 {
                expected_after += mass * entropy(weights.iter().map(|w| w / mass));
            }
        }
        before - expected_after
    }

    /// Gain for every unrecorded symptom, in id order.
    pub fn gains(
        &self,
        kb: &KnowledgeBase,
        ranked: &[ScoredHypothesis],
        obs: &ObservationState,
    ) -> Result<Vec<(String, f64)>> {
        let live = Live::new(kb, ranked)?;
        let open: Vec<usize> = (0..kb.symptom_count())
            .filter(|&s| !obs.is_recorded(&kb.symptom(s).id))
            .collect();
        let gains = self.exec.map(&open, |&s| self.gain_ix(kb, &live, s));
        Ok(open
            .into_iter()
            .zip(gains)
            .map(|(s, g)| (kb.symptom(s).id.clone(), g))
            .collect())
    }

    pub fn choose(
        &self,
        kb: &KnowledgeBase,
        ranked: &[ScoredHypothesis],
        obs: &ObservationState,
    ) -> Result<Option<String>> {
        let mut best: Option<(String, f64)> = None;
        for (id, gain) in self.gains(kb, ranked, obs)? {
            if gain <= GAIN_EPSILON {
                continue;
            }
            let value = if self.costs_enabled {
                let cost = kb.symptom_by_id(&id)?.cost;
                if cost > 0.0 {
                    gain / cost
                } else {
                    f64::INFINITY
                }
            } else {
                gain
            };
            if best.as_ref().is_none_or(|(_, v)| value > *v) {
                best = Some((id, value));
            }
        }
        Ok(best.map(|(id, _)| id))
    }
}
