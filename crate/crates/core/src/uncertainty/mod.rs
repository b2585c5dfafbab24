//! Measure of fit between observations and fault hypotheses.
//!
//! The Bayesian strategy lifts per-link causal strengths to fault sets with
//! a noisy-OR combination and scores a hypothesis by its joint probability
//! with the observed findings. The heuristic strategy is a weighted match
//! ratio. Posteriors are normalized over the supplied candidate list only.

mod estimate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use estimate::{
    estimate_weights, read_cases_csv, write_cases_csv, CaseRecord, EstimationReport, LinkSupport,
    LAPLACE_ALPHA,
};

use crate::covering::is_cover_ix;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kb::{FaultSet, IndexedObservations, KnowledgeBase, ObservationState};

/// Noisy-OR combination of causal strengths with an optional leak term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoisyOr {
    pub leak: f64,
}

impl NoisyOr {
    pub fn new(leak: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&leak) {
            return Err(Error::InvalidConfig(format!("leak must lie in [0,1), got {leak}")));
        }
        Ok(Self { leak })
    }

    /// `P(symptom present | faults)` for sorted fault indices.
    pub fn probability_ix(&self, kb: &KnowledgeBase, faults: &[usize], symptom: usize) -> f64 {
        let miss: f64 = kb
            .causes_ix(symptom)
            .iter()
            .filter(|(f, _)| faults.binary_search(f).is_ok())
            .map(|&(_, c)| 1.0 - c)
            .product();
        1.0 - (1.0 - self.leak) * miss
    }

    /// Joint probability of the hypothesis and the present/absent findings.
    pub fn score_ix(&self, kb: &KnowledgeBase, faults: &[usize], obs: &IndexedObservations) -> f64 {
        let mut score = prior_mass_ix(kb, faults);
        for &s in &obs.present {
            score *= self.probability_ix(kb, faults, s);
        }
        for &s in &obs.absent {
            score *= 1.0 - self.probability_ix(kb, faults, s);
        }
        score
    }
}

/// `∏_{f∈D} π(f) · ∏_{f∉D} (1 − π(f))`.
pub fn prior_mass_ix(kb: &KnowledgeBase, faults: &[usize]) -> f64 {
    kb.faults()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if faults.binary_search(&i).is_ok() {
                f.prior
            } else {
                1.0 - f.prior
            }
        })
        .product()
}

/// Probability that `symptom` is present when exactly the faults in
/// `faults` are active. No leak: the empty set produces nothing.
pub fn symptom_probability(kb: &KnowledgeBase, faults: &FaultSet, symptom: &str) -> Result<f64> {
    let d = kb.fault_indices(faults)?;
    let s = kb.symptom_index(symptom)?;
    Ok(NoisyOr::default().probability_ix(kb, &d, s))
}

/// Unnormalized posterior mass of a hypothesis under the noisy-OR model.
/// Unknown findings contribute nothing.
pub fn hypothesis_score(kb: &KnowledgeBase, faults: &FaultSet, obs: &ObservationState) -> Result<f64> {
    let d = kb.fault_indices(faults)?;
    let o = obs.indexed(kb)?;
    Ok(NoisyOr::default().score_ix(kb, &d, &o))
}

/// Share of the hypothesis' causal weight that lands on present symptoms,
/// penalized by one per present symptom the hypothesis fails to explain.
pub fn heuristic_match_score(kb: &KnowledgeBase, faults: &FaultSet, obs: &ObservationState) -> Result<f64> {
    let d = kb.fault_indices(faults)?;
    let o = obs.indexed(kb)?;
    Ok(heuristic_match_ix(kb, &d, &o))
}

pub fn heuristic_match_ix(kb: &KnowledgeBase, faults: &[usize], obs: &IndexedObservations) -> f64 {
    let mut matched = 0.0;
    let mut total = 0.0;
    for &f in faults {
        for &(s, c) in kb.effects_ix(f) {
            total += c;
            if obs.present.binary_search(&s).is_ok() {
                matched += c;
            }
        }
    }
    let uncovered = obs
        .present
        .iter()
        .filter(|&&s| !kb.causes_ix(s).iter().any(|(f, _)| faults.binary_search(f).is_ok()))
        .count();
    let denominator = total + uncovered as f64;
    if denominator == 0.0 {
        1.0
    } else {
        matched / denominator
    }
}

/// `P(fault | symptom)`: the stored evoking strength when present,
/// otherwise the single-fault Bayes inversion over the symptom's causes.
pub fn derive_evoking_strength(kb: &KnowledgeBase, symptom: &str, fault: &str) -> Result<f64> {
    let s = kb.symptom_index(symptom)?;
    let f = kb.fault_index(fault)?;
    let causes = kb.causes_ix(s);
    if causes.is_empty() {
        return Err(Error::NoCause(symptom.to_owned()));
    }
    let Some(&(_, strength)) = causes.iter().find(|&&(g, _)| g == f) else {
        return Err(Error::NoLink {
            fault: fault.to_owned(),
            symptom: symptom.to_owned(),
        });
    };
    if let Some(stored) = kb.link(fault, symptom).and_then(|l| l.evoking_strength) {
        return Ok(stored);
    }
    let total: f64 = causes.iter().map(|&(g, c)| kb.fault(g).prior * c).sum();
    if total <= 0.0 {
        // Every cause has prior zero: fall back to the strength share.
        let strengths: f64 = causes.iter().map(|&(_, c)| c).sum();
        return Ok(strength / strengths);
    }
    Ok(kb.fault(f).prior * strength / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHypothesis {
    pub faults: FaultSet,
    pub raw_score: f64,
    pub posterior: f64,
    pub covers_all: bool,
}

/// Named scoring strategy with free-form numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringStrategy {
    pub name: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

pub const BAYES_NOISY_OR: &str = "bayes-noisy-or";
pub const HEURISTIC_MATCH: &str = "heuristic-match";
const RESERVED_STRATEGIES: &[&str] = &["dempster-shafer", "fuzzy"];

impl Default for ScoringStrategy {
    fn default() -> Self {
        Self::bayes()
    }
}

impl ScoringStrategy {
    pub fn bayes() -> Self {
        Self {
            name: BAYES_NOISY_OR.into(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn heuristic() -> Self {
        Self {
            name: HEURISTIC_MATCH.into(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn resolve(&self) -> Result<Scorer> {
        let check_params = |allowed: &[&str]| -> Result<()> {
            match self.parameters.keys().find(|k| !allowed.contains(&k.as_str())) {
                Some(k) => Err(Error::InvalidConfig(format!(
                    "strategy {} has no parameter {k:?}",
                    self.name
                ))),
                None => Ok(()),
            }
        };
        match self.name.as_str() {
            BAYES_NOISY_OR => {
                check_params(&["leak"])?;
                let leak = self.parameters.get("leak").copied().unwrap_or(0.0);
                Ok(Scorer::Bayes(NoisyOr::new(leak)?))
            }
            HEURISTIC_MATCH => {
                check_params(&[])?;
                Ok(Scorer::Heuristic)
            }
            name if RESERVED_STRATEGIES.contains(&name) => Err(Error::NotImplemented(name.into())),
            name => Err(Error::InvalidConfig(format!("unrecognized scoring strategy {name:?}"))),
        }
    }
}

/// A resolved scoring strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scorer {
    Bayes(NoisyOr),
    Heuristic,
}

impl Default for Scorer {
    fn default() -> Self {
        Scorer::Bayes(NoisyOr::default())
    }
}

impl Scorer {
    pub fn score_ix(&self, kb: &KnowledgeBase, faults: &[usize], obs: &IndexedObservations) -> f64 {
        match self {
            Scorer::Bayes(model) => model.score_ix(kb, faults, obs),
            Scorer::Heuristic => heuristic_match_ix(kb, faults, obs),
        }
    }

    /// Predictive model used when a question's outcome must be forecast.
    pub fn predictive(&self) -> NoisyOr {
        match self {
            Scorer::Bayes(model) => *model,
            Scorer::Heuristic => NoisyOr::default(),
        }
    }
}

/// Scores and normalizes candidates under the noisy-OR strategy.
pub fn rank_hypotheses(
    kb: &KnowledgeBase,
    candidates: &[FaultSet],
    obs: &ObservationState,
) -> Result<Vec<ScoredHypothesis>> {
    let cands = candidates
        .iter()
        .map(|c| kb.fault_indices(c))
        .collect::<Result<Vec<_>>>()?;
    let o = obs.indexed(kb)?;
    rank_ix(kb, &cands, &o, &Scorer::default(), Execution::default())
}

/// Ranks candidates by posterior (descending), breaking ties by cardinality
/// and then by id order.
pub fn rank_ix(
    kb: &KnowledgeBase,
    candidates: &[Vec<usize>],
    obs: &IndexedObservations,
    scorer: &Scorer,
    exec: Execution,
) -> Result<Vec<ScoredHypothesis>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let raw: Vec<f64> = exec.map(candidates, |d| scorer.score_ix(kb, d, obs));
    let total: f64 = raw.iter().sum();
    let mut ranked: Vec<(usize, ScoredHypothesis)> = candidates
        .iter()
        .zip(&raw)
        .enumerate()
        .map(|(i, (d, &r))| {
            (
                i,
                ScoredHypothesis {
                    faults: kb.fault_ids(d),
                    raw_score: r,
                    posterior: if total > 0.0 { r / total } else { 0.0 },
                    covers_all: is_cover_ix(kb, d, &obs.present),
                },
            )
        })
        .collect();
    ranked.sort_by(|(ia, a), (ib, b)| {
        b.posterior
            .total_cmp(&a.posterior)
            .then_with(|| a.faults.len().cmp(&b.faults.len()))
            .then_with(|| candidates[*ia].cmp(&candidates[*ib]))
    });
    Ok(ranked.into_iter().map(|(_, h)| h).collect())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::kb::fixtures::{kb3, set};
    use crate::kb::Finding;

    fn obs(present: &[&str], absent: &[&str]) -> ObservationState {
        ObservationState::from_sets(present.iter().copied(), absent.iter().copied())
    }

    #[test]
    fn noisy_or_fixture_values() {
        let kb = kb3();
        assert_abs_diff_eq!(
            symptom_probability(&kb, &set(&["f1", "f2"]), "s2").unwrap(),
            0.92,
            epsilon = 1e-12
        );
        for s in ["s1", "s2", "s3", "s4"] {
            assert_eq!(symptom_probability(&kb, &set(&[]), s).unwrap(), 0.0);
        }
        assert_abs_diff_eq!(symptom_probability(&kb, &set(&["f1"]), "s1").unwrap(), 0.9, epsilon = 1e-12);
        assert!(symptom_probability(&kb, &set(&["fx"]), "s1").is_err());
    }

    #[test]
    fn leak_lifts_empty_hypothesis() {
        let kb = kb3();
        let model = NoisyOr::new(0.01).unwrap();
        assert_abs_diff_eq!(model.probability_ix(&kb, &[], 0), 0.01, epsilon = 1e-15);
        assert!(NoisyOr::new(1.0).is_err());
    }

    #[test]
    fn hypothesis_score_fixture_values() {
        let kb = kb3();
        let o = obs(&["s4"], &[]);
        assert_abs_diff_eq!(hypothesis_score(&kb, &set(&["f3"]), &o).unwrap(), 0.038475, epsilon = 1e-12);
        assert_eq!(hypothesis_score(&kb, &set(&[]), &o).unwrap(), 0.0);
        assert_abs_diff_eq!(
            hypothesis_score(&kb, &set(&[]), &ObservationState::new()).unwrap(),
            0.7695,
            epsilon = 1e-12
        );
        let mut skipped = ObservationState::new();
        skipped.record("s1", Finding::Unknown);
        assert_abs_diff_eq!(hypothesis_score(&kb, &set(&[]), &skipped).unwrap(), 0.7695, epsilon = 1e-12);
    }

    #[test]
    fn absent_findings_penalize() {
        let kb = kb3();
        // {f1} with s1 absent: 0.1 * 0.9 * 0.95 * (1 - 0.9)
        let v = hypothesis_score(&kb, &set(&["f1"]), &obs(&[], &["s1"])).unwrap();
        assert_abs_diff_eq!(v, 0.1 * 0.9 * 0.95 * 0.1, epsilon = 1e-15);
    }

    #[test]
    fn rank_fixture() {
        let kb = kb3();
        let cands = vec![set(&[]), set(&["f1"]), set(&["f2"]), set(&["f3"])];
        let ranked = rank_hypotheses(&kb, &cands, &obs(&["s4"], &[])).unwrap();
        assert_eq!(ranked[0].faults, set(&["f3"]));
        assert_abs_diff_eq!(ranked[0].posterior, 1.0, epsilon = 1e-12);
        assert!(ranked[0].covers_all);
        assert!(ranked[1..].iter().all(|h| h.posterior == 0.0 && !h.covers_all));
        // Zero-posterior ties fall back to cardinality, then id order.
        assert_eq!(ranked[1].faults, set(&[]));
        assert_eq!(ranked[2].faults, set(&["f1"]));

        let ranked = rank_hypotheses(&kb, &[set(&["f1"]), set(&["f2"])], &ObservationState::new()).unwrap();
        assert_abs_diff_eq!(ranked[0].posterior, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ranked[1].posterior, 0.5, epsilon = 1e-12);
        assert_eq!(ranked[0].faults, set(&["f1"]));
    }

    #[test]
    fn rank_duplicates_and_errors() {
        let kb = kb3();
        let ranked = rank_hypotheses(&kb, &[set(&["f2"]), set(&["f2"])], &obs(&["s2"], &[])).unwrap();
        assert_eq!(ranked[0], ranked[1]);
        assert!(matches!(
            rank_hypotheses(&kb, &[], &ObservationState::new()),
            Err(Error::EmptyCandidates)
        ));
        let ranked = rank_hypotheses(&kb, &[set(&["f1"])], &obs(&["s4"], &[])).unwrap();
        assert_eq!(ranked[0].posterior, 0.0);
        assert!(!ranked[0].covers_all);
    }

    #[test]
    fn heuristic_fixture_values() {
        let kb = kb3();
        assert_eq!(heuristic_match_score(&kb, &set(&[]), &ObservationState::new()).unwrap(), 1.0);
        assert_abs_diff_eq!(
            heuristic_match_score(&kb, &set(&["f3"]), &obs(&["s4"], &[])).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(heuristic_match_score(&kb, &set(&["f3"]), &obs(&["s1"], &[])).unwrap(), 0.0);
        // f1 with s1 present: 0.9 / (0.9 + 0.6)
        assert_abs_diff_eq!(
            heuristic_match_score(&kb, &set(&["f1"]), &obs(&["s1"], &[])).unwrap(),
            0.6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn evoking_strength_fixture() {
        let kb = kb3();
        assert_abs_diff_eq!(derive_evoking_strength(&kb, "s1", "f1").unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            derive_evoking_strength(&kb, "s2", "f1").unwrap(),
            0.06 / 0.14,
            epsilon = 1e-12
        );
        assert!(matches!(
            derive_evoking_strength(&kb, "s1", "f2"),
            Err(Error::NoLink { .. })
        ));

        let mut doc = kb.to_document();
        doc.symptoms.push(crate::kb::SymptomNode {
            id: "s5".into(),
            label: String::new(),
            question: String::new(),
            cost: 1.0,
            category: None,
        });
        doc.links[1].evoking_strength = Some(0.3);
        let kb = KnowledgeBase::new(doc).unwrap();
        assert!(matches!(derive_evoking_strength(&kb, "s5", "f1"), Err(Error::NoCause(_))));
        assert_eq!(derive_evoking_strength(&kb, "s2", "f1").unwrap(), 0.3);
    }

    #[test]
    fn strategy_resolution() {
        assert!(matches!(ScoringStrategy::bayes().resolve(), Ok(Scorer::Bayes(_))));
        assert_eq!(ScoringStrategy::heuristic().resolve().unwrap(), Scorer::Heuristic);
        for name in ["dempster-shafer", "fuzzy"] {
            let s = ScoringStrategy {
                name: name.into(),
                parameters: BTreeMap::new(),
            };
            assert!(matches!(s.resolve(), Err(Error::NotImplemented(_))));
        }
        let s = ScoringStrategy {
            name: "coin-flip".into(),
            parameters: BTreeMap::new(),
        };
        assert!(matches!(s.resolve(), Err(Error::InvalidConfig(_))));
        let mut s = ScoringStrategy::bayes();
        s.parameters.insert("leak".into(), 0.02);
        assert_eq!(s.resolve().unwrap(), Scorer::Bayes(NoisyOr { leak: 0.02 }));
        s.parameters.insert("gamma".into(), 1.0);
        assert!(s.resolve().is_err());
    }
}
