//! Synthetic knowledge bases and case samples drawn from the noisy-OR
//! generative model. Used by tests, benchmarks and the `estimate` tooling.

use rand::Rng;

use crate::kb::{CausalLink, FaultNode, Finding, KbDocument, KnowledgeBase, Meta, ObservationState, SymptomNode};
use crate::uncertainty::{CaseRecord, NoisyOr};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomKbSpec {
    pub faults: usize,
    pub symptoms: usize,
    /// Probability of each (fault, symptom) link beyond the one guaranteed
    /// cause per symptom.
    pub link_probability: f64,
    pub prior_range: (f64, f64),
    pub strength_range: (f64, f64),
}

impl Default for RandomKbSpec {
    fn default() -> Self {
        Self {
            faults: 8,
            symptoms: 10,
            link_probability: 0.25,
            prior_range: (0.01, 0.3),
            strength_range: (0.05, 1.0),
        }
    }
}

fn padded(prefix: char, i: usize, n: usize) -> String {
    let width = n.max(2).to_string().len();
    format!("{prefix}{i:0width$}")
}

/// A random bipartite KB where every symptom has at least one cause.
pub fn random_kb<R: Rng + ?Sized>(rng: &mut R, spec: &RandomKbSpec) -> KnowledgeBase {
    let faults: Vec<FaultNode> = (0..spec.faults)
        .map(|i| FaultNode {
            id: padded('f', i, spec.faults),
            label: format!("fault {i}"),
            prior: rng.random_range(spec.prior_range.0..=spec.prior_range.1),
            category: None,
        })
        .collect();
    let symptoms: Vec<SymptomNode> = (0..spec.symptoms)
        .map(|i| SymptomNode {
            id: padded('s', i, spec.symptoms),
            label: format!("symptom {i}"),
            question: format!("Is symptom {i} present?"),
            cost: 1.0,
            category: None,
        })
        .collect();
    let mut links = Vec::new();
    if !faults.is_empty() {
        for s in &symptoms {
            let anchor = rng.random_range(0..faults.len());
            for (i, f) in faults.iter().enumerate() {
                if i == anchor || rng.random_bool(spec.link_probability) {
                    links.push(CausalLink {
                        fault: f.id.clone(),
                        symptom: s.id.clone(),
                        causal_strength: rng.random_range(spec.strength_range.0..=spec.strength_range.1),
                        evoking_strength: None,
                    });
                }
            }
        }
    }
    KnowledgeBase::new(KbDocument {
        meta: Meta {
            name: Some("random".into()),
            ..Meta::default()
        },
        faults,
        symptoms,
        links,
        taxonomy: Vec::new(),
    })
    .expect("generated KB is valid")
}

/// Samples every symptom for the given active fault indices.
fn sample_findings<R: Rng + ?Sized>(rng: &mut R, kb: &KnowledgeBase, active: &[usize]) -> ObservationState {
    let model = NoisyOr::default();
    let mut findings = ObservationState::new();
    for s in 0..kb.symptom_count() {
        let p = model.probability_ix(kb, active, s);
        let finding = if rng.random::<f64>() < p {
            Finding::Present
        } else {
            Finding::Absent
        };
        findings.record(kb.symptom(s).id.clone(), finding);
    }
    findings
}

/// Cases with exactly one fault, chosen in proportion to the priors, and
/// every symptom observed.
pub fn sample_single_fault_cases<R: Rng + ?Sized>(rng: &mut R, kb: &KnowledgeBase, n: usize) -> Vec<CaseRecord> {
    let total: f64 = kb.faults().iter().map(|f| f.prior).sum();
    (0..n)
        .map(|i| {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = kb.fault_count() - 1;
            for (j, f) in kb.faults().iter().enumerate() {
                if target < f.prior {
                    chosen = j;
                    break;
                }
                target -= f.prior;
            }
            CaseRecord {
                id: format!("case{i}"),
                faults: kb.fault_ids(&[chosen]),
                findings: sample_findings(rng, kb, &[chosen]),
            }
        })
        .collect()
}

/// Cases from the full model: each fault active independently with its
/// prior.
pub fn sample_cases<R: Rng + ?Sized>(rng: &mut R, kb: &KnowledgeBase, n: usize) -> Vec<CaseRecord> {
    (0..n)
        .map(|i| {
            let active: Vec<usize> = (0..kb.fault_count())
                .filter(|&f| rng.random::<f64>() < kb.fault(f).prior)
                .collect();
            CaseRecord {
                id: format!("case{i}"),
                faults: kb.fault_ids(&active),
                findings: sample_findings(rng, kb, &active),
            }
        })
        .collect()
}
