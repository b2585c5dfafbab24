//! Brute-force reference computations for checking the engine.
//!
//! Everything here works from the raw link list of a knowledge base and
//! enumerates exhaustively; nothing calls into the engine's covering,
//! scoring, selection or rule-generation code.

use std::collections::{BTreeMap, BTreeSet};

use coverdx::KnowledgeBase;

pub type Set = BTreeSet<String>;

/// Raw view of a KB: ids in sorted order and the strength table.
pub struct Table {
    pub faults: Vec<String>,
    pub symptoms: Vec<String>,
    pub priors: Vec<f64>,
    /// `strength[f][s]`, zero when there is no link.
    pub strength: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(kb: &KnowledgeBase) -> Self {
        let mut faults: Vec<String> = kb.faults().iter().map(|f| f.id.clone()).collect();
        faults.sort();
        let mut symptoms: Vec<String> = kb.symptoms().iter().map(|s| s.id.clone()).collect();
        symptoms.sort();
        let prior_of: BTreeMap<&str, f64> =
            kb.faults().iter().map(|f| (f.id.as_str(), f.prior)).collect();
        let priors = faults.iter().map(|f| prior_of[f.as_str()]).collect();
        let mut strength = vec![vec![0.0; symptoms.len()]; faults.len()];
        for l in kb.links() {
            let f = faults.iter().position(|x| *x == l.fault).unwrap();
            let s = symptoms.iter().position(|x| *x == l.symptom).unwrap();
            strength[f][s] = l.causal_strength;
        }
        Self {
            faults,
            symptoms,
            priors,
            strength,
        }
    }

    pub fn mask_to_set(&self, mask: u32) -> Set {
        (0..self.faults.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| self.faults[i].clone())
            .collect()
    }

    pub fn set_to_mask(&self, set: &Set) -> u32 {
        set.iter()
            .map(|id| 1u32 << self.faults.iter().position(|f| f == id).expect("known fault"))
            .fold(0, |a, b| a | b)
    }

    fn symptom_pos(&self, id: &str) -> usize {
        self.symptoms.iter().position(|s| s == id).expect("known symptom")
    }

    fn covers(&self, mask: u32, present: &[usize]) -> bool {
        present.iter().all(|&s| {
            (0..self.faults.len()).any(|f| mask & (1 << f) != 0 && self.strength[f][s] > 0.0)
        })
    }

    /// `P(s present | mask)` by summing over every pattern of link
    /// activations that includes at least one firing link.
    pub fn presence_probability(&self, mask: u32, symptom: &str) -> f64 {
        let s = self.symptom_pos(symptom);
        let links: Vec<f64> = (0..self.faults.len())
            .filter(|f| mask & (1 << f) != 0 && self.strength[*f][s] > 0.0)
            .map(|f| self.strength[f][s])
            .collect();
        let mut total = 0.0;
        for pattern in 1u32..(1 << links.len()) {
            let mut p = 1.0;
            for (i, c) in links.iter().enumerate() {
                p *= if pattern & (1 << i) != 0 { *c } else { 1.0 - c };
            }
            total += p;
        }
        total
    }
}

/// Irredundant covers of `present` with at most `max_size` faults, found by
/// testing every subset of faults and every proper subset of each cover.
pub fn brute_force_covers(kb: &KnowledgeBase, present: &Set, max_size: usize) -> Vec<Set> {
    let t = Table::new(kb);
    assert!(t.faults.len() <= 16, "oracle is exponential in |F|");
    let m: Vec<usize> = present.iter().map(|s| t.symptom_pos(s)).collect();
    let mut out = Vec::new();
    for mask in 0u32..(1 << t.faults.len()) {
        if mask.count_ones() as usize > max_size || !t.covers(mask, &m) {
            continue;
        }
        // Every proper submask must fail to cover.
        let mut minimal = true;
        let mut sub = mask;
        while sub != 0 {
            sub = (sub - 1) & mask;
            if t.covers(sub, &m) {
                minimal = false;
                break;
            }
        }
        if minimal {
            out.push(t.mask_to_set(mask));
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// Findings as two symptom-id sets.
pub struct Findings<'a> {
    pub present: &'a Set,
    pub absent: &'a Set,
}

/// Full joint `P(D, findings)` for every fault subset `D`, keyed by mask.
pub fn exhaustive_joint(kb: &KnowledgeBase, findings: &Findings) -> Vec<f64> {
    let t = Table::new(kb);
    assert!(t.faults.len() <= 16, "oracle is exponential in |F|");
    (0u32..(1 << t.faults.len()))
        .map(|mask| {
            let mut p = 1.0;
            for (i, prior) in t.priors.iter().enumerate() {
                p *= if mask & (1 << i) != 0 { *prior } else { 1.0 - prior };
            }
            for s in findings.present {
                p *= t.presence_probability(mask, s);
            }
            for s in findings.absent {
                p *= 1.0 - t.presence_probability(mask, s);
            }
            p
        })
        .collect()
}

/// Oracle posterior over an explicit candidate list: joint table entries
/// renormalized over the candidates.
pub fn candidate_posteriors(kb: &KnowledgeBase, findings: &Findings, candidates: &[Set]) -> Vec<(f64, f64)> {
    let t = Table::new(kb);
    let joint = exhaustive_joint(kb, findings);
    let raw: Vec<f64> = candidates.iter().map(|c| joint[t.set_to_mask(c) as usize]).collect();
    let total: f64 = raw.iter().sum();
    raw.iter()
        .map(|&r| (r, if total > 0.0 { r / total } else { 0.0 }))
        .collect()
}

/// Information gain as the mutual information between the hypothesis and
/// the binary outcome, from the explicit joint `P(D) P(o | D)`.
pub fn mutual_information(kb: &KnowledgeBase, hypotheses: &[(Set, f64)], symptom: &str) -> f64 {
    let t = Table::new(kb);
    let joint: Vec<[f64; 2]> = hypotheses
        .iter()
        .map(|(d, p)| {
            let q = t.presence_probability(t.set_to_mask(d), symptom);
            [p * q, p * (1.0 - q)]
        })
        .collect();
    let outcome = [
        joint.iter().map(|j| j[0]).sum::<f64>(),
        joint.iter().map(|j| j[1]).sum::<f64>(),
    ];
    let mut mi = 0.0;
    for ((_, p), j) in hypotheses.iter().zip(&joint) {
        for o in 0..2 {
            if j[o] > 0.0 {
                mi += j[o] * (j[o] / (p * outcome[o])).log2();
            }
        }
    }
    mi
}

/// Minimal antecedents for `fault`: every symptom subset up to the bound,
/// filtered by containment in the fault's effects, uniqueness among single
/// faults, and minimality against all proper subsets.
pub fn brute_force_discriminating(kb: &KnowledgeBase, fault: &str, max_antecedent: usize) -> Vec<Set> {
    let t = Table::new(kb);
    assert!(t.symptoms.len() <= 20, "oracle is exponential in |S|");
    let f = t.faults.iter().position(|x| x == fault).expect("known fault");
    let produces = |g: usize, mask: u32| {
        (0..t.symptoms.len()).all(|s| mask & (1 << s) == 0 || t.strength[g][s] > 0.0)
    };
    let discriminating = |mask: u32| {
        mask != 0 && produces(f, mask) && (0..t.faults.len()).all(|g| g == f || !produces(g, mask))
    };
    let mut out = Vec::new();
    for mask in 1u32..(1 << t.symptoms.len()) {
        if mask.count_ones() as usize > max_antecedent || !discriminating(mask) {
            continue;
        }
        let mut minimal = true;
        let mut sub = mask;
        while sub != 0 {
            sub = (sub - 1) & mask;
            if discriminating(sub) {
                minimal = false;
                break;
            }
        }
        if minimal {
            out.push(
                (0..t.symptoms.len())
                    .filter(|s| mask & (1 << s) != 0)
                    .map(|s| t.symptoms[s].clone())
                    .collect::<Set>(),
            );
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}
