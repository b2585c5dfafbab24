//! Compilation of the fault → symptoms schemas into symptoms → fault rules.
//!
//! A rule's antecedent is a subset-minimal set of a fault's effects that no
//! other fault can produce in full, so under the single-fault reading the
//! antecedent points at exactly one fault.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kb::{KnowledgeBase, SymptomSet};
use crate::uncertainty::{prior_mass_ix, NoisyOr};

pub const DEFAULT_MAX_ANTECEDENT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeductiveRule {
    pub antecedent: SymptomSet,
    pub consequent: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleGeneration {
    pub rules: Vec<DeductiveRule>,
    /// Faults with no discriminating antecedent within the size bound.
    pub faults_without_rules: Vec<String>,
}

/// Minimal discriminating antecedents for `fault`, by size then id order.
pub fn discriminating_sets(kb: &KnowledgeBase, fault: &str, max_antecedent: usize) -> Result<Vec<SymptomSet>> {
    let f = kb.fault_index(fault)?;
    let sets = discriminating_sets_ix(kb, f, max_antecedent)?;
    Ok(sets.iter().map(|a| kb.symptom_ids(a)).collect())
}

pub fn discriminating_sets_ix(kb: &KnowledgeBase, fault: usize, max_antecedent: usize) -> Result<Vec<Vec<usize>>> {
    if max_antecedent == 0 {
        return Err(Error::InvalidConfig("max antecedent size must be at least 1".into()));
    }
    let effects: Vec<usize> = kb.effects_ix(fault).iter().map(|&(s, _)| s).collect();
    let others: Vec<Vec<usize>> = (0..kb.fault_count())
        .filter(|&g| g != fault)
        .map(|g| kb.effects_ix(g).iter().map(|&(s, _)| s).collect())
        .collect();
    let explained_elsewhere =
        |a: &[usize]| others.iter().any(|e| a.iter().all(|s| e.binary_search(s).is_ok()));

    let mut found: Vec<Vec<usize>> = Vec::new();
    for size in 1..=max_antecedent.min(effects.len()) {
        for a in combinations(&effects, size) {
            let contains_found = found
                .iter()
                .any(|b| b.iter().all(|s| a.binary_search(s).is_ok()));
            if !contains_found && !explained_elsewhere(&a) {
                found.push(a);
            }
        }
    }
    Ok(found)
}

/// All `k`-subsets of `items` in lexicographic order.
fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k == 0 || k > items.len() {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + items.len() - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `P(fault | every antecedent symptom present)` over the single-fault
/// hypotheses and the empty hypothesis.
pub fn rule_confidence_ix(kb: &KnowledgeBase, fault: usize, antecedent: &[usize], model: NoisyOr) -> f64 {
    let joint = |d: &[usize]| -> f64 {
        antecedent
            .iter()
            .map(|&s| model.probability_ix(kb, d, s))
            .product::<f64>()
            * prior_mass_ix(kb, d)
    };
    let own = joint(&[fault]);
    let total: f64 = joint(&[]) + (0..kb.fault_count()).map(|g| joint(&[g])).sum::<f64>();
    if total > 0.0 {
        own / total
    } else {
        0.0
    }
}

/// One rule per discriminating antecedent of every fault.
pub fn generate_rules(kb: &KnowledgeBase, max_antecedent: usize) -> Result<RuleGeneration> {
    generate_rules_with(kb, max_antecedent, NoisyOr::default(), Execution::default())
}

pub fn generate_rules_with(
    kb: &KnowledgeBase,
    max_antecedent: usize,
    model: NoisyOr,
    exec: Execution,
) -> Result<RuleGeneration> {
    let per_fault = exec.map_range(kb.fault_count(), |f| {
        discriminating_sets_ix(kb, f, max_antecedent).map(|sets| {
            sets.into_iter()
                .map(|a| DeductiveRule {
                    confidence: rule_confidence_ix(kb, f, &a, model),
                    antecedent: kb.symptom_ids(&a),
                    consequent: kb.fault(f).id.clone(),
                })
                .collect::<Vec<_>>()
        })
    });
    let mut rules = Vec::new();
    let mut faults_without_rules = Vec::new();
    for (f, result) in per_fault.into_iter().enumerate() {
        let fault_rules = result?;
        if fault_rules.is_empty() {
            faults_without_rules.push(kb.fault(f).id.clone());
        }
        rules.extend(fault_rules);
    }
    Ok(RuleGeneration {
        rules,
        faults_without_rules,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleViolation {
    pub rule: usize,
    pub consequent: String,
    pub message: String,
    /// Other single faults that also produce the whole antecedent.
    pub competing: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checked: usize,
    pub violations: Vec<RuleViolation>,
}

impl VerificationReport {
    pub fn is_sound(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks each rule under the single-fault closed-world reading: the
/// consequent must produce the whole antecedent and no other fault may.
pub fn verify_rules(kb: &KnowledgeBase, rules: &[DeductiveRule]) -> VerificationReport {
    let mut report = VerificationReport {
        checked: rules.len(),
        violations: Vec::new(),
    };
    for (i, rule) in rules.iter().enumerate() {
        let mut violation = |message: String, competing: Vec<String>| {
            report.violations.push(RuleViolation {
                rule: i,
                consequent: rule.consequent.clone(),
                message,
                competing,
            })
        };
        if rule.antecedent.is_empty() {
            violation("empty antecedent".into(), Vec::new());
            continue;
        }
        let Ok(f) = kb.fault_index(&rule.consequent) else {
            violation(format!("unknown fault id {}", rule.consequent), Vec::new());
            continue;
        };
        let a = match kb.symptom_indices(&rule.antecedent) {
            Ok(a) => a,
            Err(e) => {
                violation(e.to_string(), Vec::new());
                continue;
            }
        };
        let produces = |g: usize| {
            a.iter()
                .all(|s| kb.effects_ix(g).iter().any(|(x, _)| x == s))
        };
        if !produces(f) {
            violation(
                format!("{} does not produce the whole antecedent", rule.consequent),
                Vec::new(),
            );
        }
        let competing: Vec<String> = (0..kb.fault_count())
            .filter(|&g| g != f && produces(g))
            .map(|g| kb.fault(g).id.clone())
            .collect();
        if !competing.is_empty() {
            violation(
                format!("antecedent is also explained by {}", competing.join(", ")),
                competing,
            );
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::fixtures::{kb3, set};
    use crate::kb::{CausalLink, FaultNode, KbDocument, SymptomNode};

    #[test]
    fn combination_order() {
        assert_eq!(
            combinations(&[1, 2, 3], 2),
            vec![vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert!(combinations(&[1], 2).is_empty());
    }

    #[test]
    fn fixture_discriminating_sets() {
        let kb = kb3();
        assert_eq!(discriminating_sets(&kb, "f1", 3).unwrap(), vec![set(&["s1"])]);
        assert_eq!(discriminating_sets(&kb, "f2", 3).unwrap(), vec![set(&["s3"])]);
        assert_eq!(discriminating_sets(&kb, "f3", 3).unwrap(), vec![set(&["s4"])]);
        assert!(discriminating_sets(&kb, "f4", 3).is_err());
        assert!(discriminating_sets(&kb, "f1", 0).is_err());
    }

    #[test]
    fn subsumed_fault_has_no_discriminating_set() {
        let mut doc = kb3().to_document();
        doc.faults.push(FaultNode {
            id: "f4".into(),
            label: String::new(),
            prior: 0.1,
            category: None,
        });
        doc.links.push(CausalLink {
            fault: "f4".into(),
            symptom: "s2".into(),
            causal_strength: 0.5,
            evoking_strength: None,
        });
        let kb = KnowledgeBase::new(doc).unwrap();
        assert!(discriminating_sets(&kb, "f4", 3).unwrap().is_empty());
        let generated = generate_rules(&kb, 3).unwrap();
        assert_eq!(generated.faults_without_rules, vec!["f4".to_string()]);
    }

    #[test]
    fn multi_symptom_antecedent() {
        // fa: {x, y}; fb: {x}; fc: {y}. Only {x, y} singles out fa.
        let doc = KbDocument {
            faults: ["fa", "fb", "fc"]
                .iter()
                .map(|id| FaultNode {
                    id: id.to_string(),
                    label: String::new(),
                    prior: 0.1,
                    category: None,
                })
                .collect(),
            symptoms: ["x", "y"]
                .iter()
                .map(|id| SymptomNode {
                    id: id.to_string(),
                    label: String::new(),
                    question: String::new(),
                    cost: 1.0,
                    category: None,
                })
                .collect(),
            links: [("fa", "x"), ("fa", "y"), ("fb", "x"), ("fc", "y")]
                .iter()
                .map(|(f, s)| CausalLink {
                    fault: f.to_string(),
                    symptom: s.to_string(),
                    causal_strength: 0.5,
                    evoking_strength: None,
                })
                .collect(),
            ..Default::default()
        };
        let kb = KnowledgeBase::new(doc).unwrap();
        assert_eq!(discriminating_sets(&kb, "fa", 2).unwrap(), vec![set(&["x", "y"])]);
        assert!(discriminating_sets(&kb, "fa", 1).unwrap().is_empty());
        assert!(discriminating_sets(&kb, "fb", 2).unwrap().is_empty());
    }

    #[test]
    fn fixture_rules() {
        let kb = kb3();
        let generated = generate_rules(&kb, 1).unwrap();
        let pairs: Vec<(SymptomSet, &str)> = generated
            .rules
            .iter()
            .map(|r| (r.antecedent.clone(), r.consequent.as_str()))
            .collect();
        assert_eq!(
            pairs,
            vec![(set(&["s1"]), "f1"), (set(&["s3"]), "f2"), (set(&["s4"]), "f3")]
        );
        assert!(generated.rules.iter().all(|r| r.confidence == 1.0));
        assert!(generated.faults_without_rules.is_empty());
        assert_eq!(generate_rules(&kb, 3).unwrap(), generated);
        assert!(verify_rules(&kb, &generated.rules).is_sound());
    }

    #[test]
    fn leak_makes_confidence_informative() {
        let kb = kb3();
        let model = NoisyOr::new(0.05).unwrap();
        let generated = generate_rules_with(&kb, 1, model, Execution::Sequential).unwrap();
        assert!(generated.rules.iter().all(|r| r.confidence > 0.0 && r.confidence < 1.0));
    }

    #[test]
    fn single_link_kb() {
        let kb = KnowledgeBase::new(KbDocument {
            faults: vec![FaultNode {
                id: "f".into(),
                label: String::new(),
                prior: 0.2,
                category: None,
            }],
            symptoms: vec![SymptomNode {
                id: "s".into(),
                label: String::new(),
                question: String::new(),
                cost: 1.0,
                category: None,
            }],
            links: vec![CausalLink {
                fault: "f".into(),
                symptom: "s".into(),
                causal_strength: 0.4,
                evoking_strength: None,
            }],
            ..Default::default()
        })
        .unwrap();
        let generated = generate_rules(&kb, 3).unwrap();
        assert_eq!(generated.rules.len(), 1);
        assert_eq!(generated.rules[0].confidence, 1.0);

        let empty = KnowledgeBase::new(KbDocument::default()).unwrap();
        assert!(generate_rules(&empty, 3).unwrap().rules.is_empty());
    }

    #[test]
    fn verify_flags_ambiguous_rule() {
        let kb = kb3();
        let rule = DeductiveRule {
            antecedent: set(&["s2"]),
            consequent: "f1".into(),
            confidence: 0.5,
        };
        let report = verify_rules(&kb, &[rule]);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].competing, vec!["f2".to_string()]);
        assert!(verify_rules(&kb, &[]).violations.is_empty());

        let wrong = DeductiveRule {
            antecedent: set(&["s4"]),
            consequent: "f1".into(),
            confidence: 1.0,
        };
        let report = verify_rules(&kb, &[wrong]);
        assert_eq!(report.violations.len(), 2);
    }
}
