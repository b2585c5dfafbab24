//! Set-covering abduction: fault sets that explain every present symptom.
//!
//! Irredundant covers are the minimal hitting sets of the family
//! `{causes(s) : s present}`. They are found by a branching search that
//! always splits on the uncovered symptom with the fewest causes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kb::{FaultSet, KnowledgeBase, SymptomSet};

pub const DEFAULT_MAX_COVER_SIZE: usize = 4;

/// True when every symptom in `present` has at least one cause in `faults`.
pub fn is_cover(kb: &KnowledgeBase, faults: &FaultSet, present: &SymptomSet) -> Result<bool> {
    let d = kb.fault_indices(faults)?;
    let m = kb.symptom_indices(present)?;
    Ok(is_cover_ix(kb, &d, &m))
}

pub fn is_cover_ix(kb: &KnowledgeBase, faults: &[usize], present: &[usize]) -> bool {
    present
        .iter()
        .all(|&s| kb.causes_ix(s).iter().any(|(f, _)| faults.contains(f)))
}

/// All irredundant covers of `present` with at most `max_size` faults,
/// ordered by cardinality and then lexicographically.
pub fn irredundant_covers(
    kb: &KnowledgeBase,
    present: &SymptomSet,
    max_size: usize,
) -> Result<Vec<FaultSet>> {
    let m = kb.symptom_indices(present)?;
    let covers = irredundant_covers_ix(kb, &m, max_size, Execution::default())?;
    Ok(covers.iter().map(|c| kb.fault_ids(c)).collect())
}

/// Index form of [`irredundant_covers`]. Each cover is a sorted index list.
pub fn irredundant_covers_ix(
    kb: &KnowledgeBase,
    present: &[usize],
    max_size: usize,
    exec: Execution,
) -> Result<Vec<Vec<usize>>> {
    if max_size == 0 {
        return Err(Error::InvalidConfig("max cover size must be at least 1".into()));
    }
    let mut present = present.to_vec();
    present.sort_unstable();
    present.dedup();

    let search = Search {
        kb,
        present: &present,
        max_size,
    };
    let Some(first) = search.pick_uncovered(&[]) else {
        return Ok(vec![Vec::new()]);
    };
    // Branch i takes the i-th cause of the pivot symptom and forbids the
    // earlier ones, so every cover is produced by exactly one branch.
    let pivot_causes: Vec<usize> = kb.causes_ix(first).iter().map(|&(f, _)| f).collect();
    let branches = exec.map_range(pivot_causes.len(), |i| {
        let mut out = Vec::new();
        let mut chosen = vec![pivot_causes[i]];
        let mut forbidden = vec![false; kb.fault_count()];
        for &f in &pivot_causes[..i] {
            forbidden[f] = true;
        }
        search.extend(&mut chosen, &mut forbidden, &mut out);
        out
    });
    let mut covers: Vec<Vec<usize>> = branches.into_iter().flatten().collect();
    for c in &mut covers {
        c.sort_unstable();
    }
    covers.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    covers.dedup();
    Ok(covers)
}

struct Search<'a> {
    kb: &'a KnowledgeBase,
    present: &'a [usize],
    max_size: usize,
}

impl Search<'_> {
    /// Uncovered present symptom with the fewest causes.
    fn pick_uncovered(&self, chosen: &[usize]) -> Option<usize> {
        self.present
            .iter()
            .copied()
            .filter(|&s| !self.kb.causes_ix(s).iter().any(|(f, _)| chosen.contains(f)))
            .min_by_key(|&s| (self.kb.causes_ix(s).len(), s))
    }

    fn extend(&self, chosen: &mut Vec<usize>, forbidden: &mut [bool], out: &mut Vec<Vec<usize>>) {
        let Some(s) = self.pick_uncovered(chosen) else {
            if self.is_irredundant(chosen) {
                out.push(chosen.clone());
            }
            return;
        };
        if chosen.len() == self.max_size {
            return;
        }
        let options: Vec<usize> = self
            .kb
            .causes_ix(s)
            .iter()
            .map(|&(f, _)| f)
            .filter(|&f| !forbidden[f])
            .collect();
        let mut newly_forbidden = Vec::with_capacity(options.len());
        for f in options {
            chosen.push(f);
            self.extend(chosen, forbidden, out);
            chosen.pop();
            forbidden[f] = true;
            newly_forbidden.push(f);
        }
        for f in newly_forbidden {
            forbidden[f] = false;
        }
    }

    /// Every chosen fault must own a present symptom no other chosen fault
    /// covers.
    fn is_irredundant(&self, chosen: &[usize]) -> bool {
        chosen.iter().all(|&f| {
            self.present.iter().any(|&s| {
                let causes = self.kb.causes_ix(s);
                causes.iter().any(|&(g, _)| g == f)
                    && !causes.iter().any(|&(g, _)| g != f && chosen.contains(&g))
            })
        })
    }
}

/// A product-form block of covers: pick one fault from each component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generator {
    pub components: Vec<FaultSet>,
}

impl Generator {
    pub fn expand(&self) -> Vec<FaultSet> {
        let mut acc: Vec<FaultSet> = vec![FaultSet::new()];
        for component in &self.components {
            acc = acc
                .iter()
                .flat_map(|partial| {
                    component.iter().map(move |f| {
                        let mut next = partial.clone();
                        next.insert(f.clone());
                        next
                    })
                })
                .collect();
        }
        acc
    }

    pub fn cover_size(&self) -> usize {
        self.components.len()
    }
}

/// Compact representation of all irredundant covers of a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSet {
    pub generators: Vec<Generator>,
    pub max_size: usize,
}

impl GeneratorSet {
    /// Every cover the generators denote, de-duplicated, in cover order.
    pub fn expand(&self) -> Vec<FaultSet> {
        let all: BTreeSet<(usize, FaultSet)> = self
            .generators
            .iter()
            .flat_map(Generator::expand)
            .map(|c| (c.len(), c))
            .collect();
        all.into_iter().map(|(_, c)| c).collect()
    }
}

/// Builds generators by repeatedly fusing two blocks that differ in a
/// single component.
pub fn compile_generators(
    kb: &KnowledgeBase,
    present: &SymptomSet,
    max_size: usize,
) -> Result<GeneratorSet> {
    let covers = irredundant_covers(kb, present, max_size)?;
    let mut blocks: Vec<Vec<FaultSet>> = covers
        .into_iter()
        .map(|c| c.into_iter().map(|f| FaultSet::from([f])).collect())
        .collect();
    for b in &mut blocks {
        b.sort();
    }

    'fuse: loop {
        for i in 0..blocks.len() {
            for j in (i + 1)..blocks.len() {
                if let Some(fused) = fuse(&blocks[i], &blocks[j]) {
                    blocks[i] = fused;
                    blocks.swap_remove(j);
                    continue 'fuse;
                }
            }
        }
        break;
    }
    blocks.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(GeneratorSet {
        generators: blocks
            .into_iter()
            .map(|components| Generator { components })
            .collect(),
        max_size,
    })
}

/// Fuses two equally sized blocks that share all but one component, when
/// the differing components are disjoint.
fn fuse(a: &[FaultSet], b: &[FaultSet]) -> Option<Vec<FaultSet>> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let only_a: Vec<&FaultSet> = a.iter().filter(|c| !b.contains(c)).collect();
    let only_b: Vec<&FaultSet> = b.iter().filter(|c| !a.contains(c)).collect();
    if only_a.len() != 1 || only_b.len() != 1 || !only_a[0].is_disjoint(only_b[0]) {
        return None;
    }
    let merged: FaultSet = only_a[0].union(only_b[0]).cloned().collect();
    let mut out: Vec<FaultSet> = a.iter().filter(|c| *c != only_a[0]).cloned().collect();
    out.push(merged);
    out.sort();
    Some(out)
}

/// Faults that alone explain every present symptom, by id.
pub fn single_fault_candidates(kb: &KnowledgeBase, present: &SymptomSet) -> Result<Vec<String>> {
    let m = kb.symptom_indices(present)?;
    Ok(single_fault_candidates_ix(kb, &m)
        .into_iter()
        .map(|f| kb.fault(f).id.clone())
        .collect())
}

pub fn single_fault_candidates_ix(kb: &KnowledgeBase, present: &[usize]) -> Vec<usize> {
    (0..kb.fault_count())
        .filter(|&f| is_cover_ix(kb, &[f], present))
        .collect()
}
