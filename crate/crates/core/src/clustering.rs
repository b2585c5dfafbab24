//! Similarity structure over faults and symptoms: weighted-Jaccard
//! profiles, average-linkage agglomeration, and the shared-cause partition
//! of present symptoms used to split multiple-fault problems.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kb::{KnowledgeBase, SymptomSet};

/// Weighted Jaccard of two sparse profiles sorted by index. Two empty
/// profiles are identical.
pub fn weighted_jaccard(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut min_sum, mut max_sum) = (0.0, 0.0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(ka, wa)), Some(&(kb, wb))) if ka == kb => {
                min_sum += wa.min(wb);
                max_sum += wa.max(wb);
                i += 1;
                j += 1;
            }
            (Some(&(ka, wa)), Some(&(kb, _))) if ka < kb => {
                max_sum += wa;
                i += 1;
            }
            (Some(&(_, wa)), None) => {
                max_sum += wa;
                i += 1;
            }
            (_, Some(&(_, wb))) => {
                max_sum += wb;
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    if max_sum == 0.0 {
        1.0
    } else {
        min_sum / max_sum
    }
}

/// Similarity of two faults' weighted effect profiles.
pub fn fault_similarity(kb: &KnowledgeBase, a: &str, b: &str) -> Result<f64> {
    let (a, b) = (kb.fault_index(a)?, kb.fault_index(b)?);
    Ok(weighted_jaccard(kb.effects_ix(a), kb.effects_ix(b)))
}

/// Similarity of two symptoms' weighted cause profiles.
pub fn symptom_similarity(kb: &KnowledgeBase, a: &str, b: &str) -> Result<f64> {
    let (a, b) = (kb.symptom_index(a)?, kb.symptom_index(b)?);
    Ok(weighted_jaccard(kb.causes_ix(a), kb.causes_ix(b)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
}

/// One agglomeration step. Node ids below `leaves.len()` are leaves; merge
/// `k` creates node `leaves.len() + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    fn node_height(&self, node: usize) -> f64 {
        if node < self.leaves.len() {
            0.0
        } else {
            self.merges[node - self.leaves.len()].height
        }
    }

    /// Clusters formed by every merge at or below `height`, each sorted,
    /// ordered by first member.
    pub fn cut(&self, height: f64) -> Vec<Vec<String>> {
        let n = self.leaves.len();
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        for (k, m) in self.merges.iter().enumerate() {
            if m.height <= height {
                parent[m.left] = n + k;
                parent[m.right] = n + k;
            }
        }
        let root = |mut x: usize| {
            while parent[x] != x {
                x = parent[x];
            }
            x
        };
        let mut groups: std::collections::BTreeMap<usize, Vec<String>> = Default::default();
        for i in 0..n {
            groups.entry(root(i)).or_default().push(self.leaves[i].clone());
        }
        let mut out: Vec<Vec<String>> = groups
            .into_values()
            .map(|mut g| {
                g.sort();
                g
            })
            .collect();
        out.sort();
        out
    }

    /// Newick text; branch lengths are height differences.
    pub fn to_newick(&self) -> String {
        let n = self.leaves.len();
        let root = if self.merges.is_empty() { 0 } else { n + self.merges.len() - 1 };
        let mut out = String::new();
        if n > 0 {
            self.write_newick(root, &mut out);
        }
        out.push(';');
        out
    }

    fn write_newick(&self, node: usize, out: &mut String) {
        let n = self.leaves.len();
        if node < n {
            out.push_str(&newick_label(&self.leaves[node]));
            return;
        }
        let m = &self.merges[node - n];
        out.push('(');
        for (i, child) in [m.left, m.right].into_iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            self.write_newick(child, out);
            let _ = write!(out, ":{}", m.height - self.node_height(child));
        }
        out.push(')');
    }
}

fn newick_label(id: &str) -> String {
    if id.chars().any(|c| "()[]':;, \t".contains(c)) {
        format!("'{}'", id.replace('\'', "''"))
    } else {
        id.to_owned()
    }
}

/// Agglomerative clustering at height `1 − similarity`. Ties go to the
/// pair whose smallest member ids come first.
pub fn agglomerate<F>(items: &[String], similarity: F, linkage: Linkage, exec: Execution) -> Result<Dendrogram>
where
    F: Fn(&str, &str) -> f64 + Sync + Send,
{
    let Linkage::Average = linkage;
    let n = items.len();
    if n == 0 {
        return Err(Error::EmptyItems);
    }
    let rows = exec.map_range(n, |i| {
        (0..n)
            .map(|j| if i == j { 1.0 } else { similarity(&items[i], &items[j]) })
            .collect::<Vec<f64>>()
    });

    struct Cluster {
        node: usize,
        size: usize,
        min_id: String,
    }
    let mut clusters: Vec<Option<Cluster>> = items
        .iter()
        .enumerate()
        .map(|(i, id)| {
            Some(Cluster {
                node: i,
                size: 1,
                min_id: id.clone(),
            })
        })
        .collect();
    // Summed pairwise similarity between live clusters, indexed by slot.
    let mut sums = rows;
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut floor = 0.0f64;

    for _ in 1..n {
        let mut best: Option<(f64, (&str, &str), usize, usize)> = None;
        for a in 0..n {
            let Some(ca) = &clusters[a] else { continue };
            for b in (a + 1)..n {
                let Some(cb) = &clusters[b] else { continue };
                let avg = sums[a][b] / (ca.size * cb.size) as f64;
                let key = if ca.min_id <= cb.min_id {
                    (ca.min_id.as_str(), cb.min_id.as_str())
                } else {
                    (cb.min_id.as_str(), ca.min_id.as_str())
                };
                let better = match &best {
                    None => true,
                    Some((v, k, _, _)) => avg > *v || (avg == *v && key < *k),
                };
                if better {
                    best = Some((avg, key, a, b));
                }
            }
        }
        let (avg, _, a, b) = best.expect("at least two live clusters");
        let ca = clusters[a].take().expect("live");
        let cb = clusters[b].take().expect("live");
        let (left, right) = if ca.min_id <= cb.min_id { (&ca, &cb) } else { (&cb, &ca) };
        // Average linkage is monotone; clamp away rounding noise.
        let height = (1.0 - avg).clamp(0.0, 1.0).max(floor);
        floor = height;
        merges.push(Merge {
            left: left.node,
            right: right.node,
            height,
            size: ca.size + cb.size,
        });
        for c in 0..n {
            if clusters[c].is_some() {
                let s = sums[a][c] + sums[b][c];
                sums[a][c] = s;
                sums[c][a] = s;
            }
        }
        clusters[a] = Some(Cluster {
            node: n + merges.len() - 1,
            size: ca.size + cb.size,
            min_id: left.min_id.clone(),
        });
    }
    Ok(Dendrogram {
        leaves: items.to_vec(),
        merges,
    })
}

pub fn cluster_faults(kb: &KnowledgeBase, exec: Execution) -> Result<Dendrogram> {
    let items: Vec<String> = kb.faults().iter().map(|f| f.id.clone()).collect();
    agglomerate(
        &items,
        |a, b| fault_similarity(kb, a, b).unwrap_or(0.0),
        Linkage::Average,
        exec,
    )
}

pub fn cluster_symptoms(kb: &KnowledgeBase, exec: Execution) -> Result<Dendrogram> {
    let items: Vec<String> = kb.symptoms().iter().map(|s| s.id.clone()).collect();
    agglomerate(
        &items,
        |a, b| symptom_similarity(kb, a, b).unwrap_or(0.0),
        Linkage::Average,
        exec,
    )
}

/// Connected components of the present symptoms, where two symptoms are
/// adjacent when they share a cause.
pub fn partition_present(kb: &KnowledgeBase, present: &SymptomSet) -> Result<Vec<SymptomSet>> {
    let m = kb.symptom_indices(present)?;
    Ok(partition_present_ix(kb, &m)
        .iter()
        .map(|c| kb.symptom_ids(c))
        .collect())
}

pub fn partition_present_ix(kb: &KnowledgeBase, present: &[usize]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..present.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    // Join symptoms through the first present symptom seen for each fault.
    let mut owner: Vec<Option<usize>> = vec![None; kb.fault_count()];
    for (i, &s) in present.iter().enumerate() {
        for &(f, _) in kb.causes_ix(s) {
            match owner[f] {
                None => owner[f] = Some(i),
                Some(j) => {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &s) in present.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(s);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    for g in &mut out {
        g.sort_unstable();
    }
    out.sort();
    out
}
