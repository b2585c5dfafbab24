//! Weight estimation from labeled cases.
//!
//! Causal strengths are re-estimated only from cases labeled with a single
//! fault, which isolates each link from confounding causes. Both strengths
//! and priors use Laplace smoothing.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kb::{FaultSet, Finding, KnowledgeBase, ObservationState};

pub const LAPLACE_ALPHA: f64 = 1.0;

/// One labeled case: the faults known to be active and the findings seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub faults: FaultSet,
    pub findings: ObservationState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSupport {
    pub fault: String,
    pub symptom: String,
    /// Single-fault cases of `fault` in which `symptom` was observed.
    pub isolated_cases: u64,
    pub present: u64,
    pub previous: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub cases: u64,
    pub single_fault_cases: u64,
    pub skipped_multi_fault: u64,
    pub fault_free_cases: u64,
    pub priors: BTreeMap<String, f64>,
    pub links: Vec<LinkSupport>,
    /// Links no isolated case speaks to; their strength falls to the
    /// smoothing midpoint.
    pub unsupported: Vec<(String, String)>,
}

#[derive(Clone)]
struct Counts {
    labeled: Vec<u64>,
    isolated: Vec<u64>,
    present: Vec<u64>,
    single: u64,
    multi: u64,
    none: u64,
}

impl Counts {
    fn zero(faults: usize, links: usize) -> Self {
        Self {
            labeled: vec![0; faults],
            isolated: vec![0; links],
            present: vec![0; links],
            single: 0,
            multi: 0,
            none: 0,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.labeled.iter_mut().zip(other.labeled) {
            *a += b;
        }
        for (a, b) in self.isolated.iter_mut().zip(other.isolated) {
            *a += b;
        }
        for (a, b) in self.present.iter_mut().zip(other.present) {
            *a += b;
        }
        self.single += other.single;
        self.multi += other.multi;
        self.none += other.none;
        self
    }
}

/// A case with ids resolved to indices.
struct IndexedCase {
    faults: Vec<usize>,
    findings: Vec<(usize, Finding)>,
}

/// Re-estimates every causal strength and prior from `cases`, returning a
/// new knowledge base and a report. The input KB is not modified.
pub fn estimate_weights(
    cases: &[CaseRecord],
    kb: &KnowledgeBase,
    exec: Execution,
) -> Result<(KnowledgeBase, EstimationReport)> {
    if cases.is_empty() {
        return Err(Error::Estimation("case list is empty".into()));
    }
    let indexed = cases
        .iter()
        .map(|c| {
            let faults = kb.fault_indices(&c.faults)?;
            let findings = c
                .findings
                .iter()
                .map(|(s, f)| Ok((kb.symptom_index(s)?, f)))
                .collect::<Result<Vec<_>>>()?;
            Ok(IndexedCase { faults, findings })
        })
        .collect::<Result<Vec<_>>>()?;

    // Links are sorted by (fault, symptom) and effects by symptom, so the
    // links of fault f occupy a contiguous block starting at offsets[f].
    let mut offsets = Vec::with_capacity(kb.fault_count());
    let mut next = 0;
    for f in 0..kb.fault_count() {
        offsets.push(next);
        next += kb.effects_ix(f).len();
    }
    let link_count = kb.links().len();

    let counts = exec.map_reduce(
        &indexed,
        Counts::zero(kb.fault_count(), link_count),
        |case| {
            let mut c = Counts::zero(kb.fault_count(), link_count);
            for &f in &case.faults {
                c.labeled[f] += 1;
            }
            match case.faults.as_slice() {
                [] => c.none += 1,
                [f] => {
                    c.single += 1;
                    for (k, &(s, _)) in kb.effects_ix(*f).iter().enumerate() {
                        let finding = case
                            .findings
                            .iter()
                            .find(|(x, _)| *x == s)
                            .map(|&(_, v)| v)
                            .unwrap_or(Finding::Unknown);
                        match finding {
                            Finding::Present => {
                                c.isolated[offsets[*f] + k] += 1;
                                c.present[offsets[*f] + k] += 1;
                            }
                            Finding::Absent => c.isolated[offsets[*f] + k] += 1,
                            Finding::Unknown => {}
                        }
                    }
                }
                _ => c.multi += 1,
            }
            c
        },
        Counts::merge,
    );

    let n = cases.len() as f64;
    let mut priors = BTreeMap::new();
    for (f, node) in kb.faults().iter().enumerate() {
        let p = (counts.labeled[f] as f64 + LAPLACE_ALPHA) / (n + 2.0 * LAPLACE_ALPHA);
        priors.insert(node.id.clone(), p);
    }
    let mut strengths = BTreeMap::new();
    let mut links = Vec::with_capacity(link_count);
    let mut unsupported = Vec::new();
    for (i, link) in kb.links().iter().enumerate() {
        let iso = counts.isolated[i];
        let present = counts.present[i];
        let estimate = (present as f64 + LAPLACE_ALPHA) / (iso as f64 + 2.0 * LAPLACE_ALPHA);
        if iso == 0 {
            unsupported.push((link.fault.clone(), link.symptom.clone()));
        }
        strengths.insert((link.fault.clone(), link.symptom.clone()), estimate);
        links.push(LinkSupport {
            fault: link.fault.clone(),
            symptom: link.symptom.clone(),
            isolated_cases: iso,
            present,
            previous: link.causal_strength,
            estimate,
        });
    }

    let updated = kb.with_weights(&strengths, &priors)?;
    let report = EstimationReport {
        cases: cases.len() as u64,
        single_fault_cases: counts.single,
        skipped_multi_fault: counts.multi,
        fault_free_cases: counts.none,
        priors,
        links,
        unsupported,
    };
    Ok((updated, report))
}

/// Reads cases from CSV: `case_id`, `faults` (semicolon-separated), then
/// one column per symptom holding `1`, `0` or blank.
pub fn read_cases_csv<R: Read>(source: R, kb: &KnowledgeBase) -> Result<Vec<CaseRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Case(e.to_string()))?
        .clone();
    if headers.len() < 2 || &headers[0] != "case_id" || &headers[1] != "faults" {
        return Err(Error::Case(
            "header must start with case_id,faults".into(),
        ));
    }
    let symptom_cols: Vec<String> = headers.iter().skip(2).map(str::to_owned).collect();
    for s in &symptom_cols {
        kb.symptom_index(s)?;
    }

    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Case(e.to_string()))?;
        let id = record.get(0).unwrap_or_default().to_owned();
        let faults: FaultSet = record
            .get(1)
            .unwrap_or_default()
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect();
        for f in &faults {
            kb.fault_index(f)?;
        }
        let mut findings = ObservationState::new();
        for (col, symptom) in symptom_cols.iter().enumerate() {
            match record.get(col + 2).unwrap_or_default() {
                "1" => findings.record(symptom.clone(), Finding::Present),
                "0" => findings.record(symptom.clone(), Finding::Absent),
                "" => {}
                other => {
                    return Err(Error::Case(format!(
                        "row {}: column {symptom}: expected 1, 0 or blank, got {other:?}",
                        row + 1
                    )))
                }
            }
        }
        out.push(CaseRecord { id, faults, findings });
    }
    Ok(out)
}

pub fn write_cases_csv<W: Write>(out: W, kb: &KnowledgeBase, cases: &[CaseRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["case_id".to_owned(), "faults".to_owned()];
    header.extend(kb.symptoms().iter().map(|s| s.id.clone()));
    writer.write_record(&header).map_err(|e| Error::Case(e.to_string()))?;
    for case in cases {
        let mut row = vec![
            case.id.clone(),
            case.faults.iter().cloned().collect::<Vec<_>>().join(";"),
        ];
        for s in kb.symptoms() {
            row.push(
                match (case.findings.is_recorded(&s.id), case.findings.finding(&s.id)) {
                    (true, Finding::Present) => "1",
                    (true, Finding::Absent) => "0",
                    _ => "",
                }
                .to_owned(),
            );
        }
        writer.write_record(&row).map_err(|e| Error::Case(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::kb::fixtures::{kb3, set};

    fn case(id: usize, faults: &[&str], present: &[&str], absent: &[&str]) -> CaseRecord {
        CaseRecord {
            id: id.to_string(),
            faults: set(faults),
            findings: ObservationState::from_sets(present.iter().copied(), absent.iter().copied()),
        }
    }

    #[test]
    fn smoothing_formula() {
        let kb = kb3();
        let cases: Vec<_> = (0..10)
            .map(|i| {
                if i < 9 {
                    case(i, &["f1"], &["s1"], &[])
                } else {
                    case(i, &["f1"], &[], &["s1"])
                }
            })
            .collect();
        let (updated, report) = estimate_weights(&cases, &kb, Execution::Sequential).unwrap();
        let c = updated.link("f1", "s1").unwrap().causal_strength;
        assert_abs_diff_eq!(c, 10.0 / 12.0, epsilon = 1e-12);
        // s2 never observed in these cases: midpoint and a report entry.
        assert_eq!(updated.link("f1", "s2").unwrap().causal_strength, 0.5);
        assert!(report.unsupported.contains(&("f1".into(), "s2".into())));
        assert_eq!(report.single_fault_cases, 10);
        // The input KB is untouched.
        assert_eq!(kb.link("f1", "s1").unwrap().causal_strength, 0.9);
    }

    #[test]
    fn prior_formula() {
        let kb = kb3();
        let cases: Vec<_> = (0..10)
            .map(|i| if i < 2 { case(i, &["f3"], &["s4"], &[]) } else { case(i, &[], &[], &[]) })
            .collect();
        let (updated, report) = estimate_weights(&cases, &kb, Execution::Sequential).unwrap();
        assert_abs_diff_eq!(updated.fault_by_id("f3").unwrap().prior, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(updated.fault_by_id("f1").unwrap().prior, 1.0 / 12.0, epsilon = 1e-12);
        assert_eq!(report.fault_free_cases, 8);
    }

    #[test]
    fn multi_fault_cases_are_skipped_for_links() {
        let kb = kb3();
        let cases = vec![case(0, &["f1", "f2"], &["s1", "s2", "s3"], &[])];
        let (updated, report) = estimate_weights(&cases, &kb, Execution::Parallel).unwrap();
        assert_eq!(report.skipped_multi_fault, 1);
        assert_eq!(report.unsupported.len(), 5);
        assert_eq!(updated.link("f1", "s1").unwrap().causal_strength, 0.5);
        // Priors still count the labels: (1 + 1) / (1 + 2).
        assert_abs_diff_eq!(updated.fault_by_id("f1").unwrap().prior, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_and_invalid_cases() {
        let kb = kb3();
        assert!(matches!(estimate_weights(&[], &kb, Execution::Sequential), Err(Error::Estimation(_))));
        let bad = vec![case(0, &["f9"], &[], &[])];
        assert!(matches!(
            estimate_weights(&bad, &kb, Execution::Sequential),
            Err(Error::UnknownFault(_))
        ));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let kb = kb3();
        let text = "case_id,faults,s1,s2,s3,s4\nc1,f1,1,0,,\nc2,f1;f2,1,1,1,0\nc3,,,,,\n";
        let cases = read_cases_csv(text.as_bytes(), &kb).unwrap();
        assert_eq!(cases.len(), 3);
        assert_eq!(cases[0].faults, set(&["f1"]));
        assert_eq!(cases[0].findings.finding("s2"), Finding::Absent);
        assert!(!cases[0].findings.is_recorded("s3"));
        assert_eq!(cases[1].faults, set(&["f1", "f2"]));
        assert!(cases[2].faults.is_empty());

        let mut buf = Vec::new();
        write_cases_csv(&mut buf, &kb, &cases).unwrap();
        assert_eq!(read_cases_csv(buf.as_slice(), &kb).unwrap(), cases);

        assert!(read_cases_csv("id,faults\n".as_bytes(), &kb).is_err());
        assert!(read_cases_csv("case_id,faults,s9\n".as_bytes(), &kb).is_err());
        assert!(read_cases_csv("case_id,faults,s1\nc,f1,2\n".as_bytes(), &kb).is_err());
    }
}
