//! Knowledge-base model: faults, symptoms, the weighted causal relation
//! between them and optional taxonomies over either side.
//!
//! A [`KbDocument`] is the raw serialized form. [`validate_kb`] inspects a
//! document and reports every violation as data; [`KnowledgeBase`] is the
//! validated, indexed and immutable form every other module works on.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Prior assigned to a fault whose document entry carries none.
pub const DEFAULT_PRIOR: f64 = 0.05;

/// Tolerance used when comparing a stored evoking strength with the one
/// implied by priors and causal strengths.
const EVOKING_MISMATCH_TOLERANCE: f64 = 1e-6;

pub type FaultSet = BTreeSet<String>;
pub type SymptomSet = BTreeSet<String>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultNode {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub prior: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymptomNode {
    pub id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub question: String,
    #[serde(default = "default_cost")]
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

fn default_cost() -> f64 {
    1.0
}

impl SymptomNode {
    /// Question text shown to the operator, falling back to the label.
    pub fn prompt(&self) -> String {
        if !self.question.is_empty() {
            self.question.clone()
        } else if !self.label.is_empty() {
            format!("Is \"{}\" present?", self.label)
        } else {
            format!("Is {} present?", self.id)
        }
    }
}

/// One arc of the causal relation, carrying `P(symptom | fault)` and
/// optionally `P(fault | symptom)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalLink {
    pub fault: String,
    pub symptom: String,
    pub causal_strength: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evoking_strength: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemberKind {
    FaultCategory,
    SymptomCategory,
}

impl fmt::Display for MemberKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemberKind::FaultCategory => f.write_str("fault-category"),
            MemberKind::SymptomCategory => f.write_str("symptom-category"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyNode {
    pub id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub kind: MemberKind,
    /// Weight on the arc to `parent`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

/// Serialized knowledge base, exactly as it appears in a KB file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbDocument {
    #[serde(default)]
    pub meta: Meta,
    #[serde(default)]
    pub faults: Vec<FaultNode>,
    #[serde(default)]
    pub symptoms: Vec<SymptomNode>,
    #[serde(default)]
    pub links: Vec<CausalLink>,
    #[serde(default)]
    pub taxonomy: Vec<TaxonomyNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

impl Violation {
    fn error(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            location: location.into(),
            message: message.into(),
        }
    }

    fn warning(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.location, self.message)
    }
}

/// How unknown keys in a KB file are treated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum KeyPolicy {
    #[default]
    Strict,
    Lenient,
}

/// A loaded knowledge base together with every warning raised while loading
/// and validating it.
#[derive(Debug, Clone)]
pub struct LoadedKb {
    pub kb: KnowledgeBase,
    pub warnings: Vec<Violation>,
}

/// Parses, validates and indexes a KB document.
pub fn load_kb<R: Read>(source: R, policy: KeyPolicy) -> Result<LoadedKb> {
    let value: Value = serde_json::from_reader(source).map_err(|e| Error::Parse(e.to_string()))?;
    load_kb_value(value, policy)
}

pub fn load_kb_str(source: &str, policy: KeyPolicy) -> Result<LoadedKb> {
    load_kb(source.as_bytes(), policy)
}

pub fn load_kb_value(value: Value, policy: KeyPolicy) -> Result<LoadedKb> {
    let (doc, violations) = check_kb_value(value, policy)?;
    if violations.iter().any(Violation::is_error) {
        return Err(Error::Invalid(
            violations.into_iter().filter(Violation::is_error).collect(),
        ));
    }
    let kb = KnowledgeBase::from_validated(doc);
    Ok(LoadedKb { kb, warnings: violations })
}

/// Every violation in a document, errors and warnings alike, without
/// building the knowledge base. Fails only when the JSON does not have the
/// shape of a KB document.
pub fn check_kb_value(mut value: Value, policy: KeyPolicy) -> Result<(KbDocument, Vec<Violation>)> {
    let mut notes = Vec::new();
    normalize_document(&mut value, policy, &mut notes)?;
    let doc: KbDocument =
        serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    notes.extend(validate_kb(&doc));
    Ok((doc, notes))
}

const TOP_KEYS: &[&str] = &["meta", "faults", "symptoms", "links", "taxonomy"];
const META_KEYS: &[&str] = &["name", "version", "description"];
const FAULT_KEYS: &[&str] = &["id", "label", "prior", "category"];
const SYMPTOM_KEYS: &[&str] = &["id", "label", "question", "cost", "category"];
const LINK_KEYS: &[&str] = &["fault", "symptom", "causal_strength", "evoking_strength"];
const TAXONOMY_KEYS: &[&str] = &["id", "label", "parent", "kind", "weight"];

/// Applies the key policy and fills defaulted priors, recording a warning
/// for each.
fn normalize_document(value: &mut Value, policy: KeyPolicy, notes: &mut Vec<Violation>) -> Result<()> {
    let top = value
        .as_object_mut()
        .ok_or_else(|| Error::Parse("KB document must be a JSON object".into()))?;
    check_keys(top, TOP_KEYS, "document", policy, notes)?;
    if let Some(meta) = top.get_mut("meta").and_then(Value::as_object_mut) {
        check_keys(meta, META_KEYS, "meta", policy, notes)?;
    }
    for (section, keys) in [
        ("faults", FAULT_KEYS),
        ("symptoms", SYMPTOM_KEYS),
        ("links", LINK_KEYS),
        ("taxonomy", TAXONOMY_KEYS),
    ] {
        let Some(items) = top.get_mut(section).and_then(Value::as_array_mut) else {
            continue;
        };
        for (i, item) in items.iter_mut().enumerate() {
            let Some(obj) = item.as_object_mut() else {
                continue;
            };
            let location = item_location(section, i, obj);
            check_keys(obj, keys, &location, policy, notes)?;
            if section == "faults" && !obj.contains_key("prior") {
                obj.insert("prior".into(), Value::from(DEFAULT_PRIOR));
                notes.push(Violation::warning(
                    location,
                    format!("prior missing, defaulted to {DEFAULT_PRIOR}"),
                ));
            }
        }
    }
    Ok(())
}

fn item_location(section: &str, index: usize, obj: &Map<String, Value>) -> String {
    let field = |k: &str| obj.get(k).and_then(Value::as_str).map(str::to_owned);
    match section {
        "links" => match (field("fault"), field("symptom")) {
            (Some(f), Some(s)) => format!("links[{f}->{s}]"),
            _ => format!("links[{index}]"),
        },
        _ => match field("id") {
            Some(id) => format!("{section}[{id}]"),
            None => format!("{section}[{index}]"),
        },
    }
}

fn check_keys(
    obj: &mut Map<String, Value>,
    known: &[&str],
    location: &str,
    policy: KeyPolicy,
    notes: &mut Vec<Violation>,
) -> Result<()> {
    let unknown: Vec<String> = obj
        .keys()
        .filter(|k| !known.contains(&k.as_str()))
        .cloned()
        .collect();
    if unknown.is_empty() {
        return Ok(());
    }
    match policy {
        KeyPolicy::Strict => Err(Error::Parse(format!(
            "{location}: unknown key(s) {}",
            unknown.join(", ")
        ))),
        KeyPolicy::Lenient => {
            for key in unknown {
                obj.remove(&key);
                notes.push(Violation::warning(location, format!("unknown key {key:?} ignored")));
            }
            Ok(())
        }
    }
}

fn in_unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Checks every invariant of a KB document. Violations are returned as
/// data; the list is empty exactly when the document is clean.
pub fn validate_kb(doc: &KbDocument) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut fault_ids = HashSet::new();
    for f in &doc.faults {
        let loc = format!("faults[{}]", f.id);
        if f.id.is_empty() {
            out.push(Violation::error(&loc, "empty fault id"));
        }
        if !fault_ids.insert(f.id.as_str()) {
            out.push(Violation::error(&loc, format!("duplicate fault id {}", f.id)));
        }
        if !in_unit_interval(f.prior) {
            out.push(Violation::error(&loc, format!("prior out of range: {}", f.prior)));
        }
    }

    let mut symptom_ids = HashSet::new();
    for s in &doc.symptoms {
        let loc = format!("symptoms[{}]", s.id);
        if s.id.is_empty() {
            out.push(Violation::error(&loc, "empty symptom id"));
        }
        if !symptom_ids.insert(s.id.as_str()) {
            out.push(Violation::error(&loc, format!("duplicate symptom id {}", s.id)));
        }
        if !(s.cost >= 0.0 && s.cost.is_finite()) {
            out.push(Violation::error(&loc, format!("cost out of range: {}", s.cost)));
        }
    }

    let mut pairs = HashSet::new();
    let mut linked_symptoms = HashSet::new();
    for l in &doc.links {
        let loc = format!("links[{}->{}]", l.fault, l.symptom);
        if !fault_ids.contains(l.fault.as_str()) {
            out.push(Violation::error(&loc, format!("unknown fault id {}", l.fault)));
        }
        if !symptom_ids.contains(l.symptom.as_str()) {
            out.push(Violation::error(&loc, format!("unknown symptom id {}", l.symptom)));
        }
        if !pairs.insert((l.fault.as_str(), l.symptom.as_str())) {
            out.push(Violation::error(&loc, "duplicate link"));
        }
        if !(l.causal_strength > 0.0 && l.causal_strength <= 1.0) {
            out.push(Violation::error(
                &loc,
                format!("strength out of range: causal_strength {}", l.causal_strength),
            ));
        }
        if let Some(e) = l.evoking_strength {
            if !in_unit_interval(e) {
                out.push(Violation::error(
                    &loc,
                    format!("strength out of range: evoking_strength {e}"),
                ));
            }
        }
        linked_symptoms.insert(l.symptom.as_str());
    }

    validate_taxonomy(doc, &mut out);

    for s in &doc.symptoms {
        if !linked_symptoms.contains(s.id.as_str()) {
            out.push(Violation::warning(
                format!("symptoms[{}]", s.id),
                format!("orphan symptom {}", s.id),
            ));
        }
    }

    evoking_mismatches(doc, &mut out);
    out
}

fn validate_taxonomy(doc: &KbDocument, out: &mut Vec<Violation>) {
    let mut nodes: HashMap<&str, &TaxonomyNode> = HashMap::new();
    for t in &doc.taxonomy {
        let loc = format!("taxonomy[{}]", t.id);
        if nodes.insert(t.id.as_str(), t).is_some() {
            out.push(Violation::error(&loc, format!("duplicate taxonomy id {}", t.id)));
        }
        if let Some(w) = t.weight {
            if !in_unit_interval(w) {
                out.push(Violation::error(&loc, format!("weight out of range: {w}")));
            }
        }
    }

    for t in &doc.taxonomy {
        let loc = format!("taxonomy[{}]", t.id);
        if let Some(p) = &t.parent {
            match nodes.get(p.as_str()) {
                None => out.push(Violation::error(&loc, format!("unknown parent {p}"))),
                Some(parent) if parent.kind != t.kind => out.push(Violation::error(
                    &loc,
                    format!("kind {} differs from parent {p} ({})", t.kind, parent.kind),
                )),
                Some(_) => {}
            }
        }
    }

    // Cycle detection: walk each parent chain; a cycle is reported once,
    // keyed by its smallest member.
    let mut reported: HashSet<&str> = HashSet::new();
    for t in &doc.taxonomy {
        let mut seen: Vec<&str> = Vec::new();
        let mut cur = Some(t.id.as_str());
        while let Some(id) = cur {
            if let Some(pos) = seen.iter().position(|&x| x == id) {
                let mut cycle: Vec<&str> = seen[pos..].to_vec();
                cycle.sort_unstable();
                if reported.insert(cycle[0]) {
                    out.push(Violation::error(
                        format!("taxonomy[{}]", cycle[0]),
                        format!("taxonomy cycle through {}", cycle.join(", ")),
                    ));
                }
                break;
            }
            seen.push(id);
            cur = nodes.get(id).and_then(|n| n.parent.as_deref());
        }
    }

    let mut check_category = |loc: String, category: &Option<String>, want: MemberKind| {
        if let Some(c) = category {
            match nodes.get(c.as_str()) {
                None => out.push(Violation::error(loc, format!("unknown category {c}"))),
                Some(n) if n.kind != want => out.push(Violation::error(
                    loc,
                    format!("category {c} is a {} node, expected {want}", n.kind),
                )),
                Some(_) => {}
            }
        }
    };
    for f in &doc.faults {
        check_category(format!("faults[{}]", f.id), &f.category, MemberKind::FaultCategory);
    }
    for s in &doc.symptoms {
        check_category(format!("symptoms[{}]", s.id), &s.category, MemberKind::SymptomCategory);
    }

    // A taxonomy node is reachable when some fault or symptom sits in its
    // subtree.
    let mut reachable: HashSet<&str> = HashSet::new();
    let members = doc
        .faults
        .iter()
        .filter_map(|f| f.category.as_deref())
        .chain(doc.symptoms.iter().filter_map(|s| s.category.as_deref()));
    for start in members {
        let mut cur = Some(start);
        while let Some(id) = cur {
            if !nodes.contains_key(id) || !reachable.insert(id) {
                break;
            }
            cur = nodes.get(id).and_then(|n| n.parent.as_deref());
        }
    }
    for t in &doc.taxonomy {
        if !reachable.contains(t.id.as_str()) {
            out.push(Violation::warning(
                format!("taxonomy[{}]", t.id),
                format!("unreachable taxonomy node {} (no member in its subtree)", t.id),
            ));
        }
    }
}

fn evoking_mismatches(doc: &KbDocument, out: &mut Vec<Violation>) {
    if doc.links.iter().all(|l| l.evoking_strength.is_none()) {
        return;
    }
    let priors: HashMap<&str, f64> = doc.faults.iter().map(|f| (f.id.as_str(), f.prior)).collect();
    let mut mass: HashMap<&str, f64> = HashMap::new();
    for l in &doc.links {
        if let Some(p) = priors.get(l.fault.as_str()) {
            *mass.entry(l.symptom.as_str()).or_default() += p * l.causal_strength;
        }
    }
    for l in &doc.links {
        let (Some(stored), Some(prior), Some(total)) = (
            l.evoking_strength,
            priors.get(l.fault.as_str()),
            mass.get(l.symptom.as_str()),
        ) else {
            continue;
        };
        if *total <= 0.0 {
            continue;
        }
        let derived = prior * l.causal_strength / total;
        if (stored - derived).abs() > EVOKING_MISMATCH_TOLERANCE {
            out.push(Violation::warning(
                format!("links[{}->{}]", l.fault, l.symptom),
                format!("evoking_strength {stored} differs from prior-derived value {derived:.6}"),
            ));
        }
    }
}

/// Validated, indexed knowledge base. Immutable once built.
///
/// Faults, symptoms and taxonomy nodes are kept sorted by id, so dense
/// indices order the same way as ids do.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    meta: Meta,
    faults: Vec<FaultNode>,
    symptoms: Vec<SymptomNode>,
    links: Vec<CausalLink>,
    taxonomy: Vec<TaxonomyNode>,
    fault_ix: HashMap<String, usize>,
    symptom_ix: HashMap<String, usize>,
    /// Per fault: `(symptom index, causal strength)`, sorted by symptom.
    effects: Vec<Vec<(usize, f64)>>,
    /// Per symptom: `(fault index, causal strength)`, sorted by fault.
    causes: Vec<Vec<(usize, f64)>>,
}

impl KnowledgeBase {
    /// Validates `doc` and builds the indexed form.
    pub fn new(doc: KbDocument) -> Result<Self> {
        let violations: Vec<Violation> = validate_kb(&doc)
            .into_iter()
            .filter(Violation::is_error)
            .collect();
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        Ok(Self::from_validated(doc))
    }

    fn from_validated(doc: KbDocument) -> Self {
        let KbDocument {
            meta,
            mut faults,
            mut symptoms,
            mut links,
            mut taxonomy,
        } = doc;
        faults.sort_by(|a, b| a.id.cmp(&b.id));
        symptoms.sort_by(|a, b| a.id.cmp(&b.id));
        links.sort_by(|a, b| (&a.fault, &a.symptom).cmp(&(&b.fault, &b.symptom)));
        taxonomy.sort_by(|a, b| a.id.cmp(&b.id));

        let fault_ix: HashMap<String, usize> =
            faults.iter().enumerate().map(|(i, f)| (f.id.clone(), i)).collect();
        let symptom_ix: HashMap<String, usize> =
            symptoms.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        let mut effects = vec![Vec::new(); faults.len()];
        let mut causes = vec![Vec::new(); symptoms.len()];
        for l in &links {
            let f = fault_ix[&l.fault];
            let s = symptom_ix[&l.symptom];
            effects[f].push((s, l.causal_strength));
            causes[s].push((f, l.causal_strength));
        }
        for v in effects.iter_mut().chain(causes.iter_mut()) {
            v.sort_by_key(|&(i, _)| i);
        }
        Self {
            meta,
            faults,
            symptoms,
            links,
            taxonomy,
            fault_ix,
            symptom_ix,
            effects,
            causes,
        }
    }

    pub fn to_document(&self) -> KbDocument {
        KbDocument {
            meta: self.meta.clone(),
            faults: self.faults.clone(),
            symptoms: self.symptoms.clone(),
            links: self.links.clone(),
            taxonomy: self.taxonomy.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("KB documents always serialize")
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.to_document()).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn faults(&self) -> &[FaultNode] {
        &self.faults
    }

    pub fn symptoms(&self) -> &[SymptomNode] {
        &self.symptoms
    }

    pub fn links(&self) -> &[CausalLink] {
        &self.links
    }

    pub fn taxonomy(&self) -> &[TaxonomyNode] {
        &self.taxonomy
    }

    pub fn fault_count(&self) -> usize {
        self.faults.len()
    }

    pub fn symptom_count(&self) -> usize {
        self.symptoms.len()
    }

    pub fn fault_index(&self, id: &str) -> Result<usize> {
        self.fault_ix
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownFault(id.to_owned()))
    }

    pub fn symptom_index(&self, id: &str) -> Result<usize> {
        self.symptom_ix
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownSymptom(id.to_owned()))
    }

    pub fn fault(&self, index: usize) -> &FaultNode {
        &self.faults[index]
    }

    pub fn symptom(&self, index: usize) -> &SymptomNode {
        &self.symptoms[index]
    }

    pub fn fault_by_id(&self, id: &str) -> Result<&FaultNode> {
        self.fault_index(id).map(|i| &self.faults[i])
    }

    pub fn symptom_by_id(&self, id: &str) -> Result<&SymptomNode> {
        self.symptom_index(id).map(|i| &self.symptoms[i])
    }

    pub fn link(&self, fault: &str, symptom: &str) -> Option<&CausalLink> {
        self.links
            .binary_search_by(|l| (l.fault.as_str(), l.symptom.as_str()).cmp(&(fault, symptom)))
            .ok()
            .map(|i| &self.links[i])
    }

    /// `(symptom index, causal strength)` for every effect of a fault.
    pub fn effects_ix(&self, fault: usize) -> &[(usize, f64)] {
        &self.effects[fault]
    }

    /// `(fault index, causal strength)` for every cause of a symptom.
    pub fn causes_ix(&self, symptom: usize) -> &[(usize, f64)] {
        &self.causes[symptom]
    }

    /// Symptoms the fault can produce.
    pub fn effects(&self, fault: &str) -> Result<SymptomSet> {
        let f = self.fault_index(fault)?;
        Ok(self.effects[f]
            .iter()
            .map(|&(s, _)| self.symptoms[s].id.clone())
            .collect())
    }

    /// Faults that can produce the symptom.
    pub fn causes(&self, symptom: &str) -> Result<FaultSet> {
        let s = self.symptom_index(symptom)?;
        Ok(self.causes[s]
            .iter()
            .map(|&(f, _)| self.faults[f].id.clone())
            .collect())
    }

    /// Resolves a set of fault ids to sorted indices.
    pub fn fault_indices<'a, I>(&self, ids: I) -> Result<Vec<usize>>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let mut out = ids
            .into_iter()
            .map(|id| self.fault_index(id))
            .collect::<Result<Vec<_>>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn symptom_indices<'a, I>(&self, ids: I) -> Result<Vec<usize>>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let mut out = ids
            .into_iter()
            .map(|id| self.symptom_index(id))
            .collect::<Result<Vec<_>>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn fault_ids(&self, indices: &[usize]) -> FaultSet {
        indices.iter().map(|&i| self.faults[i].id.clone()).collect()
    }

    pub fn symptom_ids(&self, indices: &[usize]) -> SymptomSet {
        indices.iter().map(|&i| self.symptoms[i].id.clone()).collect()
    }

    /// Returns a copy with new link strengths and fault priors. Entries not
    /// present in the maps keep their current values.
    pub fn with_weights(
        &self,
        strengths: &BTreeMap<(String, String), f64>,
        priors: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        let mut doc = self.to_document();
        for f in &mut doc.faults {
            if let Some(&p) = priors.get(&f.id) {
                f.prior = p;
            }
        }
        for l in &mut doc.links {
            if let Some(&c) = strengths.get(&(l.fault.clone(), l.symptom.clone())) {
                l.causal_strength = c;
            }
        }
        Self::new(doc)
    }

    /// Depth-first listing of the taxonomy subtree rooted at `root`.
    pub fn taxonomy_subtree(&self, root: &str) -> Option<Vec<&TaxonomyNode>> {
        let start = self.taxonomy.iter().find(|t| t.id == root)?;
        let mut out = Vec::new();
        let mut stack = vec![start];
        while let Some(node) = stack.pop() {
            out.push(node);
            let mut children: Vec<&TaxonomyNode> = self
                .taxonomy
                .iter()
                .filter(|t| t.parent.as_deref() == Some(node.id.as_str()))
                .collect();
            children.reverse();
            stack.extend(children);
        }
        Some(out)
    }
}

/// The finding recorded for one symptom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finding {
    Present,
    Absent,
    Unknown,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Finding::Present => "present",
            Finding::Absent => "absent",
            Finding::Unknown => "unknown",
        })
    }
}

impl std::str::FromStr for Finding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "present" | "p" | "yes" | "y" | "1" => Ok(Finding::Present),
            "absent" | "a" | "no" | "n" | "0" => Ok(Finding::Absent),
            "unknown" | "u" | "?" | "" => Ok(Finding::Unknown),
            other => Err(Error::Parse(format!("unrecognized finding {other:?}"))),
        }
    }
}

/// Findings per symptom. Symptoms without an entry are unknown and
/// unasked; an explicit `Unknown` entry means the symptom was asked and
/// skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationState {
    findings: BTreeMap<String, Finding>,
}

impl ObservationState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sets<'a, P, A>(present: P, absent: A) -> Self
    where
        P: IntoIterator<Item = &'a str>,
        A: IntoIterator<Item = &'a str>,
    {
        let mut obs = Self::new();
        for s in present {
            obs.record(s, Finding::Present);
        }
        for s in absent {
            obs.record(s, Finding::Absent);
        }
        obs
    }

    pub fn record(&mut self, symptom: impl Into<String>, finding: Finding) {
        self.findings.insert(symptom.into(), finding);
    }

    pub fn finding(&self, symptom: &str) -> Finding {
        self.findings.get(symptom).copied().unwrap_or(Finding::Unknown)
    }

    /// True when the symptom has an entry, including an explicit unknown.
    pub fn is_recorded(&self, symptom: &str) -> bool {
        self.findings.contains_key(symptom)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Finding)> {
        self.findings.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    fn with(&self, finding: Finding) -> SymptomSet {
        self.findings
            .iter()
            .filter(|(_, f)| **f == finding)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn present(&self) -> SymptomSet {
        self.with(Finding::Present)
    }

    pub fn absent(&self) -> SymptomSet {
        self.with(Finding::Absent)
    }

    pub fn validate(&self, kb: &KnowledgeBase) -> Result<()> {
        for k in self.findings.keys() {
            kb.symptom_index(k)?;
        }
        Ok(())
    }

    /// Index form of the present and absent findings.
    pub fn indexed(&self, kb: &KnowledgeBase) -> Result<IndexedObservations> {
        let mut present = Vec::new();
        let mut absent = Vec::new();
        for (k, f) in &self.findings {
            let s = kb.symptom_index(k)?;
            match f {
                Finding::Present => present.push(s),
                Finding::Absent => absent.push(s),
                Finding::Unknown => {}
            }
        }
        present.sort_unstable();
        absent.sort_unstable();
        Ok(IndexedObservations { present, absent })
    }
}

/// Present and absent symptom indices, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexedObservations {
    pub present: Vec<usize>,
    pub absent: Vec<usize>,
}
