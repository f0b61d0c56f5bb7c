//! Per-criterion decisions and the document verdict.
//!
//! Six criteria are decided directly from the normalized evidence value with
//! the highest confidence; the other two are decided by authored trees over
//! evidence values and document metadata. Which criterion uses which route
//! is configuration ([`DeciderConfig`]).

pub mod config;
pub mod normalize;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::{ConfigError, DeciderConfig, EligibleValues};
pub use normalize::{
    normalize_currency, parse_amount, parse_percentage, AmountLocale, NormalizedValue, NormalizerKind, ParseError,
};
pub use tree::{evaluate_tree, DecisionTree, FeatureSource, FeatureValue, TreeEvaluation};

use crate::doc_model::{Annotation, Criterion, DocumentMetadata, Span, TargetType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Eligible,
    Ineligible,
    Review,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Eligible => "eligible",
            Outcome::Ineligible => "ineligible",
            Outcome::Review => "review",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub value: String,
    pub confidence: f64,
    pub fragments: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionDecision {
    pub criterion: Criterion,
    pub outcome: Outcome,
    pub chosen_value: Option<String>,
    pub confidence: f64,
    pub alternatives: Vec<Alternative>,
    pub explanation: String,
    pub supporting_fragments: Vec<Span>,
    /// Predicate trace for tree-decided criteria.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<String>,
}

impl CriterionDecision {
    /// A decision with only a criterion, outcome and explanation.
    pub fn bare(criterion: Criterion, outcome: Outcome, explanation: impl Into<String>) -> Self {
        CriterionDecision {
            criterion,
            outcome,
            chosen_value: None,
            confidence: 0.0,
            alternatives: Vec::new(),
            explanation: explanation.into(),
            supporting_fragments: Vec::new(),
            trace: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub overall: Outcome,
    pub decisions: Vec<CriterionDecision>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerdictError {
    #[error("expected one decision per criterion, got {0} decisions")]
    Count(usize),
    #[error("criterion {0} decided more than once")]
    Duplicate(Criterion),
}

impl Verdict {
    /// Eligible iff all eight criteria are eligible, ineligible iff any is
    /// ineligible, review otherwise. Decisions are reordered by criterion.
    pub fn compose(mut decisions: Vec<CriterionDecision>) -> Result<Verdict, VerdictError> {
        if decisions.len() != Criterion::ALL.len() {
            return Err(VerdictError::Count(decisions.len()));
        }
        decisions.sort_by_key(|d| d.criterion);
        for pair in decisions.windows(2) {
            if pair[0].criterion == pair[1].criterion {
                return Err(VerdictError::Duplicate(pair[0].criterion));
            }
        }
        let overall = if decisions.iter().all(|d| d.outcome == Outcome::Eligible) {
            Outcome::Eligible
        } else if decisions.iter().any(|d| d.outcome == Outcome::Ineligible) {
            Outcome::Ineligible
        } else {
            Outcome::Review
        };
        Ok(Verdict { overall, decisions })
    }

    pub fn decision(&self, criterion: Criterion) -> Option<&CriterionDecision> {
        self.decisions.iter().find(|d| d.criterion == criterion)
    }

    /// Every criterion marked for review with the given explanation.
    pub fn all_review(explanation: &str) -> Verdict {
        let decisions =
            Criterion::ALL.iter().map(|c| CriterionDecision::bare(*c, Outcome::Review, explanation)).collect();
        Verdict::compose(decisions).expect("one decision per criterion")
    }
}

/// An annotation together with its covered text and normalized value.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub annotation: Annotation,
    pub surface: String,
    pub value: NormalizedValue,
}

/// Normalizes every annotation whose type has a configured normalizer.
pub fn normalize_evidence(text: &str, annotations: &[Annotation], config: &DeciderConfig) -> Vec<Evidence> {
    let chars: Vec<char> = text.chars().collect();
    annotations
        .iter()
        .filter_map(|a| {
            let kind = *config.normalizers.get(&a.target)?;
            let surface = a.surface_in(&chars);
            let value = normalize::normalize(kind, &surface, config.keywords_for(a.target), config.amount_locale);
            Some(Evidence { annotation: a.clone(), surface, value })
        })
        .collect()
}

/// Evidence sharing one normalized value.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGroup {
    pub value: NormalizedValue,
    pub confidence: f64,
    /// First-fragment offset of the earliest instance with the group's top confidence.
    pub offset: usize,
    pub fragments: Vec<Span>,
}

impl ValueGroup {
    fn alternative(&self) -> Alternative {
        Alternative { value: self.value.to_string(), confidence: self.confidence, fragments: self.fragments.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub chosen: ValueGroup,
    /// Remaining groups, confidence descending.
    pub alternatives: Vec<ValueGroup>,
}

fn group_rank(a: &ValueGroup, b: &ValueGroup) -> std::cmp::Ordering {
    b.value
        .is_known()
        .cmp(&a.value.is_known())
        .then(b.confidence.total_cmp(&a.confidence))
        .then(a.offset.cmp(&b.offset))
        .then_with(|| a.value.cmp(&b.value))
}

/// Groups evidence by normalized value and picks the group with the highest
/// confidence, ties going to the earliest first-fragment offset. Groups whose
/// value could not be normalized rank below every recognised value.
pub fn select_primary_value(evidence: &[Evidence]) -> Option<Selection> {
    let mut groups: BTreeMap<&NormalizedValue, ValueGroup> = BTreeMap::new();
    for e in evidence {
        let conf = e.annotation.confidence;
        let offset = e.annotation.first_offset();
        let g = groups.entry(&e.value).or_insert_with(|| ValueGroup {
            value: e.value.clone(),
            confidence: conf,
            offset,
            fragments: Vec::new(),
        });
        if conf > g.confidence || (conf == g.confidence && offset < g.offset) {
            g.confidence = conf;
            g.offset = offset;
        }
        g.fragments.extend(e.annotation.fragments.iter().copied());
    }
    let mut ranked: Vec<ValueGroup> = groups.into_values().collect();
    for g in &mut ranked {
        g.fragments.sort();
        g.fragments.dedup();
    }
    ranked.sort_by(group_rank);
    let mut iter = ranked.into_iter();
    let chosen = iter.next()?;
    Some(Selection { chosen, alternatives: iter.collect() })
}

fn evidence_for(evidence: &[Evidence], types: &[TargetType]) -> Vec<Evidence> {
    evidence.iter().filter(|e| types.contains(&e.annotation.target)).cloned().collect()
}

fn type_list(types: &[TargetType]) -> String {
    types.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(", ")
}

fn fragment_list(fragments: &[Span]) -> String {
    fragments.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(" ")
}

/// Decides one directly decided criterion from its evidence.
pub fn decide_direct_criterion(
    criterion: Criterion,
    evidence: &[Evidence],
    config: &DeciderConfig,
) -> CriterionDecision {
    let types = config.mapping.get(&criterion).map(Vec::as_slice).unwrap_or(&[]);
    let relevant = evidence_for(evidence, types);
    let Some(rule) = config.eligible_values.get(&criterion) else {
        return CriterionDecision::bare(criterion, Outcome::Review, "no eligibility rule configured");
    };
    let Some(selection) = select_primary_value(&relevant) else {
        return CriterionDecision::bare(
            criterion,
            Outcome::Review,
            format!("no evidence of type {} found; marked for human review", type_list(types)),
        );
    };

    let chosen = &selection.chosen;
    let mut decision = CriterionDecision {
        criterion,
        outcome: Outcome::Review,
        chosen_value: Some(chosen.value.to_string()),
        confidence: chosen.confidence,
        alternatives: selection.alternatives.iter().map(ValueGroup::alternative).collect(),
        explanation: String::new(),
        supporting_fragments: chosen.fragments.clone(),
        trace: Vec::new(),
    };
    let at = fragment_list(&chosen.fragments);

    if !chosen.value.is_known() {
        decision.explanation =
            format!("evidence at {at} could not be interpreted ({}); marked for human review", chosen.value);
        return decision;
    }
    if chosen.confidence < config.threshold {
        decision.explanation = format!(
            "value {} at {at} has confidence {:.2} below the threshold {:.2}; marked for human review",
            chosen.value, chosen.confidence, config.threshold
        );
        return decision;
    }
    let accepted = rule.accepts(&chosen.value);
    let conflict = selection.alternatives.iter().find(|alt| {
        alt.value.is_known()
            && alt.confidence >= config.threshold
            && rule.accepts(&alt.value) != accepted
            && chosen.confidence - alt.confidence < config.conflict_gap
    });
    if let Some(alt) = conflict {
        decision.explanation = format!(
            "conflicting evidence: {} ({:.2}) at {at} and {} ({:.2}) at {}; marked for human review",
            chosen.value,
            chosen.confidence,
            alt.value,
            alt.confidence,
            fragment_list(&alt.fragments)
        );
        return decision;
    }
    let (outcome, verb) = if accepted { (Outcome::Eligible, "satisfies") } else { (Outcome::Ineligible, "violates") };
    decision.outcome = outcome;
    decision.explanation = format!(
        "value {} (confidence {:.2}) at {at} {verb} the eligible values {}",
        chosen.value,
        chosen.confidence,
        rule.describe()
    );
    decision
}

fn metadata_feature(metadata: &DocumentMetadata, field: &str) -> Option<FeatureValue> {
    match field {
        "issue_date" => metadata.issue_date.map(FeatureValue::Date),
        "issuer_group" => metadata.issuer_group.clone().map(FeatureValue::Text),
        "asset_type" => metadata.asset_type.clone().map(FeatureValue::Text),
        "isin" => metadata.isin.clone().map(FeatureValue::Text),
        other => other.strip_prefix("extra.").and_then(|key| metadata.extra.get(key)).cloned().map(FeatureValue::Text),
    }
}

fn to_feature(value: &NormalizedValue, kind: tree::FeatureKind) -> Option<FeatureValue> {
    match (value, kind) {
        (NormalizedValue::Code(c), tree::FeatureKind::Text) => Some(FeatureValue::Text(c.clone())),
        (NormalizedValue::Number(d), tree::FeatureKind::Number) => d.to_string().parse().ok().map(FeatureValue::Number),
        (NormalizedValue::Number(d), tree::FeatureKind::Text) => Some(FeatureValue::Text(d.normalize().to_string())),
        (NormalizedValue::Code(c), tree::FeatureKind::Date) => c.parse().ok().map(FeatureValue::Date),
        _ => None,
    }
}

/// Features assembled for one tree, with the evidence selections behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeFeatures {
    pub values: BTreeMap<String, FeatureValue>,
    pub selections: Vec<(String, Selection)>,
}

/// Evidence features take the selected value when it is recognised and at
/// least as confident as the threshold; otherwise they are missing.
pub fn assemble_features(
    tree: &DecisionTree,
    evidence: &[Evidence],
    metadata: &DocumentMetadata,
    config: &DeciderConfig,
) -> TreeFeatures {
    let mut values = BTreeMap::new();
    let mut selections = Vec::new();
    for decl in &tree.feature_manifest {
        match &decl.source {
            FeatureSource::Metadata(field) => {
                if let Some(v) = metadata_feature(metadata, field) {
                    values.insert(decl.name.clone(), v);
                }
            }
            FeatureSource::Evidence(types) => {
                if let Some(sel) = select_primary_value(&evidence_for(evidence, types)) {
                    if sel.chosen.confidence >= config.threshold {
                        if let Some(v) = to_feature(&sel.chosen.value, decl.kind) {
                            values.insert(decl.name.clone(), v);
                        }
                    }
                    selections.push((decl.name.clone(), sel));
                }
            }
        }
    }
    TreeFeatures { values, selections }
}

/// Decides a tree-bound criterion.
pub fn decide_tree_criterion(
    tree: &DecisionTree,
    evidence: &[Evidence],
    metadata: &DocumentMetadata,
    config: &DeciderConfig,
) -> CriterionDecision {
    let features = assemble_features(tree, evidence, metadata, config);
    let result = evaluate_tree(tree, &features.values);

    let mut used = Vec::new();
    let mut alternatives = Vec::new();
    let mut supporting = Vec::new();
    let mut confidence: Option<f64> = None;
    for (name, sel) in &features.selections {
        if let Some(v) = features.values.get(name) {
            used.push(format!("{name}={v}"));
            supporting.extend(sel.chosen.fragments.iter().copied());
            confidence = Some(confidence.map_or(sel.chosen.confidence, |c: f64| c.min(sel.chosen.confidence)));
        } else {
            alternatives.push(sel.chosen.alternative());
        }
        alternatives.extend(sel.alternatives.iter().map(ValueGroup::alternative));
    }
    supporting.sort();
    supporting.dedup();

    CriterionDecision {
        criterion: tree.criterion,
        outcome: result.outcome,
        chosen_value: (!used.is_empty()).then(|| used.join("; ")),
        confidence: confidence.unwrap_or(0.0),
        alternatives,
        explanation: result.explanation,
        supporting_fragments: supporting,
        trace: result.trace,
    }
}

/// Decides all eight criteria for one document and composes the verdict.
pub fn decide_document(
    text: &str,
    annotations: &[Annotation],
    metadata: &DocumentMetadata,
    config: &DeciderConfig,
) -> Verdict {
    let evidence = normalize_evidence(text, annotations, config);
    let decisions = Criterion::ALL
        .iter()
        .map(|&c| match config.tree_for(c) {
            Some(tree) => decide_tree_criterion(tree, &evidence, metadata, config),
            None => decide_direct_criterion(c, &evidence, config),
        })
        .collect();
    Verdict::compose(decisions).expect("one decision per criterion")
}
