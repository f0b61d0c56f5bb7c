//! Authored decision trees over evidence values and document metadata.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::Outcome;
use crate::doc_model::{Criterion, TargetType};

#[derive(Debug, Clone, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureValue {
    Text(String),
    Number(f64),
    Date(NaiveDate),
}

impl FeatureValue {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureValue::Text(_) => FeatureKind::Text,
            FeatureValue::Number(_) => FeatureKind::Number,
            FeatureValue::Date(_) => FeatureKind::Date,
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Text(s) => f.write_str(s),
            FeatureValue::Number(n) => write!(f, "{n}"),
            FeatureValue::Date(d) => write!(f, "{d}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Text,
    Number,
    Date,
}

/// Where a feature's value comes from when a document is decided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// Normalized value chosen among the evidence of these types.
    Evidence(Vec<TargetType>),
    /// `issue_date`, `issuer_group`, `asset_type`, `isin` or `extra.<key>`.
    Metadata(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDecl {
    pub name: String,
    pub kind: FeatureKind,
    pub source: FeatureSource,
    /// Finite set of representative values, used for exhaustive checks.
    #[serde(default)]
    pub domain: Vec<FeatureValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "in")]
    InSet,
    #[serde(rename = "present")]
    Present,
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::InSet => "in",
            Comparator::Present => "present",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Predicate {
        feature: String,
        op: Comparator,
        /// One value for `=`, `!=`, `<`, `<=`; the set for `in`; empty for `present`.
        #[serde(default)]
        values: Vec<FeatureValue>,
        then: String,
        #[serde(rename = "else")]
        otherwise: String,
    },
    Leaf {
        outcome: Outcome,
        /// `{feature}` placeholders are replaced by feature values.
        explanation: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub criterion: Criterion,
    pub feature_manifest: Vec<FeatureDecl>,
    pub root: String,
    pub nodes: BTreeMap<String, Node>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("{criterion} tree: node `{node}` is referenced but not defined")]
    MissingNode { criterion: Criterion, node: String },
    #[error("{criterion} tree: cycle through node `{node}`")]
    Cycle { criterion: Criterion, node: String },
    #[error("{criterion} tree: node `{node}` uses undeclared feature `{feature}`")]
    UndeclaredFeature { criterion: Criterion, node: String, feature: String },
    #[error("{criterion} tree: node `{node}`: {message}")]
    BadPredicate { criterion: Criterion, node: String, message: String },
    #[error("{criterion} tree: feature `{feature}` declared twice or has an ill-typed domain")]
    BadManifest { criterion: Criterion, feature: String },
}

/// Result of a root-to-leaf walk.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEvaluation {
    pub outcome: Outcome,
    pub explanation: String,
    /// One entry per predicate visited, e.g. `status = subordinated: false`,
    /// ending in `missing: <feature>` when a walk stopped on a missing value.
    pub trace: Vec<String>,
}

impl DecisionTree {
    pub fn declared(&self, name: &str) -> Option<&FeatureDecl> {
        self.feature_manifest.iter().find(|f| f.name == name)
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        let criterion = self.criterion;
        let mut names = BTreeSet::new();
        for decl in &self.feature_manifest {
            if !names.insert(decl.name.as_str()) || decl.domain.iter().any(|v| v.kind() != decl.kind) {
                return Err(TreeError::BadManifest { criterion, feature: decl.name.clone() });
            }
        }

        for (id, node) in &self.nodes {
            if let Node::Predicate { feature, op, values, then, otherwise } = node {
                let bad = |message: String| TreeError::BadPredicate { criterion, node: id.clone(), message };
                let decl = self.declared(feature).ok_or_else(|| TreeError::UndeclaredFeature {
                    criterion,
                    node: id.clone(),
                    feature: feature.clone(),
                })?;
                match op {
                    Comparator::Present if !values.is_empty() => return Err(bad("`present` takes no values".into())),
                    Comparator::InSet if values.is_empty() => return Err(bad("`in` needs at least one value".into())),
                    Comparator::Eq | Comparator::Ne | Comparator::Lt | Comparator::Le if values.len() != 1 => {
                        return Err(bad(format!("`{op}` needs exactly one value")))
                    }
                    Comparator::Lt | Comparator::Le if decl.kind == FeatureKind::Text => {
                        return Err(bad(format!("`{op}` is not defined for text features")))
                    }
                    _ => {}
                }
                if let Some(v) = values.iter().find(|v| v.kind() != decl.kind) {
                    return Err(bad(format!("value {v} does not match the declared kind of `{feature}`")));
                }
                for child in [then, otherwise] {
                    if !self.nodes.contains_key(child) {
                        return Err(TreeError::MissingNode { criterion, node: child.clone() });
                    }
                }
            }
        }
        if !self.nodes.contains_key(&self.root) {
            return Err(TreeError::MissingNode { criterion, node: self.root.clone() });
        }
        self.check_acyclic()
    }

    fn check_acyclic(&self) -> Result<(), TreeError> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        let mut stack: Vec<(&str, bool)> = vec![(self.root.as_str(), false)];
        while let Some((id, leaving)) = stack.pop() {
            if leaving {
                state.insert(id, 2);
                continue;
            }
            match state.get(id) {
                Some(2) => continue,
                Some(1) => return Err(TreeError::Cycle { criterion: self.criterion, node: id.to_string() }),
                _ => {}
            }
            state.insert(id, 1);
            stack.push((id, true));
            if let Some(Node::Predicate { then, otherwise, .. }) = self.nodes.get(id) {
                for child in [otherwise.as_str(), then.as_str()] {
                    if state.get(child) == Some(&1) {
                        return Err(TreeError::Cycle { criterion: self.criterion, node: child.to_string() });
                    }
                    if state.get(child) != Some(&2) {
                        stack.push((child, false));
                    }
                }
            }
        }
        Ok(())
    }
}

fn compare(op: Comparator, actual: &FeatureValue, values: &[FeatureValue]) -> Option<bool> {
    let ordered = |v: &FeatureValue| actual.kind() == v.kind();
    match op {
        Comparator::Present => Some(true),
        Comparator::Eq => ordered(&values[0]).then(|| actual == &values[0]),
        Comparator::Ne => ordered(&values[0]).then(|| actual != &values[0]),
        Comparator::Lt => ordered(&values[0]).then(|| actual < &values[0]),
        Comparator::Le => ordered(&values[0]).then(|| actual <= &values[0]),
        Comparator::InSet => values.iter().all(ordered).then(|| values.contains(actual)),
    }
}

fn render(template: &str, features: &BTreeMap<String, FeatureValue>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        match rest[open..].find('}') {
            Some(close) => {
                let name = &rest[open + 1..open + close];
                match features.get(name) {
                    Some(v) => out.push_str(&v.to_string()),
                    None => out.push('?'),
                }
                rest = &rest[open + close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn describe(feature: &str, op: Comparator, values: &[FeatureValue]) -> String {
    match op {
        Comparator::Present => format!("present({feature})"),
        Comparator::InSet => {
            let set: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            format!("{feature} in {{{}}}", set.join(", "))
        }
        _ => format!("{feature} {op} {}", values[0]),
    }
}

/// Walks the tree from the root. A predicate over a missing feature stops
/// the walk with outcome `Review`, except `present`, which is false.
///
/// The tree must have passed [`DecisionTree::validate`].
pub fn evaluate_tree(tree: &DecisionTree, features: &BTreeMap<String, FeatureValue>) -> TreeEvaluation {
    let mut trace = Vec::new();
    let mut id = tree.root.as_str();
    // a validated tree has no more predicates on a path than nodes
    for _ in 0..=tree.nodes.len() {
        match &tree.nodes[id] {
            Node::Leaf { outcome, explanation } => {
                return TreeEvaluation { outcome: *outcome, explanation: render(explanation, features), trace };
            }
            Node::Predicate { feature, op, values, then, otherwise } => {
                let label = describe(feature, *op, values);
                let result = match (features.get(feature), op) {
                    (None, Comparator::Present) => false,
                    (None, _) => {
                        trace.push(format!("missing: {feature}"));
                        return TreeEvaluation {
                            outcome: Outcome::Review,
                            explanation: format!("{feature} is not available; marked for human review"),
                            trace,
                        };
                    }
                    (Some(actual), _) => match compare(*op, actual, values) {
                        Some(b) => b,
                        None => {
                            trace.push(format!("type mismatch: {feature}"));
                            return TreeEvaluation {
                                outcome: Outcome::Review,
                                explanation: format!("{feature} has value {actual} of unexpected kind"),
                                trace,
                            };
                        }
                    },
                };
                trace.push(format!("{label}: {result}"));
                id = if result { then } else { otherwise };
            }
        }
    }
    unreachable!("validated trees are acyclic")
}
