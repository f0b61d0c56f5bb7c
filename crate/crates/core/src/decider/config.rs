//! Decider configuration: evidence mapping, eligible values, thresholds and
//! the authored decision trees.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::normalize::{AmountLocale, NormalizedValue, NormalizerKind};
use super::tree::{DecisionTree, TreeError};
use crate::doc_model::{Criterion, TargetType};

/// The shipped configuration, also used by every fixture.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../config/default_decider.json");

/// Which normalized values make a directly decided criterion eligible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EligibleValues {
    OneOf(BTreeSet<String>),
    /// Inclusive numeric bounds.
    Range {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
}

impl EligibleValues {
    pub fn accepts(&self, value: &NormalizedValue) -> bool {
        match (self, value) {
            (_, NormalizedValue::Unknown(_)) => false,
            (EligibleValues::OneOf(set), v) => set.contains(&v.to_string()),
            (EligibleValues::Range { min, max }, NormalizedValue::Number(d)) => {
                let x: f64 = d.to_string().parse().unwrap_or(f64::NAN);
                min.is_none_or(|m| x >= m) && max.is_none_or(|m| x <= m)
            }
            (EligibleValues::Range { .. }, NormalizedValue::Code(_)) => false,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            EligibleValues::OneOf(set) => {
                format!("{{{}}}", set.iter().cloned().collect::<Vec<_>>().join(", "))
            }
            EligibleValues::Range { min, max } => match (min, max) {
                (Some(a), Some(b)) => format!("[{a}, {b}]"),
                (Some(a), None) => format!(">= {a}"),
                (None, Some(b)) => format!("<= {b}"),
                (None, None) => "any number".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeciderConfig {
    pub version: String,
    /// Evidence types consulted for each criterion.
    pub mapping: BTreeMap<Criterion, Vec<TargetType>>,
    /// Eligible values of the directly decided criteria.
    pub eligible_values: BTreeMap<Criterion, EligibleValues>,
    /// Minimum confidence for an automatic decision.
    pub threshold: f64,
    /// Competing evidence closer than this in confidence forces review.
    #[serde(default = "default_conflict_gap")]
    pub conflict_gap: f64,
    #[serde(default)]
    pub amount_locale: AmountLocale,
    pub normalizers: BTreeMap<TargetType, NormalizerKind>,
    /// Ordered needle/value tables for keyword-normalized types.
    #[serde(default)]
    pub keywords: BTreeMap<TargetType, Vec<(String, String)>>,
    pub trees: Vec<DecisionTree>,
}

fn default_conflict_gap() -> f64 {
    0.1
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("threshold {0} outside [0,1]")]
    Threshold(f64),
    #[error("conflict gap {0} outside [0,1]")]
    ConflictGap(f64),
    #[error("criterion {0} has no evidence mapping")]
    Unmapped(Criterion),
    #[error("criterion {0} must be decided either directly or by exactly one tree")]
    Binding(Criterion),
    #[error("type {0} is mapped but has no normalizer")]
    NoNormalizer(TargetType),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

impl DeciderConfig {
    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let cfg: DeciderConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ConfigError::Threshold(self.threshold));
        }
        if !(0.0..=1.0).contains(&self.conflict_gap) {
            return Err(ConfigError::ConflictGap(self.conflict_gap));
        }
        for c in Criterion::ALL {
            if !self.mapping.contains_key(&c) {
                return Err(ConfigError::Unmapped(c));
            }
            let trees = self.trees.iter().filter(|t| t.criterion == c).count();
            let direct = usize::from(self.eligible_values.contains_key(&c));
            if trees + direct != 1 {
                return Err(ConfigError::Binding(c));
            }
        }
        let mut used: BTreeSet<TargetType> = self.mapping.values().flatten().copied().collect();
        for tree in &self.trees {
            tree.validate()?;
            for decl in &tree.feature_manifest {
                if let super::tree::FeatureSource::Evidence(types) = &decl.source {
                    used.extend(types.iter().copied());
                }
            }
        }
        if let Some(t) = used.into_iter().find(|t| !self.normalizers.contains_key(t)) {
            return Err(ConfigError::NoNormalizer(t));
        }
        Ok(())
    }

    pub fn tree_for(&self, criterion: Criterion) -> Option<&DecisionTree> {
        self.trees.iter().find(|t| t.criterion == criterion)
    }

    pub fn keywords_for(&self, target: TargetType) -> &[(String, String)] {
        self.keywords.get(&target).map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Default for DeciderConfig {
    fn default() -> Self {
        DeciderConfig::from_json(DEFAULT_CONFIG_JSON).expect("shipped decider config is valid")
    }
}
