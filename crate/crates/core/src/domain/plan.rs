use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::hashing::content_hash;

use super::value::{coerce_value, FeatureEntry};

/// Reserved sub-feature key for plans that produce a single value.
pub const SINGLE_VALUE_KEY: &str = "value";

/// A conceptual feature suggestion, before planning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureIdea {
    pub feature_name: String,
    pub description: String,
}

impl FeatureIdea {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            feature_name: name.into(),
            description: description.into(),
        }
    }
}

/// `[a-z][a-z0-9_]*`
pub fn is_valid_feature_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Turn free text such as "Route of Administration" into `route_of_administration`.
pub fn normalize_feature_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_sep = false;
    for c in raw.chars() {
        if c.is_ascii_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending_sep = true;
        }
    }
    if out.is_empty() {
        return "feature".to_string();
    }
    if !out.starts_with(|c: char| c.is_ascii_lowercase()) {
        out.insert_str(0, "f_");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureType {
    Integer,
    Float,
    Boolean,
    Categorical,
    #[serde(alias = "multi-categorical", alias = "multi_categorical")]
    Multicategorical,
}

impl FeatureType {
    pub fn is_categorical(&self) -> bool {
        matches!(self, FeatureType::Categorical | FeatureType::Multicategorical)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Pubmed,
    CurrentTrialSummary,
    RelatedClinicalTrials,
}

/// Executable schema and instructions for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePlan {
    pub feature_name: String,
    pub feature_idea: String,
    pub feature_type: BTreeMap<String, FeatureType>,
    #[serde(default)]
    pub data_sources: Vec<DataSource>,
    #[serde(default)]
    pub example_values: Vec<serde_json::Value>,
    #[serde(default)]
    pub possible_values: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub feature_instructions: String,
}

impl FeaturePlan {
    /// Content digest of the plan; changes whenever any field changes.
    pub fn content_hash(&self) -> String {
        content_hash(self)
    }

    pub fn categories(&self, sub: &str) -> &[String] {
        self.possible_values.get(sub).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_single_valued(&self) -> bool {
        self.feature_type.len() == 1
    }
}

/// Machine-readable violation codes reported by [`validate_plan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    InvalidName,
    EmptyFeatureType,
    MissingCategories,
    UnknownSubfeature,
    UnexpectedCategories,
    DuplicateCategory,
    InvalidExample,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("code serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

/// Check a plan against the schema rules. An empty list means the plan is valid.
pub fn validate_plan(plan: &FeaturePlan) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code, detail: String| out.push(Violation { code, detail });

    if !is_valid_feature_name(&plan.feature_name) {
        push(
            ViolationCode::InvalidName,
            format!("feature_name '{}' does not match [a-z][a-z0-9_]*", plan.feature_name),
        );
    }
    if plan.feature_type.is_empty() {
        push(
            ViolationCode::EmptyFeatureType,
            "feature_type has no sub-features".into(),
        );
    }
    for key in plan.possible_values.keys() {
        if !plan.feature_type.contains_key(key) {
            push(
                ViolationCode::UnknownSubfeature,
                format!("possible_values key '{key}' is not declared in feature_type"),
            );
        }
    }
    for (sub, ty) in &plan.feature_type {
        let cats = plan.categories(sub);
        if ty.is_categorical() {
            if cats.is_empty() {
                push(
                    ViolationCode::MissingCategories,
                    format!("sub-feature '{sub}' is {ty:?} but has no possible_values"),
                );
            }
            let mut seen = BTreeSet::new();
            for c in cats {
                if !seen.insert(c.as_str()) {
                    push(
                        ViolationCode::DuplicateCategory,
                        format!("sub-feature '{sub}' lists category '{c}' twice"),
                    );
                }
            }
        } else if !cats.is_empty() {
            push(
                ViolationCode::UnexpectedCategories,
                format!("sub-feature '{sub}' is {ty:?} but lists possible_values"),
            );
        }
    }

    // Examples only make sense to check once the schema itself is sound.
    if out.is_empty() {
        for (i, example) in plan.example_values.iter().enumerate() {
            let entry: FeatureEntry = coerce_value(example, plan, None);
            if let Some((sub, reason)) = entry.none_reasons.iter().next() {
                out.push(Violation {
                    code: ViolationCode::InvalidExample,
                    detail: format!("example {i}, sub-feature '{sub}': {reason}"),
                });
            }
        }
    }
    out
}

/// The active feature plans of one search state, keyed by feature name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlanSet(BTreeMap<String, FeaturePlan>);

impl PlanSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_plans(plans: impl IntoIterator<Item = FeaturePlan>) -> Self {
        Self(plans.into_iter().map(|p| (p.feature_name.clone(), p)).collect())
    }

    pub fn get(&self, name: &str) -> Option<&FeaturePlan> {
        self.0.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Plans in name order, which is also the column order of the design matrix.
    pub fn plans(&self) -> impl Iterator<Item = &FeaturePlan> {
        self.0.values()
    }

    pub fn as_map(&self) -> &BTreeMap<String, FeaturePlan> {
        &self.0
    }

    pub(crate) fn as_map_mut(&mut self) -> &mut BTreeMap<String, FeaturePlan> {
        &mut self.0
    }

    /// Digest of the full plan set; identical sets hash identically.
    pub fn content_hash(&self) -> String {
        content_hash(&self.0)
    }
}
