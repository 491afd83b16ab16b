use std::fmt;

use serde::{Deserialize, Serialize};

use super::plan::{FeatureIdea, FeaturePlan, PlanSet};
use super::DomainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    ModelBased,
    ErrorBased,
}

/// Free-form improvement recommendation from an evaluator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub text: String,
    pub origin: Origin,
}

impl Suggestion {
    pub fn new(text: impl Into<String>, origin: Origin) -> Self {
        Self {
            text: text.into(),
            origin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Add,
    Refine,
    Remove,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Add => "Add",
            ActionKind::Refine => "Refine",
            ActionKind::Remove => "Remove",
        })
    }
}

/// Edge label of the search tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalAction {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_feature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idea: Option<FeatureIdea>,
    pub origin: Origin,
}

impl ProposalAction {
    pub fn add(idea: FeatureIdea, origin: Origin) -> Self {
        Self {
            kind: ActionKind::Add,
            target_feature: None,
            idea: Some(idea),
            origin,
        }
    }

    /// A refinement keeps the feature name; the idea carries the new description.
    pub fn refine(target: impl Into<String>, description: impl Into<String>, origin: Origin) -> Self {
        let target = target.into();
        Self {
            kind: ActionKind::Refine,
            idea: Some(FeatureIdea::new(target.clone(), description)),
            target_feature: Some(target),
            origin,
        }
    }

    pub fn remove(target: impl Into<String>, origin: Origin) -> Self {
        Self {
            kind: ActionKind::Remove,
            target_feature: Some(target.into()),
            idea: None,
            origin,
        }
    }

    /// Name of the feature this action creates, replaces or deletes.
    pub fn feature_name(&self) -> &str {
        match self.kind {
            ActionKind::Add => self.idea.as_ref().map(|i| i.feature_name.as_str()).unwrap_or(""),
            _ => self.target_feature.as_deref().unwrap_or(""),
        }
    }

    pub fn check_shape(&self) -> Result<(), DomainError> {
        let ok = match self.kind {
            ActionKind::Add => self.target_feature.is_none() && self.idea.is_some(),
            ActionKind::Refine => self.target_feature.is_some() && self.idea.is_some(),
            ActionKind::Remove => self.target_feature.is_some() && self.idea.is_none(),
        };
        if ok {
            Ok(())
        } else {
            Err(DomainError::MalformedAction(self.summary()))
        }
    }

    pub fn summary(&self) -> String {
        format!("{}({})", self.kind, self.feature_name())
    }
}

/// Apply one proposal to a plan set, returning the updated set.
///
/// The input is left untouched and the output differs from it in exactly
/// one key. Refinements must keep the feature name.
pub fn apply_proposal(
    active: &PlanSet,
    action: &ProposalAction,
    new_plan: Option<&FeaturePlan>,
) -> Result<PlanSet, DomainError> {
    action.check_shape()?;
    let mut out = active.clone();
    match action.kind {
        ActionKind::Add => {
            let plan = new_plan.ok_or(DomainError::MissingPlan)?;
            if active.contains(&plan.feature_name) {
                return Err(DomainError::DuplicateFeature(plan.feature_name.clone()));
            }
            out.as_map_mut().insert(plan.feature_name.clone(), plan.clone());
        }
        ActionKind::Refine => {
            let target = action.feature_name();
            if !active.contains(target) {
                return Err(DomainError::UnknownFeature(target.to_string()));
            }
            let plan = new_plan.ok_or(DomainError::MissingPlan)?;
            if plan.feature_name != target {
                return Err(DomainError::RenameForbidden {
                    from: target.to_string(),
                    to: plan.feature_name.clone(),
                });
            }
            out.as_map_mut().insert(target.to_string(), plan.clone());
        }
        ActionKind::Remove => {
            let target = action.feature_name();
            if out.as_map_mut().remove(target).is_none() {
                return Err(DomainError::UnknownFeature(target.to_string()));
            }
        }
    }
    Ok(out)
}

/// Search hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub rollouts: usize,
    pub max_depth: usize,
    pub exploration_weight: f64,
    pub n_factor_pos: usize,
    pub n_factor_neg: usize,
    pub n_error_examples: usize,
    pub seed: u64,
    /// Stop once the best validation score reaches this value.
    pub stop_at_score: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            rollouts: 10,
            max_depth: 10,
            exploration_weight: 1.0,
            n_factor_pos: 3,
            n_factor_neg: 3,
            n_error_examples: 3,
            seed: 0,
            stop_at_score: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |m: &str| Err(DomainError::InvalidConfig(m.to_string()));
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if !(self.exploration_weight >= 0.0) || !self.exploration_weight.is_finite() {
            return bad("exploration_weight must be a non-negative real");
        }
        Ok(())
    }

    /// Upper bound on suggestions (and so children) per node.
    pub fn max_suggestions(&self) -> usize {
        crate::agents::MAX_MODEL_SUGGESTIONS + self.n_error_examples
    }
}
