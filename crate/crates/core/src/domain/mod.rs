//! Shared data model: trials, feature ideas and plans, built values,
//! proposals and search configuration.

mod plan;
mod proposal;
mod trial;
mod value;

use thiserror::Error;

pub use plan::{
    is_valid_feature_name, normalize_feature_name, validate_plan, DataSource, FeatureIdea, FeaturePlan, FeatureType,
    PlanSet, Violation, ViolationCode, SINGLE_VALUE_KEY,
};
pub use proposal::{apply_proposal, ActionKind, Origin, ProposalAction, SearchConfig, Suggestion};
pub use trial::{load_trials, read_trials, write_trials, MetricKind, Phase, TaskSpec, TrialRecord};
pub use value::{coerce_value, FeatureEntry, FeatureValue, FeatureValueSet, NoneCode, NoneReason};

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("feature '{0}' already exists")]
    DuplicateFeature(String),
    #[error("feature '{0}' is not in the active plan set")]
    UnknownFeature(String),
    #[error("refinement may not rename '{from}' to '{to}'")]
    RenameForbidden { from: String, to: String },
    #[error("Add and Refine require a plan")]
    MissingPlan,
    #[error("malformed proposal {0}")]
    MalformedAction(String),
    #[error("task description is empty")]
    EmptyTask,
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
}
