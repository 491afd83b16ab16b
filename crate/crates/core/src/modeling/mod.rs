//! Tabular models over built features: encoding, training, selection,
//! metrics and explanations.

mod bundle;
mod design;
mod ensemble;
mod explain;
mod logistic;
mod metrics;
mod tree;

use thiserror::Error;

pub use bundle::{select, train, Model, ModelKind, TrainedModels};
pub use design::{columns_for, encode, Column, ColumnKind, DesignMatrix};
pub use ensemble::{BoostingParams, ForestParams, GradientBoosting, RandomForest};
pub use explain::{linear_shap, permutation_importance, DEFAULT_PERMUTATION_REPEATS};
pub use logistic::{LogisticRegression, DEFAULT_LAMBDA, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
pub use metrics::{evaluate, f1, pr_auc, roc_auc, threshold, Confusion, MetricReport, DECISION_THRESHOLD};
pub use tree::{Node, Tree};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need at least 2 training rows, got {0}")]
    InsufficientData(usize),
    #[error("i/o error: {0}")]
    Io(String),
}
