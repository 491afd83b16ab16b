//! Agentic feature discovery for clinical-trial outcome prediction.
//!
//! LLM agents propose, plan and build tabular features for a set of trials;
//! classical models are trained on them, and a Monte Carlo Tree Search over
//! feature-set states uses validation scores and evaluator feedback to refine
//! the set. Retrieval is cut off at each trial's start date so no agent can
//! observe post-hoc information.

pub mod agents;
pub mod domain;
pub mod hashing;
pub mod llm;
pub mod modeling;
pub mod pipeline;
pub mod retrieval;
pub mod scalar;
pub mod search;

#[cfg(feature = "testing")]
pub mod testing;

pub use scalar::Real;

/// Logistic regression over `f64`, the precision used by the pipeline.
pub type Logistic = modeling::LogisticRegression<f64>;
/// Metric summary over `f64`.
pub type Metrics = modeling::MetricReport<f64>;
