//! Monte Carlo Tree Search over feature-set states.
//!
//! Each node is a plan set with its validation score; edges are proposal
//! actions. Selection descends by UCT to a node with pending evaluator
//! suggestions, one suggestion is expanded and simulated per rollout, and
//! the new score is backpropagated to the root.

mod run;
mod tree;
mod uct;

use thiserror::Error;

pub use run::{run_search, SearchEnvironment, SearchOutcome, Simulation, StopReason};
pub use tree::{Best, SearchNode, SearchTree};
pub use uct::uct;

#[derive(Debug, Error)]
pub enum SearchError<E = std::convert::Infallible> {
    #[error("no node has pending suggestions within the depth budget")]
    Exhausted,
    #[error("node {node} is at depth {depth}, the maximum")]
    DepthExceeded { node: usize, depth: usize },
    #[error("node {0} has no pending suggestion")]
    NoPendingSuggestion(usize),
    #[error("corrupt search tree: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Environment(E),
}

impl SearchError {
    /// Re-type an environment-free error.
    pub fn map_env<E>(self) -> SearchError<E> {
        match self {
            SearchError::Exhausted => SearchError::Exhausted,
            SearchError::DepthExceeded { node, depth } => SearchError::DepthExceeded { node, depth },
            SearchError::NoPendingSuggestion(n) => SearchError::NoPendingSuggestion(n),
            SearchError::Corrupt(m) => SearchError::Corrupt(m),
            SearchError::Environment(e) => match e {},
        }
    }
}
