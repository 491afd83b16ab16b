use std::collections::BTreeMap;

use super::tree::SearchTree;
use super::SearchError;
use crate::domain::{PlanSet, ProposalAction, SearchConfig, Suggestion};

/// Outcome of building, training and scoring one plan set.
#[derive(Debug, Clone)]
pub struct Simulation<M> {
    pub plans: PlanSet,
    pub score: f64,
    /// Evaluator feedback on the trained model; becomes the node's queue.
    pub suggestions: Vec<Suggestion>,
    pub model: M,
}

/// The work behind each tree node: everything the search delegates.
pub trait SearchEnvironment {
    type Model: Clone;
    type Error: std::error::Error;

    /// Propose, plan, build, train and evaluate the initial feature set.
    fn initialize(&mut self) -> Result<Simulation<Self::Model>, Self::Error>;

    /// Turn a suggestion into an action on `parent` and simulate the
    /// result. `Ok(None)` means the expansion was skipped.
    #[allow(clippy::type_complexity)]
    fn expand(
        &mut self,
        parent: &PlanSet,
        suggestion: &Suggestion,
    ) -> Result<Option<(ProposalAction, Simulation<Self::Model>)>, Self::Error>;

    /// Called after initialization and after every rollout.
    fn checkpoint(&mut self, _tree: &SearchTree, _rollout: usize) -> Result<(), Self::Error> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    BudgetSpent,
    Exhausted,
    TargetReached,
}

#[derive(Debug)]
pub struct SearchOutcome<M, E> {
    pub tree: SearchTree,
    pub best_plans: PlanSet,
    pub best_model: M,
    /// Every plan set seen, keyed by content hash.
    pub plan_sets: BTreeMap<String, PlanSet>,
    pub rollouts_run: usize,
    pub skipped: usize,
    pub stop: StopReason,
    /// Fatal environment error that ended the search early.
    pub fatal: Option<E>,
}

fn target_reached(config: &SearchConfig, tree: &SearchTree) -> bool {
    config.stop_at_score.is_some_and(|t| tree.best.score >= t)
}

/// Initialize the root, then run up to `config.rollouts` iterations of
/// select → expand → simulate → backpropagate, one suggestion per rollout.
pub fn run_search<E: SearchEnvironment>(
    config: &SearchConfig,
    env: &mut E,
) -> Result<SearchOutcome<E::Model, E::Error>, SearchError<E::Error>> {
    let root = env.initialize().map_err(SearchError::Environment)?;
    let root_hash = root.plans.content_hash();
    let mut tree = SearchTree::new(root_hash.clone(), root.score, root.suggestions);
    tree.backpropagate(SearchTree::ROOT, root.score);
    let mut plan_sets = BTreeMap::from([(root_hash, root.plans.clone())]);
    let mut best_plans = root.plans;
    let mut best_model = root.model;
    env.checkpoint(&tree, 0).map_err(SearchError::Environment)?;

    let mut out_stop = StopReason::BudgetSpent;
    let mut fatal = None;
    let mut rollouts_run = 0;
    let mut skipped = 0;
    for rollout in 1..=config.rollouts {
        if target_reached(config, &tree) {
            out_stop = StopReason::TargetReached;
            break;
        }
        let path = match tree.select(config.exploration_weight, config.max_depth) {
            Ok(p) => p,
            Err(SearchError::Exhausted) => {
                out_stop = StopReason::Exhausted;
                break;
            }
            Err(e) => return Err(e.map_env()),
        };
        let leaf = *path.last().expect("path includes the root");
        let suggestion = tree
            .pop_suggestion(leaf, config.max_depth)
            .map_err(SearchError::map_env)?;
        let parent_plans = plan_sets[&tree.node(leaf).plan_set_hash].clone();
        rollouts_run = rollout;
        match env.expand(&parent_plans, &suggestion) {
            Ok(Some((action, sim))) => {
                let hash = sim.plans.content_hash();
                let before = tree.best.score;
                let id = tree.add_child(leaf, action, hash.clone(), sim.score, sim.suggestions);
                tree.backpropagate(id, sim.score);
                tracing::info!(rollout, node = id, score = sim.score, "simulated node");
                if tree.best.node == id && sim.score > before {
                    best_plans = sim.plans.clone();
                    best_model = sim.model;
                }
                plan_sets.entry(hash).or_insert(sim.plans);
            }
            Ok(None) => {
                skipped += 1;
                tracing::warn!(rollout, node = leaf, suggestion = %suggestion.text, "expansion skipped");
            }
            Err(e) => {
                tracing::error!(rollout, error = %e, "search stopped by a fatal error");
                fatal = Some(e);
                break;
            }
        }
        env.checkpoint(&tree, rollout).map_err(SearchError::Environment)?;
    }
    if fatal.is_none() && out_stop == StopReason::BudgetSpent && target_reached(config, &tree) {
        out_stop = StopReason::TargetReached;
    }
    Ok(SearchOutcome {
        tree,
        best_plans,
        best_model,
        plan_sets,
        rollouts_run,
        skipped,
        stop: out_stop,
        fatal,
    })
}
