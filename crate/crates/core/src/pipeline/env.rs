use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::store::{RunDir, Samples};
use super::{PipelineError, RunObserver};
use crate::agents::{build_features, Agents, EvaluatorInput, MisclassifiedExample};
use crate::domain::{
    apply_proposal, ActionKind, FeatureEntry, FeatureIdea, FeaturePlan, FeatureValueSet, PlanSet, ProposalAction,
    SearchConfig, Suggestion, TrialRecord,
};
use crate::modeling::{encode, select, train, DesignMatrix, TrainedModels, DECISION_THRESHOLD};
use crate::search::{SearchEnvironment, SearchTree, Simulation};

/// Seed for per-node randomness: the run seed mixed with the plan-set hash.
pub(crate) fn node_seed(seed: u64, plan_set_hash: &str) -> u64 {
    seed ^ u64::from_str_radix(&plan_set_hash[..16], 16).unwrap_or(0)
}

/// Everything a node simulation needs, plus the per-plan value store.
pub(crate) struct Workspace<'a> {
    pub agents: Agents,
    pub dir: &'a RunDir,
    pub search: &'a SearchConfig,
    pub samples: &'a Samples,
    pub observer: Option<Arc<dyn RunObserver>>,
    /// Plan content hash → NCT id → built entry.
    values: BTreeMap<String, BTreeMap<String, FeatureEntry>>,
}

impl<'a> Workspace<'a> {
    pub fn new(
        agents: Agents,
        dir: &'a RunDir,
        search: &'a SearchConfig,
        samples: &'a Samples,
        observer: Option<Arc<dyn RunObserver>>,
    ) -> Self {
        Self {
            agents,
            dir,
            search,
            samples,
            observer,
            values: BTreeMap::new(),
        }
    }

    fn fatal(e: crate::agents::AgentError) -> PipelineError {
        PipelineError::Agent(e)
    }

    fn stored(&mut self, plan: &FeaturePlan) -> Result<&mut BTreeMap<String, FeatureEntry>, PipelineError> {
        let hash = plan.content_hash();
        if !self.values.contains_key(&hash) {
            let loaded = self.dir.load_values(&hash)?.unwrap_or_default();
            self.values.insert(hash.clone(), loaded);
        }
        Ok(self.values.get_mut(&hash).expect("inserted above"))
    }

    /// Build every plan that lacks values for some of `trials`. Plans built
    /// together are grouped first; one plan is built alone.
    pub fn ensure_values(&mut self, plans: &PlanSet, trials: &[TrialRecord]) -> Result<(), PipelineError> {
        let mut missing = Vec::new();
        for plan in plans.plans() {
            let have = self.stored(plan)?;
            if trials.iter().any(|t| !have.contains_key(&t.nct_id)) {
                missing.push(plan.clone());
            }
        }
        if missing.is_empty() {
            return Ok(());
        }
        let groups = self.agents.group_features(&missing).map_err(Self::fatal)?;
        let subset = PlanSet::from_plans(missing.iter().cloned());
        tracing::info!(
            features = missing.len(),
            trials = trials.len(),
            groups = groups.len(),
            "building features"
        );
        let built = build_features(&self.agents, trials, &subset, &groups).map_err(Self::fatal)?;
        for plan in &missing {
            let store = self.stored(plan)?;
            for set in &built {
                if let Some(e) = set.values.get(&plan.feature_name) {
                    store.insert(set.nct_id.clone(), e.clone());
                }
            }
            let snapshot = store.clone();
            self.dir.save_values(&plan.content_hash(), &snapshot)?;
        }
        Ok(())
    }

    /// Value sets of `trials` under `plans`, from the store.
    pub fn value_sets(
        &mut self,
        plans: &PlanSet,
        trials: &[TrialRecord],
    ) -> Result<Vec<FeatureValueSet>, PipelineError> {
        let mut out: Vec<FeatureValueSet> = trials.iter().map(|t| FeatureValueSet::new(&t.nct_id)).collect();
        for plan in plans.plans() {
            let store = self.stored(plan)?;
            for set in &mut out {
                if let Some(e) = store.get(&set.nct_id) {
                    set.values.insert(plan.feature_name.clone(), e.clone());
                }
            }
        }
        Ok(out)
    }

    fn ids(trials: &[TrialRecord]) -> BTreeSet<String> {
        trials.iter().map(|t| t.nct_id.clone()).collect()
    }

    fn labels(&self, m: &DesignMatrix) -> Result<Vec<bool>, PipelineError> {
        Ok(m.labels_for(|id| self.samples.label(id))?)
    }

    /// Build, encode, train, select and evaluate one plan set.
    pub fn simulate(&mut self, plans: PlanSet) -> Result<Simulation<TrainedModels>, PipelineError> {
        let hash = self.dir.save_plans(&plans)?;
        let trials: Vec<TrialRecord> = self.samples.train.iter().chain(&self.samples.valid).cloned().collect();
        self.ensure_values(&plans, &trials)?;
        let sets = self.value_sets(&plans, &trials)?;
        let all = encode(&plans, &sets);
        let mut csv = Vec::new();
        all.write_csv(&mut csv)?;
        self.dir.write_bytes(&RunDir::features_rel(&hash, false), &csv)?;

        let xt = all.subset(&Self::ids(&self.samples.train));
        let xv = all.subset(&Self::ids(&self.samples.valid));
        let yt = self.labels(&xt)?;
        let yv = self.labels(&xv)?;
        let metric = self.agents.task.metric;
        let mut models = train(&xt, &yt, self.search.seed)?;
        let score = select(&mut models, &xv, &yv, metric)?;
        tracing::info!(plan_set = %&hash[..12], features = plans.len(), score, selected = ?models.selected, "simulated");

        let examples = self.misclassified(&models, &xv, &yv, &sets, &hash);
        let input = EvaluatorInput {
            metric,
            metric_score: score,
            feature_plans: plans.clone(),
            feature_importances: models.feature_importances(),
            misclassified_example: None,
        };
        let suggestions = self
            .agents
            .evaluate(&input, &examples, self.search.max_suggestions())
            .map_err(Self::fatal)?;
        Ok(Simulation {
            plans,
            score,
            suggestions,
            model: models,
        })
    }

    /// Up to `n_error_examples` validation trials the selected model gets
    /// wrong, drawn with a seed derived from the plan set.
    fn misclassified(
        &self,
        models: &TrainedModels,
        xv: &DesignMatrix,
        yv: &[bool],
        sets: &[FeatureValueSet],
        hash: &str,
    ) -> Vec<MisclassifiedExample> {
        let Some(model) = models.selected_model() else {
            return Vec::new();
        };
        let wrong: Vec<MisclassifiedExample> = xv
            .row_ids
            .iter()
            .zip(&xv.rows)
            .zip(yv)
            .filter_map(|((id, row), &actual)| {
                let predicted = model.predict_proba(row) >= DECISION_THRESHOLD;
                (predicted != actual).then(|| {
                    let trial = self
                        .samples
                        .valid
                        .iter()
                        .find(|t| &t.nct_id == id)
                        .expect("validation trial")
                        .clone();
                    let features = sets
                        .iter()
                        .find(|s| &s.nct_id == id)
                        .cloned()
                        .unwrap_or_else(|| FeatureValueSet::new(id));
                    MisclassifiedExample {
                        trial,
                        predicted: u8::from(predicted),
                        actual: u8::from(actual),
                        features,
                    }
                })
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(node_seed(self.search.seed, hash));
        wrong
            .choose_multiple(&mut rng, self.search.n_error_examples)
            .cloned()
            .collect()
    }

    /// The example trials shown to the factor-based proposer.
    fn factor_samples(&self) -> (Vec<TrialRecord>, Vec<TrialRecord>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.search.seed);
        let pos: Vec<&TrialRecord> = self.samples.train.iter().filter(|t| t.is_positive()).collect();
        let neg: Vec<&TrialRecord> = self.samples.train.iter().filter(|t| !t.is_positive()).collect();
        let take = |v: &[&TrialRecord], n: usize, rng: &mut ChaCha8Rng| -> Vec<TrialRecord> {
            v.choose_multiple(rng, n).map(|t| (*t).clone()).collect()
        };
        let p = take(&pos, self.search.n_factor_pos, &mut rng);
        let n = take(&neg, self.search.n_factor_neg, &mut rng);
        (p, n)
    }

    /// Plan one idea; a non-fatal failure drops the idea.
    fn plan(&self, idea: &FeatureIdea) -> Result<Option<FeaturePlan>, PipelineError> {
        match self.agents.plan_feature(idea) {
            Ok(p) => Ok(Some(p)),
            Err(e) if !e.is_fatal() => {
                tracing::warn!(feature = %idea.feature_name, error = %e, "planning failed, idea dropped");
                Ok(None)
            }
            Err(e) => Err(Self::fatal(e)),
        }
    }
}

impl SearchEnvironment for Workspace<'_> {
    type Model = TrainedModels;
    type Error = PipelineError;

    fn initialize(&mut self) -> Result<Simulation<TrainedModels>, PipelineError> {
        let (pos, neg) = self.factor_samples();
        let ideas = self.agents.propose_initial(&pos, &neg).map_err(Self::fatal)?;
        let mut plans = Vec::new();
        for idea in &ideas {
            plans.extend(self.plan(idea)?);
        }
        if plans.is_empty() {
            return Err(Self::fatal(crate::agents::AgentError::EmptyProposal));
        }
        self.simulate(PlanSet::from_plans(plans))
    }

    fn expand(
        &mut self,
        parent: &PlanSet,
        suggestion: &Suggestion,
    ) -> Result<Option<(ProposalAction, Simulation<TrainedModels>)>, PipelineError> {
        let action = match self.agents.propose_iterative(suggestion, parent) {
            Ok(a) => a,
            Err(e) if !e.is_fatal() => {
                tracing::warn!(error = %e, "proposal failed");
                return Ok(None);
            }
            Err(e) => return Err(Self::fatal(e)),
        };
        let plan = match action.kind {
            ActionKind::Remove => None,
            ActionKind::Add | ActionKind::Refine => {
                let idea = action.idea.clone().expect("add and refine carry an idea");
                match self.plan(&idea)? {
                    Some(p) => Some(p),
                    None => return Ok(None),
                }
            }
        };
        let plans = match apply_proposal(parent, &action, plan.as_ref()) {
            Ok(p) => p,
            Err(e) => {
                tracing::warn!(error = %e, action = %action.summary(), "proposal does not apply");
                return Ok(None);
            }
        };
        Ok(Some((action, self.simulate(plans)?)))
    }

    fn checkpoint(&mut self, tree: &SearchTree, rollout: usize) -> Result<(), PipelineError> {
        self.dir.save_tree(tree)?;
        if let Some(o) = &self.observer {
            o.checkpoint(tree, rollout);
        }
        Ok(())
    }
}
