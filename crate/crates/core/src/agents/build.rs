use std::collections::BTreeMap;

use rayon::prelude::*;
use serde_json::Value;

use super::{AgentError, Agents};
use crate::domain::{
    coerce_value, FeatureEntry, FeaturePlan, FeatureValueSet, NoneCode, NoneReason, PlanSet, TrialRecord,
};
use crate::llm::{complete_parsed, LlmError, Schema};

fn plans_json(group: &[FeaturePlan]) -> String {
    let map: BTreeMap<&str, &FeaturePlan> = group.iter().map(|p| (p.feature_name.as_str(), p)).collect();
    serde_json::to_string_pretty(&map).expect("plans serialize")
}

fn explanation_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

impl Agents {
    /// Research then build one group of features for one trial. Builder
    /// output that never parses yields all-None entries marked
    /// `AGENT_FAILURE`; fatal backend errors propagate.
    pub fn build_group(&self, trial: &TrialRecord, group: &[FeaturePlan]) -> Result<FeatureValueSet, AgentError> {
        let names = group
            .iter()
            .map(|p| p.feature_name.as_str())
            .collect::<Vec<_>>()
            .join(", ");
        let plans = plans_json(group);
        let research = self.react(
            "researcher",
            &[
                ("nct_id", trial.nct_id.clone()),
                ("feature_names", names.clone()),
                ("feature_plans", plans.clone()),
            ],
            trial,
        )?;
        let req = self.request(
            "builder",
            &[
                ("nct_id", trial.nct_id.clone()),
                ("feature_names", names),
                ("feature_plans", plans),
                ("research", research.final_answer),
            ],
        )?;
        let schema = Schema::object([("feature_values", Schema::map(Schema::Any))]);
        let mut out = FeatureValueSet::new(&trial.nct_id);
        match complete_parsed(self.backend.as_ref(), &req, &schema, self.settings.max_retries, Ok) {
            Ok(v) => {
                let values = v["feature_values"].as_object().cloned().unwrap_or_default();
                let explanations = v
                    .get("explanations")
                    .and_then(Value::as_object)
                    .cloned()
                    .unwrap_or_default();
                for plan in group {
                    let note = explanations.get(&plan.feature_name).and_then(explanation_text);
                    let entry = match values.get(&plan.feature_name) {
                        Some(raw) => coerce_value(raw, plan, note.as_deref()),
                        None => FeatureEntry::all_none(
                            plan,
                            NoneReason::new(
                                NoneCode::Missing,
                                note.unwrap_or_else(|| "builder gave no value".into()),
                            ),
                        ),
                    };
                    out.values.insert(plan.feature_name.clone(), entry);
                }
            }
            Err(e @ LlmError::UnparseableOutput { .. }) => {
                tracing::warn!(nct_id = %trial.nct_id, error = %e, "builder output unusable");
                for plan in group {
                    let reason = NoneReason::new(NoneCode::AgentFailure, "builder output could not be parsed");
                    out.values
                        .insert(plan.feature_name.clone(), FeatureEntry::all_none(plan, reason));
                }
            }
            Err(e) => return Err(e.into()),
        }
        Ok(out)
    }
}

/// Build `groups` (names drawn from `plans`) for every trial. Calls for
/// distinct trials run on a pool of `agents.settings.workers` threads; the
/// result is ordered by NCT id.
pub fn build_features(
    agents: &Agents,
    trials: &[TrialRecord],
    plans: &PlanSet,
    groups: &[Vec<String>],
) -> Result<Vec<FeatureValueSet>, AgentError> {
    let group_plans: Vec<Vec<FeaturePlan>> = groups
        .iter()
        .map(|g| g.iter().filter_map(|n| plans.get(n).cloned()).collect())
        .collect();
    let mut sorted: Vec<&TrialRecord> = trials.iter().collect();
    sorted.sort_by(|a, b| a.nct_id.cmp(&b.nct_id));

    let run_one = |trial: &&TrialRecord| -> Result<FeatureValueSet, AgentError> {
        let mut set = FeatureValueSet::new(&trial.nct_id);
        for group in &group_plans {
            if group.is_empty() {
                continue;
            }
            set.values.extend(agents.build_group(trial, group)?.values);
        }
        Ok(set)
    };
    let workers = agents.settings.workers.max(1);
    let results: Vec<Result<FeatureValueSet, AgentError>> = if workers == 1 {
        sorted.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(|| sorted.par_iter().map(run_one).collect())
    };
    results.into_iter().collect()
}
