use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use super::{AgentError, Agents};
use crate::domain::{validate_plan, FeatureIdea, FeaturePlan};
use crate::llm::{complete_parsed, LlmError, Message, Schema};

/// Accept a bare plan, or a map of plans keyed by feature name (the
/// planner sometimes echoes a whole plan set).
fn parse_plan(v: Value, name: &str) -> Result<FeaturePlan, String> {
    let obj = v.as_object().ok_or("expected a JSON object")?;
    let plan_value = if obj.contains_key("feature_type") {
        v.clone()
    } else if let Some(p) = obj.get(name) {
        p.clone()
    } else if obj.len() == 1 {
        obj.values().next().cloned().expect("one entry")
    } else {
        return Err(format!("expected the plan for '{name}'"));
    };
    let mut plan: FeaturePlan = serde_json::from_value(plan_value).map_err(|e| format!("invalid plan: {e}"))?;
    if plan.feature_name != name {
        // Keep the idea's name; a sub-feature keyed by the old name follows it.
        let old = std::mem::replace(&mut plan.feature_name, name.to_string());
        if let Some(t) = plan.feature_type.remove(&old) {
            plan.feature_type.insert(name.to_string(), t);
            if let Some(c) = plan.possible_values.remove(&old) {
                plan.possible_values.insert(name.to_string(), c);
            }
        }
    }
    Ok(plan)
}

/// Make model-produced groups an exact partition of `names`: unknown names
/// are dropped, duplicates keep their first occurrence, oversized groups
/// are split, and omitted names become singletons in input order.
pub fn repair_groups(raw: &[Vec<String>], names: &[String], max_size: usize) -> Vec<Vec<String>> {
    let known: BTreeSet<&str> = names.iter().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for group in raw {
        let kept: Vec<String> = group
            .iter()
            .filter(|n| known.contains(n.as_str()) && seen.insert(n.to_string()))
            .cloned()
            .collect();
        for chunk in kept.chunks(max_size.max(1)) {
            out.push(chunk.to_vec());
        }
    }
    for n in names {
        if !seen.contains(n) {
            out.push(vec![n.clone()]);
        }
    }
    out
}

impl Agents {
    /// Plan one idea. The result passes [`validate_plan`] and keeps the
    /// idea's name; one corrective retry is made on validation failure.
    pub fn plan_feature(&self, idea: &FeatureIdea) -> Result<FeaturePlan, AgentError> {
        let name = idea.feature_name.clone();
        let mut req = self.request(
            "planner",
            &[
                ("task", self.task.description.clone()),
                ("feature_name", name.clone()),
                ("idea", idea.description.clone()),
            ],
        )?;
        let schema = Schema::Object { required: vec![] };
        let mut violations = Vec::new();
        for attempt in 0..2 {
            let mut plan = complete_parsed(self.backend.as_ref(), &req, &schema, self.settings.max_retries, |v| {
                parse_plan(v, &name)
            })?;
            if plan.feature_idea.trim().is_empty() {
                plan.feature_idea = idea.description.clone();
            }
            violations = validate_plan(&plan).iter().map(|v| v.to_string()).collect();
            if violations.is_empty() {
                return Ok(plan);
            }
            if attempt == 0 {
                tracing::debug!(feature = %name, ?violations, "plan rejected, retrying");
                req.messages
                    .push(Message::assistant(serde_json::to_string(&plan).expect("json")));
                req.messages.push(Message::user(format!(
                    "The plan is invalid: {}. Reply again with one corrected JSON plan.",
                    violations.join("; ")
                )));
            }
        }
        Err(AgentError::InvalidPlan {
            feature: name,
            violations,
        })
    }

    /// Partition plans into research groups of bounded size.
    pub fn group_features(&self, plans: &[FeaturePlan]) -> Result<Vec<Vec<String>>, AgentError> {
        let names: Vec<String> = plans.iter().map(|p| p.feature_name.clone()).collect();
        if names.len() <= 1 {
            return Ok(names.into_iter().map(|n| vec![n]).collect());
        }
        let summary: BTreeMap<&str, Value> = plans
            .iter()
            .map(|p| {
                (
                    p.feature_name.as_str(),
                    json!({"feature_idea": p.feature_idea, "data_sources": p.data_sources}),
                )
            })
            .collect();
        let req = self.request(
            "grouper",
            &[
                ("max_group_size", self.settings.max_group_size.to_string()),
                ("feature_plans", serde_json::to_string_pretty(&summary).expect("json")),
            ],
        )?;
        let schema = Schema::array(Schema::array(Schema::String));
        let raw: Result<Vec<Vec<String>>, LlmError> =
            complete_parsed(self.backend.as_ref(), &req, &schema, self.settings.max_retries, |v| {
                serde_json::from_value(v).map_err(|e| e.to_string())
            });
        let raw = match raw {
            Ok(r) => r,
            Err(e) if !e.is_fatal() => {
                tracing::warn!(error = %e, "grouping failed, using singleton groups");
                Vec::new()
            }
            Err(e) => return Err(e.into()),
        };
        Ok(repair_groups(&raw, &names, self.settings.max_group_size))
    }
}
