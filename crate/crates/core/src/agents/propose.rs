use std::collections::BTreeSet;

use serde_json::{json, Value};

use super::{AgentError, Agents};
use crate::domain::{
    normalize_feature_name, ActionKind, FeatureIdea, PlanSet, ProposalAction, Suggestion, TrialRecord,
};
use crate::llm::{complete_parsed, json_candidates, LlmError, Message, Schema};

/// Make `name` unique against `taken` by appending `_2`, `_3`, ...
pub fn uniquify(name: &str, taken: &BTreeSet<String>) -> String {
    if !taken.contains(name) {
        return name.to_string();
    }
    (2..)
        .map(|i| format!("{name}_{i}"))
        .find(|n| !taken.contains(n))
        .expect("unbounded suffixes")
}

fn idea_schema() -> Schema {
    Schema::array(Schema::Object { required: vec![] })
}

/// Read `[{feature_name|name, description}]`, normalising names.
fn parse_ideas(v: Value) -> Result<Vec<FeatureIdea>, String> {
    let items = v.as_array().ok_or("expected a JSON array of feature ideas")?;
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let name = item
            .get("feature_name")
            .or_else(|| item.get("name"))
            .and_then(Value::as_str)
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| format!("$[{i}]: missing 'feature_name'"))?;
        let description = item
            .get("description")
            .and_then(Value::as_str)
            .ok_or_else(|| format!("$[{i}]: missing 'description'"))?;
        out.push(FeatureIdea::new(normalize_feature_name(name), description.trim()));
    }
    Ok(out)
}

fn dedupe(ideas: Vec<FeatureIdea>) -> Vec<FeatureIdea> {
    let mut taken = BTreeSet::new();
    ideas
        .into_iter()
        .map(|mut idea| {
            idea.feature_name = uniquify(&idea.feature_name, &taken);
            taken.insert(idea.feature_name.clone());
            idea
        })
        .collect()
}

fn ideas_json(ideas: &[FeatureIdea]) -> String {
    serde_json::to_string_pretty(ideas).expect("ideas serialize")
}

impl Agents {
    /// Zero-shot ideas from the model's prior knowledge.
    pub fn propose_zero_shot(&self) -> Result<Vec<FeatureIdea>, AgentError> {
        let req = self.request("zero_shot_proposer", &[("task", self.task.description.clone())])?;
        Ok(complete_parsed(
            self.backend.as_ref(),
            &req,
            &idea_schema(),
            self.settings.max_retries,
            parse_ideas,
        )?)
    }

    /// Factors behind one example trial's outcome, found with tools.
    pub fn propose_factors(&self, trial: &TrialRecord) -> Result<Vec<FeatureIdea>, AgentError> {
        let outcome = if trial.is_positive() { "success" } else { "failure" };
        let trace = self.react(
            "factor_proposer",
            &[
                ("task", self.task.description.clone()),
                ("nct_id", trial.nct_id.clone()),
                ("outcome", outcome.to_string()),
            ],
            trial,
        )?;
        let mut first_err = None;
        for c in json_candidates(&trace.final_answer) {
            match parse_ideas(c) {
                Ok(ideas) => return Ok(ideas),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        Err(AgentError::Llm(LlmError::UnparseableOutput {
            responses: vec![trace.final_answer],
            last_error: first_err.unwrap_or_else(|| "no JSON array of factors found".into()),
        }))
    }

    /// Merge and deduplicate both idea lists into the final list.
    pub fn summarize_ideas(
        &self,
        zero_shot: &[FeatureIdea],
        factors: &[FeatureIdea],
    ) -> Result<Vec<FeatureIdea>, AgentError> {
        let req = self.request(
            "summarizer",
            &[
                ("task", self.task.description.clone()),
                ("zero_shot_ideas", ideas_json(zero_shot)),
                ("factor_ideas", ideas_json(factors)),
            ],
        )?;
        let ideas = complete_parsed(
            self.backend.as_ref(),
            &req,
            &idea_schema(),
            self.settings.max_retries,
            parse_ideas,
        )?;
        if ideas.is_empty() {
            return Err(AgentError::EmptyProposal);
        }
        Ok(dedupe(ideas))
    }

    /// Zero-shot call, one factor call per example trial (positives first),
    /// then the summarizer. Names in the result are unique.
    pub fn propose_initial(
        &self,
        positives: &[TrialRecord],
        negatives: &[TrialRecord],
    ) -> Result<Vec<FeatureIdea>, AgentError> {
        let zero_shot = self.propose_zero_shot()?;
        let mut factors = Vec::new();
        for trial in positives.iter().chain(negatives) {
            factors.extend(self.propose_factors(trial)?);
        }
        tracing::info!(
            zero_shot = zero_shot.len(),
            factors = factors.len(),
            "initial proposals collected"
        );
        self.summarize_ideas(&zero_shot, &factors)
    }

    /// Turn one evaluator suggestion into one action on `active`.
    /// Refine/Remove must name an existing feature; one corrective retry
    /// is allowed before [`AgentError::InvalidTarget`].
    pub fn propose_iterative(&self, suggestion: &Suggestion, active: &PlanSet) -> Result<ProposalAction, AgentError> {
        let current: Vec<Value> = active
            .plans()
            .map(|p| json!({"feature_name": p.feature_name, "feature_idea": p.feature_idea}))
            .collect();
        let mut req = self.request(
            "iterative_proposer",
            &[
                ("task", self.task.description.clone()),
                (
                    "current_features",
                    serde_json::to_string_pretty(&current).expect("json"),
                ),
                ("suggestion", suggestion.text.clone()),
            ],
        )?;
        let schema = Schema::object([("action", Schema::String), ("feature_name", Schema::String)]);
        let parse = |v: Value| -> Result<(ActionKind, String, String), String> {
            let kind = match v["action"].as_str().unwrap_or("").trim().to_ascii_lowercase().as_str() {
                "add" => ActionKind::Add,
                "refine" => ActionKind::Refine,
                "remove" => ActionKind::Remove,
                other => return Err(format!("action must be add, refine or remove, not '{other}'")),
            };
            let name = normalize_feature_name(v["feature_name"].as_str().unwrap_or(""));
            let description = v
                .get("description")
                .and_then(Value::as_str)
                .unwrap_or("")
                .trim()
                .to_string();
            Ok((kind, name, description))
        };

        for attempt in 0..2 {
            let (kind, name, description) =
                complete_parsed(self.backend.as_ref(), &req, &schema, self.settings.max_retries, parse)?;
            let description = if description.is_empty() {
                suggestion.text.clone()
            } else {
                description
            };
            match kind {
                ActionKind::Add => {
                    let taken: BTreeSet<String> = active.names().map(str::to_string).collect();
                    let name = uniquify(&name, &taken);
                    return Ok(ProposalAction::add(
                        FeatureIdea::new(name, description),
                        suggestion.origin,
                    ));
                }
                _ if active.contains(&name) => {
                    return Ok(if kind == ActionKind::Refine {
                        ProposalAction::refine(name, description, suggestion.origin)
                    } else {
                        ProposalAction::remove(name, suggestion.origin)
                    });
                }
                _ if attempt == 0 => {
                    let names: Vec<&str> = active.names().collect();
                    req.messages.push(Message::assistant(
                        json!({"action": format!("{kind}").to_lowercase(), "feature_name": name}).to_string(),
                    ));
                    req.messages.push(Message::user(format!(
                        "'{name}' is not one of the current features. A {kind} proposal must name one of: {}. \
                         Reply again with a single JSON object.",
                        names.join(", ")
                    )));
                }
                _ => return Err(AgentError::InvalidTarget(name)),
            }
        }
        unreachable!("loop returns on its second pass")
    }
}
