use std::collections::BTreeMap;

use serde_json::Value;

use super::{AgentError, Agents, MAX_MODEL_SUGGESTIONS};
use crate::domain::{FeatureValueSet, MetricKind, Origin, PlanSet, Suggestion, TrialRecord};
use crate::llm::{complete_parsed, json_candidates, Schema};

/// A validation trial the current model got wrong.
#[derive(Debug, Clone, PartialEq)]
pub struct MisclassifiedExample {
    pub trial: TrialRecord,
    pub predicted: u8,
    pub actual: u8,
    pub features: FeatureValueSet,
}

impl MisclassifiedExample {
    /// Markdown block: header, built values, and reasons for None values.
    pub fn render(&self) -> String {
        let values: BTreeMap<&str, &BTreeMap<String, Option<crate::domain::FeatureValue>>> = self
            .features
            .values
            .iter()
            .map(|(k, e)| (k.as_str(), &e.values))
            .collect();
        let reasons = self.features.none_reasons();
        let mut s = format!(
            "## {} Predicted {}, should be {}\n\n### Features\n{}\n\n### Reasons for features that are None\n",
            self.trial.nct_id,
            self.predicted,
            self.actual,
            serde_json::to_string_pretty(&values).expect("json")
        );
        if reasons.is_empty() {
            s.push_str("(none)\n");
        }
        for (k, r) in reasons {
            s.push_str(&format!(
                "{}: {}\n",
                serde_json::to_string(&k).expect("json"),
                serde_json::to_string(&r).expect("json")
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorInput {
    pub metric: MetricKind,
    pub metric_score: f64,
    pub feature_plans: PlanSet,
    pub feature_importances: BTreeMap<String, f64>,
    /// Present only for the error-based variant.
    pub misclassified_example: Option<MisclassifiedExample>,
}

impl EvaluatorInput {
    fn vars(&self, task: &str) -> Vec<(&'static str, String)> {
        let importances: BTreeMap<&str, String> = self
            .feature_importances
            .iter()
            .map(|(k, v)| (k.as_str(), format!("{v:.4}")))
            .collect();
        vec![
            ("task", task.to_string()),
            ("metric_name", self.metric.as_str().to_string()),
            ("score", format!("{:.4}", self.metric_score)),
            (
                "feature_plans",
                serde_json::to_string_pretty(self.feature_plans.as_map()).expect("json"),
            ),
            (
                "feature_importances",
                serde_json::to_string_pretty(&importances).expect("json"),
            ),
        ]
    }
}

fn strings_from(v: &Value) -> Option<Vec<String>> {
    let arr = match v {
        Value::Array(a) => a,
        Value::Object(o) => o.get("suggestions")?.as_array()?,
        _ => return None,
    };
    arr.iter().map(|x| x.as_str().map(|s| s.trim().to_string())).collect()
}

impl Agents {
    /// Model-based evaluator: at most three suggestions.
    pub fn evaluate_model_based(&self, input: &EvaluatorInput) -> Result<Vec<Suggestion>, AgentError> {
        let req = self.request("model_evaluator", &input.vars(&self.task.description))?;
        let schema = Schema::OneOf(vec![
            Schema::array(Schema::String),
            Schema::object([("suggestions", Schema::array(Schema::String))]),
        ]);
        let texts = complete_parsed(self.backend.as_ref(), &req, &schema, self.settings.max_retries, |v| {
            strings_from(&v).ok_or_else(|| "expected a list of suggestion strings".to_string())
        })?;
        Ok(texts
            .into_iter()
            .filter(|t| !t.is_empty())
            .take(MAX_MODEL_SUGGESTIONS)
            .map(|t| Suggestion::new(t, Origin::ModelBased))
            .collect())
    }

    /// Error-based evaluator on one misclassified example, with tools
    /// bound to that trial. A JSON list of strings gives one suggestion
    /// each; prose is a single suggestion.
    pub fn evaluate_error_based(&self, input: &EvaluatorInput) -> Result<Vec<Suggestion>, AgentError> {
        let example = input.misclassified_example.as_ref().ok_or_else(|| {
            AgentError::Domain(crate::domain::DomainError::InvalidConfig(
                "error-based evaluation needs a misclassified example".into(),
            ))
        })?;
        let mut vars = input.vars(&self.task.description);
        vars.push(("example", example.render()));
        let trace = self.react("error_evaluator", &vars, &example.trial)?;
        let texts = json_candidates(&trace.final_answer)
            .iter()
            .find_map(strings_from)
            .unwrap_or_else(|| vec![trace.final_answer.trim().to_string()]);
        Ok(texts
            .into_iter()
            .filter(|t| !t.is_empty())
            .map(|t| Suggestion::new(t, Origin::ErrorBased))
            .collect())
    }

    /// Model-based suggestions first, then error-based ones, capped at
    /// `cap`. A non-fatal failure of one evaluator drops only its output.
    pub fn evaluate(
        &self,
        base: &EvaluatorInput,
        examples: &[MisclassifiedExample],
        cap: usize,
    ) -> Result<Vec<Suggestion>, AgentError> {
        let mut out = Vec::new();
        let model_input = EvaluatorInput {
            misclassified_example: None,
            ..base.clone()
        };
        match self.evaluate_model_based(&model_input) {
            Ok(s) => out.extend(s),
            Err(e) if !e.is_fatal() => tracing::warn!(error = %e, "model-based evaluator skipped"),
            Err(e) => return Err(e),
        }
        for ex in examples {
            if out.len() >= cap {
                break;
            }
            let input = EvaluatorInput {
                misclassified_example: Some(ex.clone()),
                ..base.clone()
            };
            match self.evaluate_error_based(&input) {
                Ok(s) => out.extend(s),
                Err(e) if !e.is_fatal() => {
                    tracing::warn!(error = %e, nct_id = %ex.trial.nct_id, "error-based evaluator skipped")
                }
                Err(e) => return Err(e),
            }
        }
        out.truncate(cap);
        Ok(out)
    }
}
