//! Published example agent responses, pushed through the
//! agent operations that consume them.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use autoct_core::agents::{Agents, EvaluatorInput, MisclassifiedExample};
use autoct_core::domain::{
    ActionKind, FeatureIdea, FeaturePlan, FeatureValue, FeatureValueSet, MetricKind, Origin, PlanSet, TaskSpec,
    TrialRecord,
};
use autoct_core::retrieval::{EmbedderSpec, KnowledgeBase};
use autoct_core::testing::{synthetic_corpus, synthetic_trials, ScriptedBackend};
use chrono::NaiveDate;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/responses")
}

/// Works from either crate's manifest directory.
fn fixture(name: &str) -> String {
    let local = fixture_dir().join(name);
    let path = if local.exists() {
        local
    } else {
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../core/tests/fixtures/responses")
            .join(name)
    };
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn agents(replies: Vec<String>) -> (Agents, Arc<ScriptedBackend>) {
    let trials = synthetic_trials(4, 0.5, 1, 3);
    let kb = KnowledgeBase::ingest(synthetic_corpus(&trials, 5, 3), &EmbedderSpec::Hashing { dim: 32 }).expect("kb");
    let backend = Arc::new(ScriptedBackend::new(replies));
    let task = TaskSpec::new(
        "Predict the outcome of a phase 1 clinical trial (1 = success, 0 = failure) at the beginning stages of a trial.",
        MetricKind::RocAuc,
    )
    .expect("task");
    (Agents::new(backend.clone(), task, Arc::new(kb)), backend)
}

fn subject() -> TrialRecord {
    TrialRecord::new("NCT01224639", 1, NaiveDate::from_ymd_opt(2010, 10, 1).expect("date"))
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn zero_shot() -> Result<usize, String> {
    let (a, _) = agents(vec![fixture("zero_shot.json")]);
    let ideas = a.propose_zero_shot().map_err(|e| e.to_string())?;
    ensure(ideas.len() >= 10, || format!("{} ideas", ideas.len()))?;
    ensure(ideas[8].feature_name == "trial_location", || format!("{:?}", ideas[8]))?;
    Ok(ideas.len())
}

pub fn factor_based() -> Result<usize, String> {
    let (a, _) = agents(vec![fixture("factor_proposer.json")]);
    let ideas = a.propose_factors(&subject()).map_err(|e| e.to_string())?;
    ensure(ideas.len() == 5, || format!("{} factors", ideas.len()))?;
    ensure(ideas[0].feature_name == "route_of_administration", || {
        ideas[0].feature_name.clone()
    })?;
    Ok(ideas.len())
}

/// Every plan of the printed planner response, each planned from its idea.
pub fn planner() -> Result<PlanSet, String> {
    let text = fixture("planner.json");
    let raw: BTreeMap<String, serde_json::Value> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mut plans = Vec::new();
    for (name, v) in &raw {
        let idea = FeatureIdea::new(name.clone(), v["feature_idea"].as_str().unwrap_or_default());
        let (a, _) = agents(vec![text.clone()]);
        plans.push(a.plan_feature(&idea).map_err(|e| format!("{name}: {e}"))?);
    }
    let set = PlanSet::from_plans(plans);
    let loc = set.get("trial_location").ok_or("trial_location missing")?;
    let regions = loc.categories("trial_location");
    ensure(
        regions == ["North America", "Europe", "Asia", "South America", "Africa", "Oceania"],
        || format!("regions {regions:?}"),
    )?;
    Ok(set)
}

fn plan_of(set: &PlanSet, name: &str) -> Result<FeaturePlan, String> {
    set.get(name).cloned().ok_or_else(|| format!("{name} missing"))
}

pub fn builder(plans: &PlanSet) -> Result<FeatureValueSet, String> {
    let group = vec![
        plan_of(plans, "route_of_administration")?,
        plan_of(plans, "dosing_regimen")?,
        plan_of(plans, "previous_trial_success_rate")?,
    ];
    let (a, backend) = agents(vec![fixture("researcher.txt"), fixture("builder.json")]);
    let set = a.build_group(&subject(), &group).map_err(|e| e.to_string())?;
    ensure(backend.remaining() == 0, || "not every scripted reply was used".into())?;
    let value = |f: &str, sub: &str| set.values.get(f).and_then(|e| e.values.get(sub)).cloned().flatten();
    let want = [
        (
            "route_of_administration",
            "route_of_administration",
            FeatureValue::Category("subcutaneous".into()),
        ),
        (
            "dosing_regimen",
            "dosing_regimen",
            FeatureValue::Category("multiple doses".into()),
        ),
        ("previous_trial_success_rate", "value", FeatureValue::Float(1.0)),
    ];
    for (f, sub, v) in want {
        ensure(value(f, sub).as_ref() == Some(&v), || {
            format!("{f}.{sub} = {:?}", value(f, sub))
        })?;
    }
    ensure(set.nct_id == "NCT01224639", || set.nct_id.clone())?;
    Ok(set)
}

/// The three printed suggestions, and the actions they become on the
/// printed plan set.
pub fn model_evaluator(plans: &PlanSet) -> Result<Vec<ActionKind>, String> {
    let input = EvaluatorInput {
        metric: MetricKind::RocAuc,
        metric_score: 0.73,
        feature_plans: plans.clone(),
        feature_importances: plans.names().map(|n| (n.to_string(), 0.1)).collect(),
        misclassified_example: None,
    };
    let (a, _) = agents(vec![fixture("model_evaluator.json")]);
    let suggestions = a.evaluate_model_based(&input).map_err(|e| e.to_string())?;
    ensure(suggestions.len() == 3, || format!("{} suggestions", suggestions.len()))?;
    let replies = [
        r#"{"action": "add", "feature_name": "historical_trial_outcomes", "description": "Success rate of previous trials in the same therapeutic area."}"#,
        r#"{"action": "refine", "feature_name": "intervention_type", "description": "More specific intervention types, including combination therapies."}"#,
        r#"{"action": "remove", "feature_name": "gender_inclusion"}"#,
    ];
    let mut kinds = Vec::new();
    for (s, reply) in suggestions.iter().zip(replies) {
        let (a, _) = agents(vec![reply.to_string()]);
        let action = a.propose_iterative(s, plans).map_err(|e| e.to_string())?;
        action.check_shape().map_err(|e| e.to_string())?;
        kinds.push(action.kind);
    }
    ensure(
        kinds == [ActionKind::Add, ActionKind::Refine, ActionKind::Remove],
        || format!("{kinds:?}"),
    )?;

    let example = MisclassifiedExample {
        trial: TrialRecord::new("NCT02726334", 0, NaiveDate::from_ymd_opt(2016, 3, 1).expect("date")),
        predicted: 1,
        actual: 0,
        features: FeatureValueSet::new("NCT02726334"),
    };
    let (a, _) = agents(vec![fixture("error_evaluator.txt")]);
    let error_input = EvaluatorInput {
        misclassified_example: Some(example),
        ..input
    };
    let prose = a.evaluate_error_based(&error_input).map_err(|e| e.to_string())?;
    ensure(prose.len() == 1 && prose[0].origin == Origin::ErrorBased, || {
        format!("{prose:?}")
    })?;
    Ok(kinds)
}

/// All checks, summarized in one line.
pub fn check_all() -> Result<String, String> {
    let z = zero_shot()?;
    let f = factor_based()?;
    let plans = planner()?;
    builder(&plans)?;
    let kinds = model_evaluator(&plans)?;
    Ok(format!(
        "zero-shot {z} ideas, factors {f}, {} valid plans, builder value set for NCT01224639, evaluator actions {kinds:?}",
        plans.len()
    ))
}
