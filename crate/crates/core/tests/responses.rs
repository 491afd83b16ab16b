mod support;

use autoct_core::domain::{ActionKind, FeatureType};
use support::responses;

#[test]
fn zero_shot_response_gives_ten_ideas() {
    assert_eq!(responses::zero_shot().unwrap(), 10);
}

#[test]
fn factor_response_gives_five_ideas() {
    assert_eq!(responses::factor_based().unwrap(), 5);
}

#[test]
fn planner_response_gives_valid_plans() {
    let plans = responses::planner().unwrap();
    assert_eq!(plans.len(), 15);
    let design = plans.get("trial_design_elements").unwrap();
    assert_eq!(
        design.feature_type["trial_design_elements"],
        FeatureType::Multicategorical
    );
    assert_eq!(
        plans.get("gender_inclusion").unwrap().feature_type["value"],
        FeatureType::Boolean
    );
}

#[test]
fn builder_response_gives_the_printed_values() {
    let plans = responses::planner().unwrap();
    let set = responses::builder(&plans).unwrap();
    assert_eq!(set.values.len(), 3);
}

#[test]
fn evaluator_suggestions_map_to_each_action() {
    let plans = responses::planner().unwrap();
    let kinds = responses::model_evaluator(&plans).unwrap();
    assert_eq!(kinds, [ActionKind::Add, ActionKind::Refine, ActionKind::Remove]);
}
