use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::plan::{FeaturePlan, FeatureType};

/// A built, type-checked sub-feature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Boolean(bool),
    Integer(i64),
    Float(f64),
    Category(String),
    Categories(Vec<String>),
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Boolean(b) => write!(f, "{b}"),
            FeatureValue::Integer(i) => write!(f, "{i}"),
            FeatureValue::Float(x) => write!(f, "{x}"),
            FeatureValue::Category(c) => write!(f, "{c}"),
            FeatureValue::Categories(cs) => write!(f, "[{}]", cs.join(", ")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NoneCode {
    /// Sub-feature absent from the builder output.
    Missing,
    /// The builder explicitly answered None / null.
    NoData,
    TypeMismatch,
    NotInCategories,
    NotSubset,
    /// The builder call itself failed to produce parseable output.
    AgentFailure,
}

impl fmt::Display for NoneCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("code serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoneReason {
    pub code: NoneCode,
    pub detail: String,
}

impl NoneReason {
    pub fn new(code: NoneCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for NoneReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.detail.is_empty() {
            write!(f, "{}", self.code)
        } else {
            write!(f, "{}: {}", self.code, self.detail)
        }
    }
}

/// Built values of one feature for one trial.
///
/// Every sub-feature declared by the plan has a key in `values`; `None`
/// entries have a matching key in `none_reasons`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub values: BTreeMap<String, Option<FeatureValue>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub none_reasons: BTreeMap<String, NoneReason>,
}

impl FeatureEntry {
    /// Every sub-feature of `plan` set to None with the same reason.
    pub fn all_none(plan: &FeaturePlan, reason: NoneReason) -> Self {
        let mut e = FeatureEntry::default();
        for sub in plan.feature_type.keys() {
            e.values.insert(sub.clone(), None);
            e.none_reasons.insert(sub.clone(), reason.clone());
        }
        e
    }

    pub fn get(&self, sub: &str) -> Option<&FeatureValue> {
        self.values.get(sub).and_then(Option::as_ref)
    }

    pub fn is_complete(&self) -> bool {
        self.values.values().all(Option::is_some)
    }

    /// One line explaining the None entries, if any.
    pub fn none_explanation(&self) -> Option<String> {
        if self.none_reasons.is_empty() {
            return None;
        }
        Some(
            self.none_reasons
                .iter()
                .map(|(k, r)| format!("{k}: {r}"))
                .collect::<Vec<_>>()
                .join("; "),
        )
    }
}

/// All built features for one trial.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureValueSet {
    pub nct_id: String,
    pub values: BTreeMap<String, FeatureEntry>,
}

impl FeatureValueSet {
    pub fn new(nct_id: impl Into<String>) -> Self {
        Self {
            nct_id: nct_id.into(),
            values: BTreeMap::new(),
        }
    }

    /// Explanations for None entries keyed by feature name.
    pub fn none_reasons(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .filter_map(|(name, e)| e.none_explanation().map(|x| (name.clone(), x)))
            .collect()
    }
}

fn is_none_marker(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::String(s) => {
            let t = s.trim();
            t.eq_ignore_ascii_case("none") || t.eq_ignore_ascii_case("null") || t.eq_ignore_ascii_case("n/a")
        }
        _ => false,
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn match_category<'a>(text: &str, cats: &'a [String]) -> Option<&'a String> {
    cats.iter()
        .find(|c| c.as_str() == text)
        .or_else(|| cats.iter().find(|c| c.eq_ignore_ascii_case(text)))
}

fn coerce_one(raw: &Value, ty: FeatureType, cats: &[String]) -> Result<FeatureValue, NoneReason> {
    let mismatch = |want: &str| NoneReason::new(NoneCode::TypeMismatch, format!("expected {want}, got {raw}"));
    match ty {
        FeatureType::Integer => match raw {
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(FeatureValue::Integer(i))
                } else {
                    match n.as_f64() {
                        Some(x) if x.fract() == 0.0 && x.abs() < 9.0e15 => Ok(FeatureValue::Integer(x as i64)),
                        _ => Err(mismatch("integer")),
                    }
                }
            }
            Value::String(s) => s
                .trim()
                .parse::<i64>()
                .map(FeatureValue::Integer)
                .map_err(|_| mismatch("integer")),
            _ => Err(mismatch("integer")),
        },
        FeatureType::Float => {
            let x = match raw {
                Value::Number(n) => n.as_f64(),
                Value::String(s) => s.trim().parse::<f64>().ok(),
                _ => None,
            };
            match x {
                Some(x) if x.is_finite() => Ok(FeatureValue::Float(x)),
                _ => Err(mismatch("float")),
            }
        }
        FeatureType::Boolean => match raw {
            Value::Bool(b) => Ok(FeatureValue::Boolean(*b)),
            Value::String(s) if s.trim().eq_ignore_ascii_case("true") => Ok(FeatureValue::Boolean(true)),
            Value::String(s) if s.trim().eq_ignore_ascii_case("false") => Ok(FeatureValue::Boolean(false)),
            _ => Err(mismatch("boolean")),
        },
        FeatureType::Categorical => {
            let text = scalar_text(raw).ok_or_else(|| mismatch("category"))?;
            match_category(&text, cats)
                .map(|c| FeatureValue::Category(c.clone()))
                .ok_or_else(|| {
                    NoneReason::new(
                        NoneCode::NotInCategories,
                        format!(
                            "'{text}' does not fit into the predefined categories [{}]",
                            cats.join(", ")
                        ),
                    )
                })
        }
        FeatureType::Multicategorical => {
            let items: Vec<&Value> = match raw {
                Value::Array(xs) => xs.iter().collect(),
                Value::String(_) => vec![raw],
                _ => return Err(mismatch("list of categories")),
            };
            let mut picked = vec![false; cats.len()];
            for item in items {
                let text = scalar_text(item).ok_or_else(|| mismatch("list of categories"))?;
                match cats.iter().position(|c| c == &text || c.eq_ignore_ascii_case(&text)) {
                    Some(i) => picked[i] = true,
                    None => {
                        return Err(NoneReason::new(
                            NoneCode::NotSubset,
                            format!("'{text}' is not among the predefined categories [{}]", cats.join(", ")),
                        ))
                    }
                }
            }
            Ok(FeatureValue::Categories(
                cats.iter()
                    .zip(picked)
                    .filter(|(_, p)| *p)
                    .map(|(c, _)| c.clone())
                    .collect(),
            ))
        }
    }
}

/// Coerce one raw builder output object to the plan's declared types.
///
/// Total: every sub-feature in `plan.feature_type` receives an entry. Values
/// that cannot be coerced become `None` with a reason; `explanation` is the
/// builder's own note for features it declined to build.
pub fn coerce_value(raw: &Value, plan: &FeaturePlan, explanation: Option<&str>) -> FeatureEntry {
    let mut entry = FeatureEntry::default();
    let single = plan.is_single_valued();
    for (sub, ty) in &plan.feature_type {
        let field = match raw {
            Value::Object(map) => map.get(sub).or_else(|| {
                // Single-valued plans are keyed "value" or by the feature name
                // interchangeably in builder output.
                if single {
                    map.get(super::SINGLE_VALUE_KEY).or_else(|| map.get(&plan.feature_name))
                } else {
                    None
                }
            }),
            other if single && !other.is_object() => Some(other),
            _ => None,
        };
        let result = match field {
            None => Err(NoneReason::new(NoneCode::Missing, "")),
            Some(v) if is_none_marker(v) => Err(NoneReason::new(
                NoneCode::NoData,
                explanation.unwrap_or("builder returned None").to_string(),
            )),
            Some(v) => coerce_one(v, *ty, plan.categories(sub)),
        };
        match result {
            Ok(v) => {
                entry.values.insert(sub.clone(), Some(v));
            }
            Err(reason) => {
                entry.values.insert(sub.clone(), None);
                entry.none_reasons.insert(sub.clone(), reason);
            }
        }
    }
    entry
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::plan::DataSource;
    use serde_json::json;

    fn plan(name: &str, subs: &[(&str, FeatureType, &[&str])]) -> FeaturePlan {
        FeaturePlan {
            feature_name: name.into(),
            feature_idea: String::new(),
            feature_type: subs.iter().map(|(s, t, _)| (s.to_string(), *t)).collect(),
            data_sources: vec![DataSource::Pubmed],
            example_values: vec![],
            possible_values: subs
                .iter()
                .filter(|(_, _, c)| !c.is_empty())
                .map(|(s, _, c)| (s.to_string(), c.iter().map(|x| x.to_string()).collect()))
                .collect(),
            feature_instructions: String::new(),
        }
    }

    #[test]
    fn integer_value() {
        let p = plan("number_of_participants", &[("value", FeatureType::Integer, &[])]);
        let e = coerce_value(&json!({"value": 50}), &p, None);
        assert_eq!(e.get("value"), Some(&FeatureValue::Integer(50)));
        assert!(e.none_reasons.is_empty());
        let e = coerce_value(&json!({"value": "120"}), &p, None);
        assert_eq!(e.get("value"), Some(&FeatureValue::Integer(120)));
        let e = coerce_value(&json!({"value": 3.5}), &p, None);
        assert_eq!(e.none_reasons["value"].code, NoneCode::TypeMismatch);
    }

    #[test]
    fn category_outside_list() {
        let p = plan(
            "primary_outcome_measure",
            &[(
                "value",
                FeatureType::Categorical,
                &["safety", "efficacy", "pharmacokinetics", "tolerability", "biomarkers"],
            )],
        );
        let e = coerce_value(&json!({"value": "maximum tolerated dose"}), &p, None);
        assert_eq!(e.values["value"], None);
        assert_eq!(e.none_reasons["value"].code, NoneCode::NotInCategories);
    }

    #[test]
    fn named_single_key() {
        let p = plan(
            "route_of_administration",
            &[(
                "route_of_administration",
                FeatureType::Categorical,
                &["oral", "intravenous", "subcutaneous"],
            )],
        );
        let e = coerce_value(&json!({"route_of_administration": "subcutaneous"}), &p, None);
        assert_eq!(
            e.get("route_of_administration"),
            Some(&FeatureValue::Category("subcutaneous".into()))
        );
        // Case-insensitive match maps to the canonical spelling.
        let e = coerce_value(&json!({"value": "Oral"}), &p, None);
        assert_eq!(
            e.get("route_of_administration"),
            Some(&FeatureValue::Category("oral".into()))
        );
    }

    #[test]
    fn booleans() {
        let p = plan("gender_inclusion", &[("value", FeatureType::Boolean, &[])]);
        for (raw, want) in [
            (json!(true), Some(true)),
            (json!("FALSE"), Some(false)),
            (json!("yes"), None),
            (json!(1), None),
        ] {
            let e = coerce_value(&json!({ "value": raw }), &p, None);
            assert_eq!(e.get("value").cloned(), want.map(FeatureValue::Boolean), "{raw}");
        }
    }

    #[test]
    fn multicategory_subset() {
        let cats: &[&str] = &[
            "randomized",
            "non-randomized",
            "double-blind",
            "single-blind",
            "open-label",
            "placebo-controlled",
        ];
        let p = plan(
            "trial_design_elements",
            &[("trial_design_elements", FeatureType::Multicategorical, cats)],
        );
        let e = coerce_value(
            &json!({"trial_design_elements": ["double-blind", "randomized"]}),
            &p,
            None,
        );
        assert_eq!(
            e.get("trial_design_elements"),
            Some(&FeatureValue::Categories(vec![
                "randomized".into(),
                "double-blind".into()
            ]))
        );
        let e = coerce_value(&json!({"trial_design_elements": ["single-group"]}), &p, None);
        assert_eq!(e.none_reasons["trial_design_elements"].code, NoneCode::NotSubset);
    }

    #[test]
    fn missing_and_explicit_none() {
        let p = plan(
            "dose",
            &[
                ("amount", FeatureType::Float, &[]),
                ("unit", FeatureType::Categorical, &["mg", "ml"]),
            ],
        );
        let e = coerce_value(&json!({"amount": "None"}), &p, Some("no dosing data"));
        assert_eq!(e.none_reasons["amount"].code, NoneCode::NoData);
        assert_eq!(e.none_reasons["amount"].detail, "no dosing data");
        assert_eq!(e.none_reasons["unit"].code, NoneCode::Missing);
        assert_eq!(e.values.len(), 2);
        assert!(e.none_explanation().unwrap().contains("MISSING"));
    }

    #[test]
    fn bare_scalar_for_single_valued_plan() {
        let p = plan("previous_trial_success_rate", &[("value", FeatureType::Float, &[])]);
        let e = coerce_value(&json!(1.0), &p, None);
        assert_eq!(e.get("value"), Some(&FeatureValue::Float(1.0)));
    }

    #[test]
    fn values_round_trip_through_json() {
        let vals = vec![
            FeatureValue::Boolean(true),
            FeatureValue::Integer(7),
            FeatureValue::Float(0.25),
            FeatureValue::Category("x".into()),
            FeatureValue::Categories(vec!["a".into()]),
        ];
        let s = serde_json::to_string(&vals).unwrap();
        let back: Vec<FeatureValue> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vals);
    }
}
