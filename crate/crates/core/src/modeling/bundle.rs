//! Training the three candidate models and picking one on validation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::design::{Column, DesignMatrix};
use super::ensemble::{BoostingParams, ForestParams, GradientBoosting, RandomForest};
use super::logistic::{LogisticRegression, DEFAULT_LAMBDA};
use super::metrics::evaluate;
use super::ModelError;
use crate::domain::MetricKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    RandomForest,
    GradientBoosting,
}

impl ModelKind {
    /// Fixed order, also the tie-break order for selection.
    pub const ALL: [ModelKind; 3] = [
        ModelKind::LogisticRegression,
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoosting => "gradient_boosting",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Logistic(LogisticRegression<f64>),
    Forest(RandomForest),
    Boosting(GradientBoosting),
    /// Used when the training labels contain a single class.
    Constant {
        probability: f64,
    },
}

impl Model {
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        match self {
            Model::Logistic(m) => m.predict_proba(row),
            Model::Forest(m) => m.predict_proba(row),
            Model::Boosting(m) => m.predict_proba(row),
            Model::Constant { probability } => *probability,
        }
    }

    pub fn predict_all(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_proba(r)).collect()
    }

    /// Native column importances: |w| for the linear model; normalised
    /// impurity decrease for the forest and normalised gain for boosting.
    pub fn importances(&self, n_cols: usize) -> Vec<f64> {
        match self {
            Model::Logistic(m) => m.weights.iter().map(|w| w.abs()).collect(),
            Model::Forest(m) => m.importances.clone(),
            Model::Boosting(m) => m.importances.clone(),
            Model::Constant { .. } => vec![0.0; n_cols],
        }
    }
}

/// The three fitted models plus validation scores and the selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModels {
    pub columns: Vec<Column>,
    pub models: BTreeMap<ModelKind, Model>,
    /// Training-set column means, the background for linear attributions.
    pub background: Vec<f64>,
    /// True when the training labels had a single class.
    pub degenerate: bool,
    #[serde(default)]
    pub validation: BTreeMap<ModelKind, f64>,
    pub selected: Option<ModelKind>,
}

impl TrainedModels {
    pub fn model(&self, kind: ModelKind) -> &Model {
        &self.models[&kind]
    }

    pub fn selected_model(&self) -> Option<&Model> {
        self.selected.map(|k| self.model(k))
    }

    /// Best validation score.
    pub fn best_score(&self) -> Option<f64> {
        self.selected.and_then(|k| self.validation.get(&k).copied())
    }

    /// Importances of the selected model aggregated per feature.
    pub fn feature_importances(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        let Some(m) = self.selected_model() else { return out };
        for (col, v) in self.columns.iter().zip(m.importances(self.columns.len())) {
            *out.entry(col.feature.clone()).or_insert(0.0) += v;
        }
        out
    }

    /// Importances of the selected model per column.
    pub fn column_importances(&self) -> Vec<(String, f64)> {
        let Some(m) = self.selected_model() else {
            return Vec::new();
        };
        self.columns
            .iter()
            .map(|c| c.name.clone())
            .zip(m.importances(self.columns.len()))
            .collect()
    }
}

/// Fit logistic regression, a random forest and boosted trees.
pub fn train(x: &DesignMatrix, y: &[bool], seed: u64) -> Result<TrainedModels, ModelError> {
    if x.n_rows() != y.len() {
        return Err(ModelError::Shape(format!("{} rows for {} labels", x.n_rows(), y.len())));
    }
    if x.n_rows() < 2 {
        return Err(ModelError::InsufficientData(x.n_rows()));
    }
    let pos = y.iter().filter(|v| **v).count();
    let background = x.column_means();
    let mut models = BTreeMap::new();
    let degenerate = pos == 0 || pos == y.len();
    if degenerate {
        tracing::warn!(positives = pos, rows = y.len(), "training labels have a single class");
        let probability = pos as f64 / y.len() as f64;
        for k in ModelKind::ALL {
            models.insert(k, Model::Constant { probability });
        }
    } else {
        let rows = &x.rows;
        let (lr, (rf, gb)) = rayon::join(
            || LogisticRegression::fit(rows, y, DEFAULT_LAMBDA),
            || {
                rayon::join(
                    || RandomForest::fit(rows, y, ForestParams::default(), seed),
                    || GradientBoosting::fit(rows, y, BoostingParams::default()),
                )
            },
        );
        models.insert(ModelKind::LogisticRegression, Model::Logistic(lr?));
        models.insert(ModelKind::RandomForest, Model::Forest(rf?));
        models.insert(ModelKind::GradientBoosting, Model::Boosting(gb?));
    }
    Ok(TrainedModels {
        columns: x.columns.clone(),
        models,
        background,
        degenerate,
        validation: BTreeMap::new(),
        selected: None,
    })
}

/// Score every model on validation and select the argmax; ties go to the
/// earlier kind in [`ModelKind::ALL`].
pub fn select(
    models: &mut TrainedModels,
    xv: &DesignMatrix,
    yv: &[bool],
    metric: MetricKind,
) -> Result<f64, ModelError> {
    if xv.columns != models.columns {
        return Err(ModelError::Shape(
            "validation columns differ from training columns".into(),
        ));
    }
    let mut best: Option<(ModelKind, f64)> = None;
    models.validation.clear();
    for k in ModelKind::ALL {
        let scores = models.model(k).predict_all(&xv.rows);
        let s = evaluate(metric, &scores, yv)?;
        models.validation.insert(k, s);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    let (k, s) = best.expect("three candidate models");
    models.selected = Some(k);
    Ok(s)
}
