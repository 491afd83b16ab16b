//! Bagged gini forest and gradient-boosted trees for binary labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_gini, grow_newton, NewtonTreeParams, Tree};
use super::ModelError;
use crate::scalar::sigmoid;

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

fn check(x: &[Vec<f64>], y: &[bool]) -> Result<usize, ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::Shape(format!("{} rows for {} labels", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(ModelError::InsufficientData(0));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(ModelError::Shape("ragged design matrix".into()));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    /// Impurity-decrease importances, summing to 1 (or all zero).
    pub importances: Vec<f64>,
}

impl RandomForest {
    /// Bootstrap rows per tree; ⌊√d⌋ candidate features per split.
    pub fn fit(x: &[Vec<f64>], y: &[bool], params: ForestParams, seed: u64) -> Result<Self, ModelError> {
        let d = check(x, y)?;
        let max_features = ((d as f64).sqrt().floor() as usize).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut imp = vec![0.0; d];
        let mut trees = Vec::with_capacity(params.n_trees);
        for _ in 0..params.n_trees {
            let idx: Vec<usize> = (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect();
            trees.push(grow_gini(x, y, idx, params.max_depth, max_features, &mut rng, &mut imp));
        }
        Ok(Self {
            trees,
            importances: normalize(imp),
        })
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Total split gain per column, summing to 1 (or all zero).
    pub importances: Vec<f64>,
}

impl GradientBoosting {
    /// Logistic loss; the base score is the training prior log-odds.
    pub fn fit(x: &[Vec<f64>], y: &[bool], params: BoostingParams) -> Result<Self, ModelError> {
        let d = check(x, y)?;
        let n = x.len() as f64;
        let pos = y.iter().filter(|v| **v).count() as f64;
        let prior = (pos / n).clamp(1e-6, 1.0 - 1e-6);
        let base_score = (prior / (1.0 - prior)).ln();
        let mut margin = vec![base_score; x.len()];
        let mut imp = vec![0.0; d];
        let mut trees = Vec::with_capacity(params.n_rounds);
        let tree_params = NewtonTreeParams {
            max_depth: params.max_depth,
            lambda: params.lambda,
            min_child_weight: params.min_child_weight,
            shrinkage: params.learning_rate,
        };
        for _ in 0..params.n_rounds {
            let p: Vec<f64> = margin.iter().map(|m| sigmoid(*m)).collect();
            let g: Vec<f64> = p.iter().zip(y).map(|(p, y)| p - if *y { 1.0 } else { 0.0 }).collect();
            let h: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
            let tree = grow_newton(x, &g, &h, tree_params, &mut imp);
            for (m, row) in margin.iter_mut().zip(x) {
                *m += tree.predict(row);
            }
            trees.push(tree);
        }
        Ok(Self {
            base_score,
            trees,
            importances: normalize(imp),
        })
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}
