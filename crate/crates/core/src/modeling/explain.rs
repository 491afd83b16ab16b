//! Per-trial attributions and permutation importance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bundle::Model;
use super::metrics::evaluate;
use super::ModelError;
use crate::domain::MetricKind;
use crate::scalar::Real;

pub const DEFAULT_PERMUTATION_REPEATS: usize = 5;

/// Exact Shapley values of a linear logit under feature independence:
/// φ_j = w_j·(x_j − μ_j). They sum to `f(x) − f(μ)` on the logit scale.
pub fn linear_shap<T: Real>(weights: &[T], x: &[T], background: &[T]) -> Result<Vec<T>, ModelError> {
    if weights.len() != x.len() || x.len() != background.len() {
        return Err(ModelError::Shape(format!(
            "weights {}, row {}, background {}",
            weights.len(),
            x.len(),
            background.len()
        )));
    }
    Ok(weights
        .iter()
        .zip(x)
        .zip(background)
        .map(|((w, xi), mu)| *w * (*xi - *mu))
        .collect())
}

/// Mean metric drop when one column is shuffled, per column.
pub fn permutation_importance(
    model: &Model,
    rows: &[Vec<f64>],
    labels: &[bool],
    metric: MetricKind,
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>, ModelError> {
    let base = evaluate(metric, &model.predict_all(rows), labels)?;
    let d = rows.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(d);
    for j in 0..d {
        let mut total = 0.0;
        for _ in 0..repeats {
            let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            col.shuffle(&mut rng);
            let shuffled: Vec<Vec<f64>> = rows
                .iter()
                .zip(&col)
                .map(|(r, v)| {
                    let mut r = r.clone();
                    r[j] = *v;
                    r
                })
                .collect();
            total += base - evaluate(metric, &model.predict_all(&shuffled), labels)?;
        }
        out.push(if repeats > 0 { total / repeats as f64 } else { 0.0 });
    }
    Ok(out)
}
