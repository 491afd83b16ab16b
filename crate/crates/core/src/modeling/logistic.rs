//! L2-regularised logistic regression fitted by damped Newton steps.
//!
//! Objective: Σ log-loss + (λ/2)·‖w‖², intercept unpenalised.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::scalar::{sigmoid, softplus, Real};

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression<T> {
    pub weights: Vec<T>,
    pub intercept: T,
    pub lambda: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Solve `a·x = b` for symmetric positive-definite `a` by Cholesky.
fn solve_spd<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d = d - a[j][k] * a[j][k];
        }
        if !(d > T::zero()) {
            return None;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s = s - a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - a[i][k] * b[k];
        }
        b[i] = s / a[i][i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s = s - a[k][i] * b[k];
        }
        b[i] = s / a[i][i];
    }
    Some(b)
}

/// Parameters are laid out as `[w_0 .. w_{d-1}, b]`.
fn objective<T: Real>(x: &[Vec<T>], y: &[bool], theta: &[T], lambda: T) -> T {
    let d = theta.len() - 1;
    let mut loss = T::zero();
    for (row, &yi) in x.iter().zip(y) {
        let z = linear(row, &theta[..d], theta[d]);
        loss = loss + softplus(z) - if yi { z } else { T::zero() };
    }
    let reg: T = theta[..d].iter().map(|w| *w * *w).sum();
    loss + T::half() * lambda * reg
}

fn linear<T: Real>(row: &[T], w: &[T], b: T) -> T {
    row.iter().zip(w).fold(b, |acc, (x, w)| acc + *x * *w)
}

impl<T: Real> LogisticRegression<T> {
    pub fn fit(x: &[Vec<T>], y: &[bool], lambda: T) -> Result<Self, ModelError> {
        Self::fit_with(x, y, lambda, T::lit(DEFAULT_TOLERANCE), DEFAULT_MAX_ITER)
    }

    /// Newton iterations with backtracking until ‖∇‖₂ < `tol`.
    pub fn fit_with(x: &[Vec<T>], y: &[bool], lambda: T, tol: T, max_iter: usize) -> Result<Self, ModelError> {
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
        let p = d + 1;
        let mut theta = vec![T::zero(); p];
        let mut f = objective(x, y, &theta, lambda);
        let mut iterations = 0;
        let mut converged = false;

        while iterations < max_iter {
            let mut grad = vec![T::zero(); p];
            let mut hess = vec![vec![T::zero(); p]; p];
            for (row, &yi) in x.iter().zip(y) {
                let mu = sigmoid(linear(row, &theta[..d], theta[d]));
                let r = mu - if yi { T::one() } else { T::zero() };
                let s = mu * (T::one() - mu);
                for j in 0..p {
                    let xj = if j < d { row[j] } else { T::one() };
                    grad[j] = grad[j] + r * xj;
                    if s > T::zero() {
                        for k in 0..=j {
                            let xk = if k < d { row[k] } else { T::one() };
                            hess[j][k] = hess[j][k] + s * xj * xk;
                        }
                    }
                }
            }
            for j in 0..d {
                grad[j] = grad[j] + lambda * theta[j];
                hess[j][j] = hess[j][j] + lambda;
            }
            for j in 0..p {
                for k in 0..j {
                    hess[k][j] = hess[j][k];
                }
            }
            let gnorm = grad.iter().map(|g| *g * *g).sum::<T>().sqrt();
            if gnorm < tol {
                converged = true;
                break;
            }
            iterations += 1;

            // A tiny ridge keeps the intercept row solvable when all
            // curvature has vanished.
            let step = solve_spd(hess.clone(), grad.clone()).or_else(|| {
                let mut h = hess;
                for (j, row) in h.iter_mut().enumerate() {
                    row[j] = row[j] + T::lit(1e-8);
                }
                solve_spd(h, grad.clone())
            });
            let step = step.unwrap_or_else(|| grad.clone());
            let slope: T = grad.iter().zip(&step).map(|(g, s)| *g * *s).sum();

            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<T> = theta.iter().zip(&step).map(|(a, s)| *a - t * *s).collect();
                let fc = objective(x, y, &cand, lambda);
                if fc <= f - T::lit(1e-4) * t * slope {
                    theta = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                t = t * T::half();
            }
            if !accepted {
                // No representable descent left at this precision.
                break;
            }
        }
        Ok(Self {
            weights: theta[..d].to_vec(),
            intercept: theta[d],
            lambda,
            iterations,
            converged,
        })
    }

    pub fn decision(&self, row: &[T]) -> T {
        linear(row, &self.weights, self.intercept)
    }

    pub fn predict_proba(&self, row: &[T]) -> T {
        sigmoid(self.decision(row))
    }

    pub fn objective(&self, x: &[Vec<T>], y: &[bool]) -> T {
        let mut theta = self.weights.clone();
        theta.push(self.intercept);
        objective(x, y, &theta, self.lambda)
    }
}
