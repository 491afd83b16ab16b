//! Ranking and threshold metrics for binary outcomes.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::domain::MetricKind;
use crate::scalar::Real;

/// Threshold used for hard predictions.
pub const DECISION_THRESHOLD: f64 = 0.5;

fn counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|l| **l).count();
    (pos, labels.len() - pos)
}

fn check_len<T>(scores: &[T], labels: &[bool]) -> Result<(), ModelError> {
    if scores.len() != labels.len() {
        return Err(ModelError::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// P(score⁺ > score⁻) + ½·P(score⁺ = score⁻) via mid-ranks.
pub fn roc_auc<T: Real>(scores: &[T], labels: &[bool]) -> Result<T, ModelError> {
    check_len(scores, labels)?;
    let (pos, neg) = counts(labels);
    if pos == 0 || neg == 0 {
        return Err(ModelError::UndefinedMetric("roc_auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // Rank sums are kept doubled so ties stay in integers.
    let mut doubled_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share the mid-rank (i+j+2)/2.
        let doubled_mid = (i + j + 2) as u64;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        doubled_rank_sum += doubled_mid * pos_in_group;
        i = j + 1;
    }
    let p = pos as u64;
    // 2·(wins + ½·ties) = 2·R⁺ − P(P+1)
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(T::from_u64(doubled_u).expect("count fits") / (T::two() * T::from_usize_lossy(pos * neg)))
}

/// Average precision: Σ_n (R_n − R_{n−1})·P_n over descending score
/// thresholds, with tied scores forming one threshold.
pub fn pr_auc<T: Real>(scores: &[T], labels: &[bool]) -> Result<T, ModelError> {
    check_len(scores, labels)?;
    let (pos, _) = counts(labels);
    if pos == 0 {
        return Err(ModelError::UndefinedMetric("pr_auc needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let total_pos = T::from_usize_lossy(pos);
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = T::zero();
    let mut ap = T::zero();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        tp += order[i..=j].iter().filter(|&&k| labels[k]).count();
        seen += j - i + 1;
        let recall = T::from_usize_lossy(tp) / total_pos;
        let precision = T::from_usize_lossy(tp) / T::from_usize_lossy(seen);
        ap = ap + (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(predictions: &[bool], labels: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }
}

/// 2PR/(P+R); zero when nothing is predicted positive or nothing is recalled.
pub fn f1<T: Real>(predictions: &[bool], labels: &[bool]) -> Result<T, ModelError> {
    check_len(predictions, labels)?;
    let c = Confusion::from_predictions(predictions, labels);
    if c.tp == 0 {
        return Ok(T::zero());
    }
    let tp = T::from_usize_lossy(c.tp);
    let precision = tp / T::from_usize_lossy(c.tp + c.fp);
    let recall = tp / T::from_usize_lossy(c.tp + c.fn_);
    Ok(T::two() * precision * recall / (precision + recall))
}

pub fn threshold<T: Real>(scores: &[T]) -> Vec<bool> {
    let t = T::lit(DECISION_THRESHOLD);
    scores.iter().map(|s| *s >= t).collect()
}

/// Score under one metric; F1 thresholds at 0.5.
pub fn evaluate<T: Real>(metric: MetricKind, scores: &[T], labels: &[bool]) -> Result<T, ModelError> {
    match metric {
        MetricKind::RocAuc => roc_auc(scores, labels),
        MetricKind::PrAuc => pr_auc(scores, labels),
        MetricKind::F1 => f1(&threshold(scores), labels),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T> {
    pub roc_auc: T,
    pub pr_auc: T,
    pub f1: T,
    pub confusion: Confusion,
}

impl<T: Real> MetricReport<T> {
    pub fn compute(scores: &[T], labels: &[bool]) -> Result<Self, ModelError> {
        let preds = threshold(scores);
        Ok(Self {
            roc_auc: roc_auc(scores, labels)?,
            pr_auc: pr_auc(scores, labels)?,
            f1: f1(&preds, labels)?,
            confusion: Confusion::from_predictions(&preds, labels),
        })
    }

    pub fn get(&self, metric: MetricKind) -> T {
        match metric {
            MetricKind::RocAuc => self.roc_auc,
            MetricKind::PrAuc => self.pr_auc,
            MetricKind::F1 => self.f1,
        }
    }
}
