//! Brute-force reference implementations shared by property and acceptance
//! tests. Each one is written from the definition, not from the library.
#![allow(dead_code)]

use autoct_core::search::SearchTree;

/// P(s+ > s-) + ½·P(s+ = s-) by enumerating every positive/negative pair.
pub fn roc_pairwise(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Average precision by sweeping each distinct score as a threshold
/// (predict positive when score >= t), highest first.
pub fn ap_sweep(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let total_pos = labels.iter().filter(|l| **l).count();
    if total_pos == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let predicted: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = predicted.iter().filter(|&&i| labels[i]).count();
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / predicted.len() as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

/// F1 from confusion counts: 2TP / (2TP + FP + FN), zero without true positives.
pub fn f1_counts(predictions: &[bool], labels: &[bool]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Exact Shapley values of `value` over `m` players by enumerating all
/// coalitions, given as bit masks.
pub fn shapley_enumerate(m: usize, value: impl Fn(u32) -> f64) -> Vec<f64> {
    let mut phi = vec![0.0; m];
    for (i, slot) in phi.iter_mut().enumerate() {
        for s in 0u32..(1 << m) {
            if s & (1 << i) != 0 {
                continue;
            }
            let size = s.count_ones() as usize;
            let weight = factorial(size) * factorial(m - size - 1) / factorial(m);
            *slot += weight * (value(s | (1 << i)) - value(s));
        }
    }
    phi
}

/// Interventional value of a linear logit: features in the coalition take
/// their value from `x`, the rest from `background`.
pub fn linear_coalition_value(w: &[f64], b: f64, x: &[f64], background: &[f64], mask: u32) -> f64 {
    b + (0..w.len())
        .map(|j| w[j] * if mask & (1 << j) != 0 { x[j] } else { background[j] })
        .sum::<f64>()
}

/// Summed log-loss with an L2 penalty ½·λ·w² on the slope only.
pub fn logistic_loss_1d(w: f64, b: f64, x: &[f64], y: &[bool], lambda: f64) -> f64 {
    let mut loss = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let z = w * xi + b;
        // ln(1 + e^z) − y·z, stable for large |z|.
        let softplus = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        loss += softplus - if yi { z } else { 0.0 };
    }
    loss + 0.5 * lambda * w * w
}

/// Minimize over (w, b) in [−10, 10]² on a 0.01 grid, then on a 1e-4 grid
/// around the coarse winner. Returns (w, b, loss).
pub fn grid_minimize_1d(x: &[f64], y: &[bool], lambda: f64) -> (f64, f64, f64) {
    let mut best = (0.0, 0.0, f64::INFINITY);
    let scan = |w0: f64, b0: f64, half: i64, step: f64, best: &mut (f64, f64, f64)| {
        for i in -half..=half {
            let w = w0 + i as f64 * step;
            for j in -half..=half {
                let b = b0 + j as f64 * step;
                let l = logistic_loss_1d(w, b, x, y, lambda);
                if l < best.2 {
                    *best = (w, b, l);
                }
            }
        }
    };
    scan(0.0, 0.0, 1000, 0.01, &mut best);
    let (w0, b0) = (best.0, best.1);
    scan(w0, b0, 200, 1e-4, &mut best);
    best
}

/// The bookkeeping every search tree must satisfy: each node's visit count
/// is the size of its subtree, its q the sum of the subtree's scores, and
/// parent/child/depth links agree.
pub fn check_tree(tree: &SearchTree, max_children: usize) -> Result<(), String> {
    let nodes = &tree.nodes;
    let mut subtree_n = vec![0u64; nodes.len()];
    let mut subtree_q = vec![0.0f64; nodes.len()];
    for node in nodes {
        let mut cur = Some(node.id);
        while let Some(id) = cur {
            subtree_n[id] += 1;
            subtree_q[id] += node.score;
            cur = nodes[id].parent;
        }
    }
    for node in nodes {
        if node.n != subtree_n[node.id] {
            return Err(format!(
                "node {}: n = {}, subtree has {}",
                node.id, node.n, subtree_n[node.id]
            ));
        }
        if (node.q - subtree_q[node.id]).abs() > 1e-12 {
            return Err(format!(
                "node {}: q = {}, subtree sum {}",
                node.id, node.q, subtree_q[node.id]
            ));
        }
        if node.children.len() > max_children {
            return Err(format!("node {} has {} children", node.id, node.children.len()));
        }
        for &c in &node.children {
            if nodes[c].parent != Some(node.id) || nodes[c].depth != node.depth + 1 {
                return Err(format!("node {c} is not linked under node {}", node.id));
            }
        }
    }
    let best = nodes.iter().map(|n| n.score).fold(f64::NEG_INFINITY, f64::max);
    if tree.best.score != best || nodes[tree.best.node].score != best {
        return Err(format!("best {:?} but maximum score is {best}", tree.best));
    }
    Ok(())
}
