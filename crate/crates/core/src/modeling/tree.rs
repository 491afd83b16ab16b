//! Axis-aligned binary trees: gini trees for the forest, second-order
//! regression trees for boosting.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

/// Scan one feature; `score_of(prefix_stats, suffix_stats)` returns the
/// improvement (or None when the split is not allowed).
fn scan<S: Copy + Default>(
    x: &[Vec<f64>],
    idx: &[usize],
    feature: usize,
    stat: impl Fn(usize) -> S,
    add: impl Fn(S, S) -> S,
    sub: impl Fn(S, S) -> S,
    score_of: impl Fn(S, S) -> Option<f64>,
    best: &mut Option<Split>,
) {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
    let total = order.iter().fold(S::default(), |acc, &i| add(acc, stat(i)));
    let mut left = S::default();
    let mut best_here: Option<(usize, f64)> = None;
    for k in 0..order.len() - 1 {
        left = add(left, stat(order[k]));
        let (a, b) = (x[order[k]][feature], x[order[k + 1]][feature]);
        if a == b {
            continue;
        }
        if let Some(s) = score_of(left, sub(total, left)) {
            if best_here.is_none_or(|(_, bs)| s > bs) {
                best_here = Some((k, s));
            }
        }
    }
    let Some((k, s)) = best_here else { return };
    if best.as_ref().is_some_and(|b| b.score >= s) {
        return;
    }
    let (a, b) = (x[order[k]][feature], x[order[k + 1]][feature]);
    let mut threshold = a + (b - a) / 2.0;
    if threshold >= b {
        threshold = a;
    }
    *best = Some(Split {
        feature,
        threshold,
        score: s,
        left: order[..=k].to_vec(),
        right: order[k + 1..].to_vec(),
    });
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

/// Gini tree over (possibly repeated) row indices. Leaves hold the
/// positive fraction. Weighted impurity decreases are added to
/// `importances`.
pub fn grow_gini<R: Rng>(
    x: &[Vec<f64>],
    y: &[bool],
    idx: Vec<usize>,
    max_depth: usize,
    max_features: usize,
    rng: &mut R,
    importances: &mut [f64],
) -> Tree {
    let mut tree = Tree { nodes: Vec::new() };
    let n_features = x.first().map_or(0, Vec::len);
    let total = idx.len() as f64;
    grow_gini_node(
        x,
        y,
        idx,
        0,
        max_depth,
        max_features.min(n_features),
        n_features,
        total,
        rng,
        importances,
        &mut tree,
    );
    tree
}

#[allow(clippy::too_many_arguments)]
fn grow_gini_node<R: Rng>(
    x: &[Vec<f64>],
    y: &[bool],
    idx: Vec<usize>,
    depth: usize,
    max_depth: usize,
    max_features: usize,
    n_features: usize,
    total: f64,
    rng: &mut R,
    importances: &mut [f64],
    tree: &mut Tree,
) -> usize {
    let id = tree.nodes.len();
    let n = idx.len() as f64;
    let pos = idx.iter().filter(|&&i| y[i]).count() as f64;
    tree.nodes.push(Node::Leaf {
        value: if n > 0.0 { pos / n } else { 0.0 },
    });
    let impurity = gini(pos, n);
    if depth >= max_depth || idx.len() < 2 || impurity == 0.0 || max_features == 0 {
        return id;
    }
    let mut feats: Vec<usize> = sample(rng, n_features, max_features).into_vec();
    feats.sort_unstable();
    let mut best = None;
    for f in feats {
        scan(
            x,
            &idx,
            f,
            |i| (1.0, if y[i] { 1.0 } else { 0.0 }),
            |a: (f64, f64), b| (a.0 + b.0, a.1 + b.1),
            |a, b| (a.0 - b.0, a.1 - b.1),
            |l, r| {
                let dec = n * impurity - l.0 * gini(l.1, l.0) - r.0 * gini(r.1, r.0);
                (dec > 1e-12).then_some(dec)
            },
            &mut best,
        );
    }
    let Some(split) = best else { return id };
    importances[split.feature] += split.score / total;
    let left = grow_gini_node(
        x,
        y,
        split.left,
        depth + 1,
        max_depth,
        max_features,
        n_features,
        total,
        rng,
        importances,
        tree,
    );
    let right = grow_gini_node(
        x,
        y,
        split.right,
        depth + 1,
        max_depth,
        max_features,
        n_features,
        total,
        rng,
        importances,
        tree,
    );
    tree.nodes[id] = Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    id
}

/// Parameters of a second-order regression tree.
#[derive(Debug, Clone, Copy)]
pub struct NewtonTreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    /// Multiplier applied to every leaf value.
    pub shrinkage: f64,
}

/// Regression tree on gradients `g` and hessians `h`; leaves hold
/// `-shrinkage·G/(H+λ)`. Split gains are added to `importances`.
pub fn grow_newton(x: &[Vec<f64>], g: &[f64], h: &[f64], params: NewtonTreeParams, importances: &mut [f64]) -> Tree {
    let mut tree = Tree { nodes: Vec::new() };
    let idx: Vec<usize> = (0..x.len()).collect();
    grow_newton_node(x, g, h, idx, 0, params, importances, &mut tree);
    tree
}

#[allow(clippy::too_many_arguments)]
fn grow_newton_node(
    x: &[Vec<f64>],
    g: &[f64],
    h: &[f64],
    idx: Vec<usize>,
    depth: usize,
    p: NewtonTreeParams,
    importances: &mut [f64],
    tree: &mut Tree,
) -> usize {
    let id = tree.nodes.len();
    let gs: f64 = idx.iter().map(|&i| g[i]).sum();
    let hs: f64 = idx.iter().map(|&i| h[i]).sum();
    tree.nodes.push(Node::Leaf {
        value: -p.shrinkage * gs / (hs + p.lambda),
    });
    let n_features = x.first().map_or(0, Vec::len);
    if depth >= p.max_depth || idx.len() < 2 {
        return id;
    }
    let parent = gs * gs / (hs + p.lambda);
    let mut best = None;
    for f in 0..n_features {
        scan(
            x,
            &idx,
            f,
            |i| (g[i], h[i]),
            |a: (f64, f64), b| (a.0 + b.0, a.1 + b.1),
            |a, b| (a.0 - b.0, a.1 - b.1),
            |l, r| {
                if l.1 < p.min_child_weight || r.1 < p.min_child_weight {
                    return None;
                }
                let gain = 0.5 * (l.0 * l.0 / (l.1 + p.lambda) + r.0 * r.0 / (r.1 + p.lambda) - parent);
                (gain > 1e-12).then_some(gain)
            },
            &mut best,
        );
    }
    let Some(split) = best else { return id };
    importances[split.feature] += split.score;
    let left = grow_newton_node(x, g, h, split.left, depth + 1, p, importances, tree);
    let right = grow_newton_node(x, g, h, split.right, depth + 1, p, importances, tree);
    tree.nodes[id] = Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    id
}
