use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::uct::uct;
use super::SearchError;
use crate::domain::{ProposalAction, Suggestion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub id: usize,
    pub parent: Option<usize>,
    /// Edge from the parent; `None` at the root.
    pub action: Option<ProposalAction>,
    pub plan_set_hash: String,
    /// Sum of rewards backpropagated through this node.
    pub q: f64,
    pub n: u64,
    /// This node's own validation score.
    pub score: f64,
    pub depth: usize,
    pub children: Vec<usize>,
    /// Number of suggestions not yet expanded.
    pub pending: usize,
    pub pending_suggestions: VecDeque<Suggestion>,
}

impl SearchNode {
    pub fn value(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.q / self.n as f64
        }
    }

    fn can_expand(&self, max_depth: usize) -> bool {
        !self.pending_suggestions.is_empty() && self.depth < max_depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Best {
    pub node: usize,
    pub score: f64,
}

/// Nodes are indexed by id; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
    pub best: Best,
}

impl SearchTree {
    pub const ROOT: usize = 0;

    pub fn new(plan_set_hash: impl Into<String>, score: f64, suggestions: Vec<Suggestion>) -> Self {
        let root = SearchNode {
            id: Self::ROOT,
            parent: None,
            action: None,
            plan_set_hash: plan_set_hash.into(),
            q: 0.0,
            n: 0,
            score,
            depth: 0,
            children: Vec::new(),
            pending: suggestions.len(),
            pending_suggestions: suggestions.into(),
        };
        Self {
            nodes: vec![root],
            best: Best {
                node: Self::ROOT,
                score,
            },
        }
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[Self::ROOT]
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Take the next pending suggestion of `id`.
    pub fn pop_suggestion(&mut self, id: usize, max_depth: usize) -> Result<Suggestion, SearchError> {
        let node = &mut self.nodes[id];
        if node.depth >= max_depth {
            return Err(SearchError::DepthExceeded {
                node: id,
                depth: node.depth,
            });
        }
        let s = node
            .pending_suggestions
            .pop_front()
            .ok_or(SearchError::NoPendingSuggestion(id))?;
        node.pending = node.pending_suggestions.len();
        Ok(s)
    }

    /// Attach a simulated child with `q = n = 0`; callers backpropagate.
    pub fn add_child(
        &mut self,
        parent: usize,
        action: ProposalAction,
        plan_set_hash: impl Into<String>,
        score: f64,
        suggestions: Vec<Suggestion>,
    ) -> usize {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(SearchNode {
            id,
            parent: Some(parent),
            action: Some(action),
            plan_set_hash: plan_set_hash.into(),
            q: 0.0,
            n: 0,
            score,
            depth,
            children: Vec::new(),
            pending: suggestions.len(),
            pending_suggestions: suggestions.into(),
        });
        self.nodes[parent].children.push(id);
        if score > self.best.score {
            self.best = Best { node: id, score };
        }
        id
    }

    /// `q += reward`, `n += 1` on `id` and every ancestor.
    pub fn backpropagate(&mut self, id: usize, reward: f64) {
        let mut cur = Some(id);
        while let Some(i) = cur {
            let node = &mut self.nodes[i];
            node.q += reward;
            node.n += 1;
            cur = node.parent;
        }
    }

    /// Whether any node in the subtree of `id` can still be expanded.
    fn subtree_expandable(&self, id: usize, max_depth: usize, memo: &mut [Option<bool>]) -> bool {
        if let Some(v) = memo[id] {
            return v;
        }
        let node = &self.nodes[id];
        let v = node.can_expand(max_depth)
            || node
                .children
                .iter()
                .any(|&c| self.subtree_expandable(c, max_depth, memo));
        memo[id] = Some(v);
        v
    }

    /// UCT descent from the root to the first node with pending
    /// suggestions. Children whose subtrees are fully expanded are skipped;
    /// ties go to the lowest id.
    pub fn select(&self, alpha: f64, max_depth: usize) -> Result<Vec<usize>, SearchError> {
        let mut memo = vec![None; self.nodes.len()];
        if !self.subtree_expandable(Self::ROOT, max_depth, &mut memo) {
            return Err(SearchError::Exhausted);
        }
        let mut path = vec![Self::ROOT];
        let mut cur = Self::ROOT;
        loop {
            let node = &self.nodes[cur];
            if node.can_expand(max_depth) {
                return Ok(path);
            }
            let mut best: Option<(usize, f64)> = None;
            for &c in &node.children {
                if !self.subtree_expandable(c, max_depth, &mut memo) {
                    continue;
                }
                let child = &self.nodes[c];
                let u = uct(child.q, child.n, node.n, alpha);
                if best.is_none_or(|(_, b)| u > b) {
                    best = Some((c, u));
                }
            }
            let (next, _) = best.expect("expandable subtree has an expandable child");
            path.push(next);
            cur = next;
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SearchError> {
        let tree: SearchTree = serde_json::from_str(text).map_err(|e| SearchError::Corrupt(e.to_string()))?;
        tree.check()?;
        Ok(tree)
    }

    fn check(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::Corrupt(m));
        if self.nodes.is_empty() || self.nodes[0].parent.is_some() {
            return bad("missing root".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return bad(format!("node at index {i} has id {}", n.id));
            }
            if n.pending != n.pending_suggestions.len() {
                return bad(format!("node {i} pending count mismatch"));
            }
            if let Some(p) = n.parent {
                if p >= i || !self.nodes[p].children.contains(&i) || n.depth != self.nodes[p].depth + 1 {
                    return bad(format!("node {i} has an inconsistent parent link"));
                }
            }
        }
        if self.best.node >= self.nodes.len() {
            return bad("best node out of range".into());
        }
        Ok(())
    }
}
