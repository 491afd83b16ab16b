use std::collections::BTreeMap;

use crate::scalar::Real;

/// Rank offset of Reciprocal Rank Fusion.
pub const RRF_K: usize = 60;

/// Fuse ranked id lists: fused(d) = Σ_lists 1/(k + rank_d), ranks 1-based.
///
/// Output is ordered by descending fused score, ties by ascending id.
/// Ids absent from every list do not appear.
pub fn reciprocal_rank_fusion<T: Real>(lists: &[Vec<String>], k: usize) -> Vec<(String, T)> {
    let mut fused: BTreeMap<&str, T> = BTreeMap::new();
    for list in lists {
        for (i, id) in list.iter().enumerate() {
            let contrib = T::one() / T::from_usize_lossy(k + i + 1);
            let slot = fused.entry(id.as_str()).or_insert_with(T::zero);
            *slot = *slot + contrib;
        }
    }
    let mut out: Vec<(String, T)> = fused.into_iter().map(|(id, s)| (id.to_string(), s)).collect();
    out.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn top_in_both_lists() {
        let out: Vec<(String, f64)> = reciprocal_rank_fusion(&[ids(&["a", "b"]), ids(&["a", "c"])], RRF_K);
        assert_eq!(out[0].0, "a");
        assert_eq!(out[0].1, 2.0 / 61.0);
        assert!((out[0].1 - 0.032787).abs() < 1e-6);
        // b and c tie at 1/62; ascending id breaks the tie.
        assert_eq!(out[1].0, "b");
        assert_eq!(out[2].0, "c");
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn empty_lists() {
        let out: Vec<(String, f64)> = reciprocal_rank_fusion(&[vec![], vec![]], RRF_K);
        assert!(out.is_empty());
    }
}
