//! Okapi BM25 term weighting.
//!
//! score(q, d) = Σ_t idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

/// Smoothed IDF; positive for every `df <= n`.
pub fn bm25_idf<T: Real>(n: usize, df: usize) -> T {
    let n = T::from_usize_lossy(n);
    let df = T::from_usize_lossy(df);
    (T::one() + (n - df + T::half()) / (df + T::half())).ln()
}

/// Contribution of one query term to one document.
pub fn bm25_term_score<T: Real>(tf: usize, doc_len: usize, avgdl: T, idf: T, params: Bm25Params) -> T {
    if tf == 0 {
        return T::zero();
    }
    let tf = T::from_usize_lossy(tf);
    let k1 = T::lit(params.k1);
    let b = T::lit(params.b);
    let len_norm = if avgdl > T::zero() {
        T::from_usize_lossy(doc_len) / avgdl
    } else {
        T::one()
    };
    idf * tf * (k1 + T::one()) / (tf + k1 * (T::one() - b + b * len_norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_document_hand_value() {
        // A = "aspirin trial aspirin" (3 tokens), B = "placebo trial" (2 tokens).
        // N = 2, df(aspirin) = 1, avgdl = 2.5.
        let idf: f64 = bm25_idf(2, 1);
        assert!((idf - (1.0f64 + 1.5 / 1.5).ln()).abs() < 1e-15);
        let s = bm25_term_score(2, 3, 2.5, idf, Bm25Params::default());
        let want = 2f64.ln() * (2.0 * 2.5) / (2.0 + 1.5 * (0.25 + 0.75 * 3.0 / 2.5));
        assert!((s - want).abs() < 1e-12, "{s} vs {want}");
    }

    #[test]
    fn absent_term_scores_zero() {
        assert_eq!(bm25_term_score::<f64>(0, 10, 5.0, 3.0, Bm25Params::default()), 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let idf: f32 = bm25_idf(10, 3);
        let s = bm25_term_score(1, 4, 4.0f32, idf, Bm25Params::default());
        assert!(s > 0.0 && s.is_finite());
    }
}
