use crate::scalar::Real;

/// Upper confidence bound of a child: `q/n + α·sqrt(ln(parent_n)/n)`.
/// Unvisited children (`n = 0`) get the largest finite value so they are
/// tried before any visited sibling.
pub fn uct<T: Real>(q: T, n: u64, parent_n: u64, alpha: T) -> T {
    if n == 0 {
        return T::max_value();
    }
    let n_t = T::from_u64(n).expect("visit count representable");
    let p_t = T::from_u64(parent_n.max(1)).expect("visit count representable");
    q / n_t + alpha * (p_t.ln() / n_t).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(uct(0.0, 1, 1, 1.0), 0.0);
        let v = uct(2.0, 4, 16, 1.0f64);
        assert!((v - 1.332_554_611_157_697_8).abs() < 1e-12, "{v}");
        assert_eq!(uct(5.0, 0, 3, 1.0f64), f64::MAX);
        assert_eq!(uct(0.9, 3, 10, 0.0f64), 0.3);
        assert_eq!(uct(0.0f32, 0, 1, 1.0), f32::MAX);
    }
}
