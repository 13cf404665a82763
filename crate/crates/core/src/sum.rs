//! Fixed-order pairwise summation.

const BLOCK: usize = 64;

/// Pairwise (tree) sum. The split points depend only on the length, so the
/// result is reproducible regardless of how the terms were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(i)` for `i` in `0..n` without materializing when short.
pub fn pairwise_sum_by(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    if n <= BLOCK {
        let mut s = 0.0;
        for i in 0..n {
            s += f(i);
        }
        return s;
    }
    let v: Vec<f64> = (0..n).map(f).collect();
    pairwise_sum(&v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
        assert_eq!(pairwise_sum_by(1000, |i| (i + 1) as f64), 500500.0);
    }

    #[test]
    fn more_accurate_than_naive() {
        let xs = vec![0.1; 1 << 20];
        let exact = 0.1 * (1u64 << 20) as f64;
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - exact).abs() <= (naive - exact).abs());
        assert!((pairwise_sum(&xs) - exact).abs() < 1e-9);
    }
}
