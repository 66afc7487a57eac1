//! Order-independent reductions.

/// Pairwise (tree) summation: deterministic for a fixed input order and with
/// error growth `O(log n)` instead of `O(n)`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// `(mean x^p)^{1/p}`, with `p = ∞` meaning the maximum.
pub fn power_mean(xs: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return xs.iter().copied().fold(0.0, f64::max);
    }
    if p == 1.0 {
        return pairwise_mean(xs);
    }
    let pw: Vec<f64> = xs.iter().map(|x| x.powf(p)).collect();
    pairwise_mean(&pw).powf(1.0 / p)
}
