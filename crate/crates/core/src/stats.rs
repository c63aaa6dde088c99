//! Small statistics kit for campaign reporting: Wilson score intervals for
//! fractions and seeded percentile-bootstrap intervals for means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Fixed resample seed so reports are reproducible run to run.
pub const BOOTSTRAP_SEED: u64 = 0x5EED_B007;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// 95% Wilson score interval for a binomial fraction.
pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_985;
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// 95% percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_mean_ci(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(BOOTSTRAP_SEED);
    let mut means = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let sum: f64 =
            (0..values.len()).map(|_| values[rng.gen_range(0..values.len())]).sum();
        means.push(sum / values.len() as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = means[(BOOTSTRAP_RESAMPLES as f64 * 0.025) as usize];
    let hi = means[(BOOTSTRAP_RESAMPLES as f64 * 0.975) as usize - 1];
    (lo, hi)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_point_estimate() {
        let (lo, hi) = wilson_interval(284, 1000);
        assert!(lo < 0.284 && 0.284 < hi);
        assert!(hi - lo < 0.06);
    }

    #[test]
    fn wilson_edge_cases() {
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
        let (lo, _) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        let (_, hi) = wilson_interval(100, 100);
        assert!(hi > 1.0 - 1e-12);
    }

    #[test]
    fn bootstrap_is_reproducible_and_covers_mean() {
        let values: Vec<f64> = (0..200).map(|i| (i % 7) as f64).collect();
        let a = bootstrap_mean_ci(&values);
        let b = bootstrap_mean_ci(&values);
        assert_eq!(a, b);
        let m = mean(&values);
        assert!(a.0 < m && m < a.1);
    }

    #[test]
    fn median_both_parities() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[]), 0.0);
    }
}
