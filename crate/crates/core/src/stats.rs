//! Small summary statistics used for posterior summaries and diagnostics.

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Linear-interpolation quantile (type 7).
pub fn quantile(x: &[f64], p: f64) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&s, p)
}

pub fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

fn autocovariance(x: &[f64], lag: usize, m: f64) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size from Geyer's initial monotone sequence.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let c0 = autocovariance(x, 0, m);
    if c0 <= 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| autocovariance(x, lag, m) / c0;
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        lag += 2;
    }
    let tau = (-1.0 + 2.0 * sum).max(1e-12);
    n as f64 / tau
}

/// Monte Carlo standard error of the mean via non-overlapping batch means.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let b = batches.max(2);
    let size = x.len() / b;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..b).map(|i| mean(&x[i * size..(i + 1) * size])).collect();
    (variance(&means) / b as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_summaries() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((variance(&x) - 5.0 / 3.0).abs() < 1e-14);
        assert_eq!(median(&x), 2.5);
        assert_eq!(quantile(&x, 0.0), 1.0);
        assert_eq!(quantile(&x, 1.0), 4.0);
    }

    #[test]
    fn ess_of_independent_draws_is_near_n() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let ess = effective_sample_size(&x);
        assert!(ess > 3000.0 && ess < 5000.0, "{ess}");
    }

    #[test]
    fn ess_of_sticky_chain_is_small() {
        let x: Vec<f64> = (0..1000).map(|i| ((i / 100) % 2) as f64).collect();
        assert!(effective_sample_size(&x) < 100.0);
    }
}
