//! Empirical-distribution utilities: quantiles, Kolmogorov-Smirnov
//! statistics, and order-statistic bootstrap standard errors.

use crate::rng::substream;
use rand::Rng;

/// Type-7 (linear interpolation) sample quantile of an ascending-sorted slice.
///
/// This is the default estimator of R and NumPy: with `h = (n-1)p`, the
/// result interpolates between the floor(h)-th and next order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&p), "p must be in [0,1]");
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let w = h - lo as f64;
    sorted[lo] + w * (sorted[lo + 1] - sorted[lo])
}

/// Sort a sample and take its type-7 quantile.
pub fn quantile(sample: &[f64], p: f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    quantile_sorted(&s, p)
}

/// Bootstrap standard error of the `p`-quantile of `sorted`.
///
/// Resampling a quantile only moves which order statistic is selected, so
/// instead of materialising `b` resamples we draw the bootstrap index
/// `Binomial(n, p)` directly and read the corresponding order statistic.
pub fn bootstrap_quantile_stderr(sorted: &[f64], p: f64, resamples: u32, seed: u64) -> f64 {
    let n = sorted.len();
    let mut rng = substream(seed, 0xb007);
    let mut vals = Vec::with_capacity(resamples as usize);
    for _ in 0..resamples {
        // Binomial(n, p) via normal approximation is not exact enough at
        // extreme p; count Bernoulli successes in O(n) would be too slow, so
        // use the inverse-transform on a normal with continuity correction
        // only when n*p*(1-p) is large, falling back to explicit counting.
        let mean = n as f64 * p;
        let var = n as f64 * p * (1.0 - p);
        let idx = if var > 100.0 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            (mean + z * var.sqrt()).round()
        } else {
            let mut c = 0u64;
            for _ in 0..n {
                if rng.gen::<f64>() < p {
                    c += 1;
                }
            }
            c as f64
        };
        let idx = idx.clamp(0.0, (n - 1) as f64) as usize;
        vals.push(sorted[idx]);
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
}

/// One-sample Kolmogorov-Smirnov statistic against a CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((f - i as f64 / n).abs());
    }
    d
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|u, v| u.partial_cmp(v).expect("NaN in sample"));
    y.sort_by(|u, v| u.partial_cmp(v).expect("NaN in sample"));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        if x[i] <= y[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Asymptotic critical value for a one-sample KS test at significance `alpha`.
pub fn ks_one_sample_threshold(n: usize, alpha: f64) -> f64 {
    let c = (-((alpha / 2.0).ln()) / 2.0).sqrt();
    c / (n as f64).sqrt()
}

/// Asymptotic critical value for a two-sample KS test at significance `alpha`.
pub fn ks_two_sample_threshold(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-((alpha / 2.0).ln()) / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Number of sample values `>= x`.
pub fn exceedances_sorted(sorted: &[f64], x: f64) -> usize {
    sorted.len() - sorted.partition_point(|v| *v < x)
}

/// Log empirical tail `ln P_hat(X >= x)` and its delta-method standard error
/// `sqrt((1-p)/(n p))`. Returns `None` when nothing exceeds `x`.
pub fn log_tail_sorted(sorted: &[f64], x: f64) -> Option<(f64, f64)> {
    let c = exceedances_sorted(sorted, x);
    if c == 0 {
        return None;
    }
    let n = sorted.len() as f64;
    let p = c as f64 / n;
    Some((p.ln(), ((1.0 - p) / (n * p)).sqrt()))
}
