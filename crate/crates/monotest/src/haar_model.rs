//! Signals on `[0,1]`, the dyadic bandwidth/grid system, the local-average
//! functionals `theta_{h,t}` and their estimators.
//!
//! Bandwidths are `h = 2^-k` for levels `k = 1, 2, ...`; the grid at
//! bandwidth `h` is `G_h = {h, 3h, ..., 1-h}` with `n_h = 1/(2h) = 2^(k-1)`
//! points, so every window `[t-h, t+h]` lies inside `[0,1]` and distinct
//! windows at one level are disjoint.
//!
//! # Discretisation of the white-noise model
//!
//! The continuous model observes `Y(t) = f(t) + sigma n(t)`. On a grid of
//! `N = 2^J` midpoints we realise it as
//!
//! ```text
//! y_i = f((i + 0.5)/N) + sigma * sqrt(N) * eps_i,   eps_i iid N(0,1),
//! ```
//!
//! so a bin average over `N h` samples has noise variance `sigma^2 / h` and
//! the estimator `theta_hat` (difference of two independent bin means)
//! carries exactly the continuum noise scale `sigma_h = sigma sqrt(2/h)`.
//! Equivalently: with per-sample noise std `s`, the estimator std is
//! `s sqrt(2/(N h))`, and `s = sigma sqrt(N)` reproduces `sigma_h`.

use crate::rng::substream;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// Hard cap on materialised field depth (`2^(k-1)` entries at level `k`).
pub const MAX_MATERIALIZED_LEVEL: u32 = 26;

/// A (level, position) pair identifying bandwidth `h = 2^-level` and grid
/// point `t = (2*position + 1) * h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicIndex {
    level: u32,
    position: u64,
}

impl DyadicIndex {
    /// Construct an admissible index: `level >= 1`, `position < 2^(level-1)`.
    pub fn new(level: u32, position: u64) -> Result<Self> {
        if level == 0 {
            return Err(Error::domain("dyadic level must be >= 1 (h = 2^-k <= 1/2)"));
        }
        if level > 63 {
            return Err(Error::domain(format!("dyadic level {level} > 63 unsupported")));
        }
        let n_h = 1u64 << (level - 1);
        if position >= n_h {
            return Err(Error::domain(format!(
                "position {position} out of range at level {level} (n_h = {n_h})"
            )));
        }
        Ok(DyadicIndex { level, position })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    /// Bandwidth `h = 2^-level`.
    pub fn bandwidth(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    /// Grid point `t = (2j + 1) h`.
    pub fn t(&self) -> f64 {
        (2.0 * self.position as f64 + 1.0) * self.bandwidth()
    }

    /// Number of grid points at this level, `n_h = 2^(level-1)`.
    pub fn n_h(&self) -> u64 {
        1u64 << (self.level - 1)
    }
}

/// Points per level: `n_h = 2^(k-1)`.
pub fn n_at_level(level: u32) -> u64 {
    assert!(level >= 1 && level <= 63);
    1u64 << (level - 1)
}

/// Per-level noise scale `sigma_h = sigma sqrt(2/h) = sigma sqrt(2^(k+1))`.
pub fn sigma_at_level(sigma: f64, level: u32) -> f64 {
    sigma * (2.0f64.powi(level as i32 + 1)).sqrt()
}

// ---------------------------------------------------------------------------
// Adaptive Simpson quadrature (oracle-grade reference for the fast path)
// ---------------------------------------------------------------------------

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fm = f(0.5 * (a + b));
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    adaptive_step(&f, a, b, fa, fm, fb, whole, tol, 52)
}

/// The local-average functional
/// `theta_{h,t}(f) = (1/h) int_t^{t+h} f - (1/h) int_{t-h}^t f`,
/// evaluated by adaptive quadrature with absolute tolerance `1e-10`.
pub fn theta_functional<F: Fn(f64) -> f64>(f: F, idx: DyadicIndex) -> f64 {
    let h = idx.bandwidth();
    let t = idx.t();
    let right = integrate(&f, t, t + h, 0.5e-10 * h);
    let left = integrate(&f, t - h, t, 0.5e-10 * h);
    (right - left) / h
}

// ---------------------------------------------------------------------------
// Sampled signals
// ---------------------------------------------------------------------------

/// A signal sampled on the uniform midpoint grid of `[0,1]`, together with
/// the continuum noise level `sigma` of the model it came from.
#[derive(Debug, Clone)]
pub struct SampledSignal {
    values: Vec<f64>,
    noise_sigma: f64,
}

impl SampledSignal {
    /// Wrap raw samples; the length must be a power of two (`N = 2^J`).
    pub fn from_values(values: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        if values.len() < 2 || !values.len().is_power_of_two() {
            return Err(Error::domain(format!(
                "signal length must be a power of two >= 2, got {}",
                values.len()
            )));
        }
        if !(noise_sigma >= 0.0) {
            return Err(Error::domain("noise_sigma must be >= 0"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("signal contains non-finite values"));
        }
        Ok(SampledSignal { values, noise_sigma })
    }

    /// Sample `f` at the `N = 2^j_exponent` midpoints and add the discretised
    /// white noise `sigma sqrt(N) eps_i` (see the module docs for why the
    /// per-sample std carries the `sqrt(N)` factor).
    pub fn from_function<F: Fn(f64) -> f64>(
        f: F,
        j_exponent: u32,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if j_exponent == 0 || j_exponent > 30 {
            return Err(Error::domain(format!("need 1 <= J <= 30, got {j_exponent}")));
        }
        let n = 1usize << j_exponent;
        let mut rng = substream(seed, 0);
        let scale = sigma * (n as f64).sqrt();
        let values = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                let eps: f64 = if sigma > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
                f(u) + scale * eps
            })
            .collect();
        SampledSignal::from_values(values, sigma)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `J` with `N = 2^J`.
    pub fn j_exponent(&self) -> u32 {
        self.values.len().trailing_zeros()
    }

    /// Default deepest tested level, `J - 2`, so the finest tested level
    /// keeps at least two grid points and every bin averages >= 4 samples.
    pub fn default_max_level(&self) -> u32 {
        self.j_exponent().saturating_sub(2).max(1)
    }
}

// ---------------------------------------------------------------------------
// Coefficient fields
// ---------------------------------------------------------------------------

/// The array `Theta = {theta_{h,t}}` (true values or estimates) over all
/// admissible indices up to `max_level`, with the per-level noise scale
/// implied by `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    sigma: f64,
    levels: Vec<Vec<f64>>, // levels[k-1] has 2^(k-1) entries
}

impl CoefficientField {
    pub fn zero(max_level: u32, sigma: f64) -> Result<Self> {
        Self::from_level_fn(max_level, sigma, |_, _| 0.0)
    }

    /// Build a field from `(level, position) -> value`.
    pub fn from_level_fn<F: Fn(u32, u64) -> f64>(
        max_level: u32,
        sigma: f64,
        f: F,
    ) -> Result<Self> {
        if max_level == 0 || max_level > MAX_MATERIALIZED_LEVEL {
            return Err(Error::domain(format!(
                "materialised fields support 1 <= max_level <= {MAX_MATERIALIZED_LEVEL}, got {max_level}"
            )));
        }
        if !(sigma >= 0.0) {
            return Err(Error::domain("sigma must be >= 0"));
        }
        let levels = (1..=max_level)
            .map(|k| (0..n_at_level(k)).map(|j| f(k, j)).collect())
            .collect();
        Ok(CoefficientField { sigma, levels })
    }

    /// Evaluate `theta_{h,t}(f)` by quadrature at every index up to
    /// `max_level`. This is the oracle-grade (slow) constructor.
    pub fn from_function<F: Fn(f64) -> f64>(f: F, max_level: u32, sigma: f64) -> Result<Self> {
        if max_level == 0 || max_level > MAX_MATERIALIZED_LEVEL {
            return Err(Error::domain(format!(
                "materialised fields support 1 <= max_level <= {MAX_MATERIALIZED_LEVEL}, got {max_level}"
            )));
        }
        let mut levels = Vec::with_capacity(max_level as usize);
        for k in 1..=max_level {
            let vals: Vec<f64> = (0..n_at_level(k))
                .map(|j| theta_functional(&f, DyadicIndex::new(k, j).expect("valid index")))
                .collect();
            levels.push(vals);
        }
        Ok(CoefficientField { sigma, levels })
    }

    pub fn max_level(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Noise scale at `level`: `sigma sqrt(2/h)`.
    pub fn sigma_h(&self, level: u32) -> f64 {
        sigma_at_level(self.sigma, level)
    }

    pub fn level_values(&self, level: u32) -> &[f64] {
        &self.levels[level as usize - 1]
    }

    pub fn get(&self, idx: DyadicIndex) -> f64 {
        self.levels[idx.level() as usize - 1][idx.position() as usize]
    }

    pub fn set(&mut self, idx: DyadicIndex, value: f64) {
        self.levels[idx.level() as usize - 1][idx.position() as usize] = value;
    }

    /// All `(index, value)` pairs, coarsest level first.
    pub fn iter(&self) -> impl Iterator<Item = (DyadicIndex, f64)> + '_ {
        self.levels.iter().enumerate().flat_map(|(i, vals)| {
            let level = i as u32 + 1;
            vals.iter().enumerate().map(move |(j, v)| {
                (DyadicIndex::new(level, j as u64).expect("stored index valid"), *v)
            })
        })
    }
}

/// Add independent `N(0, sigma_h^2)` noise to every entry of `truth`.
///
/// Each level uses its own derived stream, so the draw at `(h, t)` does not
/// depend on the field's depth. With `sigma = 0` the output equals `truth`
/// exactly.
pub fn simulate_observation(truth: &CoefficientField, seed: u64) -> CoefficientField {
    let mut out = truth.clone();
    if truth.sigma() == 0.0 {
        return out;
    }
    for k in 1..=truth.max_level() {
        let mut rng = substream(seed, k as u64);
        let s = truth.sigma_h(k);
        for v in out.levels[k as usize - 1].iter_mut() {
            let eps: f64 = rng.sample(StandardNormal);
            *v += s * eps;
        }
    }
    out
}

/// All estimators `theta_hat_{h,t}` for levels `1..=max_level`, computed from
/// the samples in one bottom-up pass (cost `O(N)`).
///
/// `theta_hat_{h,t}` is the mean over `[t, t+h)` minus the mean over
/// `[t-h, t)`; block sums at the finest requested level are pair-merged
/// upward, which reproduces direct per-index summation exactly.
pub fn haar_estimates(signal: &SampledSignal, max_level: u32) -> Result<CoefficientField> {
    let j = signal.j_exponent();
    if max_level == 0 || max_level > j {
        return Err(Error::domain(format!(
            "max_level must satisfy 1 <= max_level <= J = {j}, got {max_level}"
        )));
    }
    let n = signal.len();
    let fine_bins = 1usize << max_level;
    let bin = n / fine_bins;
    let mut blocks: Vec<f64> = (0..fine_bins)
        .map(|b| signal.values()[b * bin..(b + 1) * bin].iter().sum())
        .collect();
    let mut levels: Vec<Vec<f64>> = vec![Vec::new(); max_level as usize];
    for k in (1..=max_level).rev() {
        let m = (n >> k) as f64; // samples per bin at this level
        let coeffs: Vec<f64> = (0..blocks.len() / 2)
            .map(|jj| (blocks[2 * jj + 1] - blocks[2 * jj]) / m)
            .collect();
        levels[k as usize - 1] = coeffs;
        if k > 1 {
            blocks = blocks.chunks_exact(2).map(|p| p[0] + p[1]).collect();
        }
    }
    Ok(CoefficientField { sigma: signal.noise_sigma(), levels })
}
