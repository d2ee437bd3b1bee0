//! Level priors over dyadic bandwidths.
//!
//! A prior assigns probability `pi_k` to level `k` (bandwidth `2^-k`). Two
//! families are provided:
//!
//! * the scaled family `pi_k ~ nu(k / omega)` for a bandwidth `omega > 1`
//!   and a density `nu` on the positive axis — with uniform `nu` on `[0,1]`
//!   this is the uniform prior on levels `1..=omega` and its entropy is
//!   `log omega`;
//! * the adaptive improper weighting `Pi_k = psi_m(k)^-eps - psi_m(k+1)^-eps`
//!   built from the iterated logarithm `psi_0(x) = 1 + log x`. Its total
//!   mass telescopes to `psi_m(1)^-eps = 1` while its entropy grows without
//!   bound, which is what makes the associated test prior-free.

use crate::{Error, Result};
use std::collections::BTreeMap;

/// A proper probability distribution over levels, with entropy bookkeeping.
///
/// Weights sum to one (to 1e-12) on the stored support; construction from a
/// wider family records how much mass the truncation discarded.
#[derive(Debug, Clone)]
pub struct PriorOnLevels {
    weights: BTreeMap<u32, f64>,
    entropy: f64,
    discarded_mass: f64,
}

impl PriorOnLevels {
    /// Normalise explicit positive weights over their levels.
    pub fn from_weights(weights: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, w) in weights {
            if k == 0 {
                return Err(Error::domain("prior levels start at 1"));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::domain(format!("prior weight at level {k} must be > 0")));
            }
            if map.insert(k, w).is_some() {
                return Err(Error::domain(format!("duplicate prior level {k}")));
            }
        }
        if map.is_empty() {
            return Err(Error::domain("prior needs at least one level"));
        }
        let total: f64 = map.values().sum();
        for w in map.values_mut() {
            *w /= total;
        }
        let entropy = map.values().map(|w| -w * w.ln()).sum();
        Ok(PriorOnLevels { weights: map, entropy, discarded_mass: 0.0 })
    }

    /// Uniform prior on levels `1..=levels`.
    pub fn uniform(levels: u32) -> Result<Self> {
        if levels == 0 {
            return Err(Error::domain("uniform prior needs >= 1 level"));
        }
        Self::from_weights((1..=levels).map(|k| (k, 1.0)))
    }

    /// Point mass at a single level.
    pub fn point_mass(level: u32) -> Result<Self> {
        Self::from_weights([(level, 1.0)])
    }

    pub fn weight(&self, level: u32) -> f64 {
        self.weights.get(&level).copied().unwrap_or(0.0)
    }

    pub fn levels(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.weights.iter().map(|(k, w)| (*k, *w))
    }

    pub fn support_max(&self) -> u32 {
        *self.weights.keys().next_back().expect("non-empty prior")
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Shannon entropy `H = sum pi log(1/pi)` on the stored support.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    /// `H* = log H`; not finite when `H <= 0` (point mass).
    pub fn log_entropy(&self) -> f64 {
        self.entropy.ln()
    }

    /// Mass of the original family outside the stored support.
    pub fn discarded_mass(&self) -> f64 {
        self.discarded_mass
    }

    /// Restrict to levels `<= max_level` and renormalise.
    ///
    /// The renormalised prior is again a proper probability, so tests
    /// calibrated through the exponential-max identity stay exact; the
    /// discarded mass is carried into the result for reporting.
    pub fn truncate_to(&self, max_level: u32) -> Result<Self> {
        let kept: Vec<(u32, f64)> = self.levels().filter(|(k, _)| *k <= max_level).collect();
        if kept.is_empty() {
            return Err(Error::domain(format!("prior has no mass at levels <= {max_level}")));
        }
        let kept_mass: f64 = kept.iter().map(|(_, w)| w).sum();
        let mut out = Self::from_weights(kept)?;
        out.discarded_mass = self.discarded_mass + (1.0 - kept_mass).max(0.0);
        Ok(out)
    }
}

/// The scaled prior family: `pi_k` proportional to `nu(k / omega)` on
/// `k = 1..=k_max`, normalised by the full sum of the family.
///
/// `nu` must be a continuous bounded density on the positive axis with
/// finite entropy and finite `log`-moment; those conditions are the
/// caller's obligation (they cannot be checked for an arbitrary handle).
/// `k_max` must keep at least `1 - 1e-9` of the family's mass; the check
/// probes a doubled horizon, which is decisive for any `nu` whose tail is
/// eventually monotone.
pub fn omega_nu_prior<F: Fn(f64) -> f64>(omega: f64, nu: F, k_max: u32) -> Result<PriorOnLevels> {
    if !(omega > 1.0) {
        return Err(Error::domain(format!("omega must be > 1, got {omega}")));
    }
    if k_max == 0 {
        return Err(Error::domain("k_max must be >= 1"));
    }
    let value = |k: u32| -> Result<f64> {
        let v = nu(k as f64 / omega);
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::domain(format!("nu(k/omega) must be finite and >= 0 at k={k}")));
        }
        Ok(v)
    };
    let mut kept = 0.0;
    let mut weights = Vec::new();
    for k in 1..=k_max {
        let v = value(k)?;
        kept += v;
        if v > 0.0 {
            weights.push((k, v));
        }
    }
    if kept <= 0.0 {
        return Err(Error::domain("nu vanishes on the whole truncated support"));
    }
    let mut probe = kept;
    for k in k_max + 1..=k_max.saturating_mul(2) {
        probe += value(k)?;
    }
    if kept < (1.0 - 1e-9) * probe {
        return Err(Error::TruncationMass { k_max, kept_mass: kept / probe });
    }
    let mut prior = PriorOnLevels::from_weights(weights)?;
    prior.discarded_mass = (1.0 - kept / probe).max(0.0);
    Ok(prior)
}

/// Uniform density on `[0,1]`, the default `nu`.
pub fn nu_uniform(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        1.0
    } else {
        0.0
    }
}

/// The large-uncertainty diagnostic
/// `(1/log H) sum pi_h |H - log(1/pi_h)|`.
///
/// Values near zero mean the prior spreads its information evenly (the
/// regime the multi-level power analysis assumes); point-mass-like priors
/// score high. Requires `H > 1` so the normaliser is positive.
pub fn uncertainty_condition_diagnostic(prior: &PriorOnLevels) -> Result<f64> {
    let h = prior.entropy();
    if !(h > 1.0) {
        return Err(Error::domain(format!(
            "uncertainty diagnostic needs entropy > 1, got H = {h}"
        )));
    }
    let sum: f64 = prior.levels().map(|(_, w)| w * (h + w.ln()).abs()).sum();
    Ok(sum / h.ln())
}

// ---------------------------------------------------------------------------
// Iterated logarithms and the adaptive weighting
// ---------------------------------------------------------------------------

/// `psi_m(x)`: `psi_0(x) = 1 + log x` iterated `m` further times.
/// `psi_m(1) = 1` for every `m`; requires `x >= 1`.
pub fn iterated_log(m: u32, x: f64) -> Result<f64> {
    if !(x >= 1.0) {
        return Err(Error::domain(format!("iterated_log requires x >= 1, got {x}")));
    }
    let mut v = x;
    for _ in 0..=m {
        v = 1.0 + v.ln();
    }
    Ok(v)
}

/// The adaptive level weighting and its exact/smooth penalty pair.
///
/// * `L(k) = -log[(psi_m(k)^-eps - psi_m(k+1)^-eps) / eps]` — the exact
///   telescoping penalty, with `sum_k exp(-L(k)) = 1/eps` over all `k >= 1`;
/// * `L~(k) = log k + sum_{s<m} log psi_s(k) + (1+eps) log psi_m(k)` — the
///   smooth approximation, whose gap `Delta = L~ - L` decays like
///   `1/psi_m(k)`;
/// * `Pi_k = eps exp(-L(k))`, summing to one over all `k >= 1`.
#[derive(Debug, Clone)]
pub struct AdaptiveWeights {
    m: u32,
    eps: f64,
    l_exact: Vec<f64>,
    l_smooth: Vec<f64>,
    log_pi: Vec<f64>,
}

impl AdaptiveWeights {
    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn k_max(&self) -> u32 {
        self.l_exact.len() as u32
    }

    /// Exact penalty `L^{m,eps}(k)`.
    pub fn l_exact(&self, k: u32) -> f64 {
        self.l_exact[k as usize - 1]
    }

    /// Smooth approximation `L~^{m,eps}(k)`.
    pub fn l_smooth(&self, k: u32) -> f64 {
        self.l_smooth[k as usize - 1]
    }

    /// Approximation gap `Delta^{m,eps}(k) = L~ - L`.
    pub fn delta(&self, k: u32) -> f64 {
        self.l_smooth(k) - self.l_exact(k)
    }

    /// `log Pi_k` for the improper adaptive prior.
    pub fn log_weight(&self, k: u32) -> f64 {
        self.log_pi[k as usize - 1]
    }

    /// `Pi_k` itself.
    pub fn weight(&self, k: u32) -> f64 {
        self.log_weight(k).exp()
    }

    /// Shannon entropy of the stored (truncated) weights; grows without
    /// bound as the horizon widens.
    pub fn truncated_entropy(&self) -> f64 {
        self.log_pi.iter().map(|lp| -lp.exp() * lp).sum()
    }

    /// Total stored mass `sum_{k<=k_max} Pi_k = 1 - psi_m(k_max+1)^-eps`.
    pub fn truncated_mass(&self) -> f64 {
        self.log_pi.iter().map(|lp| lp.exp()).sum()
    }
}

/// Compute the adaptive weighting for `k = 1..=k_max`.
pub fn adaptive_weights(m: u32, eps: f64, k_max: u32) -> Result<AdaptiveWeights> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("eps must be in (0,1), got {eps}")));
    }
    if k_max == 0 {
        return Err(Error::domain("k_max must be >= 1"));
    }
    let mut l_exact = Vec::with_capacity(k_max as usize);
    let mut l_smooth = Vec::with_capacity(k_max as usize);
    let mut log_pi = Vec::with_capacity(k_max as usize);
    for k in 1..=k_max {
        let x = k as f64;
        let here = iterated_log(m, x)?.powf(-eps);
        let next = iterated_log(m, x + 1.0)?.powf(-eps);
        let pi = here - next;
        if !(pi > 0.0) {
            return Err(Error::domain(format!(
                "adaptive weight degenerate at k={k} (psi difference underflowed)"
            )));
        }
        l_exact.push(-(pi / eps).ln());
        let mut smooth = x.ln();
        let mut v = x;
        for _ in 0..m {
            v = 1.0 + v.ln();
            smooth += v.ln();
        }
        // after the loop v = psi_{m-1}(x); one more step gives psi_m
        let psi_m = 1.0 + v.ln();
        smooth += (1.0 + eps) * psi_m.ln();
        l_smooth.push(smooth);
        log_pi.push(pi.ln());
    }
    Ok(AdaptiveWeights { m, eps, l_exact, l_smooth, log_pi })
}
