//! Null-distribution simulators and critical-value calibration.
//!
//! The level average `B_n = (1/n) sum S(xi_k)` over iid standard normals is
//! simulated exactly through `S(xi) =d= 1/U - 1` with `U` uniform. Its
//! centered limit is the 1-stable variable `zeta = zeta_circ + 2 gamma - 1`,
//! where `zeta_circ = sum_k (1/E_k - 1/k)` and `E_k` is the running sum of
//! iid standard exponentials. Truncated at `K` terms, `zeta_circ` is drawn
//! through the uniform order-statistics representation
//! `E_k =d= U_(k) * E_{K+1}` (jointly over `k`), which turns the draw into
//! `sum_i (1/U_i) / Gamma(K+1) - H_K` — one gamma variate plus `K` plain
//! uniforms, no prefix sums. The equality in law with the running-sum
//! definition is pinned by a two-sample KS test against a direct
//! implementation.
//!
//! Calibrated critical values are persisted to an append-only cache, one
//! record per line:
//!
//! ```text
//! kind <TAB> n <TAB> alpha <TAB> reps <TAB> seed <TAB> value <TAB> mc_stderr
//! ```
//!
//! where `n` is `n_h` for the single-level kinds, the series truncation `K`
//! for `zeta_circ`, and 0 for the closed-form `exp_sup`. Lines starting with
//! `#` are comments. Numbers round-trip exactly through their shortest
//! decimal representation.

use crate::empirical::{bootstrap_quantile_stderr, quantile_sorted};
use crate::rng::substream;
use crate::{Error, Result, EULER_GAMMA};
use num_complex::Complex64;
use rand::rngs::SmallRng;
use rand::Rng;
use rand_distr::{Distribution, Gamma, OpenClosed01};
use rayon::prelude::*;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Below this tail level Monte Carlo is refused and the closed-form routes
/// take over (exact exponential law for MAP, stable-tail coupling for Bayes).
pub const EXTREME_ALPHA: f64 = 1e-4;

// ---------------------------------------------------------------------------
// Parallel draw helper: deterministic chunked substreams
// ---------------------------------------------------------------------------

/// Run `reps` independent draws of `draw`, parallelised over fixed chunks.
///
/// Chunk `c` uses the derived stream `(seed, c)`; results are concatenated in
/// chunk order, so the output is independent of thread scheduling.
pub(crate) fn par_draws<F>(reps: usize, work_per_draw: u64, seed: u64, draw: F) -> Vec<f64>
where
    F: Fn(&mut SmallRng) -> f64 + Sync,
{
    let chunk = ((1u64 << 22) / work_per_draw.max(1)).clamp(1, 1 << 16) as usize;
    let n_chunks = reps.div_ceil(chunk);
    let mut chunks: Vec<Vec<f64>> = Vec::new();
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64);
            let len = chunk.min(reps - c * chunk);
            (0..len).map(|_| draw(&mut rng)).collect::<Vec<f64>>()
        })
        .collect_into_vec(&mut chunks);
    let mut out = Vec::with_capacity(reps);
    for c in chunks {
        out.extend(c);
    }
    out
}

/// Sum of `count` reciprocals of uniforms on `(0, 1]`.
#[inline]
pub(crate) fn sum_inv_uniforms(rng: &mut SmallRng, count: u64) -> f64 {
    let mut a0 = 0.0f64;
    let mut a1 = 0.0f64;
    let mut a2 = 0.0f64;
    let mut a3 = 0.0f64;
    let quads = count / 4;
    for _ in 0..quads {
        let u0: f64 = OpenClosed01.sample(rng);
        let u1: f64 = OpenClosed01.sample(rng);
        let u2: f64 = OpenClosed01.sample(rng);
        let u3: f64 = OpenClosed01.sample(rng);
        a0 += 1.0 / u0;
        a1 += 1.0 / u1;
        a2 += 1.0 / u2;
        a3 += 1.0 / u3;
    }
    for _ in 0..count % 4 {
        let u: f64 = OpenClosed01.sample(rng);
        a0 += 1.0 / u;
    }
    (a0 + a1) + (a2 + a3)
}

/// Harmonic number `H_n` via the Euler-Maclaurin tail (accurate to ~1e-10
/// already at `n = 10`).
pub fn harmonic(n: u64) -> f64 {
    let x = n as f64;
    x.ln() + EULER_GAMMA + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x) + 1.0 / (120.0 * x.powi(4))
        - 1.0 / (252.0 * x.powi(6))
}

// ---------------------------------------------------------------------------
// Simulators
// ---------------------------------------------------------------------------

/// Draws of `B_n = (1/n) sum_{k<=n} S(xi_k)` under the null, via
/// `S(xi) =d= 1/U - 1`.
pub fn simulate_b_null(n_h: u64, reps: usize, seed: u64) -> Result<Vec<f64>> {
    if n_h < 1 || reps < 1 {
        return Err(Error::domain("simulate_b_null requires n_h >= 1 and reps >= 1"));
    }
    let n = n_h as f64;
    Ok(par_draws(reps, n_h, seed, move |rng| {
        sum_inv_uniforms(rng, n_h) / n - 1.0
    }))
}

/// Reusable sampler for the truncated series `zeta_circ(K)`; see the module
/// docs for the order-statistics representation it draws through.
#[derive(Debug, Clone)]
pub struct ZetaCircSampler {
    k_trunc: u64,
    h_k: f64,
    gamma: Gamma<f64>,
}

impl ZetaCircSampler {
    pub fn new(k_trunc: u64) -> Result<Self> {
        if k_trunc < 10 {
            return Err(Error::domain(format!(
                "zeta_circ truncation K must be >= 10, got {k_trunc}"
            )));
        }
        let gamma = Gamma::new(k_trunc as f64 + 1.0, 1.0)
            .map_err(|e| Error::domain(format!("gamma sampler: {e}")))?;
        Ok(ZetaCircSampler { k_trunc, h_k: harmonic(k_trunc), gamma })
    }

    pub fn sample(&self, rng: &mut SmallRng) -> f64 {
        let s = sum_inv_uniforms(rng, self.k_trunc);
        let g: f64 = self.gamma.sample(rng);
        s / g - self.h_k
    }

    pub fn k_trunc(&self) -> u64 {
        self.k_trunc
    }
}

/// Draws of the truncated series `zeta_circ(K) = sum_{k<=K} (1/E_k - 1/k)`,
/// using the order-statistics representation described in the module docs.
///
/// The truncation error is `O(1/sqrt(K))` per draw; `K >= 10` is required.
pub fn simulate_zeta_circ(k_trunc: u64, reps: usize, seed: u64) -> Result<Vec<f64>> {
    if reps < 1 {
        return Err(Error::domain("reps must be >= 1"));
    }
    let sampler = ZetaCircSampler::new(k_trunc)?;
    Ok(par_draws(reps, k_trunc, seed, move |rng| sampler.sample(rng)))
}

/// Draws of the prior mixture `sum_k w_k (zeta_k - log(1/w_k))` where the
/// `zeta_k` are independent copies of `zeta_circ(K) + 2 gamma - 1`.
pub fn simulate_zeta_prior_mix(
    weights: &[f64],
    k_trunc: u64,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if k_trunc < 10 {
        return Err(Error::domain("zeta truncation K must be >= 10"));
    }
    if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::domain("mixture weights must be positive"));
    }
    let h_k = harmonic(k_trunc);
    let gamma = Gamma::new(k_trunc as f64 + 1.0, 1.0)
        .map_err(|e| Error::domain(format!("gamma sampler: {e}")))?;
    let shift: f64 = weights
        .iter()
        .map(|w| w * (2.0 * EULER_GAMMA - 1.0 + w.ln()))
        .sum();
    let weights = weights.to_vec();
    let work = k_trunc * weights.len() as u64;
    Ok(par_draws(reps, work, seed, move |rng| {
        let mut acc = shift;
        for w in &weights {
            let z = sum_inv_uniforms(rng, k_trunc) / gamma.sample(rng) - h_k;
            acc += w * z;
        }
        acc
    }))
}

/// Uniform order statistics `U_(1) <= ... <= U_(n)` drawn as `E_k / E_{n+1}`
/// from cumulative sums of standard exponentials.
pub fn pyke_order_statistics(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::domain("need n >= 1 order statistics"));
    }
    let mut rng = substream(seed, 0);
    let mut cum = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    for _ in 0..=n {
        let e: f64 = rng.sample(rand_distr::Exp1);
        acc += e;
        cum.push(acc);
    }
    let total = cum[n];
    Ok(cum[..n].iter().map(|e| e / total).collect())
}

/// Draws of `sup_h [log(1/kappa_h) - U_h] - K^U` over independent standard
/// exponentials `kappa_h`, with `K^U = log sum_h exp(-U_h)`.
///
/// In law this equals `log(1/kappa)` for a single standard exponential,
/// whatever the penalty sequence `U_h`.
pub fn simulate_penalized_exp_sup(u_penalties: &[f64], reps: usize, seed: u64) -> Result<Vec<f64>> {
    if u_penalties.is_empty() {
        return Err(Error::domain("need at least one level penalty"));
    }
    let log_norm = {
        // log-sum-exp of -U_h
        let m = u_penalties.iter().fold(f64::NEG_INFINITY, |a, u| a.max(-u));
        let s: f64 = u_penalties.iter().map(|u| (-u - m).exp()).sum();
        s.ln() + m
    };
    let us = u_penalties.to_vec();
    Ok(par_draws(reps, us.len() as u64, seed, move |rng| {
        let mut best = f64::NEG_INFINITY;
        for u in &us {
            let e: f64 = rng.sample(rand_distr::Exp1);
            best = best.max(-e.ln() - u);
        }
        best - log_norm
    }))
}

/// Exact `(1-alpha)`-quantile of `log(1/kappa)` for standard exponential
/// `kappa`: `q = -log(log(1/(1-alpha)))`.
pub fn exp_sup_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must be in (0,1), got {alpha}")));
    }
    Ok(-(-(-alpha).ln_1p()).ln())
}

// ---------------------------------------------------------------------------
// 1-stable characteristic function
// ---------------------------------------------------------------------------

/// Parameters of a 1-stable law; the level-average limit uses
/// `mu = 0, c = pi/2, beta = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    pub mu: f64,
    pub c: f64,
    pub beta: f64,
}

impl StableParams {
    /// The limit law of `B - log n + gamma`.
    pub fn b_limit() -> Self {
        StableParams { mu: 0.0, c: std::f64::consts::FRAC_PI_2, beta: 1.0 }
    }
}

/// Characteristic function of a 1-stable law:
/// `exp(i mu t - |c t| - i (2 beta |c| / pi) t log|t|)`, with value 1 at 0.
pub fn stable_cf(params: StableParams, t: f64) -> Complex64 {
    if t == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let re = -(params.c * t).abs();
    let im = params.mu * t
        - 2.0 * params.beta * params.c.abs() / std::f64::consts::PI * t * t.abs().ln();
    Complex64::new(re, im).exp()
}

/// Empirical characteristic function of a sample at frequency `t`.
pub fn empirical_cf(sample: &[f64], t: f64) -> Complex64 {
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for x in sample {
        let (s, c) = (t * x).sin_cos();
        re += c;
        im += s;
    }
    Complex64::new(re / sample.len() as f64, im / sample.len() as f64)
}

// ---------------------------------------------------------------------------
// Calibration table
// ---------------------------------------------------------------------------

/// The statistic a critical value calibrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CalibKind {
    /// `t_alpha^B`: level average of scores at a given `n_h`.
    BayesSingle,
    /// `t_alpha^M`: level maximum of scores over `n_h`, divided by `n_h`.
    MapSingle,
    /// `q_alpha^circ`: quantile of the series `zeta_circ` (parameter is `K`).
    ZetaCirc,
    /// `q_alpha^kappa`: quantile of `log(1/kappa)`, closed form.
    ExpSup,
}

impl CalibKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CalibKind::BayesSingle => "bayes_single",
            CalibKind::MapSingle => "map_single",
            CalibKind::ZetaCirc => "zeta_circ",
            CalibKind::ExpSup => "exp_sup",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "bayes_single" => Ok(CalibKind::BayesSingle),
            "map_single" => Ok(CalibKind::MapSingle),
            "zeta_circ" => Ok(CalibKind::ZetaCirc),
            "exp_sup" => Ok(CalibKind::ExpSup),
            other => Err(Error::Parse(format!("unknown calibration kind `{other}`"))),
        }
    }
}

impl fmt::Display for CalibKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One calibrated critical value with its full reproduction key.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationEntry {
    pub kind: CalibKind,
    /// `n_h` for single-level kinds, truncation `K` for `zeta_circ`, 0 for
    /// `exp_sup`.
    pub n_param: u64,
    pub alpha: f64,
    pub reps: u64,
    pub seed: u64,
    pub value: f64,
    pub mc_stderr: f64,
}

impl CalibrationEntry {
    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.kind, self.n_param, self.alpha, self.reps, self.seed, self.value, self.mc_stderr
        )
    }

    fn parse_line(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 7 {
            return Err(Error::Parse(format!(
                "calibration record needs 7 tab-separated fields, got {}: `{line}`",
                parts.len()
            )));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad {what}: `{s}`")))
        };
        let int = |s: &str, what: &str| -> Result<u64> {
            s.trim().parse::<u64>().map_err(|_| Error::Parse(format!("bad {what}: `{s}`")))
        };
        Ok(CalibrationEntry {
            kind: CalibKind::parse(parts[0])?,
            n_param: int(parts[1], "n")?,
            alpha: num(parts[2], "alpha")?,
            reps: int(parts[3], "reps")?,
            seed: int(parts[4], "seed")?,
            value: num(parts[5], "value")?,
            mc_stderr: num(parts[6], "mc_stderr")?,
        })
    }
}

/// An append-only collection of calibration entries, optionally backed by a
/// cache file. Writes go through a single appender; lookups prefer the entry
/// with the most replications (ties: the latest appended).
#[derive(Debug, Default)]
pub struct CalibrationTable {
    entries: Vec<CalibrationEntry>,
    path: Option<PathBuf>,
}

impl CalibrationTable {
    /// An unbacked, in-memory table.
    pub fn in_memory() -> Self {
        CalibrationTable::default()
    }

    /// Load a cache file; a missing file yields an empty table bound to the
    /// path.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = Vec::new();
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                entries.push(CalibrationEntry::parse_line(line)?);
            }
        }
        Ok(CalibrationTable { entries, path: Some(path) })
    }

    /// Append an entry, persisting it when the table is file-backed.
    pub fn append(&mut self, entry: CalibrationEntry) -> Result<()> {
        if let Some(path) = &self.path {
            let fresh = !path.exists();
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
            if fresh {
                writeln!(f, "# monotest calibration cache v1")?;
                writeln!(f, "# kind\tn\talpha\treps\tseed\tvalue\tmc_stderr")?;
            }
            writeln!(f, "{}", entry.to_line())?;
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Exact-key lookup on `(kind, n, alpha)`; among matches the entry with
    /// the most replications wins, later entries break ties.
    pub fn lookup(&self, kind: CalibKind, n_param: u64, alpha: f64) -> Option<&CalibrationEntry> {
        self.entries
            .iter()
            .filter(|e| e.kind == kind && e.n_param == n_param && e.alpha == alpha)
            .max_by_key(|e| e.reps)
    }

    /// Best `zeta_circ` entry at `alpha`, preferring the deepest truncation
    /// and then the most replications.
    pub fn lookup_zeta(&self, alpha: f64) -> Option<&CalibrationEntry> {
        self.entries
            .iter()
            .filter(|e| e.kind == CalibKind::ZetaCirc && e.alpha == alpha)
            .max_by_key(|e| (e.n_param, e.reps))
    }

    pub fn entries(&self) -> &[CalibrationEntry] {
        &self.entries
    }
}

/// The CLI invocation that would create a missing entry; embedded in
/// missing-calibration errors.
pub fn calibrate_hint(kind: CalibKind, n_param: u64, alpha: f64) -> String {
    format!(
        "monotest calibrate --kind {kind} --n {n_param} --alpha {alpha} --reps 400000 --seed 1 --cache <cache-file>"
    )
}

/// Compute one calibration entry.
///
/// For `alpha >= 1e-4` the Monte Carlo route is used (empirical type-7
/// quantile, 200-resample bootstrap stderr) behind the estimability guard
/// `reps * alpha >= 100`. Below `1e-4` Monte Carlo is hopeless and the
/// closed-form tail routes take over: the exact exponential-max law for the
/// MAP statistic and the stable-tail coupling
/// `t ~ log n - gamma + (2 gamma - 1) + 1/alpha` for the Bayes statistic
/// (first-order in the `P(zeta_circ > x) ~ 1/x` tail).
pub fn calibrate(
    kind: CalibKind,
    n_param: u64,
    alpha: f64,
    reps: u64,
    seed: u64,
) -> Result<CalibrationEntry> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must be in (0,1), got {alpha}")));
    }
    let entry = |value: f64, mc_stderr: f64| CalibrationEntry {
        kind,
        n_param,
        alpha,
        reps,
        seed,
        value,
        mc_stderr,
    };
    let guard = |what: &str| -> Result<()> {
        let mass = reps as f64 * alpha;
        if mass < 100.0 {
            return Err(Error::Estimability(
                mass,
                format!(
                    "cannot estimate the (1-alpha) quantile of {what}; raise reps or use the \
                     closed-form route (exp_sup / extreme-alpha coupling, alpha < {EXTREME_ALPHA:e})"
                ),
            ));
        }
        Ok(())
    };
    match kind {
        CalibKind::ExpSup => Ok(entry(exp_sup_quantile(alpha)?, 0.0)),
        CalibKind::MapSingle => {
            if n_param < 1 {
                return Err(Error::domain("map_single needs n_h >= 1"));
            }
            if alpha < EXTREME_ALPHA {
                // exact law: P(max S / n > t) = 1 - (1 - 1/(1 + n t))^n
                let n = n_param as f64;
                let u = 1.0 - (1.0 - alpha).powf(1.0 / n);
                return Ok(entry((1.0 / u - 1.0) / n, 0.0));
            }
            guard("the MAP level maximum")?;
            let n = n_param as f64;
            let mut sample = par_draws(reps as usize, n_param, seed, move |rng| {
                let mut min_u: f64 = 1.0;
                for _ in 0..n_param {
                    let u: f64 = OpenClosed01.sample(rng);
                    min_u = min_u.min(u);
                }
                (1.0 / min_u - 1.0) / n
            });
            sample.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
            let value = quantile_sorted(&sample, 1.0 - alpha);
            let se = bootstrap_quantile_stderr(&sample, 1.0 - alpha, 200, seed ^ 0x5eed);
            Ok(entry(value, se))
        }
        CalibKind::BayesSingle => {
            if n_param < 1 {
                return Err(Error::domain("bayes_single needs n_h >= 1"));
            }
            if alpha < EXTREME_ALPHA {
                let t = (n_param as f64).ln() - EULER_GAMMA
                    + (2.0 * EULER_GAMMA - 1.0)
                    + 1.0 / alpha;
                return Ok(entry(t, 0.0));
            }
            guard("the Bayes level average")?;
            let mut sample = simulate_b_null(n_param, reps as usize, seed)?;
            sample.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
            let value = quantile_sorted(&sample, 1.0 - alpha);
            let se = bootstrap_quantile_stderr(&sample, 1.0 - alpha, 200, seed ^ 0x5eed);
            Ok(entry(value, se))
        }
        CalibKind::ZetaCirc => {
            guard("the zeta_circ series")?;
            let mut sample = simulate_zeta_circ(n_param, reps as usize, seed)?;
            sample.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
            let value = quantile_sorted(&sample, 1.0 - alpha);
            let se = bootstrap_quantile_stderr(&sample, 1.0 - alpha, 200, seed ^ 0x5eed);
            Ok(entry(value, se))
        }
    }
}

/// Self-convergence diagnostic for the `zeta_circ` truncation: the drift of
/// the calibrated quantile between `K/100` and `K` (same seed and reps).
pub fn zeta_circ_drift(k_trunc: u64, alpha: f64, reps: u64, seed: u64) -> Result<f64> {
    let coarse = calibrate(CalibKind::ZetaCirc, (k_trunc / 100).max(10), alpha, reps, seed)?;
    let fine = calibrate(CalibKind::ZetaCirc, k_trunc, alpha, reps, seed)?;
    Ok(fine.value - coarse.value)
}
