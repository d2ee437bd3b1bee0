//! Decision procedures: single-level simple/Bayes/MAP/ML tests, multi-level
//! MAP and Bayes tests, the adaptive MAP test, and the critical
//! signal-to-noise functions.
//!
//! Every statistic is computed in log domain where scores are involved.
//! Multi-level tests restrict the prior to the field's levels: proper priors
//! are renormalised (the exponential-max and mixture identities hold for any
//! proper prior, so calibration stays exact), while the adaptive improper
//! weighting is used as-is, which only lowers the statistic and keeps the
//! test conservative; either way the unobservable prior mass is reported.
//! Ties in MAP suprema resolve toward the coarsest level, then the smallest
//! grid position.

use crate::gauss_num::{normal_quantile, score};
use crate::haar_model::{CoefficientField, DyadicIndex};
use crate::null_dists::{calibrate_hint, exp_sup_quantile, CalibKind, CalibrationTable};
use crate::priors::{AdaptiveWeights, PriorOnLevels};
use crate::{Error, Result, EULER_GAMMA};

/// Outcome of a test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    RejectH0,
    RetainH0,
}

impl Decision {
    pub fn is_reject(&self) -> bool {
        matches!(self, Decision::RejectH0)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::RejectH0 => "reject_H0",
            Decision::RetainH0 => "retain_H0",
        }
    }
}

/// Per-level contribution entering a multi-level statistic
/// (`Z_h^M + log pi_h` for MAP-type tests, `pi_h (Z_h^B - log(1/pi_h))` for
/// the Bayes test).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelContribution {
    pub level: u32,
    pub value: f64,
}

/// Full record of a decision: the statistic, the critical value it was
/// compared against, per-level diagnostics, and the achieving index for
/// MAP-type tests.
#[derive(Debug, Clone)]
pub struct TestReport {
    pub decision: Decision,
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub per_level: Vec<LevelContribution>,
    pub argmax_index: Option<DyadicIndex>,
    /// Prior mass sitting on levels the field cannot observe.
    pub discarded_prior_mass: f64,
    /// Cache key of the calibration entry used, when one was.
    pub calibration_key: Option<String>,
}

impl TestReport {
    fn decide(statistic: f64, critical_value: f64) -> Decision {
        if statistic >= critical_value {
            Decision::RejectH0
        } else {
            Decision::RetainH0
        }
    }
}

// ---------------------------------------------------------------------------
// Single-level tests
// ---------------------------------------------------------------------------

/// Which single-level statistic a calibrated test uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleLevelKind {
    Bayes,
    Map,
}

impl SingleLevelKind {
    pub fn calib_kind(&self) -> CalibKind {
        match self {
            SingleLevelKind::Bayes => CalibKind::BayesSingle,
            SingleLevelKind::Map => CalibKind::MapSingle,
        }
    }
}

/// The most powerful test for one coordinate: reject when
/// `theta_hat <= -sigma_h t_alpha` with `Phi(t_alpha) = 1 - alpha`.
///
/// The equivalent score form (reject when `S(theta_hat/sigma_h) >= S(-t_alpha)`)
/// is computed alongside and asserted consistent; the report carries the
/// score statistic and its threshold, both in linear scale.
pub fn single_level_simple(theta_hat: f64, sigma_h: f64, alpha: f64) -> Result<TestReport> {
    if !(sigma_h > 0.0) {
        return Err(Error::domain("sigma_h must be > 0"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("alpha must be in (0,1)"));
    }
    let t_alpha = normal_quantile(1.0 - alpha)?;
    let reject_threshold_form = theta_hat <= -sigma_h * t_alpha;
    let log_stat = score(theta_hat / sigma_h).log_s;
    let log_crit = score(-t_alpha).log_s;
    let reject_score_form = log_stat >= log_crit;
    assert_eq!(
        reject_threshold_form, reject_score_form,
        "threshold and score forms disagree at theta_hat/sigma_h = {}",
        theta_hat / sigma_h
    );
    let decision = if reject_score_form { Decision::RejectH0 } else { Decision::RetainH0 };
    Ok(TestReport {
        decision,
        statistic: log_stat.exp(),
        critical_value: log_crit.exp(),
        alpha,
        per_level: Vec::new(),
        argmax_index: None,
        discarded_prior_mass: 0.0,
        calibration_key: None,
    })
}

/// The likelihood-ratio form `exp(-(theta_hat^2 / (2 sigma_h^2)) sign(theta_hat))`.
///
/// Monotone decreasing in `theta_hat`, hence decision-equivalent to the
/// simple test at matched thresholds; saturates to `+inf` once
/// `|theta_hat|/sigma_h` exceeds ~38 on the negative side.
pub fn single_level_ml_statistic(theta_hat: f64, sigma_h: f64) -> f64 {
    assert!(sigma_h > 0.0, "sigma_h must be > 0");
    let z = theta_hat / sigma_h;
    let log_stat = -0.5 * z * z * z.signum();
    log_stat.exp()
}

/// Level-average statistic: `B = (1/n_h) sum_t S(theta_hat/sigma_h)` and its
/// centered form `Z_h^B = B - log n_h - gamma + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesLevelStatistic {
    pub b: f64,
    pub z: f64,
}

/// Compute the Bayes level statistic via log-sum-exp (individual scores can
/// exceed `e^700`; the average is exposed in linear scale and may saturate
/// to `+inf`, which still orders correctly against any finite threshold).
pub fn bayes_level_statistic(field: &CoefficientField, level: u32) -> Result<BayesLevelStatistic> {
    if level == 0 || level > field.max_level() {
        return Err(Error::domain(format!(
            "level {level} not present in field (max {})",
            field.max_level()
        )));
    }
    let sigma_h = field.sigma_h(level);
    if !(sigma_h > 0.0) {
        return Err(Error::domain("bayes level statistic needs sigma > 0"));
    }
    let vals = field.level_values(level);
    let mut max_ls = f64::NEG_INFINITY;
    let mut log_scores = Vec::with_capacity(vals.len());
    for v in vals {
        let ls = score(v / sigma_h).log_s;
        max_ls = max_ls.max(ls);
        log_scores.push(ls);
    }
    let sum: f64 = log_scores.iter().map(|ls| (ls - max_ls).exp()).sum();
    let log_b = max_ls + sum.ln() - (vals.len() as f64).ln();
    let b = log_b.exp();
    let z = b - (vals.len() as f64).ln() - EULER_GAMMA + 1.0;
    Ok(BayesLevelStatistic { b, z })
}

/// Level-maximum statistic: `Z_h^M = max_t log[(1/n_h) S(theta_hat/sigma_h)]`
/// plus the achieving grid index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapLevelStatistic {
    pub z: f64,
    pub argmax: DyadicIndex,
}

pub fn map_level_statistic(field: &CoefficientField, level: u32) -> Result<MapLevelStatistic> {
    if level == 0 || level > field.max_level() {
        return Err(Error::domain(format!(
            "level {level} not present in field (max {})",
            field.max_level()
        )));
    }
    let sigma_h = field.sigma_h(level);
    if !(sigma_h > 0.0) {
        return Err(Error::domain("map level statistic needs sigma > 0"));
    }
    let vals = field.level_values(level);
    let mut best = f64::NEG_INFINITY;
    let mut best_j = 0u64;
    for (j, v) in vals.iter().enumerate() {
        let ls = score(v / sigma_h).log_s;
        if ls > best {
            best = ls;
            best_j = j as u64;
        }
    }
    Ok(MapLevelStatistic {
        z: best - (vals.len() as f64).ln(),
        argmax: DyadicIndex::new(level, best_j)?,
    })
}

/// Calibrated single-level test (Bayes average or MAP maximum) against the
/// cached critical value for `(kind, n_h, alpha)`.
pub fn single_level_test(
    field: &CoefficientField,
    level: u32,
    kind: SingleLevelKind,
    alpha: f64,
    calib: &CalibrationTable,
) -> Result<TestReport> {
    if level == 0 || level > field.max_level() {
        return Err(Error::domain(format!(
            "level {level} not present in field (max {})",
            field.max_level()
        )));
    }
    let n_h = crate::haar_model::n_at_level(level);
    let entry = calib.lookup(kind.calib_kind(), n_h, alpha).ok_or_else(|| {
        Error::MissingCalibration(
            format!("kind={} n_h={} alpha={}", kind.calib_kind(), n_h, alpha),
            calibrate_hint(kind.calib_kind(), n_h, alpha),
        )
    })?;
    let (statistic, per_level, argmax) = match kind {
        SingleLevelKind::Bayes => {
            let s = bayes_level_statistic(field, level)?;
            (s.b, vec![LevelContribution { level, value: s.z }], None)
        }
        SingleLevelKind::Map => {
            let s = map_level_statistic(field, level)?;
            (s.z.exp(), vec![LevelContribution { level, value: s.z }], Some(s.argmax))
        }
    };
    Ok(TestReport {
        decision: TestReport::decide(statistic, entry.value),
        statistic,
        critical_value: entry.value,
        alpha,
        per_level,
        argmax_index: argmax,
        discarded_prior_mass: 0.0,
        calibration_key: Some(format!(
            "{} n={} alpha={} reps={} seed={}",
            entry.kind, entry.n_param, entry.alpha, entry.reps, entry.seed
        )),
    })
}

// ---------------------------------------------------------------------------
// Multi-level combinators (shared with the Monte Carlo harness)
// ---------------------------------------------------------------------------

/// Supremum of `z + log_weight` over `(level, z, log_weight)` items; ties
/// resolve to the earliest item (callers pass levels in ascending order,
/// making that the coarsest). Returns the statistic and the index of the
/// achieving item.
pub fn combine_map_levels(items: &[(u32, f64, f64)]) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, (_, z, log_w)) in items.iter().enumerate() {
        let v = z + log_w;
        match best {
            Some((b, _)) if v <= b => {}
            _ => best = Some((v, i)),
        }
    }
    best
}

/// Entropy-shifted weighted sum `sum_h w_h (z_h - log(1/w_h))` over
/// `(level, z, weight)` items.
pub fn combine_bayes_levels(items: &[(u32, f64, f64)]) -> f64 {
    items.iter().map(|(_, z, w)| w * (z + w.ln())).sum()
}

// ---------------------------------------------------------------------------
// Multi-level tests
// ---------------------------------------------------------------------------

/// Multi-level MAP test: rejects when
/// `sup_h [Z_h^M + log pi_h] >= q_alpha^kappa`.
pub fn multilevel_map_test(
    field: &CoefficientField,
    prior: &PriorOnLevels,
    alpha: f64,
) -> Result<TestReport> {
    let prior = prior.truncate_to(field.max_level())?;
    let mut items = Vec::with_capacity(prior.len());
    let mut stats = Vec::with_capacity(prior.len());
    for (level, w) in prior.levels() {
        let s = map_level_statistic(field, level)?;
        items.push((level, s.z, w.ln()));
        stats.push(s);
    }
    let (statistic, idx) = combine_map_levels(&items).expect("non-empty prior");
    let critical_value = exp_sup_quantile(alpha)?;
    Ok(TestReport {
        decision: TestReport::decide(statistic, critical_value),
        statistic,
        critical_value,
        alpha,
        per_level: items
            .iter()
            .map(|(level, z, lw)| LevelContribution { level: *level, value: z + lw })
            .collect(),
        argmax_index: Some(stats[idx].argmax),
        discarded_prior_mass: prior.discarded_mass(),
        calibration_key: None,
    })
}

/// Multi-level Bayes test: rejects when
/// `sum_h pi_h (Z_h^B - log(1/pi_h)) >= q_alpha^circ`.
pub fn multilevel_bayes_test(
    field: &CoefficientField,
    prior: &PriorOnLevels,
    alpha: f64,
    calib: &CalibrationTable,
) -> Result<TestReport> {
    let entry = calib.lookup_zeta(alpha).ok_or_else(|| {
        Error::MissingCalibration(
            format!("kind=zeta_circ alpha={alpha}"),
            calibrate_hint(CalibKind::ZetaCirc, 10_000, alpha),
        )
    })?;
    let prior = prior.truncate_to(field.max_level())?;
    let mut items = Vec::with_capacity(prior.len());
    for (level, w) in prior.levels() {
        let s = bayes_level_statistic(field, level)?;
        items.push((level, s.z, w));
    }
    let statistic = combine_bayes_levels(&items);
    Ok(TestReport {
        decision: TestReport::decide(statistic, entry.value),
        statistic,
        critical_value: entry.value,
        alpha,
        per_level: items
            .iter()
            .map(|(level, z, w)| LevelContribution { level: *level, value: w * (z + w.ln()) })
            .collect(),
        argmax_index: None,
        discarded_prior_mass: prior.discarded_mass(),
        calibration_key: Some(format!(
            "{} K={} alpha={} reps={} seed={}",
            entry.kind, entry.n_param, entry.alpha, entry.reps, entry.seed
        )),
    })
}

/// Adaptive MAP test: rejects when `max_h [Z_h^M + log Pi_h] >= q_alpha^kappa`
/// with the improper iterated-logarithm weights.
///
/// The weights are not renormalised on the observable levels; the missing
/// mass only removes terms from the supremum, so the measured type I error
/// sits below `alpha` (reported, not hidden).
pub fn adaptive_map_test(
    field: &CoefficientField,
    weights: &AdaptiveWeights,
    alpha: f64,
) -> Result<TestReport> {
    let depth = field.max_level().min(weights.k_max());
    if depth == 0 {
        return Err(Error::domain("adaptive test needs at least one level"));
    }
    let mut items = Vec::with_capacity(depth as usize);
    let mut stats = Vec::with_capacity(depth as usize);
    let mut observed_mass = 0.0;
    for level in 1..=depth {
        let s = map_level_statistic(field, level)?;
        items.push((level, s.z, weights.log_weight(level)));
        stats.push(s);
        observed_mass += weights.weight(level);
    }
    let (statistic, idx) = combine_map_levels(&items).expect("non-empty items");
    let critical_value = exp_sup_quantile(alpha)?;
    Ok(TestReport {
        decision: TestReport::decide(statistic, critical_value),
        statistic,
        critical_value,
        alpha,
        per_level: items
            .iter()
            .map(|(level, z, lw)| LevelContribution { level: *level, value: z + lw })
            .collect(),
        argmax_index: Some(stats[idx].argmax),
        discarded_prior_mass: (1.0 - observed_mass).max(0.0),
        calibration_key: None,
    })
}

// ---------------------------------------------------------------------------
// Critical signal-to-noise ratios
// ---------------------------------------------------------------------------

/// Which critical-SNR expression to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnrKind {
    /// `R_h(q, H) = 2[q + log n_h + H] - log(4 pi (q + log n_h + H))` with
    /// `H` the prior entropy.
    WithEntropy,
    /// Same expression with `H` replaced by `log omega`.
    WithLogOmega,
    /// The adaptive boundary: `WithLogOmega + log log omega`.
    Adaptive,
}

/// Critical signal-to-noise ratio at `level`; `h_or_omega` is the entropy
/// `H` for [`SnrKind::WithEntropy`] and the family bandwidth `omega` for the
/// other kinds.
pub fn critical_snr(kind: SnrKind, level: u32, q: f64, h_or_omega: f64) -> Result<f64> {
    if level == 0 {
        return Err(Error::domain("level must be >= 1"));
    }
    let log_n = (level as f64 - 1.0) * std::f64::consts::LN_2;
    let h = match kind {
        SnrKind::WithEntropy => h_or_omega,
        SnrKind::WithLogOmega | SnrKind::Adaptive => {
            if !(h_or_omega > 1.0) {
                return Err(Error::domain(format!(
                    "omega must be > 1 for the log-omega forms, got {h_or_omega}"
                )));
            }
            h_or_omega.ln()
        }
    };
    let m = q + log_n + h;
    if !(m > 0.0) {
        return Err(Error::domain(format!("q + log n_h + H must be positive, got {m}")));
    }
    let base = 2.0 * m - (4.0 * std::f64::consts::PI * m).ln();
    Ok(match kind {
        SnrKind::Adaptive => base + h_or_omega.ln().ln(),
        _ => base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar_model::{n_at_level, simulate_observation};
    use crate::null_dists::{simulate_b_null, CalibrationEntry};
    use crate::priors::{adaptive_weights, nu_uniform, omega_nu_prior};
    use crate::rng::substream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn null_field(max_level: u32, seed: u64) -> CoefficientField {
        let truth = CoefficientField::zero(max_level, 1.0).unwrap();
        simulate_observation(&truth, seed)
    }

    fn table_with(entries: Vec<CalibrationEntry>) -> CalibrationTable {
        let mut t = CalibrationTable::in_memory();
        for e in entries {
            t.append(e).unwrap();
        }
        t
    }

    #[test]
    fn simple_test_examples() {
        // theta = 0 retains at any alpha < 0.5
        for alpha in [0.4, 0.05, 1e-4] {
            assert_eq!(single_level_simple(0.0, 2.0, alpha).unwrap().decision, Decision::RetainH0);
        }
        // just past the 5% boundary rejects
        let r = single_level_simple(-2.0 * 1.6449, 2.0, 0.05).unwrap();
        assert_eq!(r.decision, Decision::RejectH0);
        // just inside retains
        let r = single_level_simple(-2.0 * 1.6448, 2.0, 0.05).unwrap();
        assert_eq!(r.decision, Decision::RetainH0);
    }

    #[test]
    fn simple_test_forms_agree_on_random_inputs() {
        let mut rng = substream(1, 0);
        for _ in 0..1000 {
            let theta: f64 = rng.sample::<f64, _>(StandardNormal) * 3.0;
            let sigma = 0.1 + rng.gen::<f64>() * 5.0;
            let alpha = 0.001 + rng.gen::<f64>() * 0.5;
            let report = single_level_simple(theta, sigma, alpha).unwrap();
            // brute-force replication of the threshold form
            let t_alpha = normal_quantile(1.0 - alpha).unwrap();
            let want =
                if theta <= -sigma * t_alpha { Decision::RejectH0 } else { Decision::RetainH0 };
            assert_eq!(report.decision, want);
        }
    }

    #[test]
    fn ml_statistic_examples() {
        assert_eq!(single_level_ml_statistic(0.0, 1.0), 1.0);
        assert!((single_level_ml_statistic(-2.0, 2.0) - 0.5f64.exp()).abs() < 1e-15);
        // monotone decreasing on a grid
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let th = -6.0 + 12.0 * i as f64 / 199.0;
            let v = single_level_ml_statistic(th, 1.5);
            assert!(v < prev, "not decreasing at {th}");
            prev = v;
        }
    }

    #[test]
    fn bayes_level_statistic_examples() {
        // all zeros: S(0) = 1 averaged
        let field = CoefficientField::zero(4, 1.0).unwrap();
        for level in 1..=4 {
            let s = bayes_level_statistic(&field, level).unwrap();
            assert!((s.b - 1.0).abs() < 1e-12);
            let n = n_at_level(level) as f64;
            assert!((s.z - (1.0 - n.ln() - EULER_GAMMA + 1.0)).abs() < 1e-12);
        }
        // n_h = 1: B = S(theta/sigma)
        let mut field = CoefficientField::zero(1, 1.0).unwrap();
        field.set(DyadicIndex::new(1, 0).unwrap(), -3.0 * field.sigma_h(1));
        let s = bayes_level_statistic(&field, 1).unwrap();
        assert!((s.b / score(-3.0).value() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bayes_level_statistic_null_law_matches_simulator() {
        // the real score path against the uniform-inverse simulator
        let level = 11u32; // n_h = 1024
        let reps = 10_000usize;
        let mut bs = Vec::with_capacity(reps);
        for r in 0..reps {
            let field = null_field(level, 50_000 + r as u64);
            bs.push(bayes_level_statistic(&field, level).unwrap().b);
        }
        let reference = simulate_b_null(1024, reps, 999).unwrap();
        let d = crate::empirical::ks_two_sample(&bs, &reference);
        let thr = crate::empirical::ks_two_sample_threshold(reps, reps, 0.001);
        assert!(d < thr, "KS {d} vs {thr}");
    }

    #[test]
    fn map_level_statistic_examples() {
        let field = CoefficientField::zero(1, 1.0).unwrap();
        let s = map_level_statistic(&field, 1).unwrap();
        assert!(s.z.abs() < 1e-12); // log S(0) - log 1 = 0
        assert_eq!(s.argmax.position(), 0);
        // a strongly negative entry dominates
        let mut field = null_field(5, 7);
        let spike = DyadicIndex::new(5, 11).unwrap();
        field.set(spike, -6.0 * field.sigma_h(5));
        // keep the rest nonnegative so the argmax is forced
        for j in 0..16 {
            if j != 11 {
                let idx = DyadicIndex::new(5, j).unwrap();
                field.set(idx, field.get(idx).abs());
            }
        }
        let s = map_level_statistic(&field, 5).unwrap();
        assert_eq!(s.argmax, spike);
    }

    #[test]
    fn map_level_null_law_approaches_inverse_exponential() {
        // exp(Z_h^M) ~ 1/kappa for large n_h
        let reps = 5_000usize;
        let level = 13u32; // n_h = 4096
        let mut vals = Vec::with_capacity(reps);
        for r in 0..reps {
            let field = null_field(level, 70_000 + r as u64);
            vals.push(map_level_statistic(&field, level).unwrap().z.exp());
        }
        let d = crate::empirical::ks_one_sample(&vals, |x| {
            if x <= 0.0 {
                0.0
            } else {
                (-1.0 / x).exp()
            }
        });
        let thr = crate::empirical::ks_one_sample_threshold(reps, 0.001);
        assert!(d < 1.5 * thr, "KS {d} vs {thr}");
    }

    #[test]
    fn single_level_test_type_one_error_is_calibrated() {
        let level = 5u32; // n_h = 16
        let n_h = n_at_level(level);
        let alpha = 0.05;
        let calib = table_with(vec![
            crate::null_dists::calibrate(CalibKind::BayesSingle, n_h, alpha, 400_000, 1).unwrap(),
            crate::null_dists::calibrate(CalibKind::MapSingle, n_h, alpha, 400_000, 2).unwrap(),
        ]);
        let reps = 10_000usize;
        let (mut rej_b, mut rej_m) = (0usize, 0usize);
        for r in 0..reps {
            let field = null_field(level, 100_000 + r as u64);
            if single_level_test(&field, level, SingleLevelKind::Bayes, alpha, &calib)
                .unwrap()
                .decision
                .is_reject()
            {
                rej_b += 1;
            }
            if single_level_test(&field, level, SingleLevelKind::Map, alpha, &calib)
                .unwrap()
                .decision
                .is_reject()
            {
                rej_m += 1;
            }
        }
        let rate_b = rej_b as f64 / reps as f64;
        let rate_m = rej_m as f64 / reps as f64;
        assert!((rate_b - alpha).abs() < 0.0075, "bayes rate {rate_b}");
        assert!((rate_m - alpha).abs() < 0.0075, "map rate {rate_m}");
    }

    #[test]
    fn single_level_test_detects_deep_signal() {
        let level = 5u32;
        let n_h = n_at_level(level);
        let alpha = 0.05;
        let calib = table_with(vec![crate::null_dists::calibrate(
            CalibKind::BayesSingle,
            n_h,
            alpha,
            200_000,
            1,
        )
        .unwrap()]);
        let mut rejected = 0usize;
        let reps = 1000usize;
        for r in 0..reps {
            let mut truth = CoefficientField::zero(level, 1.0).unwrap();
            truth.set(DyadicIndex::new(level, 3).unwrap(), -8.0 * truth.sigma_h(level));
            let field = simulate_observation(&truth, 300_000 + r as u64);
            if single_level_test(&field, level, SingleLevelKind::Bayes, alpha, &calib)
                .unwrap()
                .decision
                .is_reject()
            {
                rejected += 1;
            }
        }
        assert!(rejected as f64 / reps as f64 >= 0.99, "rate {}", rejected as f64 / reps as f64);
    }

    #[test]
    fn missing_calibration_error_carries_command() {
        let field = null_field(4, 3);
        let calib = CalibrationTable::in_memory();
        let err = single_level_test(&field, 4, SingleLevelKind::Bayes, 0.05, &calib).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("monotest calibrate"), "{msg}");
        assert!(msg.contains("bayes_single"), "{msg}");
        let prior = PriorOnLevels::uniform(4).unwrap();
        let err = multilevel_bayes_test(&field, &prior, 0.05, &calib).unwrap_err();
        assert!(err.to_string().contains("zeta_circ"), "{err}");
    }

    #[test]
    fn multilevel_map_rejects_planted_spike_and_finds_it() {
        let prior = PriorOnLevels::uniform(6).unwrap();
        let spike = DyadicIndex::new(6, 17).unwrap();
        let mut truth = CoefficientField::zero(6, 1.0).unwrap();
        // far beyond the critical boundary at this level
        let a =
            critical_snr(SnrKind::WithEntropy, 6, exp_sup_quantile(0.05).unwrap(), prior.entropy())
                .unwrap()
                .sqrt()
                + 4.0;
        truth.set(spike, -a * truth.sigma_h(6));
        let mut hits = 0;
        let mut rejects = 0;
        let reps = 200;
        for r in 0..reps {
            let field = simulate_observation(&truth, 444_000 + r as u64);
            let rep = multilevel_map_test(&field, &prior, 0.05).unwrap();
            if rep.decision.is_reject() {
                rejects += 1;
                if rep.argmax_index == Some(spike) {
                    hits += 1;
                }
            }
        }
        assert!(rejects as f64 / reps as f64 > 0.95, "rejects {rejects}");
        assert!(hits as f64 / rejects.max(1) as f64 > 0.9, "argmax hits {hits}/{rejects}");
    }

    #[test]
    fn degenerate_prior_reduces_to_single_level_tests() {
        let level = 6u32;
        let n_h = n_at_level(level) as f64;
        let alpha = 0.05;
        let q_kappa = exp_sup_quantile(alpha).unwrap();
        let q_circ = 21.7; // any value works: thresholds are matched below
        let map_entry = CalibrationEntry {
            kind: CalibKind::MapSingle,
            n_param: n_at_level(level),
            alpha,
            reps: 0,
            seed: 0,
            value: q_kappa.exp(),
            mc_stderr: 0.0,
        };
        let bayes_entry = CalibrationEntry {
            kind: CalibKind::BayesSingle,
            n_param: n_at_level(level),
            alpha,
            reps: 0,
            seed: 0,
            value: q_circ + n_h.ln() + EULER_GAMMA - 1.0,
            mc_stderr: 0.0,
        };
        let zeta_entry = CalibrationEntry {
            kind: CalibKind::ZetaCirc,
            n_param: 10_000,
            alpha,
            reps: 0,
            seed: 0,
            value: q_circ,
            mc_stderr: 0.0,
        };
        let calib = table_with(vec![map_entry, bayes_entry, zeta_entry]);
        let prior = PriorOnLevels::point_mass(level).unwrap();
        for r in 0..300u64 {
            let field = null_field(level, 600_000 + r);
            let multi_map = multilevel_map_test(&field, &prior, alpha).unwrap();
            let single_map =
                single_level_test(&field, level, SingleLevelKind::Map, alpha, &calib).unwrap();
            assert_eq!(multi_map.decision, single_map.decision, "map mismatch at rep {r}");
            assert_eq!(multi_map.argmax_index, single_map.argmax_index);
            let multi_bayes = multilevel_bayes_test(&field, &prior, alpha, &calib).unwrap();
            let single_bayes =
                single_level_test(&field, level, SingleLevelKind::Bayes, alpha, &calib).unwrap();
            assert_eq!(multi_bayes.decision, single_bayes.decision, "bayes mismatch at rep {r}");
        }
    }

    #[test]
    fn raising_alpha_never_unrejects() {
        let alphas = [0.01, 0.05, 0.1, 0.2, 0.4];
        let prior = PriorOnLevels::uniform(5).unwrap();
        let weights = adaptive_weights(1, 0.1, 64).unwrap();
        let zeta_entries: Vec<CalibrationEntry> = alphas
            .iter()
            .map(|a| {
                crate::null_dists::calibrate(CalibKind::ZetaCirc, 2000, *a, 50_000, 5).unwrap()
            })
            .collect();
        let calib = table_with(zeta_entries);
        for r in 0..100u64 {
            let field = null_field(5, 700_000 + r);
            let mut prev_map = false;
            let mut prev_bayes = false;
            let mut prev_adaptive = false;
            for a in alphas {
                let m = multilevel_map_test(&field, &prior, a).unwrap().decision.is_reject();
                let b =
                    multilevel_bayes_test(&field, &prior, a, &calib).unwrap().decision.is_reject();
                let ad = adaptive_map_test(&field, &weights, a).unwrap().decision.is_reject();
                assert!(m || !prev_map, "map flipped to retain as alpha rose");
                assert!(b || !prev_bayes, "bayes flipped to retain as alpha rose");
                assert!(ad || !prev_adaptive, "adaptive flipped to retain as alpha rose");
                prev_map = m;
                prev_bayes = b;
                prev_adaptive = ad;
            }
        }
    }

    #[test]
    fn map_decisions_are_scale_invariant() {
        let prior = PriorOnLevels::uniform(6).unwrap();
        let weights = adaptive_weights(1, 0.1, 64).unwrap();
        for r in 0..100u64 {
            let base = null_field(6, 800_000 + r);
            let r0 = multilevel_map_test(&base, &prior, 0.05).unwrap();
            let a0 = adaptive_map_test(&base, &weights, 0.05).unwrap();
            for lambda in [2.0f64, 0.25, 1024.0, 3.7, 0.9] {
                let scaled = CoefficientField::from_level_fn(6, lambda * base.sigma(), |k, j| {
                    lambda * base.get(DyadicIndex::new(k, j).unwrap())
                })
                .unwrap();
                let r1 = multilevel_map_test(&scaled, &prior, 0.05).unwrap();
                assert_eq!(r0.decision, r1.decision, "lambda {lambda}");
                assert_eq!(r0.argmax_index, r1.argmax_index, "lambda {lambda}");
                let a1 = adaptive_map_test(&scaled, &weights, 0.05).unwrap();
                assert_eq!(a0.decision, a1.decision, "adaptive lambda {lambda}");
                assert_eq!(a0.argmax_index, a1.argmax_index, "adaptive lambda {lambda}");
            }
        }
    }

    #[test]
    fn prior_truncation_is_reported() {
        let field = null_field(5, 12);
        let prior = omega_nu_prior(64.0, nu_uniform, 128).unwrap();
        let rep = multilevel_map_test(&field, &prior, 0.05).unwrap();
        assert!((rep.discarded_prior_mass - 59.0 / 64.0).abs() < 1e-9);
        assert_eq!(rep.per_level.len(), 5);
        let weights = adaptive_weights(1, 0.1, 1024).unwrap();
        let rep = adaptive_map_test(&field, &weights, 0.05).unwrap();
        // adaptive mass on 5 levels is small; the rest is reported
        let kept: f64 = (1..=5).map(|k| weights.weight(k)).sum();
        assert!((rep.discarded_prior_mass - (1.0 - kept)).abs() < 1e-12);
    }

    #[test]
    fn critical_snr_forms() {
        let q = exp_sup_quantile(0.05).unwrap();
        // R with H = log omega coincides with the log-omega form
        let omega: f64 = 64.0;
        let r1 = critical_snr(SnrKind::WithEntropy, 7, q, omega.ln()).unwrap();
        let r2 = critical_snr(SnrKind::WithLogOmega, 7, q, omega).unwrap();
        assert!((r1 - r2).abs() < 1e-12);
        // adaptive adds exactly log log omega
        let r3 = critical_snr(SnrKind::Adaptive, 7, q, omega).unwrap();
        assert!((r3 - r2 - omega.ln().ln()).abs() < 1e-12);
        // independent coding of the same expression
        let level = 11u32;
        let h = 64f64.ln();
        let m = q + ((level - 1) as f64) * std::f64::consts::LN_2 + h;
        let independent = m + m - (4.0 * std::f64::consts::PI).ln() - m.ln();
        let got = critical_snr(SnrKind::WithEntropy, level, q, h).unwrap();
        assert!((got - independent).abs() < 1e-12);
        // domain guard: strongly negative q makes the inner log argument die
        assert!(critical_snr(SnrKind::WithEntropy, 1, -10.0, 1.0).is_err());
        assert!(critical_snr(SnrKind::WithLogOmega, 3, q, 0.5).is_err());
    }
}
