//! Gaussian-tail primitives: `Phi`, `log Phi`, the score
//! `S(x) = 1/Phi(x) - 1` carried in log domain, its asymptotic expansion,
//! and the inverse map `R(z)` solving `S(-sqrt(R)) = z`.
//!
//! All score arithmetic stays in log domain: `S(-37)` is around `e^690`,
//! far beyond `f64`. Linear-domain values are exposed only as `exp(log_s)`,
//! which saturates to `+inf` once `log_s` exceeds ~709.8.

use crate::{Error, Result};
use std::f64::consts::PI;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8; // ln(sqrt(2*pi))
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Below this point `log Phi` switches to the asymptotic tail series; the
/// rational erfc evaluation stays accurate through the whole `|x| <= 37`
/// range the calibration code uses.
const TAIL_SWITCH: f64 = -37.0;

// ---------------------------------------------------------------------------
// erfc: port of the FDLIBM/SunPro rational evaluation (also used, in the same
// form, by the Go and Node runtimes). Relative accuracy is ~1 ulp over the
// ranges below; the hi/lo split of x*x keeps the tail exponential accurate.
// ---------------------------------------------------------------------------

#[rustfmt::skip]
mod erf_coeff {
    pub const PP: [f64; 5] = [
        1.28379167095512558561e-01, -3.25042107247001499370e-01,
        -2.84817495755985104766e-02, -5.77027029648944159157e-03,
        -2.37630166566501626084e-05,
    ];
    pub const QQ: [f64; 5] = [
        3.97917223959155352819e-01, 6.50222499887672944485e-02,
        5.08130628187576562776e-03, 1.32494738004321644526e-04,
        -3.96022827877536812320e-06,
    ];
    pub const ERX: f64 = 8.45062911510467529297e-01;
    pub const PA: [f64; 7] = [
        -2.36211856075265944077e-03, 4.14856118683748331666e-01,
        -3.72207876035701323847e-01, 3.18346619901161753674e-01,
        -1.10894694282396677476e-01, 3.54783043256182359371e-02,
        -2.16637559486879084300e-03,
    ];
    pub const QA: [f64; 6] = [
        1.06420880400844228286e-01, 5.40397917702171048937e-01,
        7.18286544141962662868e-02, 1.26171219808761642112e-01,
        1.36370839120290507362e-02, 1.19844998467991074170e-02,
    ];
    pub const RA: [f64; 8] = [
        -9.86494403484714822705e-03, -6.93858572707181764372e-01,
        -1.05586262253232909814e+01, -6.23753324503260060396e+01,
        -1.62396669462573470355e+02, -1.84605092906711035994e+02,
        -8.12874355063065934246e+01, -9.81432934416914548592e+00,
    ];
    pub const SA: [f64; 8] = [
        1.96512716674392571292e+01, 1.37657754143519042600e+02,
        4.34565877475229228821e+02, 6.45387271733267880336e+02,
        4.29008140027567833386e+02, 1.08635005541779435134e+02,
        6.57024977031928170135e+00, -6.04244152148580987438e-02,
    ];
    pub const RB: [f64; 7] = [
        -9.86494292470009928597e-03, -7.99283237680523006574e-01,
        -1.77579549177547519889e+01, -1.60636384855821916062e+02,
        -6.37566443368389627722e+02, -1.02509513161107724954e+03,
        -4.83519191608651397019e+02,
    ];
    pub const SB: [f64; 7] = [
        3.03380607434824582924e+01, 3.25792512996573918826e+02,
        1.53672958608443695994e+03, 3.19985821950859553908e+03,
        2.55305040643316442583e+03, 4.74528541206955367215e+02,
        -2.24409524465858183362e+01,
    ];
}

fn poly(z: f64, c: &[f64]) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * z + a)
}

/// Complementary error function, accurate in relative terms through the
/// deep tail (up to where it underflows near `x = 27.2`).
pub fn erfc(x: f64) -> f64 {
    use erf_coeff::*;
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    if ax < 0.84375 {
        if ax < 3.7e-17 {
            return 1.0 - x;
        }
        let z = x * x;
        let r = poly(z, &PP);
        let s = 1.0 + z * poly(z, &QQ);
        let y = r / s;
        return if x < 0.25 {
            1.0 - (x + x * y)
        } else {
            0.5 - (x * y + (x - 0.5))
        };
    }
    if ax < 1.25 {
        let s = ax - 1.0;
        let p = poly(s, &PA);
        let q = 1.0 + s * poly(s, &QA);
        return if x >= 0.0 {
            1.0 - ERX - p / q
        } else {
            1.0 + ERX + p / q
        };
    }
    if ax < 28.0 {
        let s = 1.0 / (ax * ax);
        let (r, big_s) = if ax < 1.0 / 0.35 {
            (poly(s, &RA), 1.0 + s * poly(s, &SA))
        } else {
            (poly(s, &RB), 1.0 + s * poly(s, &SB))
        };
        // split ax*ax into an exact head plus correction so the exponent is
        // computed to full precision
        let z = f64::from_bits(ax.to_bits() & 0xffff_ffff_0000_0000);
        let r = (-z * z - 0.5625).exp() * ((z - ax) * (z + ax) + r / big_s).exp();
        return if x >= 0.0 { r / ax } else { 2.0 - r / ax };
    }
    if x >= 0.0 {
        0.0
    } else {
        2.0
    }
}

/// Standard normal density in log form.
pub fn log_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF `Phi(x)` via the complementary error function.
///
/// The smaller of `Phi(x)` and `1 - Phi(x)` carries relative accuracy better
/// than `1e-12` over `|x| <= 37`; query the small side directly as
/// `normal_cdf(-|x|)` rather than subtracting from one.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `log Phi(x)`, finite for every finite `x`.
///
/// For `x >= 0` it is computed as `ln(1 - Phi(-x))`, preserving the tiny
/// negative values near zero; for `x < -37` an asymptotic tail series takes
/// over (relative error of the dominant term well under `1e-8`).
pub fn log_normal_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        (-normal_cdf(-x)).ln_1p()
    } else if x >= TAIL_SWITCH {
        normal_cdf(x).ln()
    } else {
        // log Phi(x) = -x^2/2 - ln(-x) - ln sqrt(2 pi) + ln(1 - 1/x^2 + 3/x^4 - ...)
        let z = 1.0 / (x * x);
        let series = -z * (1.0 - z * (3.0 - z * (15.0 - z * 105.0)));
        -0.5 * x * x - (-x).ln() - LN_SQRT_2PI + series.ln_1p()
    }
}

/// The score `S(x) = 1/Phi(x) - 1` kept as its natural logarithm.
///
/// `log_s` is finite and strictly decreasing over all finite `x`; the linear
/// value is available as [`ScoreValue::value`], which saturates to `+inf`
/// once `log_s` exceeds the representable range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreValue {
    pub log_s: f64,
}

impl ScoreValue {
    /// Linear-domain `S`, saturating to `+inf` for `log_s > ~709.8`.
    pub fn value(self) -> f64 {
        self.log_s.exp()
    }
}

/// Score of `x`: `log S(x) = log Phi(-x) - log Phi(x)`.
pub fn score(x: f64) -> ScoreValue {
    ScoreValue {
        log_s: log_normal_cdf(-x) - log_normal_cdf(x),
    }
}

/// One-sided expansion `S(x) ~ sqrt(2 pi) (1 - x) exp(x^2 / 2)` for
/// `x -> -inf`, returned in log form.
///
/// The relative error against [`score`] shrinks as `x -> -inf` (observed to
/// decay like `1/|x|`, about 14% at `x = -5` and 3% at `x = -30`); near zero
/// the expansion is returned but carries no accuracy guarantee (at `x = -1`
/// it is already off by tens of percent).
pub fn score_asymptotic(x: f64) -> Result<ScoreValue> {
    if x >= 0.0 {
        return Err(Error::domain(format!(
            "score_asymptotic requires x < 0 (one-sided expansion), got {x}"
        )));
    }
    Ok(ScoreValue {
        log_s: 0.5 * x * x + LN_SQRT_2PI + (1.0 - x).ln(),
    })
}

/// Derivative of `r -> log S(-r)`, used by the Newton polish below.
fn dlogs_neg(r: f64) -> f64 {
    // d/dr log S(-r) = phi(r)/Phi(r) + phi(r)/Phi(-r)
    let lpdf = log_normal_pdf(r);
    (lpdf - log_normal_cdf(r)).exp() + (lpdf - log_normal_cdf(-r)).exp()
}

/// Root `R(z) >= 0` of `S(-sqrt(R)) = z`, for `z >= S(0) = 1`.
///
/// Bisection on `sqrt(R)` over `[0, 40]` down to `1e-12`, then two Newton
/// steps; the returned root satisfies `|S(-sqrt(R)) - z| / z <= 1e-10`.
/// For large `z` it approaches `2 log z - log(4 pi log z)`.
pub fn critical_snr_root(z: f64) -> Result<f64> {
    if !(z >= 1.0) {
        return Err(Error::domain(format!(
            "critical_snr_root requires z >= 1 (S(0) = 1), got {z}"
        )));
    }
    let target = z.ln();
    let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
    if score(-hi).log_s < target {
        return Err(Error::domain(format!(
            "z = {z} exceeds S(-40); root search bracket [0, 40] on sqrt(R) too small"
        )));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if score(-mid).log_s < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..2 {
        let g = score(-r).log_s - target;
        let d = dlogs_neg(r);
        if d > 0.0 {
            r = (r - g / d).clamp(0.0, 40.0);
        }
    }
    Ok(r * r)
}

/// Standard normal quantile: the solution of `Phi(x) = p` for `p` in (0,1).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("normal_quantile requires p in (0,1), got {p}")));
    }
    let lp = p.ln();
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if log_normal_cdf(mid) < lp {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..2 {
        // Newton on log Phi(x) - log p, derivative phi/Phi in log form
        let g = log_normal_cdf(x) - lp;
        let d = (log_normal_pdf(x) - log_normal_cdf(x)).exp();
        if d > 0.0 {
            x -= g / d;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Test-only oracle for the normal distribution, independent of the
    /// rational erfc path: a convergent central series for moderate `x` and
    /// the Laplace continued fraction for the Mills ratio in the tail.
    mod oracle {
        use super::{log_normal_pdf, LN_SQRT_2PI};

        /// Phi(x) for |x| < 3 via Phi(x) = 1/2 + phi(x) * sum x^(2k+1)/(2k+1)!!
        fn phi_central(x: f64) -> f64 {
            let mut term = x;
            let mut sum = x;
            let mut k = 0u32;
            while term.abs() > 1e-22 * sum.abs().max(1.0) && k < 200 {
                k += 1;
                term *= x * x / (2 * k + 1) as f64;
                sum += term;
            }
            0.5 + (log_normal_pdf(x)).exp() * sum
        }

        /// Upper tail 1 - Phi(x), x >= 3, via the Laplace continued fraction
        /// for the Mills ratio: (1-Phi(x))/phi(x) = 1/(x + 1/(x + 2/(x + ...))).
        fn upper_tail_cf(x: f64) -> f64 {
            let mut cf = 0.0;
            for k in (1..=200u32).rev() {
                cf = k as f64 / (x + cf);
            }
            (log_normal_pdf(x)).exp() / (x + cf)
        }

        pub fn phi(x: f64) -> f64 {
            if x <= -3.0 {
                upper_tail_cf(-x)
            } else if x >= 3.0 {
                1.0 - upper_tail_cf(x)
            } else {
                phi_central(x)
            }
        }

        /// Stated asymptotic tail oracle phi(x)/x * (1 - 1/x^2 + 3/x^4 - ...).
        pub fn upper_tail_asymptotic(x: f64) -> f64 {
            assert!(x >= 10.0);
            let z = 1.0 / (x * x);
            let series =
                1.0 - z * (1.0 - z * (3.0 - z * (15.0 - z * (105.0 - z * 945.0))));
            (-0.5 * x * x - LN_SQRT_2PI).exp() / x * series
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn cdf_at_zero_is_half() {
        assert_eq!(normal_cdf(0.0), 0.5);
    }

    #[test]
    fn cdf_matches_quantile_oracle_at_five_percent() {
        // frozen from the oracle: Phi(q) = 0.05 at q = -1.6448536269514722 (ulp-rounded)
        let q = -1.6448536269514722;
        assert!(rel_err(oracle::phi(q), 0.05) < 1e-13);
        assert!(rel_err(normal_cdf(q), 0.05) < 1e-12);
    }

    #[test]
    fn cdf_small_side_relative_accuracy() {
        // spot checks of the small tail against the independent oracle
        for &x in &[-0.5, -1.0, -1.5, -2.0, -3.0, -5.0, -8.0, -12.0, -20.0, -30.0, -37.0] {
            let got = normal_cdf(x);
            let want = oracle::phi(x);
            assert!(
                rel_err(got, want) < 1e-12,
                "x = {x}: got {got:e}, oracle {want:e}"
            );
        }
        // frozen oracle value at x = -3
        assert!(rel_err(normal_cdf(-3.0), 1.349_898_031_630_094_5e-3) < 1e-12);
    }

    #[test]
    fn deep_tail_positive_and_matches_asymptotic_oracle() {
        // 1 - Phi(37) is ~5.6e-300: representable and relatively accurate
        let tail = normal_cdf(-37.0);
        assert!(tail > 0.0);
        assert!(rel_err(tail, oracle::upper_tail_asymptotic(37.0)) < 1e-12);
    }

    #[test]
    fn log_cdf_examples() {
        assert!((log_normal_cdf(0.0) - 0.5f64.ln()).abs() < 1e-15);
        // frozen from the oracle: log Phi(-10)
        assert!((log_normal_cdf(-10.0) - (-53.231_285_150_512_47)).abs() < 1e-10);
        // log Phi(10) ~ -(1 - Phi(10)), a tiny negative number
        let want = -oracle::phi(-10.0);
        let got = log_normal_cdf(10.0);
        assert!(got < 0.0);
        assert!(rel_err(got, want) < 1e-10);
    }

    #[test]
    fn log_cdf_tail_series_is_continuous_at_switch() {
        let a = log_normal_cdf(-36.999_999_9);
        let b = log_normal_cdf(-37.000_000_1);
        assert!((a - b).abs() < 1e-6 * a.abs());
        // and against the direct erfc value just inside the rational range
        assert!((log_normal_cdf(-37.0) - normal_cdf(-37.0).ln()).abs() < 1e-9);
    }

    #[test]
    fn score_examples() {
        assert_eq!(score(0.0).log_s, 0.0);
        // oracle: S(-3) = 1/Phi(-3) - 1
        let s3 = score(-3.0).value();
        assert!(rel_err(s3, 739.796_694_689_917_7) < 1e-10);
        // S(8) is essentially 1 - Phi(8): log_s ~ log of the upper tail
        let want = oracle::phi(-8.0).ln();
        assert!((score(8.0).log_s - want).abs() < 1e-9);
    }

    #[test]
    fn score_is_strictly_decreasing_on_grid() {
        let n = 10_000;
        let mut prev = f64::INFINITY;
        for i in 0..=n {
            let x = -37.0 + 74.0 * i as f64 / n as f64;
            let ls = score(x).log_s;
            assert!(ls.is_finite(), "log_s not finite at x = {x}");
            assert!(ls < prev, "not strictly decreasing at x = {x}");
            prev = ls;
        }
    }

    #[test]
    fn asymptotic_matches_score_in_the_left_tail() {
        // relative error (in S) of the expansion at -5 is below 4/25
        let exact = score(-5.0).log_s;
        let approx = score_asymptotic(-5.0).unwrap().log_s;
        assert!(((approx - exact).exp() - 1.0).abs() < 4.0 / 25.0);
        // |delta log_s| * x^2 stays bounded over [-30, -5]; the measured sup
        // is ~28.5 at the -30 endpoint (the log gap itself decays ~ 1/|x|)
        let mut max_scaled = 0.0f64;
        for i in 0..=250 {
            let x = -30.0 + 25.0 * i as f64 / 250.0;
            let d = (score_asymptotic(x).unwrap().log_s - score(x).log_s).abs();
            max_scaled = max_scaled.max(d * x * x);
        }
        assert!(max_scaled < 30.0, "scaled asymptotic error {max_scaled}");
        // at -20 the relative error has shrunk well below the -5 value
        let r20 = ((score_asymptotic(-20.0).unwrap().log_s - score(-20.0).log_s).exp() - 1.0).abs();
        assert!(r20 < 0.05, "relative error at -20: {r20}");
        // the expansion is defined but inaccurate at -1, and rejected at 0
        assert!(score_asymptotic(-1.0).is_ok());
        assert!(score_asymptotic(0.0).is_err());
    }

    #[test]
    fn tail_stability_at_minus_37() {
        let ls = score(-37.0).log_s;
        assert!(ls.is_finite());
        let reference = 37.0f64 * 37.0 / 2.0 + ((2.0 * PI).sqrt() * 38.0).ln();
        assert!(rel_err(ls, reference) < 1e-3);
    }

    #[test]
    fn snr_root_examples() {
        assert!(critical_snr_root(1.0).unwrap().abs() < 1e-9);
        // z = e^10: root vs the 2 log z - log(4 pi log z) expansion
        let r10 = critical_snr_root(10f64.exp()).unwrap();
        let e10 = 2.0 * 10.0 - (4.0 * PI * 10.0).ln();
        assert!((r10 - e10).abs() < 0.5, "gap {}", r10 - e10);
        let r30 = critical_snr_root(30f64.exp()).unwrap();
        let e30 = 2.0 * 30.0 - (4.0 * PI * 30.0).ln();
        assert!((r30 - e30).abs() < (r10 - e10).abs());
        assert!(critical_snr_root(0.5).is_err());
    }

    #[test]
    fn snr_root_round_trip_over_log_grid() {
        for i in 0..=80 {
            let lnz = 40.0 * i as f64 / 80.0;
            let r = critical_snr_root(lnz.exp()).unwrap();
            let back = score(-r.sqrt()).log_s;
            assert!(
                (back - lnz).abs() <= 1e-8 * lnz.max(1.0),
                "round trip failed at ln z = {lnz}: got {back}"
            );
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-7, 0.05, 0.3, 0.5, 0.9, 1.0 - 1e-7] {
            let x = normal_quantile(p).unwrap();
            assert!(rel_err(normal_cdf(x), p) < 1e-9, "p = {p}");
        }
        assert!((normal_quantile(0.95).unwrap() - 1.6448536269514722).abs() < 1e-9);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }
}
