//! Figure-data runners: the log-tail approximation error of the level
//! average against its series limit, and the exact/smooth adaptive
//! penalties.

use super::{fmt_f64, CsvDoc, ExperimentConfig};
use crate::empirical::exceedances_sorted;
use crate::null_dists::{simulate_b_null, simulate_zeta_circ};
use crate::priors::{adaptive_weights, iterated_log};
use crate::rng::child_seed;
use crate::{Error, Result, EULER_GAMMA};

/// Log-tail approximation error data.
///
/// For each `n_h` in `n_h_list`, draws `reps` replications of
/// `B - log n_h + gamma` and, independently, of `zeta_circ(K) + 2 gamma - 1`,
/// then tabulates both empirical log-tails and their difference `Delta(x)` on
/// a common grid.
///
/// Grid rule (the quantity plotted is a log-*tail* error, so the grid lives
/// in the tail): evaluation points are the `B`-sample order statistics whose
/// exceedance counts run geometrically from `reps * tail_fraction` (default
/// 1%) down to `min_exceedances` (default 100), and a point is emitted only
/// while both samples keep at least `min_exceedances` exceedances. The
/// delta-method band `se = sqrt((1-p_b)/(reps p_b) + (1-p_z)/(reps p_z))` is
/// emitted per point.
pub fn run_figure1(config: &ExperimentConfig) -> Result<String> {
    let seed = config.seed()?;
    let reps = config.reps_or(500_000)? as usize;
    let n_h_list = config.u64_list_or("n_h_list", &[4, 1024])?;
    let zeta_k = config.u64_or("zeta_k", 10_000)?;
    let min_exc = config.u64_or("min_exceedances", 100)? as usize;
    let tail_fraction = config.f64_or("tail_fraction", 0.01)?;
    let grid_points = config.u64_or("grid_points", 40)? as usize;
    if !(tail_fraction > 0.0 && tail_fraction <= 0.5) {
        return Err(Error::Parse("tail_fraction must be in (0, 0.5]".into()));
    }
    if reps * 2 < min_exc * 100 {
        // the grid collapses if the tail cannot hold min_exceedances
        return Err(Error::Parse(format!(
            "reps = {reps} too small for min_exceedances = {min_exc}"
        )));
    }

    let meta = vec![(
        "grid_rule".to_string(),
        format!(
            "exceedance counts geometric from {} down to {min_exc} on the B sample; \
             points dropped once either sample has fewer than {min_exc} exceedances",
            ((reps as f64 * tail_fraction) as usize).max(min_exc)
        ),
    )];
    let mut doc = CsvDoc::new(
        config,
        &meta,
        &[
            "n_h",
            "x",
            "log_tail_b",
            "log_tail_zeta",
            "delta",
            "joint_se",
            "band3",
            "count_b",
            "count_zeta",
        ],
    );

    for (i, &n_h) in n_h_list.iter().enumerate() {
        let shift = -(n_h as f64).ln() + EULER_GAMMA;
        let mut b = simulate_b_null(n_h, reps, child_seed(seed, 2 * i as u64))?;
        for v in b.iter_mut() {
            *v += shift;
        }
        let mut z = simulate_zeta_circ(zeta_k, reps, child_seed(seed, 2 * i as u64 + 1))?;
        for v in z.iter_mut() {
            *v += 2.0 * EULER_GAMMA - 1.0;
        }
        b.sort_by(|a, c| a.partial_cmp(c).expect("finite draws"));
        z.sort_by(|a, c| a.partial_cmp(c).expect("finite draws"));

        let c_hi = ((reps as f64 * tail_fraction) as usize).max(min_exc);
        let ratio = (c_hi as f64 / min_exc as f64).powf(1.0 / (grid_points.max(2) - 1) as f64);
        let mut prev_count = usize::MAX;
        for g in 0..grid_points {
            let count = ((c_hi as f64) / ratio.powi(g as i32)).round() as usize;
            let count = count.clamp(min_exc, reps);
            if count == prev_count {
                continue;
            }
            prev_count = count;
            let x = b[reps - count];
            let cb = exceedances_sorted(&b, x);
            let cz = exceedances_sorted(&z, x);
            if cb < min_exc || cz < min_exc {
                continue;
            }
            let pb = cb as f64 / reps as f64;
            let pz = cz as f64 / reps as f64;
            let se = ((1.0 - pb) / (reps as f64 * pb) + (1.0 - pz) / (reps as f64 * pz)).sqrt();
            let delta = pb.ln() - pz.ln();
            doc.row(&[
                n_h.to_string(),
                fmt_f64(x),
                fmt_f64(pb.ln()),
                fmt_f64(pz.ln()),
                fmt_f64(delta),
                fmt_f64(se),
                fmt_f64(3.0 * se),
                cb.to_string(),
                cz.to_string(),
            ]);
        }
    }
    Ok(doc.finish())
}

/// Exact vs smooth adaptive penalties: for each `m` in `m_list` emits
/// `k, L(k), L~(k), Delta(k), psi_m(k)` over `k = 1..=k_max`. Deterministic.
pub fn run_figure2(config: &ExperimentConfig) -> Result<String> {
    let m_list = config.u64_list_or("m_list", &[1, 2])?;
    let eps = config.f64_or("eps", 0.1)?;
    let k_max = config.u32_or("k_max", 10_000)?;
    let mut doc = CsvDoc::new(
        config,
        &[],
        &["m", "k", "l_exact", "l_smooth", "delta", "psi_m"],
    );
    for &m in &m_list {
        let m = m as u32;
        let w = adaptive_weights(m, eps, k_max)?;
        for k in 1..=k_max {
            doc.row(&[
                m.to_string(),
                k.to_string(),
                fmt_f64(w.l_exact(k)),
                fmt_f64(w.l_smooth(k)),
                fmt_f64(w.delta(k)),
                fmt_f64(iterated_log(m, k as f64)?),
            ]);
        }
    }
    Ok(doc.finish())
}
