//! Monotonicity testing in the Gaussian white-noise model.
//!
//! A function observed in white noise is reduced, through Haar-type local
//! averages on a dyadic bandwidth/grid system, to the problem of testing
//! positivity of the coefficients `theta_{h,t}`. This crate implements the
//! full pipeline:
//!
//! * [`gauss_num`] — numerically robust Gaussian-tail primitives: `Phi`,
//!   `log Phi`, the score `S(x) = 1/Phi(x) - 1` in log domain, and the
//!   inverse map `R(z)` solving `S(-sqrt(R)) = z`;
//! * [`haar_model`] — signals on `[0,1]`, the local-average functionals and
//!   their estimators over the dyadic system, and white-noise simulation;
//! * [`null_dists`] — exact simulators of the null laws (the level average
//!   `B`, the centered series `zeta_circ`, uniform order statistics, the
//!   exponential-max law) and persistent critical-value calibration;
//! * [`priors`] — level priors over dyadic bandwidths, entropy bookkeeping,
//!   and the adaptive improper weighting built from iterated logarithms;
//! * [`testing`] — the decision procedures: single-level simple/Bayes/MAP/ML,
//!   multi-level MAP and Bayes, and the adaptive MAP test;
//! * [`experiments`] — a config-driven CLI and Monte Carlo harness for
//!   calibration tables, figure data, type I/II error sweeps, and end-to-end
//!   testing of signals.
//!
//! All simulation is deterministic given an explicit seed; Monte Carlo
//! batches are replication-parallel with per-chunk derived streams, so the
//! output does not depend on thread scheduling.

pub mod empirical;
pub mod experiments;
pub mod gauss_num;
pub mod haar_model;
pub mod null_dists;
pub mod priors;
pub mod rng;
pub mod testing;

/// Crate version, embedded in experiment output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument was outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A requested critical value is not in the calibration cache.
    #[error("missing calibration entry: {0}\ngenerate it with: {1}")]
    MissingCalibration(String, String),
    /// Prior truncation would discard too much mass.
    #[error("prior truncation at k_max={k_max} keeps only {kept_mass} of the mass")]
    TruncationMass { k_max: u32, kept_mass: f64 },
    /// Monte Carlo quantile estimation is not feasible at the requested level.
    #[error("estimability guard: reps*alpha = {0} < 100; {1}")]
    Estimability(f64, String),
    /// Malformed input (config, signal file, or cache record).
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
