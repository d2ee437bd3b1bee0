//! Config-driven Monte Carlo harness and CLI backend.
//!
//! Experiments are described by a flat `key=value` text config (one pair per
//! line, `#` comments); the CLI flags `--seed`, `--reps`, `--alpha`, `--out`,
//! `--cache` override the corresponding keys. Every produced file embeds the
//! effective config, the library version, and any calibration keys used as
//! `#`-prefixed metadata lines, and is a pure function of the config — same
//! config, byte-identical output.
//!
//! Experiments:
//!
//! * `calibrate` — compute a critical value and append it to the cache;
//! * `test` — full pipeline on a signal file or generator: samples ->
//!   estimators -> chosen test -> serialized report;
//! * `figure1` — log-tail approximation error of the level average against
//!   the series limit;
//! * `figure2` — exact vs smooth adaptive penalties;
//! * `type1` — measured type I error of a configured test under the null;
//! * `power` — planted-spike power sweep around the critical SNR.

mod figures;
mod power;
mod runtest;

pub use figures::{run_figure1, run_figure2};
pub use power::{run_power, PowerConfig, PowerPoint, PowerTests};
pub use runtest::{run_test, serialize_report, TestKind, TestRunner};

use crate::null_dists::{calibrate, zeta_circ_drift, CalibKind, CalibrationTable};
use crate::priors::{adaptive_weights, nu_uniform, omega_nu_prior, AdaptiveWeights, PriorOnLevels};
use crate::rng::child_seed;
use crate::testing::Decision;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Which experiment a config describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Calibrate,
    Test,
    Figure1,
    Figure2,
    Type1,
    Power,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "calibrate" => Ok(Self::Calibrate),
            "test" => Ok(Self::Test),
            "figure1" => Ok(Self::Figure1),
            "figure2" => Ok(Self::Figure2),
            "type1" => Ok(Self::Type1),
            "power" => Ok(Self::Power),
            other => Err(Error::Parse(format!("unknown experiment `{other}`"))),
        }
    }
}

/// Keys the config parser accepts; anything else is a hard error so typos
/// cannot silently fall back to defaults.
const KNOWN_KEYS: &[&str] = &[
    "experiment", "seed", "reps", "alpha", "out", "cache",
    "sigma", "j", "max_level",
    "prior", "test", "kind", "n",
    "n_h_list", "zeta_k", "min_exceedances", "tail_fraction", "grid_points",
    "m_list", "eps", "k_max",
    "omega", "offsets", "raise_by_loglog", "exact_cutoff", "zeta_k_deep", "tests",
    "signal", "generator", "slope", "dip_center", "dip_width", "dip_depth",
];

/// A parsed flat `key=value` configuration.
#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Parse config text: one `key = value` per line, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key=value, got `{line}`", lineno + 1))
            })?;
            let key = key.trim().to_ascii_lowercase();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Parse(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(ExperimentConfig { values })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Parse(format!("missing required config key `{key}`")))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => {
                v.parse::<u64>().map_err(|_| Error::Parse(format!("key `{key}`: bad integer `{v}`")))
            }
        }
    }

    pub fn require_u64(&self, key: &str) -> Result<u64> {
        self.require(key)?
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("key `{key}` must be an integer")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => {
                v.parse::<f64>().map_err(|_| Error::Parse(format!("key `{key}`: bad number `{v}`")))
            }
        }
    }

    pub fn u32_or(&self, key: &str, default: u32) -> Result<u32> {
        Ok(self.u64_or(key, default as u64)? as u32)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(Error::Parse(format!("key `{key}`: bad bool `{v}`"))),
        }
    }

    /// Replication count, falling back to the experiment's default.
    pub fn reps_or(&self, default: u64) -> Result<u64> {
        let reps = self.u64_or("reps", default)?;
        if reps < 1 {
            return Err(Error::Parse("reps must be >= 1".into()));
        }
        Ok(reps)
    }

    /// Seeds are mandatory: no wall-clock fallback anywhere.
    pub fn seed(&self) -> Result<u64> {
        self.require_u64("seed")
    }

    pub fn alpha_or(&self, default: f64) -> Result<f64> {
        let a = self.f64_or("alpha", default)?;
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Parse(format!("alpha must be in (0,1), got {a}")));
        }
        Ok(a)
    }

    pub fn experiment(&self) -> Result<ExperimentKind> {
        ExperimentKind::parse(self.require("experiment")?)
    }

    pub fn out_path(&self) -> Option<PathBuf> {
        self.get("out").map(PathBuf::from)
    }

    /// Comma-separated integers, e.g. `n_h_list=4,1024`.
    pub fn u64_list_or(&self, key: &str, default: &[u64]) -> Result<Vec<u64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::Parse(format!("key `{key}`: bad integer `{x}`")))
                })
                .collect(),
        }
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("key `{key}`: bad number `{x}`")))
                })
                .collect(),
        }
    }

    /// Parse the `prior` key: `uniform:<levels>`, `omega_nu:<omega>`,
    /// `point:<level>`, or `adaptive:<m>:<eps>`.
    pub fn prior_spec(&self) -> Result<PriorSpec> {
        let raw = self.require("prior")?;
        let parts: Vec<&str> = raw.split(':').collect();
        let bad = || Error::Parse(format!("bad prior spec `{raw}`"));
        match parts.as_slice() {
            ["uniform", levels] => Ok(PriorSpec::Uniform(levels.parse().map_err(|_| bad())?)),
            ["omega_nu", omega] => Ok(PriorSpec::OmegaNu(omega.parse().map_err(|_| bad())?)),
            ["point", level] => Ok(PriorSpec::Point(level.parse().map_err(|_| bad())?)),
            ["adaptive", m, eps] => Ok(PriorSpec::Adaptive(
                m.parse().map_err(|_| bad())?,
                eps.parse().map_err(|_| bad())?,
            )),
            _ => Err(bad()),
        }
    }

    /// The effective configuration as sorted metadata pairs.
    pub fn echo(&self) -> Vec<(String, String)> {
        self.values.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

/// Prior specification from the config surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorSpec {
    Uniform(u32),
    OmegaNu(f64),
    Point(u32),
    Adaptive(u32, f64),
}

impl PriorSpec {
    /// Materialise a proper prior; adaptive specs are improper and must go
    /// through [`PriorSpec::adaptive`].
    pub fn proper(&self) -> Result<PriorOnLevels> {
        match self {
            PriorSpec::Uniform(levels) => PriorOnLevels::uniform(*levels),
            PriorSpec::OmegaNu(omega) => {
                let k_max = (omega.ceil() as u32).saturating_mul(4).max(16);
                omega_nu_prior(*omega, nu_uniform, k_max)
            }
            PriorSpec::Point(level) => PriorOnLevels::point_mass(*level),
            PriorSpec::Adaptive(..) => {
                Err(Error::domain("adaptive weighting is improper; use the adaptive test kind"))
            }
        }
    }

    pub fn adaptive(&self, k_max: u32) -> Result<AdaptiveWeights> {
        match self {
            PriorSpec::Adaptive(m, eps) => adaptive_weights(*m, *eps, k_max),
            _ => Err(Error::domain("prior spec is not adaptive")),
        }
    }
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

/// Assemble a CSV document: `#` metadata lines, a header row, data rows.
/// Numbers are rendered with Rust's shortest round-trip formatting, so the
/// bytes are reproducible.
pub struct CsvDoc {
    buf: String,
}

impl CsvDoc {
    pub fn new(
        config: &ExperimentConfig,
        extra_meta: &[(String, String)],
        header: &[&str],
    ) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, "# monotest v{}", crate::VERSION);
        for (k, v) in config.echo() {
            let _ = writeln!(buf, "# config {k} = {v}");
        }
        for (k, v) in extra_meta {
            let _ = writeln!(buf, "# {k} = {v}");
        }
        let _ = writeln!(buf, "{}", header.join(","));
        CsvDoc { buf }
    }

    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.buf, "{}", cells.join(","));
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Write `content` to the config's `out` path, or to stdout when absent.
pub fn emit(config: &ExperimentConfig, content: &str) -> Result<()> {
    match config.out_path() {
        Some(path) => {
            std::fs::write(path, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------------------
// calibrate and type1 runners
// ---------------------------------------------------------------------------

/// Run the `calibrate` experiment: compute (or reuse) an entry, persist it
/// when a cache is configured, and return a one-record CSV document.
pub fn run_calibrate(config: &ExperimentConfig) -> Result<String> {
    let kind = CalibKind::parse(config.require("kind")?)?;
    let default_n = match kind {
        // deep default truncation for the series quantile
        CalibKind::ZetaCirc => 1_000_000,
        _ => 0,
    };
    let n = config.u64_or("n", default_n)?;
    if n == 0 && matches!(kind, CalibKind::BayesSingle | CalibKind::MapSingle) {
        return Err(Error::Parse(format!("kind {kind} requires n (= n_h)")));
    }
    let alpha = config.alpha_or(0.05)?;
    let reps = config.reps_or(400_000)?;
    let seed = config.seed()?;

    let mut table = match config.get("cache") {
        Some(path) => CalibrationTable::load(path)?,
        None => CalibrationTable::in_memory(),
    };
    // exact-key reuse: identical (kind, n, alpha, reps, seed) is not recomputed
    let existing = table
        .entries()
        .iter()
        .find(|e| {
            e.kind == kind && e.n_param == n && e.alpha == alpha && e.reps == reps && e.seed == seed
        })
        .cloned();
    let (entry, reused) = match existing {
        Some(e) => (e, true),
        None => {
            let e = calibrate(kind, n, alpha, reps, seed)?;
            table.append(e.clone())?;
            (e, false)
        }
    };

    let mut meta = vec![("reused".to_string(), reused.to_string())];
    if kind == CalibKind::ZetaCirc && n >= 1000 && reps as f64 * alpha >= 100.0 {
        // self-convergence diagnostic between K/100 and K
        let drift = zeta_circ_drift(n, alpha, reps.min(100_000), child_seed(seed, 0xd21f7))?;
        meta.push(("zeta_truncation_drift_k100_to_k".to_string(), fmt_f64(drift)));
    }
    let mut doc =
        CsvDoc::new(config, &meta, &["kind", "n", "alpha", "reps", "seed", "value", "mc_stderr"]);
    doc.row(&[
        entry.kind.to_string(),
        entry.n_param.to_string(),
        fmt_f64(entry.alpha),
        entry.reps.to_string(),
        entry.seed.to_string(),
        fmt_f64(entry.value),
        fmt_f64(entry.mc_stderr),
    ]);
    Ok(doc.finish())
}

/// Measured type I error of the configured test on null fields.
pub fn run_type1(config: &ExperimentConfig) -> Result<String> {
    use rayon::prelude::*;
    let alpha = config.alpha_or(0.05)?;
    let reps = config.reps_or(10_000)?;
    let seed = config.seed()?;
    let kind = TestKind::parse(config.require("test")?)?;
    let prior_spec = config.prior_spec()?;
    let max_level = match (config.get("max_level"), &prior_spec) {
        (Some(_), _) => config.u32_or("max_level", 8)?,
        (None, PriorSpec::Uniform(l)) => *l,
        (None, PriorSpec::Point(l)) => *l,
        (None, _) => 8,
    };
    let calib = match config.get("cache") {
        Some(path) => CalibrationTable::load(path)?,
        None => CalibrationTable::in_memory(),
    };
    let truth = crate::haar_model::CoefficientField::zero(max_level, 1.0)?;
    let runner = TestRunner::build(kind, &prior_spec, max_level, alpha, &calib)?;
    let rejections = (0..reps)
        .into_par_iter()
        .map(|r| {
            let field = crate::haar_model::simulate_observation(&truth, child_seed(seed, r));
            match runner.run(&field) {
                Ok(rep) => u64::from(rep.decision == Decision::RejectH0),
                Err(_) => 0,
            }
        })
        .sum::<u64>();
    let rate = rejections as f64 / reps as f64;
    let se = (rate * (1.0 - rate) / reps as f64).sqrt();
    let meta = vec![
        ("asymptotic_calibration_slack".to_string(), fmt_f64(rate - alpha)),
        ("calibration_keys".to_string(), runner.calibration_key().unwrap_or_default()),
    ];
    let mut doc =
        CsvDoc::new(config, &meta, &["test", "alpha", "reps", "rejections", "rate", "binomial_se"]);
    doc.row(&[
        config.require("test")?.to_string(),
        fmt_f64(alpha),
        reps.to_string(),
        rejections.to_string(),
        fmt_f64(rate),
        fmt_f64(se),
    ]);
    Ok(doc.finish())
}

/// Dispatch a parsed config to its runner; returns the rendered output and,
/// for the `test` experiment, the decision (for the exit code).
pub fn run(config: &ExperimentConfig) -> Result<(String, Option<Decision>)> {
    match config.experiment()? {
        ExperimentKind::Calibrate => Ok((run_calibrate(config)?, None)),
        ExperimentKind::Figure1 => Ok((run_figure1(config)?, None)),
        ExperimentKind::Figure2 => Ok((run_figure2(config)?, None)),
        ExperimentKind::Type1 => Ok((run_type1(config)?, None)),
        ExperimentKind::Power => Ok((power::run_power_config(config)?, None)),
        ExperimentKind::Test => {
            let (text, decision) = run_test(config)?;
            Ok((text, Some(decision)))
        }
    }
}
