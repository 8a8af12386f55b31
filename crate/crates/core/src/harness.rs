//! Seeded, parallel Monte Carlo replication engine and the named
//! experiments built on it: the spiked-model gap sweep, eigenvalue
//! deviation frequencies, oracle-risk ratio grids, and convergence to the
//! scaled limit law.
//!
//! Determinism contract: replication `r` always consumes the dedicated
//! counter-mode stream `(base_seed, r)`, results land in a slot vector
//! indexed by `r`, and every reduction is a pairwise sum over that ordered
//! vector — so estimates are bit-identical for any thread count or
//! scheduling order.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::asymptotics::{ks_statistic, limit_law_sample, LimitLaw, LimitLawSpec};
use crate::bounds::{
    empirical_global, erm_delta, spiked_bounds, BoundConstants,
};
use crate::concentration::{left_deviation_bound, right_deviation_bound};
use crate::error::{Error, Result};
use crate::models::{CovModel, ModelKind};
use crate::numeric::{pairwise_mean, std_error};
use crate::risk::{erm_gap, excess_risk, hs_distance_sq, reconstruction_error, Realization};
use crate::sampling::{draw_gaussian_samples, empirical_covariance, RngStream};

/// Configuration of one experiment run. Grids beyond the one an
/// experiment uses are ignored by it; `exact_injection` replaces every
/// sampled covariance by the population covariance (a pipeline null test).
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: CovModel,
    pub n: usize,
    pub d: usize,
    pub replications: usize,
    pub base_seed: u64,
    pub constants: BoundConstants,
    /// Deviation levels or spike heights, strictly increasing.
    pub x_grid: Vec<f64>,
    /// Sample sizes, strictly increasing.
    pub n_grid: Vec<usize>,
    /// Relative deviation levels, strictly increasing.
    pub y_grid: Vec<f64>,
    /// Projection dimensions, strictly increasing.
    pub d_grid: Vec<usize>,
    pub exact_injection: bool,
    /// Retain per-replication values in [`MCResult::values`].
    pub keep_replicates: bool,
}

impl ExperimentConfig {
    pub fn new(model: CovModel, n: usize, d: usize, replications: usize, base_seed: u64) -> Self {
        ExperimentConfig {
            model,
            n,
            d,
            replications,
            base_seed,
            constants: BoundConstants::default(),
            x_grid: Vec::new(),
            n_grid: Vec::new(),
            y_grid: Vec::new(),
            d_grid: Vec::new(),
            exact_injection: false,
            keep_replicates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter(
                "replications must be at least 1".to_string(),
            ));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter(
                "sample size n must be at least 1".to_string(),
            ));
        }
        let p = self.model.p();
        if self.d == 0 || self.d >= p {
            return Err(Error::InvalidParameter(format!(
                "projection dimension d={} must satisfy 1 <= d < p={p}",
                self.d
            )));
        }
        self.constants.validate()?;
        check_increasing_f64(&self.x_grid, "x_grid")?;
        check_increasing_f64(&self.y_grid, "y_grid")?;
        check_increasing_usize(&self.n_grid, "n_grid")?;
        check_increasing_usize(&self.d_grid, "d_grid")?;
        for &d in &self.d_grid {
            if d == 0 || d >= p {
                return Err(Error::InvalidParameter(format!(
                    "d_grid entry {d} must satisfy 1 <= d < p={p}"
                )));
            }
        }
        Ok(())
    }
}

fn check_increasing_f64(grid: &[f64], name: &str) -> Result<()> {
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be strictly increasing, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} must contain finite values"
        )));
    }
    Ok(())
}

fn check_increasing_usize(grid: &[usize], name: &str) -> Result<()> {
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidParameter(format!(
                "{name} must be strictly increasing, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ModelSummary<'a> {
    kind: &'a ModelKind,
    p: usize,
    eigenvalues: &'a [f64],
    identity_basis: bool,
}

impl Serialize for ExperimentConfig {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("ExperimentConfig", 12)?;
        s.serialize_field(
            "model",
            &ModelSummary {
                kind: self.model.kind(),
                p: self.model.p(),
                eigenvalues: self.model.spectrum().values(),
                identity_basis: self.model.has_identity_basis(),
            },
        )?;
        s.serialize_field("n", &self.n)?;
        s.serialize_field("d", &self.d)?;
        s.serialize_field("replications", &self.replications)?;
        s.serialize_field("base_seed", &self.base_seed)?;
        s.serialize_field("constants", &self.constants)?;
        s.serialize_field("x_grid", &self.x_grid)?;
        s.serialize_field("n_grid", &self.n_grid)?;
        s.serialize_field("y_grid", &self.y_grid)?;
        s.serialize_field("d_grid", &self.d_grid)?;
        s.serialize_field("exact_injection", &self.exact_injection)?;
        s.serialize_field("keep_replicates", &self.keep_replicates)?;
        s.end()
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Serialize)]
pub struct MCResult {
    pub estimate: f64,
    pub stderr: f64,
    pub replications: usize,
    pub base_seed: u64,
    /// Per-replication values, retained when the config asks for them.
    pub values: Option<Vec<f64>>,
}

/// Named per-realization functionals the replication engine can average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    /// `⟨Σ, P_{≤d} − P̂_{≤d}⟩`
    ExcessRisk,
    /// `‖P̂_{≤d} − P_{≤d}‖₂²`
    HsSq,
    /// `⟨Δ, P_{≤d} − P̂_{≤d}⟩`
    ErmGap,
    /// The per-realization min-form bound driven by `‖Δ‖₂`.
    ErmDelta,
    /// `Σ_{j≤d} ‖P_{≥j} Δ P_{≥j}‖_∞`
    EmpiricalGlobal,
    /// `⟨Σ, I − P̂_{≤d}⟩`
    Reconstruction,
    /// Indicator of `{λ̂_{d+1} − λ_{d+1} > x}`.
    EventUpper(f64),
    /// Indicator of `{λ̂_d − λ_d < −x}`.
    EventLower(f64),
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_level = |rest: &str| -> Result<f64> {
            let x: f64 = rest
                .parse()
                .map_err(|_| Error::UnknownEstimator(s.to_string()))?;
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "event level must be positive and finite, got {x}"
                )));
            }
            Ok(x)
        };
        match s {
            "excess_risk" => Ok(Estimator::ExcessRisk),
            "hs_sq" => Ok(Estimator::HsSq),
            "erm_gap" => Ok(Estimator::ErmGap),
            "erm_delta" => Ok(Estimator::ErmDelta),
            "empirical_global" => Ok(Estimator::EmpiricalGlobal),
            "reconstruction" => Ok(Estimator::Reconstruction),
            _ => {
                if let Some(rest) = s.strip_prefix("event_upper:") {
                    Ok(Estimator::EventUpper(parse_level(rest)?))
                } else if let Some(rest) = s.strip_prefix("event_lower:") {
                    Ok(Estimator::EventLower(parse_level(rest)?))
                } else {
                    Err(Error::UnknownEstimator(s.to_string()))
                }
            }
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::ExcessRisk => write!(f, "excess_risk"),
            Estimator::HsSq => write!(f, "hs_sq"),
            Estimator::ErmGap => write!(f, "erm_gap"),
            Estimator::ErmDelta => write!(f, "erm_delta"),
            Estimator::EmpiricalGlobal => write!(f, "empirical_global"),
            Estimator::Reconstruction => write!(f, "reconstruction"),
            Estimator::EventUpper(x) => write!(f, "event_upper:{x}"),
            Estimator::EventLower(x) => write!(f, "event_lower:{x}"),
        }
    }
}

impl Estimator {
    pub fn evaluate(&self, r: &Realization) -> Result<f64> {
        match *self {
            Estimator::ExcessRisk => Ok(excess_risk(r)),
            Estimator::HsSq => hs_distance_sq(r.pop_leading(), r.emp_leading()),
            Estimator::ErmGap => Ok(erm_gap(r)),
            Estimator::ErmDelta => Ok(erm_delta(r).value),
            Estimator::EmpiricalGlobal => Ok(empirical_global(r)?.value),
            Estimator::Reconstruction => reconstruction_error(r.sigma(), r.emp_leading()),
            Estimator::EventUpper(x) => {
                let shift = r.emp_value(r.d()) - r.pop_value(r.d());
                Ok(if shift > x { 1.0 } else { 0.0 })
            }
            Estimator::EventLower(x) => {
                let shift = r.emp_value(r.d() - 1) - r.pop_value(r.d() - 1);
                Ok(if shift < -x { 1.0 } else { 0.0 })
            }
        }
    }
}

/// Build replication `rep`'s realization: a fresh draw from the stream
/// `(base_seed, rep)`, or the population covariance itself under exact
/// injection.
fn realize(cfg: &ExperimentConfig, n: usize, rep: usize) -> Result<Realization> {
    let sigma_hat = if cfg.exact_injection {
        cfg.model.covariance()
    } else {
        let mut stream = RngStream::new(cfg.base_seed, rep as u64);
        let samples = draw_gaussian_samples(&cfg.model, n, &mut stream)?;
        empirical_covariance(&samples)
    };
    Realization::new(&cfg.model, sigma_hat, cfg.d)
}

/// Run `cfg.replications` independent replications of `estimator` and
/// average. Replication `r` owns stream `(base_seed, r)`; the result is
/// independent of thread count.
pub fn run_replications(cfg: &ExperimentConfig, estimator: Estimator) -> Result<MCResult> {
    cfg.validate()?;
    let mut slots = vec![0.0f64; cfg.replications];
    slots
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(rep, slot)| -> Result<()> {
            let r = realize(cfg, cfg.n, rep)?;
            *slot = estimator.evaluate(&r)?;
            Ok(())
        })?;
    Ok(MCResult {
        estimate: pairwise_mean(&slots),
        stderr: std_error(&slots),
        replications: cfg.replications,
        base_seed: cfg.base_seed,
        values: cfg.keep_replicates.then_some(slots),
    })
}

// ---------------------------------------------------------------------------
// Sweep tables
// ---------------------------------------------------------------------------

/// A rectangular numeric result table with named columns; one row per grid
/// point. CSV output is deterministic (shortest round-trip decimal per
/// value).
#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SweepTable {
    fn new(columns: &[&str]) -> Self {
        SweepTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Column values by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|row| row[idx]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Named experiments
// ---------------------------------------------------------------------------

/// Spiked-model sweep over the spike height grid: Monte Carlo mean excess
/// risk against three upper-bound curves — the averaged per-realization
/// min-form bound (`erm_curve`), the averaged block operator-norm bound
/// (`global_curve`), and the closed-form spiked bound with the display
/// constant (`scm_curve`). Replication `r` reuses stream `(base_seed, r)`
/// at every grid point (common random numbers across the sweep).
pub fn figure1_sweep(cfg: &ExperimentConfig) -> Result<SweepTable> {
    cfg.validate()?;
    if cfg.x_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "spike-height sweep needs a nonempty x_grid".to_string(),
        ));
    }
    if cfg.x_grid[0] < 0.0 {
        return Err(Error::InvalidParameter(
            "spike heights must be non-negative".to_string(),
        ));
    }
    let p = cfg.model.p();
    let mut table = SweepTable::new(&[
        "x",
        "mc_mean",
        "mc_stderr",
        "erm_curve",
        "global_curve",
        "scm_curve",
    ]);
    for &x in &cfg.x_grid {
        let model = CovModel::spiked(x, 1.0, cfg.d, p)?;
        let mut excess = vec![0.0f64; cfg.replications];
        let mut erm = vec![0.0f64; cfg.replications];
        let mut global = vec![0.0f64; cfg.replications];
        excess
            .par_iter_mut()
            .zip(erm.par_iter_mut())
            .zip(global.par_iter_mut())
            .enumerate()
            .try_for_each(|(rep, ((e_slot, m_slot), g_slot))| -> Result<()> {
                let sigma_hat = if cfg.exact_injection {
                    model.covariance()
                } else {
                    let mut stream = RngStream::new(cfg.base_seed, rep as u64);
                    let samples = draw_gaussian_samples(&model, cfg.n, &mut stream)?;
                    empirical_covariance(&samples)
                };
                let r = Realization::new(&model, sigma_hat, cfg.d)?;
                *e_slot = excess_risk(&r);
                *m_slot = erm_delta(&r).value;
                *g_slot = empirical_global(&r)?.value;
                Ok(())
            })?;
        let (upper, _) = spiked_bounds(x, 1.0, p, cfg.d, cfg.n, &cfg.constants)?;
        table.push(vec![
            x,
            pairwise_mean(&excess),
            std_error(&excess),
            pairwise_mean(&erm),
            pairwise_mean(&global),
            upper.value,
        ]);
    }
    Ok(table)
}

/// Empirical tail frequencies of the eigenvalue deviation events
/// `{λ̂_{d+1} − λ_{d+1} > x}` and `{λ̂_d − λ_d < −x}` over an `n × x`
/// grid, against the theoretical tail bounds with their condition flags.
/// Per sample size, every replication draws once and is shared across the
/// whole x-grid, so frequencies are exactly nested in `x`; replication
/// streams are reused across sample sizes (prefix coupling in `n`).
pub fn deviation_frequency_experiment(cfg: &ExperimentConfig) -> Result<SweepTable> {
    cfg.validate()?;
    if cfg.x_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "deviation-frequency experiment needs a nonempty x_grid".to_string(),
        ));
    }
    if cfg.x_grid[0] <= 0.0 {
        return Err(Error::InvalidParameter(
            "deviation levels must be positive".to_string(),
        ));
    }
    let n_grid: Vec<usize> = if cfg.n_grid.is_empty() {
        vec![cfg.n]
    } else {
        cfg.n_grid.clone()
    };
    let spec = cfg.model.spectrum();
    let reps = cfg.replications as f64;
    let mut table = SweepTable::new(&[
        "n",
        "x",
        "freq_upper",
        "freq_upper_stderr",
        "bound_upper",
        "upper_condition_ok",
        "freq_lower",
        "freq_lower_stderr",
        "bound_lower",
        "lower_condition_ok",
    ]);
    for &n in &n_grid {
        let mut shifts_up = vec![0.0f64; cfg.replications];
        let mut shifts_down = vec![0.0f64; cfg.replications];
        shifts_up
            .par_iter_mut()
            .zip(shifts_down.par_iter_mut())
            .enumerate()
            .try_for_each(|(rep, (up, down))| -> Result<()> {
                let r = realize(cfg, n, rep)?;
                *up = r.emp_value(cfg.d) - r.pop_value(cfg.d);
                *down = r.emp_value(cfg.d - 1) - r.pop_value(cfg.d - 1);
                Ok(())
            })?;
        for &x in &cfg.x_grid {
            let count_up = shifts_up.iter().filter(|&&s| s > x).count();
            let count_down = shifts_down.iter().filter(|&&s| s < -x).count();
            let freq_up = count_up as f64 / reps;
            let freq_down = count_down as f64 / reps;
            let upper = right_deviation_bound(spec, n, cfg.d, x, &cfg.constants)?;
            let lower = left_deviation_bound(spec, n, cfg.d, x, &cfg.constants)?;
            table.push(vec![
                n as f64,
                x,
                freq_up,
                (freq_up * (1.0 - freq_up) / reps).sqrt(),
                upper.prob_bound(),
                if upper.condition_ok == Some(true) { 1.0 } else { 0.0 },
                freq_down,
                (freq_down * (1.0 - freq_down) / reps).sqrt(),
                lower.prob_bound(),
                if lower.condition_ok == Some(true) { 1.0 } else { 0.0 },
            ]);
        }
    }
    Ok(table)
}

/// Ratio of the Monte Carlo mean reconstruction risk to the oracle risk
/// `tr_{>d}(Σ)` over a grid of projection dimensions. Under exact
/// injection the ratio is identically one.
pub fn oracle_ratio_grid(cfg: &ExperimentConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let d_grid: Vec<usize> = if cfg.d_grid.is_empty() {
        vec![cfg.d]
    } else {
        cfg.d_grid.clone()
    };
    let spec = cfg.model.spectrum();
    let mut table = SweepTable::new(&["d", "mc_mean", "mc_stderr", "oracle", "ratio"]);
    for &d in &d_grid {
        let mut slots = vec![0.0f64; cfg.replications];
        slots
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(rep, slot)| -> Result<()> {
                let sigma_hat = if cfg.exact_injection {
                    cfg.model.covariance()
                } else {
                    let mut stream = RngStream::new(cfg.base_seed, rep as u64);
                    let samples = draw_gaussian_samples(&cfg.model, cfg.n, &mut stream)?;
                    empirical_covariance(&samples)
                };
                let r = Realization::new(&cfg.model, sigma_hat, d)?;
                *slot = reconstruction_error(r.sigma(), r.emp_leading())?;
                Ok(())
            })?;
        let mc_mean = pairwise_mean(&slots);
        let oracle = spec.partial_trace(d, true)?;
        table.push(vec![
            d as f64,
            mc_mean,
            std_error(&slots),
            oracle,
            mc_mean / oracle,
        ]);
    }
    Ok(table)
}

/// Stream index reserved for limit-law draws, far away from replication
/// stream indices.
const LIMIT_LAW_STREAM: u64 = u64::MAX;

/// Convergence of `n · excess risk` to its limit law across a sample-size
/// grid, measured by the two-sample Kolmogorov–Smirnov distance against a
/// fixed set of limit-law draws (one per replication).
pub fn asymptotic_convergence_experiment(cfg: &ExperimentConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let n_grid: Vec<usize> = if cfg.n_grid.is_empty() {
        vec![cfg.n]
    } else {
        cfg.n_grid.clone()
    };
    let law = LimitLawSpec::new(cfg.model.spectrum(), cfg.d, LimitLaw::ExcessRisk)?;
    let mut limit_rng = RngStream::new(cfg.base_seed, LIMIT_LAW_STREAM);
    let limit_draws: Vec<f64> = (0..cfg.replications)
        .map(|_| limit_law_sample(&law, &mut limit_rng))
        .collect();
    let limit_mean = law.mean();

    let mut table = SweepTable::new(&["n", "ks", "mc_mean_scaled", "limit_mean"]);
    for &n in &n_grid {
        let mut slots = vec![0.0f64; cfg.replications];
        slots
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(rep, slot)| -> Result<()> {
                let r = realize(cfg, n, rep)?;
                *slot = n as f64 * excess_risk(&r);
                Ok(())
            })?;
        let ks = ks_statistic(&slots, &limit_draws)?;
        table.push(vec![n as f64, ks, pairwise_mean(&slots), limit_mean]);
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// Version string stamped into every manifest.
pub fn version_string() -> String {
    format!("pca-risk-v{}", env!("CARGO_PKG_VERSION"))
}

/// Write the JSON manifest accompanying an experiment's data files:
/// configuration, effective constants, version, and wall time. The wall
/// time field is informational and exempt from byte-identity guarantees
/// (which cover the data files).
pub fn write_manifest(path: &Path, cfg: &ExperimentConfig, wall_time_seconds: f64) -> Result<()> {
    let manifest = serde_json::json!({
        "config": cfg,
        "constants": cfg.constants,
        "version": version_string(),
        "wall_time_seconds": wall_time_seconds,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_cfg(model: CovModel, n: usize, d: usize, reps: usize, seed: u64) -> ExperimentConfig {
        ExperimentConfig::new(model, n, d, reps, seed)
    }

    #[test]
    fn isotropic_excess_is_numerically_zero() {
        let cfg = base_cfg(CovModel::isotropic(1.0, 6).unwrap(), 40, 2, 100, 11);
        let res = run_replications(&cfg, Estimator::ExcessRisk).unwrap();
        assert!(res.estimate.abs() <= 1e-9, "estimate {}", res.estimate);
    }

    #[test]
    fn replication_is_deterministic_and_thread_invariant() {
        let mut cfg = base_cfg(CovModel::spiked(1.0, 1.0, 2, 6).unwrap(), 50, 2, 64, 7);
        cfg.keep_replicates = true;
        let a = run_replications(&cfg, Estimator::ExcessRisk).unwrap();
        let b = run_replications(&cfg, Estimator::ExcessRisk).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.values, b.values);

        // Explicit 1-thread and 3-thread pools must agree bitwise.
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_replications(&cfg, Estimator::ExcessRisk).unwrap());
        let three = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_replications(&cfg, Estimator::ExcessRisk).unwrap());
        assert_eq!(one.estimate.to_bits(), three.estimate.to_bits());
        assert_eq!(one.values, three.values);
    }

    #[test]
    fn scaled_excess_matches_limit_mean() {
        // diag(3,1), d=1: limit mean 1.5, so the estimate at n=10⁴ should
        // sit within 3 standard errors of 1.5/n.
        let cfg = base_cfg(
            CovModel::custom(vec![3.0, 1.0]).unwrap(),
            10_000,
            1,
            200,
            23,
        );
        let res = run_replications(&cfg, Estimator::ExcessRisk).unwrap();
        let target = 1.5 / 10_000.0;
        assert!(
            (res.estimate - target).abs() <= 3.0 * res.stderr,
            "estimate {} vs target {target} (stderr {})",
            res.estimate,
            res.stderr
        );
    }

    #[test]
    fn estimator_registry_round_trips() {
        let names = [
            "excess_risk",
            "hs_sq",
            "erm_gap",
            "erm_delta",
            "empirical_global",
            "reconstruction",
            "event_upper:0.25",
            "event_lower:0.5",
        ];
        for name in names {
            let est: Estimator = name.parse().unwrap();
            assert_eq!(est.to_string(), name);
        }
        assert!(matches!(
            "no_such_estimator".parse::<Estimator>(),
            Err(Error::UnknownEstimator(_))
        ));
        assert!("event_upper:abc".parse::<Estimator>().is_err());
        assert!("event_upper:-1".parse::<Estimator>().is_err());
    }

    #[test]
    fn exact_injection_nulls() {
        let mut cfg = base_cfg(CovModel::exponential(1.0, 6).unwrap(), 30, 2, 8, 3);
        cfg.exact_injection = true;
        let res = run_replications(&cfg, Estimator::ExcessRisk).unwrap();
        assert_eq!(res.estimate, 0.0);
        let res = run_replications(&cfg, Estimator::Reconstruction).unwrap();
        let oracle = cfg.model.spectrum().partial_trace(2, true).unwrap();
        assert!((res.estimate - oracle).abs() <= 1e-12 * oracle);
        assert_eq!(res.stderr, 0.0);
        let res = run_replications(&cfg, Estimator::EventUpper(0.01)).unwrap();
        assert_eq!(res.estimate, 0.0);
    }

    #[test]
    fn figure1_sweep_shape_and_dominance() {
        let mut cfg = base_cfg(CovModel::spiked(1.0, 1.0, 2, 6).unwrap(), 50, 2, 60, 19);
        cfg.x_grid = vec![0.0, 0.5, 1.0];
        let table = figure1_sweep(&cfg).unwrap();
        assert_eq!(
            table.columns,
            ["x", "mc_mean", "mc_stderr", "erm_curve", "global_curve", "scm_curve"]
        );
        assert_eq!(table.rows.len(), 3);
        let mc = table.column("mc_mean").unwrap();
        let erm = table.column("erm_curve").unwrap();
        let glob = table.column("global_curve").unwrap();
        let scm = table.column("scm_curve").unwrap();
        // Pathwise dominance survives averaging.
        for i in 0..3 {
            assert!(mc[i] <= erm[i] + 1e-9, "row {i}: {} vs {}", mc[i], erm[i]);
            assert!(mc[i] <= glob[i] + 1e-9);
            assert!(mc[i] <= scm[i] + 1e-9, "row {i}: {} vs {}", mc[i], scm[i]);
        }
        // Zero-gap anchor.
        assert!(mc[0].abs() <= 1e-9);
        assert!(scm[0] == 0.0);
        // Deterministic CSV.
        let again = figure1_sweep(&cfg).unwrap();
        assert_eq!(table.to_csv(), again.to_csv());
    }

    #[test]
    fn deviation_frequencies_nest_in_x() {
        let mut cfg = base_cfg(CovModel::spiked(1.0, 1.0, 2, 5).unwrap(), 40, 2, 150, 31);
        cfg.x_grid = vec![0.05, 0.1, 0.2, 0.4, 0.8];
        cfg.n_grid = vec![20, 40];
        let table = deviation_frequency_experiment(&cfg).unwrap();
        assert_eq!(table.rows.len(), 10);
        // Within each n, frequencies are exactly non-increasing in x
        // (events are nested on shared draws).
        for block in table.rows.chunks(cfg.x_grid.len()) {
            for w in block.windows(2) {
                assert!(w[1][2] <= w[0][2], "upper frequency increased in x");
                assert!(w[1][6] <= w[0][6], "lower frequency increased in x");
            }
        }
        // Bound columns match the direct evaluation.
        let b = right_deviation_bound(cfg.model.spectrum(), 20, 2, 0.05, &cfg.constants).unwrap();
        assert_eq!(table.rows[0][4], b.prob_bound());
        // Frequencies are probabilities.
        for row in &table.rows {
            assert!((0.0..=1.0).contains(&row[2]) && (0.0..=1.0).contains(&row[6]));
        }

        // A huge level never fires.
        let mut cfg2 = cfg.clone();
        cfg2.x_grid = vec![50.0];
        let table2 = deviation_frequency_experiment(&cfg2).unwrap();
        assert_eq!(table2.rows[0][2], 0.0);
        assert_eq!(table2.rows[0][6], 0.0);
    }

    #[test]
    fn oracle_ratio_cases() {
        let mut cfg = base_cfg(CovModel::exponential(1.0, 8).unwrap(), 200, 2, 40, 5);
        cfg.d_grid = vec![2, 4];
        cfg.exact_injection = true;
        let table = oracle_ratio_grid(&cfg).unwrap();
        for row in &table.rows {
            // Up to eigensolver roundoff.
            assert!((row[4] - 1.0).abs() <= 1e-12, "exact injection ratio {}", row[4]);
        }
        cfg.exact_injection = false;
        let table = oracle_ratio_grid(&cfg).unwrap();
        for row in &table.rows {
            // The empirical projector can never beat the oracle.
            assert!(row[4] >= 1.0 - 1e-12, "ratio {}", row[4]);
        }
    }

    #[test]
    fn convergence_experiment_trends_toward_limit() {
        let mut cfg = base_cfg(CovModel::custom(vec![3.0, 1.0]).unwrap(), 100, 1, 400, 29);
        cfg.n_grid = vec![50, 2000];
        let table = asymptotic_convergence_experiment(&cfg).unwrap();
        assert_eq!(table.rows.len(), 2);
        let ks = table.column("ks").unwrap();
        assert!(
            ks[1] < ks[0],
            "KS did not shrink with n: {} -> {}",
            ks[0],
            ks[1]
        );
        assert!((table.rows[0][3] - 1.5).abs() <= 1e-12);
    }

    #[test]
    fn manifest_round_trips_as_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut cfg = base_cfg(CovModel::spiked(0.5, 1.0, 2, 6).unwrap(), 50, 2, 10, 1);
        cfg.x_grid = vec![0.1, 0.2];
        write_manifest(&path, &cfg, 1.25).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["config"]["n"], 50);
        assert_eq!(value["config"]["model"]["p"], 6);
        assert_eq!(value["constants"]["c_display"], 1.1);
        assert_eq!(value["version"], version_string());
        assert_eq!(value["wall_time_seconds"], 1.25);
    }

    #[test]
    fn config_validation_rejects_bad_grids() {
        let model = CovModel::isotropic(1.0, 4).unwrap();
        let mut cfg = base_cfg(model.clone(), 10, 2, 0, 1);
        assert!(cfg.validate().is_err());
        cfg.replications = 5;
        cfg.x_grid = vec![0.2, 0.1];
        assert!(cfg.validate().is_err());
        cfg.x_grid = vec![0.1, 0.2];
        cfg.n_grid = vec![100, 100];
        assert!(cfg.validate().is_err());
        cfg.n_grid = vec![100, 200];
        assert!(cfg.validate().is_ok());
        cfg.d_grid = vec![1, 4];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sweep_table_csv_format() {
        let mut table = SweepTable::new(&["a", "b"]);
        table.push(vec![1.0, 2.5]);
        table.push(vec![0.125, 1e-3]);
        assert_eq!(table.to_csv(), "a,b\n1,2.5\n0.125,0.001\n");
        assert_eq!(table.column("b").unwrap(), vec![2.5, 1e-3]);
        assert!(table.column("missing").is_none());
    }
}
