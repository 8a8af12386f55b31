//! Command-line frontend for the excess-risk toolkit.
//!
//! Seven verbs cover the pipeline end to end: `verify-identities` exercises
//! the projector-algebra identities on sampled instances, `bounds` evaluates
//! the closed-form spectrum-level bounds, `excess-risk` estimates the excess
//! reconstruction risk by Monte Carlo, and `figure1` / `concentration` /
//! `asymptotics` / `oracle-ratio` run the seeded experiment sweeps and write
//! CSV tables with a JSON manifest beside each output file.
//!
//! Every run prints the fully resolved configuration (after defaults,
//! config-file entries, and the `PCA_RISK_SEED` environment variable are
//! applied) before executing. Identical argument lists with identical seeds
//! produce byte-identical data files at any `--threads` setting; manifests
//! additionally record wall time, which naturally varies between runs.
//!
//! Exit codes: 0 on success, 1 when an invariant is violated during the run
//! (or the run itself fails), 2 on usage errors.

use std::collections::BTreeMap;
use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde_json::{json, Value};

use pca_risk_core::asymptotics::{LimitLaw, LimitLawSpec};
use pca_risk_core::bounds::{self, BoundConstants, BoundValue};
use pca_risk_core::harness::{
    asymptotic_convergence_experiment, deviation_frequency_experiment, figure1_sweep,
    oracle_ratio_grid, run_replications, version_string, write_manifest, Estimator,
    ExperimentConfig, SweepTable,
};
use pca_risk_core::identities::verify_realization;
use pca_risk_core::models::ModelKind;
use pca_risk_core::sampling::{draw_gaussian_samples, empirical_covariance};
use pca_risk_core::{CovModel, Realization, RngStream};

/// Environment variable supplying the default base seed when neither the
/// `--seed` flag nor a config-file `seed` entry is present.
const SEED_ENV: &str = "PCA_RISK_SEED";

/// Keys accepted in a `--config` file; each matches the long flag it feeds.
const CONFIG_KEYS: &[&str] = &[
    "model", "alpha", "x", "kappa", "sigma-sq", "values", "p", "d", "n", "reps", "seed", "out",
    "threads", "which", "mu", "r", "l", "s", "n-grid", "x-grid", "d-grid", "x-max", "x-step",
];

/// Bound names the `bounds` verb can evaluate from a spectrum alone.
const BOUND_NAMES: &[&str] = &[
    "erm_delta_expected",
    "global_expected",
    "minima_leading",
    "minima_trailing",
    "local_expected",
    "global_sqrt",
    "leading_block",
    "trailing_block",
    "pivot_trace",
    "pivot_local",
    "pivot_global",
    "oracle_inequality",
    "spiked_upper",
    "spiked_lower",
];

#[derive(Parser, Debug)]
#[command(
    name = "pca-risk",
    version = &*version_string().leak(),
    about = "Excess-risk toolkit for spectral projectors: identity checks, closed-form bounds, and seeded Monte Carlo experiments",
    propagate_version = true
)]
struct Cli {
    /// Flat key=value config file; explicit flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Flat key=value file overriding bound constants (keys: c2, c3,
    /// c_display, c); effective values are echoed and recorded in manifests.
    #[arg(long, global = true, value_name = "FILE")]
    constants: Option<PathBuf>,

    /// Worker threads for replication loops (default: available cores).
    /// Results are independent of the thread count.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Verb,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Check the eigenstructure identities on sampled instances (JSON summary).
    VerifyIdentities(VerifyArgs),
    /// Monte Carlo estimate of the excess reconstruction risk (JSON report).
    ExcessRisk(ExcessArgs),
    /// Evaluate closed-form spectrum-level bounds (JSON array of records).
    Bounds(BoundsArgs),
    /// Spiked-model sweep of Monte Carlo excess vs the bound curves (CSV).
    Figure1(Figure1Args),
    /// Eigenvalue-deviation frequencies vs exponential bounds on an (n, x) grid (CSV).
    Concentration(ConcentrationArgs),
    /// KS distance between n-scaled excess draws and the limit law per sample size (CSV).
    Asymptotics(AsymptoticsArgs),
    /// Mean reconstruction error over the oracle risk across cut dimensions (CSV).
    OracleRatio(OracleRatioArgs),
}

/// Spectrum-family selection shared by the model-driven verbs.
#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Spectrum family: exponential, polynomial, spiked, isotropic, custom.
    #[arg(long)]
    model: Option<String>,

    /// Decay rate of the exponential/polynomial families.
    #[arg(long)]
    alpha: Option<f64>,

    /// Spike height above the unit bulk (spiked family).
    #[arg(long)]
    x: Option<f64>,

    /// Spike band width multiplier (spiked family).
    #[arg(long)]
    kappa: Option<f64>,

    /// Common eigenvalue of the isotropic family.
    #[arg(long = "sigma-sq")]
    sigma_sq: Option<f64>,

    /// Comma-separated eigenvalue list for the custom family (descending).
    #[arg(long)]
    values: Option<String>,

    /// Ambient dimension.
    #[arg(long)]
    p: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Projection dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Sample size per instance.
    #[arg(long)]
    n: Option<usize>,
    /// Number of sampled instances.
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed for the replication streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Optional path for the JSON summary.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExcessArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Projection dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Sample size per replication.
    #[arg(long)]
    n: Option<usize>,
    /// Number of Monte Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed for the replication streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Optional path for the JSON report.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Projection dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Sample size entering the expectation bounds.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated bound names, or "all".
    #[arg(long)]
    which: Option<String>,
    /// Reference level for the block bounds (default: the eigenvalue at the
    /// matching edge of the cut).
    #[arg(long)]
    mu: Option<f64>,
    /// Leading cut of the block and pivot bounds, 0..=d (default d).
    #[arg(long)]
    r: Option<usize>,
    /// Trailing cut of the block bound, d+1..=p+1 (default d+1).
    #[arg(long)]
    l: Option<usize>,
    /// Pivot rank of the partial-trace bounds, 1..=d (default d).
    #[arg(long)]
    s: Option<usize>,
    /// Optional path for the JSON array.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Figure1Args {
    /// Sample size per replication.
    #[arg(long)]
    n: Option<usize>,
    /// Ambient dimension.
    #[arg(long)]
    p: Option<usize>,
    /// Projection dimension (equals the number of spikes).
    #[arg(long)]
    d: Option<usize>,
    /// Monte Carlo replications per grid point.
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed; grid points share replication streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Largest spike height on the grid.
    #[arg(long = "x-max")]
    x_max: Option<f64>,
    /// Spike-height increment.
    #[arg(long = "x-step")]
    x_step: Option<f64>,
    /// CSV output path (required; may come from the config file).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConcentrationArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Split index whose edge eigenvalues are monitored.
    #[arg(long)]
    d: Option<usize>,
    /// Sample size when no --n-grid is given.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated sample sizes (strictly increasing).
    #[arg(long = "n-grid")]
    n_grid: Option<String>,
    /// Comma-separated deviation levels (strictly increasing, positive);
    /// default: the d-th spectral gap times 1/4, 1/2, 1.
    #[arg(long = "x-grid")]
    x_grid: Option<String>,
    /// Monte Carlo replications per sample size.
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed; every (n, x) cell shares the same replication draws.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path (required; may come from the config file).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AsymptoticsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Projection dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Comma-separated sample sizes (strictly increasing).
    #[arg(long = "n-grid")]
    n_grid: Option<String>,
    /// Monte Carlo replications (and limit-law draws) per sample size.
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed; the limit-law draws use a reserved stream index.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path (required; may come from the config file).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleRatioArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Default cut dimension when no --d-grid is given.
    #[arg(long)]
    d: Option<usize>,
    /// Comma-separated cut dimensions (strictly increasing).
    #[arg(long = "d-grid")]
    d_grid: Option<String>,
    /// Sample size per replication.
    #[arg(long)]
    n: Option<usize>,
    /// Monte Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed; all cut dimensions share the same replication draws.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path (required; may come from the config file).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// Usage problems exit 2 (with a usage hint on stderr); run failures and
/// invariant violations exit 1.
enum CliError {
    Usage(String),
    Run(String),
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn run_fail(msg: impl std::fmt::Display) -> CliError {
    CliError::Run(msg.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!();
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => load_kv_file(path, Some(CONFIG_KEYS))?,
        None => BTreeMap::new(),
    };
    let constants = match &cli.constants {
        Some(path) => load_constants(path)?,
        None => BoundConstants::default(),
    };
    let ctx = Ctx { file, constants };

    let threads = ctx.opt_usize("threads", cli.threads)?;
    if let Some(nt) = threads {
        if nt == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(nt)
            .build_global()
            .map_err(run_fail)?;
    }

    match cli.command {
        Verb::VerifyIdentities(a) => cmd_verify_identities(&ctx, a, threads),
        Verb::ExcessRisk(a) => cmd_excess_risk(&ctx, a, threads),
        Verb::Bounds(a) => cmd_bounds(&ctx, a, threads),
        Verb::Figure1(a) => cmd_figure1(&ctx, a, threads),
        Verb::Concentration(a) => cmd_concentration(&ctx, a, threads),
        Verb::Asymptotics(a) => cmd_asymptotics(&ctx, a, threads),
        Verb::OracleRatio(a) => cmd_oracle_ratio(&ctx, a, threads),
    }
}

// ---------------------------------------------------------------------------
// Configuration resolution: flag > config file > environment > default.
// ---------------------------------------------------------------------------

struct Ctx {
    file: BTreeMap<String, String>,
    constants: BoundConstants,
}

impl Ctx {
    fn lookup(&self, key: &str) -> Option<&str> {
        self.file.get(key).map(|s| s.as_str())
    }

    fn parse_key<T>(&self, key: &str, raw: &str) -> CliResult<T>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        raw.trim()
            .parse()
            .map_err(|e| usage(format!("config key '{key}' = '{raw}': {e}")))
    }

    fn num<T>(&self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.lookup(key) {
            Some(raw) => self.parse_key(key, raw),
            None => Ok(default),
        }
    }

    fn opt_usize(&self, key: &str, flag: Option<usize>) -> CliResult<Option<usize>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.lookup(key) {
            Some(raw) => Ok(Some(self.parse_key(key, raw)?)),
            None => Ok(None),
        }
    }

    fn opt_f64(&self, key: &str, flag: Option<f64>) -> CliResult<Option<f64>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.lookup(key) {
            Some(raw) => Ok(Some(self.parse_key(key, raw)?)),
            None => Ok(None),
        }
    }

    fn string(&self, key: &str, flag: Option<String>, default: &str) -> String {
        flag.or_else(|| self.lookup(key).map(|s| s.to_string()))
            .unwrap_or_else(|| default.to_string())
    }

    fn opt_string(&self, key: &str, flag: Option<String>) -> Option<String> {
        flag.or_else(|| self.lookup(key).map(|s| s.to_string()))
    }

    fn opt_path(&self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.lookup(key).map(PathBuf::from))
    }

    /// Seed resolution: flag > config file > PCA_RISK_SEED > 0.
    fn seed(&self, flag: Option<u64>) -> CliResult<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        if let Some(raw) = self.lookup("seed") {
            return self.parse_key("seed", raw);
        }
        match env::var(SEED_ENV) {
            Ok(raw) => raw
                .trim()
                .parse()
                .map_err(|e| usage(format!("{SEED_ENV} = '{raw}': {e}"))),
            Err(_) => Ok(0),
        }
    }

    fn list_f64(&self, key: &str, flag: Option<String>) -> CliResult<Option<Vec<f64>>> {
        match self.opt_string(key, flag) {
            Some(raw) => parse_list::<f64>(key, &raw).map(Some),
            None => Ok(None),
        }
    }

    fn list_usize(&self, key: &str, flag: Option<String>) -> CliResult<Option<Vec<usize>>> {
        match self.opt_string(key, flag) {
            Some(raw) => parse_list::<usize>(key, &raw).map(Some),
            None => Ok(None),
        }
    }
}

fn parse_list<T>(key: &str, raw: &str) -> CliResult<Vec<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = raw
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(usage(format!("'{key}' is an empty list")));
    }
    items
        .into_iter()
        .map(|s| {
            s.parse()
                .map_err(|e| usage(format!("'{key}' entry '{s}': {e}")))
        })
        .collect()
}

/// Parse a flat key=value file; `allowed` (when given) whitelists the keys.
fn load_kv_file(path: &Path, allowed: Option<&[&str]>) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage(format!(
                "{} line {}: expected key=value, got '{line}'",
                path.display(),
                idx + 1
            ))
        })?;
        let key = key.trim().to_string();
        if let Some(keys) = allowed {
            if !keys.contains(&key.as_str()) {
                return Err(usage(format!(
                    "{} line {}: unknown key '{key}'",
                    path.display(),
                    idx + 1
                )));
            }
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// Parse a `--constants` file; keys c2, c3, c_display, and c override the
/// defaults, everything else is rejected.
fn load_constants(path: &Path) -> CliResult<BoundConstants> {
    let kv = load_kv_file(path, None)?;
    let mut k = BoundConstants::default();
    for (key, raw) in &kv {
        let v: f64 = raw
            .trim()
            .parse()
            .map_err(|e| usage(format!("constant '{key}' = '{raw}': {e}")))?;
        match key.as_str() {
            "c2" => k.c2 = v,
            "c3" => k.c3 = v,
            "c_display" => k.c_display = v,
            "c" => k.c_small = Some(v),
            other => {
                return Err(usage(format!(
                    "unknown constant '{other}' (expected c2, c3, c_display, c)"
                )))
            }
        }
    }
    k.validate().map_err(|e| usage(e.to_string()))?;
    Ok(k)
}

/// Build the covariance model from the resolved family flags. `d` is needed
/// by the spiked family, whose spike count equals the projection dimension.
fn build_model(ctx: &Ctx, margs: &ModelArgs, d: usize) -> CliResult<CovModel> {
    let family = ctx.string("model", margs.model.clone(), "exponential");
    let values = ctx.opt_string("values", margs.values.clone());
    let p_flag = ctx.opt_usize("p", margs.p)?;
    let p = p_flag.unwrap_or(8);
    let model = match family.as_str() {
        "exponential" => {
            let alpha = ctx.num("alpha", margs.alpha, 1.0)?;
            CovModel::exponential(alpha, p)
        }
        "polynomial" => {
            let alpha = ctx.num("alpha", margs.alpha, 2.0)?;
            CovModel::polynomial(alpha, p)
        }
        "spiked" => {
            let x = ctx.num("x", margs.x, 1.0)?;
            let kappa = ctx.num("kappa", margs.kappa, 1.0)?;
            CovModel::spiked(x, kappa, d, p)
        }
        "isotropic" => {
            let sigma_sq = ctx.num("sigma-sq", margs.sigma_sq, 1.0)?;
            CovModel::isotropic(sigma_sq, p)
        }
        "custom" => {
            let raw = values.ok_or_else(|| {
                usage("custom model needs --values (comma-separated eigenvalues)")
            })?;
            let vals = parse_list::<f64>("values", &raw)?;
            if let Some(pf) = p_flag {
                if pf != vals.len() {
                    return Err(usage(format!(
                        "--p {pf} contradicts the {} custom eigenvalues",
                        vals.len()
                    )));
                }
            }
            CovModel::custom(vals)
        }
        other => {
            return Err(usage(format!(
                "unknown model family '{other}' (expected exponential, polynomial, spiked, isotropic, custom)"
            )))
        }
    };
    model.map_err(|e| usage(e.to_string()))
}

// ---------------------------------------------------------------------------
// Shared output helpers.
// ---------------------------------------------------------------------------

/// Print the resolved configuration (experiment config plus verb-specific
/// extras) as one JSON line before executing.
fn echo_config(cfg: &ExperimentConfig, extras: Value) -> CliResult<()> {
    let mut doc = serde_json::to_value(cfg).map_err(run_fail)?;
    let obj = doc
        .as_object_mut()
        .expect("experiment config serializes to an object");
    if let Value::Object(map) = extras {
        for (key, value) in map {
            obj.insert(key, value);
        }
    }
    println!(
        "resolved config: {}",
        serde_json::to_string(&doc).map_err(run_fail)?
    );
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut body = text.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| run_fail(format!("cannot write {}: {e}", path.display())))
}

/// Write the CSV table and its manifest; returns the manifest path.
fn write_table(
    table: &SweepTable,
    out: &Path,
    cfg: &ExperimentConfig,
    started: Instant,
) -> CliResult<PathBuf> {
    table.write_csv(out).map_err(run_fail)?;
    let mpath = manifest_path(out);
    write_manifest(&mpath, cfg, started.elapsed().as_secs_f64()).map_err(run_fail)?;
    Ok(mpath)
}

fn require_out(ctx: &Ctx, flag: Option<PathBuf>) -> CliResult<PathBuf> {
    ctx.opt_path("out", flag)
        .ok_or_else(|| usage("--out is required (flag or config-file key 'out')"))
}

fn column(table: &SweepTable, name: &str) -> CliResult<Vec<f64>> {
    table
        .column(name)
        .ok_or_else(|| run_fail(format!("output table lacks column '{name}'")))
}

// ---------------------------------------------------------------------------
// Verbs.
// ---------------------------------------------------------------------------

fn cmd_verify_identities(ctx: &Ctx, a: VerifyArgs, threads: Option<usize>) -> CliResult<()> {
    let d = ctx.num("d", a.d, 2)?;
    let n = ctx.num("n", a.n, 100)?;
    let reps = ctx.num("reps", a.reps, 100)?;
    let seed = ctx.seed(a.seed)?;
    let model = build_model(ctx, &a.model, d)?;
    let out = ctx.opt_path("out", a.out);

    let mut cfg = ExperimentConfig::new(model, n, d, reps, seed);
    cfg.constants = ctx.constants.clone();
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    echo_config(&cfg, json!({ "out": out, "threads": threads }))?;
    let started = Instant::now();

    let vals = cfg.model.spectrum().values().to_vec();
    // Reference levels for the split identity: outside the spectrum on both
    // sides plus the two eigenvalues framing the cut.
    let mus = [-1.0, 0.0, vals[d], vals[d - 1], 1.0];
    let scale = 1.0 + cfg.model.p() as f64 * vals[0];
    let abs_tol = 1e-9 * scale;
    let rel_tol = 1e-6;

    let mut checks = 0usize;
    let mut degenerate = 0usize;
    let mut failures = 0usize;
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut first_failure: Option<String> = None;
    for rep in 0..reps {
        let mut stream = RngStream::new(seed, rep as u64);
        let samples = draw_gaussian_samples(&cfg.model, n, &mut stream).map_err(run_fail)?;
        let sigma_hat = empirical_covariance(&samples);
        let real = Realization::new(&cfg.model, sigma_hat, d).map_err(run_fail)?;
        for check in verify_realization(&real, &mus) {
            checks += 1;
            if check.degenerate {
                degenerate += 1;
                continue;
            }
            max_abs = max_abs.max(check.abs_err);
            if check.rel_err.is_finite() {
                max_rel = max_rel.max(check.rel_err);
            }
            let ok = check.rel_err <= rel_tol || check.abs_err <= abs_tol;
            if !ok {
                failures += 1;
                if first_failure.is_none() {
                    first_failure = Some(format!(
                        "{} (replication {rep}): abs_err {:.3e}, rel_err {:.3e}",
                        check.name, check.abs_err, check.rel_err
                    ));
                }
            }
        }
    }

    let pass = failures == 0;
    let summary = json!({
        "instances": reps,
        "checks": checks,
        "degenerate": degenerate,
        "failures": failures,
        "max_abs_err": max_abs,
        "max_rel_err_nondegenerate": max_rel,
        "tolerance": { "relative": rel_tol, "absolute": abs_tol },
        "first_failure": first_failure,
        "pass": pass,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(run_fail)?;
    println!("{text}");
    if let Some(path) = &out {
        write_text(path, &text)?;
        write_manifest(&manifest_path(path), &cfg, started.elapsed().as_secs_f64())
            .map_err(run_fail)?;
        println!("summary written to {}", path.display());
    }
    if pass {
        println!(
            "verify-identities: {checks} checks on {reps} instances, {degenerate} degenerate, all within tolerance"
        );
        Ok(())
    } else {
        Err(run_fail(format!(
            "identity checks failed: {failures} of {checks} outside tolerance"
        )))
    }
}

fn cmd_excess_risk(ctx: &Ctx, a: ExcessArgs, threads: Option<usize>) -> CliResult<()> {
    let d = ctx.num("d", a.d, 2)?;
    let n = ctx.num("n", a.n, 200)?;
    let reps = ctx.num("reps", a.reps, 500)?;
    let seed = ctx.seed(a.seed)?;
    let model = build_model(ctx, &a.model, d)?;
    let out = ctx.opt_path("out", a.out);

    let mut cfg = ExperimentConfig::new(model, n, d, reps, seed);
    cfg.constants = ctx.constants.clone();
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    echo_config(&cfg, json!({ "out": out, "threads": threads }))?;
    let started = Instant::now();

    let result = run_replications(&cfg, Estimator::ExcessRisk).map_err(run_fail)?;
    let oracle = cfg
        .model
        .spectrum()
        .partial_trace(d, true)
        .map_err(run_fail)?;

    if result.estimate < -1e-9 {
        return Err(run_fail(format!(
            "invariant violation: mean excess risk {} is negative beyond tolerance",
            result.estimate
        )));
    }

    let report = json!({
        "excess": result,
        "oracle_risk": oracle,
        "total_risk_estimate": oracle + result.estimate,
    });
    let text = serde_json::to_string_pretty(&report).map_err(run_fail)?;
    println!("{text}");
    if let Some(path) = &out {
        write_text(path, &text)?;
        write_manifest(&manifest_path(path), &cfg, started.elapsed().as_secs_f64())
            .map_err(run_fail)?;
        println!("report written to {}", path.display());
    }
    println!(
        "excess-risk: estimate {:.6e} (stderr {:.3e}) over {reps} replications; oracle risk {:.6e}",
        result.estimate, result.stderr, oracle
    );
    Ok(())
}

fn cmd_bounds(ctx: &Ctx, a: BoundsArgs, threads: Option<usize>) -> CliResult<()> {
    let d = ctx.num("d", a.d, 2)?;
    let n = ctx.num("n", a.n, 100)?;
    let which_raw = ctx.string("which", a.which, "all");
    let model = build_model(ctx, &a.model, d)?;
    let out = ctx.opt_path("out", a.out);

    let mut cfg = ExperimentConfig::new(model, n, d, 1, 0);
    cfg.constants = ctx.constants.clone();
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let vals = cfg.model.spectrum().values().to_vec();
    let mu = ctx.opt_f64("mu", a.mu)?;
    let r = ctx.num("r", a.r, d)?;
    let l = ctx.num("l", a.l, d + 1)?;
    let s = ctx.num("s", a.s, d)?;

    let spiked_params = match cfg.model.kind() {
        ModelKind::Spiked { x, kappa, .. } => Some((*x, *kappa)),
        _ => None,
    };

    let all = which_raw == "all";
    let mut wanted: Vec<String> = Vec::new();
    if !all {
        for name in which_raw.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()) {
            if !BOUND_NAMES.contains(&name) {
                return Err(usage(format!(
                    "unknown bound '{name}' (valid: all, {})",
                    BOUND_NAMES.join(", ")
                )));
            }
            if name.starts_with("spiked_") && spiked_params.is_none() {
                return Err(usage(format!("bound '{name}' needs --model spiked")));
            }
            wanted.push(name.to_string());
        }
        if wanted.is_empty() {
            return Err(usage("--which is an empty list"));
        }
    }
    let want = |name: &str| all || wanted.iter().any(|w| w == name);

    echo_config(
        &cfg,
        json!({
            "which": which_raw,
            "mu": mu,
            "r": r,
            "l": l,
            "s": s,
            "out": out,
            "threads": threads,
        }),
    )?;
    let started = Instant::now();

    let spec = cfg.model.spectrum();
    let k = &cfg.constants;
    let mut records: Vec<BoundValue> = Vec::new();

    if want("erm_delta_expected") {
        records.push(bounds::erm_delta_expected(spec, n, d, k).map_err(run_fail)?);
    }
    if want("global_expected") {
        records.push(bounds::global_expected(spec, n, d, k).map_err(run_fail)?);
    }
    if want("minima_leading") || want("minima_trailing") {
        let (lead, trail) = bounds::minima_bounds(spec, n, d, k).map_err(run_fail)?;
        if want("minima_leading") {
            records.push(lead);
        }
        if want("minima_trailing") {
            records.push(trail);
        }
    }
    if want("local_expected") || want("global_sqrt") {
        let (local, global) = bounds::local_global_bounds(spec, n, d, k).map_err(run_fail)?;
        if want("local_expected") {
            records.push(local);
        }
        if want("global_sqrt") {
            records.push(global);
        }
    }
    if want("leading_block") {
        let mu_lead = mu.unwrap_or(vals[d]);
        records.push(bounds::leading_block(spec, n, d, mu_lead, r, k).map_err(run_fail)?);
    }
    if want("trailing_block") {
        let mu_trail = mu.unwrap_or(vals[d - 1]);
        records.push(bounds::trailing_block(spec, n, d, mu_trail, l, k).map_err(run_fail)?);
    }
    if want("pivot_trace") {
        records.push(bounds::pivot_trace(spec, n, d, s, r.min(s), k).map_err(run_fail)?);
    }
    if want("pivot_local") || want("pivot_global") {
        let (local, global) = bounds::pivot_pair(spec, n, d, k).map_err(run_fail)?;
        if want("pivot_local") {
            records.push(local);
        }
        if want("pivot_global") {
            records.push(global);
        }
    }
    if want("oracle_inequality") {
        records.push(bounds::oracle_inequality(spec, n, d, s, k).map_err(run_fail)?);
    }
    if let Some((x, kappa)) = spiked_params {
        if want("spiked_upper") || want("spiked_lower") {
            let (upper, lower) =
                bounds::spiked_bounds(x, kappa, cfg.model.p(), d, n, k).map_err(run_fail)?;
            if want("spiked_upper") {
                records.push(upper);
            }
            if want("spiked_lower") {
                records.push(lower);
            }
        }
    }

    let text = serde_json::to_string_pretty(&records).map_err(run_fail)?;
    println!("{text}");
    if let Some(path) = &out {
        write_text(path, &text)?;
        write_manifest(&manifest_path(path), &cfg, started.elapsed().as_secs_f64())
            .map_err(run_fail)?;
        println!("records written to {}", path.display());
    }
    println!("bounds: {} records evaluated", records.len());
    Ok(())
}

fn cmd_figure1(ctx: &Ctx, a: Figure1Args, threads: Option<usize>) -> CliResult<()> {
    let n = ctx.num("n", a.n, 500)?;
    let p = ctx.num("p", a.p, 40)?;
    let d = ctx.num("d", a.d, 15)?;
    let reps = ctx.num("reps", a.reps, 1000)?;
    let seed = ctx.seed(a.seed)?;
    let x_max = ctx.num("x-max", a.x_max, 1.0)?;
    let x_step = ctx.num("x-step", a.x_step, 0.05)?;
    let out = require_out(ctx, a.out)?;
    if !(x_step > 0.0) || !x_max.is_finite() || x_max < x_step {
        return Err(usage(format!(
            "need 0 < x-step <= x-max, got x-step {x_step}, x-max {x_max}"
        )));
    }

    let points = (x_max / x_step).round() as usize;
    let x_grid: Vec<f64> = (0..=points).map(|i| i as f64 * x_step).collect();

    // The sweep rebuilds the spiked model at every grid height; the config
    // model only fixes the ambient and projection dimensions.
    let model = CovModel::spiked(1.0, 1.0, d, p).map_err(|e| usage(e.to_string()))?;
    let mut cfg = ExperimentConfig::new(model, n, d, reps, seed);
    cfg.x_grid = x_grid;
    cfg.constants = ctx.constants.clone();
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    echo_config(
        &cfg,
        json!({ "out": out, "x_max": x_max, "x_step": x_step, "threads": threads }),
    )?;
    let started = Instant::now();

    let table = figure1_sweep(&cfg).map_err(run_fail)?;

    let mc = column(&table, "mc_mean")?;
    let erm = column(&table, "erm_curve")?;
    let glob = column(&table, "global_curve")?;
    for (i, ((m, e), g)) in mc.iter().zip(&erm).zip(&glob).enumerate() {
        if *m > e + 1e-9 || *m > g + 1e-9 {
            return Err(run_fail(format!(
                "invariant violation at grid row {i}: Monte Carlo mean {m} exceeds a per-path bound curve ({e} / {g})"
            )));
        }
    }
    if cfg.x_grid[0] == 0.0 && mc[0].abs() > 1e-9 {
        return Err(run_fail(format!(
            "invariant violation: excess at spike height 0 should vanish, got {}",
            mc[0]
        )));
    }

    let mpath = write_table(&table, &out, &cfg, started)?;
    println!(
        "figure1: {} grid points, excess range [{:.3e}, {:.3e}], written to {} (manifest {})",
        mc.len(),
        mc.iter().cloned().fold(f64::INFINITY, f64::min),
        mc.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        out.display(),
        mpath.display()
    );
    Ok(())
}

fn cmd_concentration(ctx: &Ctx, a: ConcentrationArgs, threads: Option<usize>) -> CliResult<()> {
    let d = ctx.num("d", a.d, 2)?;
    let n = ctx.num("n", a.n, 200)?;
    let reps = ctx.num("reps", a.reps, 1000)?;
    let seed = ctx.seed(a.seed)?;
    let model = build_model(ctx, &a.model, d)?;
    let out = require_out(ctx, a.out)?;
    let n_grid = ctx.list_usize("n-grid", a.n_grid)?.unwrap_or_default();
    let x_grid = match ctx.list_f64("x-grid", a.x_grid)? {
        Some(xs) => xs,
        None => {
            let gap = model.spectrum().gap(d);
            if gap <= 0.0 {
                return Err(usage(
                    "model has no spectral gap at d; pass --x-grid explicitly",
                ));
            }
            vec![gap / 4.0, gap / 2.0, gap]
        }
    };

    let mut cfg = ExperimentConfig::new(model, n, d, reps, seed);
    cfg.n_grid = n_grid;
    cfg.x_grid = x_grid;
    cfg.constants = ctx.constants.clone();
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    echo_config(&cfg, json!({ "out": out, "threads": threads }))?;
    let started = Instant::now();

    let table = deviation_frequency_experiment(&cfg).map_err(run_fail)?;

    let freq_up = column(&table, "freq_upper")?;
    let freq_low = column(&table, "freq_lower")?;
    for (i, (fu, fl)) in freq_up.iter().zip(&freq_low).enumerate() {
        if !(0.0..=1.0).contains(fu) || !(0.0..=1.0).contains(fl) {
            return Err(run_fail(format!(
                "invariant violation at row {i}: frequencies {fu}, {fl} outside [0, 1]"
            )));
        }
    }
    // Bound dominance depends on the concentration constants supplied by the
    // user, so shortfalls are reported rather than treated as failures.
    let bound_up = column(&table, "bound_upper")?;
    let ok_up = column(&table, "upper_condition_ok")?;
    let bound_low = column(&table, "bound_lower")?;
    let ok_low = column(&table, "lower_condition_ok")?;
    let mut uncovered = 0usize;
    for i in 0..freq_up.len() {
        if ok_up[i] == 1.0 && freq_up[i] > bound_up[i] {
            uncovered += 1;
        }
        if ok_low[i] == 1.0 && freq_low[i] > bound_low[i] {
            uncovered += 1;
        }
    }

    let mpath = write_table(&table, &out, &cfg, started)?;
    println!(
        "concentration: {} rows written to {} (manifest {})",
        freq_up.len(),
        out.display(),
        mpath.display()
    );
    if uncovered > 0 {
        println!(
            "note: {uncovered} condition-satisfying cells exceed their bound; larger c3 (via --constants) tightens coverage"
        );
    } else {
        println!("all condition-satisfying cells sit below their exponential bound");
    }
    Ok(())
}

fn cmd_asymptotics(ctx: &Ctx, a: AsymptoticsArgs, threads: Option<usize>) -> CliResult<()> {
    let d = ctx.num("d", a.d, 2)?;
    let reps = ctx.num("reps", a.reps, 2000)?;
    let seed = ctx.seed(a.seed)?;
    let model = build_model(ctx, &a.model, d)?;
    let out = require_out(ctx, a.out)?;
    let n_grid = ctx
        .list_usize("n-grid", a.n_grid)?
        .unwrap_or_else(|| vec![500, 2000, 8000]);
    let n_last = *n_grid.last().expect("parse_list rejects empty grids");

    let limit_mean = LimitLawSpec::new(model.spectrum(), d, LimitLaw::ExcessRisk)
        .map_err(|e| usage(e.to_string()))?
        .mean();

    let mut cfg = ExperimentConfig::new(model, n_last, d, reps, seed);
    cfg.n_grid = n_grid;
    cfg.constants = ctx.constants.clone();
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    echo_config(&cfg, json!({ "out": out, "threads": threads }))?;
    let started = Instant::now();

    let table = asymptotic_convergence_experiment(&cfg).map_err(run_fail)?;

    let ns = column(&table, "n")?;
    let ks = column(&table, "ks")?;
    for (i, k) in ks.iter().enumerate() {
        if !(0.0..=1.0).contains(k) {
            return Err(run_fail(format!(
                "invariant violation at row {i}: KS statistic {k} outside [0, 1]"
            )));
        }
    }

    let mpath = write_table(&table, &out, &cfg, started)?;
    println!(
        "asymptotics: limit mean {limit_mean:.6e}; written to {} (manifest {})",
        out.display(),
        mpath.display()
    );
    for (nv, kv) in ns.iter().zip(&ks) {
        println!("  n = {nv:>8}: KS distance to the limit law {kv:.4}");
    }
    Ok(())
}

fn cmd_oracle_ratio(ctx: &Ctx, a: OracleRatioArgs, threads: Option<usize>) -> CliResult<()> {
    let d = ctx.num("d", a.d, 2)?;
    let n = ctx.num("n", a.n, 200)?;
    let reps = ctx.num("reps", a.reps, 500)?;
    let seed = ctx.seed(a.seed)?;
    let model = build_model(ctx, &a.model, d)?;
    let out = require_out(ctx, a.out)?;
    let d_grid = ctx.list_usize("d-grid", a.d_grid)?.unwrap_or_default();

    let mut cfg = ExperimentConfig::new(model, n, d, reps, seed);
    cfg.d_grid = d_grid;
    cfg.constants = ctx.constants.clone();
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    echo_config(&cfg, json!({ "out": out, "threads": threads }))?;
    let started = Instant::now();

    let table = oracle_ratio_grid(&cfg).map_err(run_fail)?;

    let ds = column(&table, "d")?;
    let ratios = column(&table, "ratio")?;
    for (dv, ratio) in ds.iter().zip(&ratios) {
        if *ratio < 1.0 - 1e-9 {
            return Err(run_fail(format!(
                "invariant violation at d = {dv}: mean reconstruction error is {ratio} of the oracle risk, below 1"
            )));
        }
    }

    let mpath = write_table(&table, &out, &cfg, started)?;
    println!(
        "oracle-ratio: {} cut dimensions written to {} (manifest {})",
        ds.len(),
        out.display(),
        mpath.display()
    );
    for (dv, ratio) in ds.iter().zip(&ratios) {
        println!("  d = {dv:>3}: mean error / oracle = {ratio:.6}");
    }
    Ok(())
}
