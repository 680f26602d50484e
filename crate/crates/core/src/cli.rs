//! Command line driver: experiment configs, result tables and exit codes.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 invalid input, 3 I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::kernels::{default_validation_grid, validate_kernel, KernelValidationReport, PriorKernel};
use crate::risk::{estimate_risk, q_n_schedule, RiskEstimate, RuleDescriptor, ThetaSpec};
use crate::shrinkage::ShrinkageEngine;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NonConvergence { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Validation(msg.into()))
}

/// Worker count: a positive integer or `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "ThreadsRepr", into = "ThreadsRepr")]
pub enum Threads {
    #[default]
    Auto,
    Count(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ThreadsRepr {
    Count(usize),
    Word(String),
}

impl TryFrom<ThreadsRepr> for Threads {
    type Error = String;

    fn try_from(r: ThreadsRepr) -> Result<Self, String> {
        match r {
            ThreadsRepr::Count(0) => Err("threads must be positive".into()),
            ThreadsRepr::Count(n) => Ok(Threads::Count(n)),
            ThreadsRepr::Word(w) => w.parse(),
        }
    }
}

impl From<Threads> for ThreadsRepr {
    fn from(t: Threads) -> Self {
        match t {
            Threads::Auto => ThreadsRepr::Word("auto".into()),
            Threads::Count(n) => ThreadsRepr::Count(n),
        }
    }
}

impl std::str::FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Threads::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Threads::Count(n)),
            _ => Err(format!("threads must be a positive integer or `auto`, got `{s}`")),
        }
    }
}

/// One experiment, as read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_n: Option<usize>,
    /// `q_n = round((ln n)^delta2)` when `q_n` is absent; defaults to 1.5.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    pub b_list: Vec<f64>,
    pub rules: Vec<String>,
    pub replicates: usize,
    pub seed: u64,
    pub output_path: String,
    #[serde(default)]
    pub threads: Threads,
    /// Kernel for shrinkage rules without an `@KERNEL` suffix; horseshoe by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    /// Constant `C` in `fixed:auto`, `tau = C q_n / n`; 1 by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_c: Option<f64>,
    /// Adds one varying-signal row per rule with `a_j = sqrt(2 ln(n/q_n)) + offsets[j mod len]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub varying_offsets: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Validation(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.rules.is_empty() {
            return invalid("config needs at least one rule");
        }
        if self.b_list.is_empty() {
            return invalid("config needs a non-empty b_list");
        }
        if self.replicates < 100 {
            return invalid(format!("replicates must be at least 100, got {}", self.replicates));
        }
        if self.q_n.is_some() && self.delta2.is_some() {
            return invalid("give either q_n or delta2, not both");
        }
        if let Some(c) = self.tau_c {
            if !(c > 0.0 && c.is_finite()) {
                return invalid(format!("tau_c must be positive, got {c}"));
            }
        }
        if let Some(o) = &self.varying_offsets {
            if o.is_empty() {
                return invalid("varying_offsets must be non-empty when given");
            }
        }
        let q = self.resolved_q_n()?;
        for &b in &self.b_list {
            ThetaSpec::beta_min(self.n, q, b).magnitudes()?;
        }
        for r in &self.rules {
            RuleDescriptor::parse(r)?;
        }
        self.kernel()?;
        Ok(())
    }

    pub fn resolved_q_n(&self) -> CliResult<usize> {
        let q = match self.q_n {
            Some(q) => q,
            None => q_n_schedule(self.n, self.delta2.unwrap_or(1.5))?,
        };
        crate::baselines::universal_threshold(self.n, q)?;
        Ok(q)
    }

    pub fn kernel(&self) -> CliResult<PriorKernel<f64>> {
        Ok(PriorKernel::parse(self.kernel.as_deref().unwrap_or("horseshoe"))?)
    }

    fn varying_spec(&self, q: usize) -> CliResult<Option<ThetaSpec>> {
        let Some(offsets) = &self.varying_offsets else { return Ok(None) };
        let t = crate::baselines::universal_threshold(self.n, q)?;
        let a = (0..q).map(|j| t + offsets[j % offsets.len()]).collect();
        let spec = ThetaSpec::varying(self.n, q, a);
        spec.magnitudes()?;
        Ok(Some(spec))
    }

    fn specs(&self, q: usize) -> CliResult<Vec<ThetaSpec>> {
        let mut specs: Vec<ThetaSpec> = self.b_list.iter().map(|&b| ThetaSpec::beta_min(self.n, q, b)).collect();
        specs.extend(self.varying_spec(q)?);
        Ok(specs)
    }
}

/// One line of the result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub rule_id: String,
    pub n: usize,
    pub q_n: usize,
    pub b_or_signal_id: String,
    pub replicates: usize,
    pub fdr: f64,
    pub se_fdr: f64,
    pub fnr: f64,
    pub se_fnr: f64,
    pub risk: f64,
    pub se_risk: f64,
    pub hamming_norm: f64,
    pub se_hamming: f64,
    pub target: f64,
    pub seed: u64,
}

impl From<&RiskEstimate> for ResultRow {
    fn from(e: &RiskEstimate) -> Self {
        ResultRow {
            rule_id: e.rule_id.clone(),
            n: e.n,
            q_n: e.q_n,
            b_or_signal_id: e.signal_id.clone(),
            replicates: e.replicates,
            fdr: e.fdr,
            se_fdr: e.se_fdr,
            fnr: e.fnr,
            se_fnr: e.se_fnr,
            risk: e.risk,
            se_risk: e.se_risk,
            hamming_norm: e.hamming_normalized,
            se_hamming: e.se_hamming,
            target: e.target,
            seed: e.seed,
        }
    }
}

fn estimate_rows(config: &ExperimentConfig, rules: &[String]) -> CliResult<Vec<RiskEstimate>> {
    let q = config.resolved_q_n()?;
    let kernel = config.kernel()?;
    let tau_c = config.tau_c.unwrap_or(1.0);
    let specs = config.specs(q)?;
    let mut rows = Vec::with_capacity(rules.len() * specs.len());
    for (r, rule) in rules.iter().enumerate() {
        let procedure = RuleDescriptor::parse(rule)?.build(rule, config.n, q, &kernel, tau_c)?;
        for (s, spec) in specs.iter().enumerate() {
            let seed = crate::risk::derive_seed(config.seed, (r * specs.len() + s) as u64, 2);
            let mut est = estimate_risk(procedure.as_ref(), spec, config.replicates, seed)?;
            est.seed = config.seed;
            rows.push(est);
        }
    }
    Ok(rows)
}

/// One risk estimate per (rule, signal configuration).
pub fn run_compare(config: &ExperimentConfig) -> CliResult<Vec<RiskEstimate>> {
    config.validate()?;
    estimate_rows(config, &config.rules)
}

/// Fixed-scale rule with the configured kernel (which must have `a > 1/2`)
/// next to the horseshoe rule at the same settings.
pub fn run_prop1(config: &ExperimentConfig) -> CliResult<Vec<RiskEstimate>> {
    config.validate()?;
    let kernel = config.kernel()?;
    if !(kernel.a() > 0.5) {
        return invalid(format!("prop1 needs a kernel with a > 1/2; `{}` has a = {}", kernel.name(), kernel.a()));
    }
    let name = config.kernel.clone().unwrap_or_default();
    let rules = vec![format!("fixed:auto@{name}"), "fixed:auto@horseshoe".to_string()];
    estimate_rows(config, &rules)
}

/// Evenly spaced grid `start:stop:step`, both ends included.
pub fn parse_grid(descriptor: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<f64> = descriptor
        .split(':')
        .map(|p| p.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Validation(format!("invalid grid `{descriptor}`")))?;
    let [start, stop, step] = parts[..] else {
        return invalid(format!("grid must be START:STOP:STEP, got `{descriptor}`"));
    };
    if !(step > 0.0) || stop < start {
        return invalid(format!("grid needs step > 0 and stop >= start, got `{descriptor}`"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 10_000_000 {
        return invalid(format!("grid `{descriptor}` has too many points"));
    }
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

/// `(x, E(1 - kappa | x, tau))` along a grid.
pub fn run_shrinkage_curve(kernel_name: &str, tau: f64, grid: &str) -> CliResult<Vec<(f64, f64)>> {
    let kernel = PriorKernel::parse(kernel_name)?;
    crate::shrinkage::ShrinkageQuery::new(0.0, tau, &kernel)?;
    let xs = parse_grid(grid)?;
    let engine = ShrinkageEngine::new(kernel);
    xs.into_iter().map(|x| Ok((x, engine.e_one_minus_kappa(x, tau)?))).collect()
}

pub fn shrinkage_curve_csv(points: &[(f64, f64)]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "e_one_minus_kappa"]).map_err(io_err)?;
    for (x, v) in points {
        w.serialize((x, v)).map_err(io_err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Kernel validation with the declared bounds of built-in families, or the
/// explicit ones when given.
pub fn run_validate_kernel(kernel_name: &str, bounds: Option<(f64, f64, f64)>) -> CliResult<KernelValidationReport> {
    let kernel = PriorKernel::parse(kernel_name)?;
    let (m, c0, t0) = match bounds.or_else(|| kernel.declared_bounds()) {
        Some(b) => b,
        None => return invalid(format!("kernel `{kernel_name}` has no declared bounds; pass --m, --c0 and --t0")),
    };
    Ok(validate_kernel(&kernel, &default_validation_grid(), m, c0, t0)?)
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

pub fn results_csv(rows: &[RiskEstimate]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(ResultRow::from(r)).map_err(io_err)?;
    }
    if rows.is_empty() {
        w.write_record(RESULT_COLUMNS).map_err(io_err)?;
    }
    w.into_inner().map_err(io_err)
}

pub const RESULT_COLUMNS: [&str; 15] = [
    "rule_id",
    "n",
    "q_n",
    "b_or_signal_id",
    "replicates",
    "fdr",
    "se_fdr",
    "fnr",
    "se_fnr",
    "risk",
    "se_risk",
    "hamming_norm",
    "se_hamming",
    "target",
    "seed",
];

pub fn results_json(rows: &[RiskEstimate]) -> String {
    let rows: Vec<ResultRow> = rows.iter().map(ResultRow::from).collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("rows serialize");
    s.push('\n');
    s
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Io(format!("cannot write to {}: {e}", dir.display())))?;
    tmp.write_all(bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// CSV at `csv_path` and its JSON mirror next to it.
pub fn write_results(csv_path: &Path, rows: &[RiskEstimate]) -> CliResult<PathBuf> {
    let json_path = csv_path.with_extension("json");
    write_atomic(csv_path, &results_csv(rows)?)?;
    write_atomic(&json_path, results_json(rows).as_bytes())?;
    Ok(json_path)
}

#[derive(Debug, Parser)]
#[command(name = "glshrink", version, about = "Multiple testing with global-local shrinkage priors")]
pub struct Cli {
    /// Experiment config (JSON)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads: N or auto
    #[arg(long, global = true, env = "GLSHRINK_THREADS")]
    pub threads: Option<Threads>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Risk table for every configured rule and signal strength
    Compare,
    /// Kernel with a > 1/2 against the horseshoe at fixed tau
    Prop1,
    /// Posterior mean of 1 - kappa along a grid of x
    ShrinkageCurve(CurveArgs),
    /// Numerical check of the bounds on the slowly varying part of a kernel
    ValidateKernel(KernelArgs),
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, default_value = "horseshoe")]
    pub kernel: String,
    #[arg(long)]
    pub tau: f64,
    /// START:STOP:STEP
    #[arg(long, default_value = "0:10:0.1")]
    pub grid: String,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long, default_value = "horseshoe")]
    pub kernel: String,
    #[arg(long, requires_all = ["c0", "t0"])]
    pub m: Option<f64>,
    #[arg(long, requires_all = ["m", "t0"])]
    pub c0: Option<f64>,
    #[arg(long, requires_all = ["m", "c0"])]
    pub t0: Option<f64>,
}

fn install_threads(threads: Threads) -> CliResult<()> {
    let n = match threads {
        Threads::Auto => 0,
        Threads::Count(n) => n,
    };
    // A pool that already exists (tests, embedding) is kept as is.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let Some(path) = &cli.config else {
        return invalid("this command needs --config PATH");
    };
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn output_file(cli: &Cli, configured: Option<&str>, default_name: &str) -> PathBuf {
    let configured = configured.map(PathBuf::from);
    match (&cli.out, configured) {
        (Some(dir), Some(p)) => dir.join(p.file_name().map(PathBuf::from).unwrap_or_else(|| default_name.into())),
        (Some(dir), None) => dir.join(default_name),
        (None, Some(p)) => p,
        (None, None) => PathBuf::from(default_name),
    }
}

fn emit(cli: &Cli, name: &str, bytes: &[u8]) -> CliResult<()> {
    match &cli.out {
        Some(dir) => write_atomic(&dir.join(name), bytes),
        None => std::io::stdout().write_all(bytes).map_err(io_err),
    }
}

/// Runs a parsed command and returns a one-line summary.
pub fn execute(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Compare | Command::Prop1 => {
            let cfg = load_config(cli)?;
            install_threads(cfg.threads)?;
            let rows = match cli.command {
                Command::Compare => run_compare(&cfg)?,
                _ => run_prop1(&cfg)?,
            };
            let csv_path = output_file(cli, Some(&cfg.output_path), "results.csv");
            let json_path = write_results(&csv_path, &rows)?;
            let mut msg = String::new();
            let _ = write!(msg, "wrote {} rows to {} and {}", rows.len(), csv_path.display(), json_path.display());
            Ok(msg)
        }
        Command::ShrinkageCurve(args) => {
            install_threads(cli.threads.unwrap_or_default())?;
            let points = run_shrinkage_curve(&args.kernel, args.tau, &args.grid)?;
            emit(cli, "shrinkage_curve.csv", &shrinkage_curve_csv(&points)?)?;
            Ok(format!("{} points", points.len()))
        }
        Command::ValidateKernel(args) => {
            let bounds = match (args.m, args.c0, args.t0) {
                (Some(m), Some(c0), Some(t0)) => Some((m, c0, t0)),
                _ => None,
            };
            let report = run_validate_kernel(&args.kernel, bounds)?;
            let mut json = serde_json::to_string_pretty(&report).map_err(io_err)?;
            json.push('\n');
            emit(cli, "kernel_validation.json", json.as_bytes())?;
            Ok(format!("kernel {}: {}", args.kernel, if report.passed { "passed" } else { "failed" }))
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(msg) => {
            eprintln!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
