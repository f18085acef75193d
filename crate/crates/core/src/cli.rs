//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 ill-posed update, 3 not
//! walk-summable, 4 iteration limit reached.
//!
//! All edge parameters read or written by the CLI (`--init file:PATH`,
//! `--witness`) refer to the normalized, unit-diagonal problem.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{analyze, compute_gamma_star};
use crate::async_engine::{run_async, AsyncConfig};
use crate::decomposition::{
    construct_witness, is_convex_decomposition, is_convex_dominated, EdgeParams, Violation,
    Witness,
};
use crate::engine::{check_well_posed, run_sync, SolverConfig, SolverState, Status, Trace};
use crate::error::Error;
use crate::generate::{generate, GenSpec, GraphModel, SignMode, WeightMode};
use crate::io::{fmt_f64, format_problem, format_trace, load_edge_params, load_problem};
use crate::model::{denormalize_solution, normalize, validate, NormalizationRecord, QuadraticProblem};
use crate::walksum::verify_nb_identity;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ILL_POSED: i32 = 2;
pub const EXIT_NOT_WALK_SUMMABLE: i32 = 3;
pub const EXIT_MAX_ITER: i32 = 4;

/// Tolerance used when `γ*` is needed as an initialization or for walk sums.
const GAMMA_STAR_TOL: f64 = 1e-14;

#[derive(Debug, Parser)]
#[command(name = "minsum", version, about = "Min-sum message passing for quadratic programs")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random walk-summable instance.
    Gen(GenArgs),
    /// Run the synchronous or asynchronous solver.
    Solve(SolveArgs),
    /// Certify an initialization against the convex-decomposition conditions.
    Check(CheckArgs),
    /// Fixed-point and spectral analysis, printed as JSON.
    Analyze(AnalyzeArgs),
    /// Compare walk-sum expansions of the inverse with dense linear algebra.
    Walksum(WalksumArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Path,
    Cycle,
    Grid,
    Erdos,
}

impl From<ModelArg> for GraphModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Path => GraphModel::Path,
            ModelArg::Cycle => GraphModel::Cycle,
            ModelArg::Grid => GraphModel::Grid,
            ModelArg::Erdos => GraphModel::Erdos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignArg {
    Attractive,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightsArg {
    Unit,
    Random,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub target_rho: f64,
    #[arg(long, value_enum, default_value = "attractive")]
    pub sign: SignArg,
    /// Coupling magnitudes before rescaling [default: unit, random for erdos]
    #[arg(long, value_enum)]
    pub weights: Option<WeightsArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Schedule {
    Sync,
    Async,
}

/// `zero`, `file:PATH` or `gamma-star`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitSpec {
    Zero,
    File(PathBuf),
    GammaStar,
}

impl FromStr for InitSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(InitSpec::Zero),
            "gamma-star" => Ok(InitSpec::GammaStar),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(InitSpec::File(PathBuf::from(path))),
                _ => Err(format!("expected zero, file:PATH or gamma-star, got `{s}`")),
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value = "sync")]
    pub schedule: Schedule,
    #[arg(long, default_value = "zero")]
    pub init: InitSpec,
    /// Only valid with `--schedule async`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub activation_prob: Option<f64>,
    #[arg(long)]
    pub max_delay: Option<u64>,
    #[arg(long)]
    pub max_ticks: Option<u64>,
    /// Synchronous iteration limit [default: 10·n·diameter within 1000..=100000]
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol_gamma: Option<f64>,
    #[arg(long)]
    pub tol_z: Option<f64>,
    #[arg(long)]
    pub tol_residual: Option<f64>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub instance: PathBuf,
    #[arg(long, default_value = "zero")]
    pub init: InitSpec,
    /// Witness `g` records; the Perron-scaled default is used when omitted.
    #[arg(long)]
    pub witness: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub instance: PathBuf,
    #[arg(long, default_value_t = 1e-13)]
    pub tol: f64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WalksumArgs {
    pub instance: PathBuf,
    /// Longest non-backtracking walk enumerated.
    #[arg(long, default_value_t = 10)]
    pub depth: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotWalkSummable { .. } => EXIT_NOT_WALK_SUMMABLE,
            Error::IllPosed { .. } => EXIT_ILL_POSED,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `std::env::args` and runs the command.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut out = String::new();
    let result = execute(&cfg.command, &mut out);
    print!("{out}");
    let _ = std::io::stdout().flush();
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Runs one command, appending its stdout text to `out`.
pub fn execute(cmd: &Command, out: &mut String) -> CliResult<i32> {
    match cmd {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Solve(a) => cmd_solve(a, out),
        Command::Check(a) => cmd_check(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Walksum(a) => cmd_walksum(a, out),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn load(path: &Path) -> CliResult<(QuadraticProblem, NormalizationRecord)> {
    let raw = load_problem(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok(normalize(&raw)?)
}

fn require_pd(p: &QuadraticProblem) -> CliResult<()> {
    let report = validate(p);
    if !report.positive_definite {
        return Err(CliError::usage(format!(
            "instance is not positive definite (smallest eigenvalue {})",
            fmt_f64(report.min_eigenvalue)
        )));
    }
    Ok(())
}

fn initial_params(p: &QuadraticProblem, init: &InitSpec) -> CliResult<EdgeParams> {
    match init {
        InitSpec::Zero => Ok(EdgeParams::zeros(p)),
        InitSpec::File(path) => load_edge_params(p, path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display()))),
        InitSpec::GammaStar => {
            let fp = compute_gamma_star(p, GAMMA_STAR_TOL)?;
            Ok(EdgeParams::new(p, fp.gamma_star, vec![0.0; p.num_arcs()])?)
        }
    }
}

fn cmd_gen(a: &GenArgs, out: &mut String) -> CliResult<i32> {
    let spec = GenSpec {
        n: a.n,
        model: a.model.into(),
        target_rho: a.target_rho,
        sign: match a.sign {
            SignArg::Attractive => SignMode::Attractive,
            SignArg::Mixed => SignMode::Mixed,
        },
        weights: a.weights.map(|w| match w {
            WeightsArg::Unit => WeightMode::Unit,
            WeightsArg::Random => WeightMode::Random,
        }),
        seed: a.seed,
    };
    let p = generate(&spec)?;
    let header = format!(
        "# {} n={} target_rho={} sign={} weights={} seed={}\n",
        spec.model,
        spec.n,
        spec.target_rho,
        spec.sign,
        spec.weights(),
        spec.seed
    );
    let text = header + &format_problem(&p);
    match &a.out {
        Some(path) => write_file(path, &text)?,
        None => out.push_str(&text),
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct SolveReport {
    status: &'static str,
    schedule: &'static str,
    iterations: u64,
    ill_posed_edge: Option<(usize, usize)>,
    /// Solution in the original (unnormalized) variables.
    x: Option<Vec<f64>>,
    /// `‖Γx − h‖∞` of the normalized system.
    residual: Option<f64>,
    residual_within_tolerance: Option<bool>,
    seed: Option<u64>,
    max_staleness: Option<u64>,
    forced_activations: Option<usize>,
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Running => "running",
        Status::Converged => "converged",
        Status::IllPosed { .. } => "ill-posed",
        Status::MaxIterReached => "max-iter",
    }
}

fn cmd_solve(a: &SolveArgs, out: &mut String) -> CliResult<i32> {
    if a.schedule == Schedule::Sync {
        for (flag, set) in [
            ("--seed", a.seed.is_some()),
            ("--activation-prob", a.activation_prob.is_some()),
            ("--max-delay", a.max_delay.is_some()),
            ("--max-ticks", a.max_ticks.is_some()),
        ] {
            if set {
                return Err(CliError::usage(format!("{flag} requires --schedule async")));
            }
        }
    } else if a.max_iter.is_some() {
        return Err(CliError::usage("--max-iter applies to --schedule sync; use --max-ticks"));
    }

    let (p, rec) = load(&a.instance)?;
    require_pd(&p)?;
    let init = initial_params(&p, &a.init)?;
    let mut sync_cfg = SolverConfig::for_problem(&p);
    if let Some(v) = a.max_iter {
        sync_cfg.max_iter = v;
    }
    if let Some(v) = a.tol_gamma {
        sync_cfg.tol_gamma = v;
    }
    if let Some(v) = a.tol_z {
        sync_cfg.tol_z = v;
    }
    if let Some(v) = a.tol_residual {
        sync_cfg.tol_residual = v;
    }
    sync_cfg.validate()?;

    let (state, trace, meta): (SolverState, Trace, _) = match a.schedule {
        Schedule::Sync => {
            let (state, trace) = run_sync(&p, &init, &sync_cfg)?;
            (state, trace, None)
        }
        Schedule::Async => {
            let defaults = AsyncConfig::default();
            let cfg = AsyncConfig {
                seed: a.seed.unwrap_or(defaults.seed),
                activation_prob: a.activation_prob.unwrap_or(defaults.activation_prob),
                max_delay: a.max_delay.unwrap_or(defaults.max_delay),
                max_ticks: a.max_ticks.unwrap_or(defaults.max_ticks),
                tol_gamma: sync_cfg.tol_gamma,
                tol_z: sync_cfg.tol_z,
            };
            let run = run_async(&p, &init, &cfg)?;
            (run.state, run.trace, Some((cfg.seed, run.meta)))
        }
    };

    if let Some(path) = &a.trace {
        write_file(path, &format_trace(&trace))?;
    }

    let x = match &state.x {
        Some(x) => Some(denormalize_solution(x, &rec)?),
        None => None,
    };
    let ill_posed_edge = match state.status {
        Status::IllPosed { from, to, .. } => Some((from, to)),
        _ => None,
    };
    let report = SolveReport {
        status: status_name(state.status),
        schedule: match a.schedule {
            Schedule::Sync => "sync",
            Schedule::Async => "async",
        },
        iterations: state.t,
        ill_posed_edge,
        x: x.clone(),
        residual: state.residual,
        residual_within_tolerance: state.residual.map(|r| r <= sync_cfg.tol_residual),
        seed: meta.as_ref().map(|m| m.0),
        max_staleness: meta.as_ref().map(|m| m.1.max_staleness),
        forced_activations: meta.as_ref().map(|m| m.1.forced.len()),
    };
    if let Some(path) = &a.report {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::usage(e.to_string()))?;
        write_file(path, &(json + "\n"))?;
    }

    let _ = writeln!(out, "status: {}", report.status);
    let _ = writeln!(out, "iterations: {}", state.t);
    if let Status::IllPosed { from, to, t } = state.status {
        let _ = writeln!(out, "ill-posed edge: {from} -> {to} at t = {t}");
    }
    if let Some(r) = state.residual {
        let _ = writeln!(out, "residual: {}", fmt_f64(r));
    }
    if let Some(x) = &x {
        for (i, v) in x.iter().enumerate() {
            let _ = writeln!(out, "x {i} {}", fmt_f64(*v));
        }
    }
    if state.status == Status::Converged && report.residual_within_tolerance == Some(false) {
        eprintln!("warning: converged but residual exceeds --tol-residual");
    }

    Ok(match state.status {
        Status::Converged | Status::Running => EXIT_OK,
        Status::IllPosed { .. } => EXIT_ILL_POSED,
        Status::MaxIterReached => EXIT_MAX_ITER,
    })
}

fn describe(v: &Violation) -> String {
    match v {
        Violation::NegativeGamma { from, to, value } => {
            format!("negative gamma on {from} -> {to} ({})", fmt_f64(*value))
        }
        Violation::Pairwise { i, j, value } => {
            format!("pairwise condition fails on ({i}, {j}): Γ²γγ = {}", fmt_f64(*value))
        }
        Violation::Vertex { vertex, value } => {
            format!("vertex condition fails at {vertex}: slack {}", fmt_f64(*value))
        }
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn cmd_check(a: &CheckArgs, out: &mut String) -> CliResult<i32> {
    let (p, _) = load(&a.instance)?;
    require_pd(&p)?;
    let init = initial_params(&p, &a.init)?;
    let cert = is_convex_decomposition(&p, &init.gamma)?;
    let _ = writeln!(out, "convex decomposition: {}", yes_no(cert.convex));
    if let Some(v) = &cert.violation {
        let _ = writeln!(out, "violation: {}", describe(v));
    }
    let _ = writeln!(out, "min pairwise: {}", fmt_f64(cert.min_pairwise));
    let _ = writeln!(out, "min vertex slack: {}", fmt_f64(cert.min_vertex_slack));
    let wp = check_well_posed(&p, &init.gamma)?;
    let _ = writeln!(out, "well-posed update: {}", yes_no(wp.is_well_posed()));
    for (from, to) in &wp.arcs {
        let _ = writeln!(out, "ill-posed edge: {from} -> {to}");
    }

    let (label, witness) = match &a.witness {
        Some(path) => {
            let params = load_edge_params(&p, path)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            let w = Witness::new(&p, params.gamma)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            ("supplied", w)
        }
        None => match construct_witness(&p) {
            Ok(w) => ("default", w),
            Err(Error::NotWalkSummable { rho }) => {
                let _ = writeln!(
                    out,
                    "dominated by default witness: unavailable (not walk-summable, rho(|R|) = {})",
                    fmt_f64(rho)
                );
                return Ok(EXIT_NOT_WALK_SUMMABLE);
            }
            Err(e) => return Err(e.into()),
        },
    };
    let dominated = is_convex_dominated(&p, &init.gamma, &witness)?;
    let _ = writeln!(out, "dominated by {label} witness: {}", yes_no(dominated));
    let _ = writeln!(out, "witness margin: {}", fmt_f64(witness.margin));
    Ok(EXIT_OK)
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut String) -> CliResult<i32> {
    let (p, _) = load(&a.instance)?;
    let report = analyze(&p, a.tol)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(path) = &a.report {
        write_file(path, &(json.clone() + "\n"))?;
    }
    out.push_str(&json);
    out.push('\n');
    if report.walk_summable {
        Ok(EXIT_OK)
    } else {
        eprintln!("not walk-summable: rho(|R|) = {}", fmt_f64(report.rho_abs_r));
        Ok(EXIT_NOT_WALK_SUMMABLE)
    }
}

fn cmd_walksum(a: &WalksumArgs, out: &mut String) -> CliResult<i32> {
    let (p, _) = load(&a.instance)?;
    let fp = compute_gamma_star(&p, GAMMA_STAR_TOL)?;
    let mut table = String::from("# i, r, lhs, rhs, discrepancy, lhs_bound, rhs_bound, walks, passed\n");
    let mut failures = 0usize;
    for i in 0..p.n() {
        for r in 0..p.n() {
            let rep = verify_nb_identity(&p, &fp.gamma_star, i, r, a.depth)?;
            if !rep.passed {
                failures += 1;
            }
            let _ = writeln!(
                table,
                "{}, {}, {}, {}, {}, {}, {}, {}, {}",
                i,
                r,
                fmt_f64(rep.lhs),
                fmt_f64(rep.rhs),
                fmt_f64(rep.discrepancy),
                fmt_f64(rep.lhs_bound),
                fmt_f64(rep.rhs_bound),
                rep.walks,
                u8::from(rep.passed)
            );
        }
    }
    if let Some(path) = &a.report {
        write_file(path, &table)?;
    }
    out.push_str(&table);
    if failures > 0 {
        eprintln!("{failures} pair(s) failed the identity check");
        Ok(EXIT_USAGE)
    } else {
        Ok(EXIT_OK)
    }
}
