//! `modelcg` command line tool.
//!
//! Exit status: 0 on success, 1 for usage or configuration errors, 2 when a
//! solver fails or a trace check does not pass.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use modelcg::harness::compare::{run_comparison, run_method, write_comparison, CompareConfig, Method, MethodSettings};
use modelcg::harness::io::{load_dataset, matrix_to_csv, read_trace_csv, save_dataset, write_json, write_trace_csv};
use modelcg::harness::mf::{mf_demo, rank_one_matrix, MfMode, MfProblem, XSet, YSet};
use modelcg::harness::regression::{generate_regression_data, RegressionParams, RegressionProblem};
use modelcg::sets::nuclear_norm;
use modelcg::solver::{check_trace, rate_certificate, DeltaTolerance};
use modelcg::{DenseVector, Error, Regularizer, SolverTrace};

#[derive(Parser)]
#[command(name = "modelcg", version, about = "Model-function conditional gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a robust regression dataset.
    Gen(GenArgs),
    /// Run one method on a dataset.
    Solve(SolveArgs),
    /// Run all methods on one dataset and write traces and a summary.
    Compare(CompareArgs),
    /// Structured matrix factorization demo.
    MfDemo(MfArgs),
    /// Check the descent and rate invariants of a trace file.
    Check(CheckArgs),
}

#[derive(Args)]
struct DataFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "P", alias = "p")]
    p: Option<usize>,
    #[arg(long = "M", alias = "m")]
    m: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    a_max: Option<f64>,
    #[arg(long)]
    b_max: Option<f64>,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    noise_scale: Option<f64>,
}

impl DataFlags {
    fn apply(&self, p: &mut RegressionParams) {
        set(&mut p.seed, self.seed);
        set(&mut p.p, self.p);
        set(&mut p.m, self.m);
        set(&mut p.mu, self.mu);
        set(&mut p.a_max, self.a_max);
        set(&mut p.b_max, self.b_max);
        set(&mut p.sparsity, self.sparsity);
        set(&mut p.noise_scale, self.noise_scale);
    }
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Absolute stopping tolerance on the model improvement.
    #[arg(long)]
    delta_tol: Option<f64>,
    /// Wall-clock budget per method, seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tau0: Option<f64>,
}

impl SolverFlags {
    fn apply(&self, s: &mut MethodSettings) {
        set(&mut s.solver.max_iterations, self.max_iterations);
        if let Some(t) = self.delta_tol {
            s.solver.delta_tol = DeltaTolerance::Absolute(t);
        }
        if self.time_budget.is_some() {
            s.solver.time_budget = self.time_budget;
        }
        set(&mut s.ls.rho, self.rho);
        set(&mut s.tau0, self.tau0);
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct GenArgs {
    /// JSON file with dataset parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataFlags,
    #[arg(long, default_value = "dataset.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    method: String,
    #[arg(long)]
    dataset: PathBuf,
    /// JSON file with method settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Starting point as a JSON array `(a, b)`; defaults to the box midpoint.
    #[arg(long)]
    x0: Option<PathBuf>,
    #[arg(long, default_value = "trace.csv")]
    out: PathBuf,
    /// Also write the summary JSON here.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use this dataset instead of generating one from the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Comma separated subset of mcgm, proxlin_ls, proxlin_bt.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    no_plot: bool,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    FullCg,
    Hybrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum YSetArg {
    Nuclear,
    L1,
}

#[derive(Clone, Copy, ValueEnum)]
enum XSetArg {
    Dictionary,
    Simplex,
}

#[derive(Args)]
struct MfArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    x_set: Option<XSetArg>,
    #[arg(long, value_enum)]
    y_set: Option<YSetArg>,
    /// Radius of the Y ball; defaults to 1.1 times the nuclear norm of A.
    #[arg(long)]
    radius: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    rho: f64,
    /// Lower bound for the rate certificate; defaults to the smallest f in the trace.
    #[arg(long)]
    f_lower: Option<f64>,
}

/// `compare` configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CompareFile {
    data: RegressionParams,
    dataset: Option<PathBuf>,
    methods: Vec<Method>,
    settings: MethodSettings,
    parallel: bool,
    plot_script: bool,
}

impl Default for CompareFile {
    fn default() -> Self {
        let c = CompareConfig::default();
        Self {
            data: RegressionParams::desk(0),
            dataset: None,
            methods: c.methods,
            settings: c.settings,
            parallel: c.parallel,
            plot_script: c.plot_script,
        }
    }
}

/// `mf-demo` configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MfFile {
    rows: usize,
    cols: usize,
    rank: usize,
    seed: u64,
    x_set: XSet,
    y_set: Option<YSet>,
    mode: MfMode,
    settings: MethodSettings,
}

impl Default for MfFile {
    fn default() -> Self {
        Self {
            rows: 20,
            cols: 15,
            rank: 1,
            seed: 0,
            x_set: XSet::Dictionary,
            y_set: None,
            mode: MfMode::FullCg,
            settings: MethodSettings::default(),
        }
    }
}

enum Failure {
    Config(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::EmptyInput
            | Error::Unsupported(_)
            | Error::TooLarge(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Format(_) => Failure::Config(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn read_or_default<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> CliResult<T> {
    path.map_or_else(|| Ok(T::default()), |p| read_json(p))
}

fn parse_methods(names: &[String]) -> CliResult<Vec<Method>> {
    names
        .iter()
        .map(|n| n.parse::<Method>().map_err(|e| Failure::Config(e.to_string())))
        .collect()
}

fn trace_summary(method: Method, t: &SolverTrace) -> serde_json::Value {
    json!({
        "method": method,
        "status": t.status,
        "best_f": t.best_f(),
        "final_f": t.f_final(),
        "final_delta": t.final_delta(),
        "iterations": t.iterations(),
        "trace_length": t.records.len(),
        "inner_solves": t.total_inner_solves(),
        "inner_iterations": t.total_inner_iterations(),
        "wall_time_s": t.elapsed(),
    })
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn gen(args: &GenArgs) -> CliResult {
    let mut params: RegressionParams = read_or_default(args.config.as_ref())?;
    args.data.apply(&mut params);
    let data = generate_regression_data(&params)?;
    save_dataset(&args.out, &data)?;
    Ok(())
}

fn solve(args: &SolveArgs) -> CliResult {
    let method: Method = args.method.parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
    let mut settings: MethodSettings = read_or_default(args.config.as_ref())?;
    args.solver.apply(&mut settings);
    let data = load_dataset(&args.dataset)?;
    let problem = RegressionProblem::new(&data)?;
    let x0 = match &args.x0 {
        Some(path) => {
            let v: Vec<f64> = read_json(path)?;
            DenseVector::from_vec(v)
        }
        None => problem.default_start(),
    };
    if x0.len() != 2 * data.params.p {
        return Err(Failure::Config(format!("x0 has {} entries, expected {}", x0.len(), 2 * data.params.p)));
    }
    let trace = run_method(&problem, method, &x0, &settings)?;
    write_trace_csv(&args.out, &trace.records, trace.best_f())?;
    let summary = trace_summary(method, &trace);
    if let Some(path) = &args.summary {
        write_json(path, &summary)?;
    }
    print_json(&summary);
    Ok(())
}

fn compare(args: &CompareArgs) -> CliResult {
    let mut file: CompareFile = read_or_default(args.config.as_ref())?;
    args.data.apply(&mut file.data);
    args.solver.apply(&mut file.settings);
    if let Some(names) = &args.methods {
        file.methods = parse_methods(names)?;
    }
    let dataset = args.dataset.clone().or(file.dataset.clone());
    let data = match dataset {
        Some(path) => load_dataset(&path)?,
        None => generate_regression_data(&file.data)?,
    };
    let cfg = CompareConfig {
        methods: file.methods,
        settings: file.settings,
        parallel: file.parallel || args.parallel,
        plot_script: file.plot_script && !args.no_plot,
    };
    let cmp = run_comparison(&data, &cfg)?;
    write_comparison(&cmp, &args.out, cfg.plot_script)?;
    print_json(&serde_json::to_value(&cmp.summary).expect("summary serializes"));
    Ok(())
}

fn mf(args: &MfArgs) -> CliResult {
    let mut file: MfFile = read_or_default(args.config.as_ref())?;
    set(&mut file.rows, args.rows);
    set(&mut file.cols, args.cols);
    set(&mut file.rank, args.rank);
    set(&mut file.seed, args.seed);
    if let Some(x) = args.x_set {
        file.x_set = match x {
            XSetArg::Dictionary => XSet::Dictionary,
            XSetArg::Simplex => XSet::Simplex,
        };
    }
    match (args.mode, args.tau) {
        (Some(ModeArg::FullCg), _) => file.mode = MfMode::FullCg,
        (Some(ModeArg::Hybrid), tau) => file.mode = MfMode::Hybrid { tau: tau.unwrap_or(1.0) },
        (None, Some(tau)) => file.mode = MfMode::Hybrid { tau },
        (None, None) => {}
    }
    args.solver.apply(&mut file.settings);
    if file.rows == 0 || file.cols == 0 {
        return Err(Failure::Config("rows and cols must be positive".into()));
    }
    let a = rank_one_matrix(file.rows, file.cols, file.seed);
    let default_radius = 1.1 * nuclear_norm(&a);
    let mut y_set = file.y_set.unwrap_or(YSet::Nuclear { radius: default_radius });
    if let Some(kind) = args.y_set {
        let r = match y_set {
            YSet::Nuclear { radius } | YSet::L1 { radius } => radius,
        };
        y_set = match kind {
            YSetArg::Nuclear => YSet::Nuclear { radius: r },
            YSetArg::L1 => YSet::L1 { radius: r },
        };
    }
    if let Some(r) = args.radius {
        y_set = match y_set {
            YSet::Nuclear { .. } => YSet::Nuclear { radius: r },
            YSet::L1 { .. } => YSet::L1 { radius: r },
        };
    }
    let problem = MfProblem {
        a,
        rank: file.rank,
        x_set: file.x_set,
        y_set,
        g: Regularizer::Zero,
        mode: file.mode,
    };
    problem.validate()?;
    let x0 = problem.random_start(file.seed)?;
    let res = mf_demo(&problem, &x0, &file.settings.ls, &file.settings.solver)?;
    fs::create_dir_all(&args.out).map_err(Error::from)?;
    write_trace_csv(&args.out.join("trace.csv"), &res.trace.records, res.trace.best_f())?;
    fs::write(args.out.join("X.csv"), matrix_to_csv(&res.x)).map_err(Error::from)?;
    fs::write(args.out.join("Y.csv"), matrix_to_csv(&res.y)).map_err(Error::from)?;
    let residual = (&problem.a - &res.x * &res.y).norm();
    let summary = json!({
        "status": res.trace.status,
        "iterations": res.trace.iterations(),
        "final_delta": res.trace.final_delta(),
        "residual": residual,
        "relative_residual": residual / problem.a.norm().max(f64::MIN_POSITIVE),
        "wall_time_s": res.trace.elapsed(),
    });
    write_json(&args.out.join("summary.json"), &summary)?;
    print_json(&summary);
    Ok(())
}

fn check(args: &CheckArgs) -> CliResult {
    let records = read_trace_csv(&args.trace)?;
    if records.is_empty() {
        return Err(Failure::Config("trace has no records".into()));
    }
    let f_lower = args
        .f_lower
        .unwrap_or_else(|| records.iter().map(|r| r.f).fold(f64::INFINITY, f64::min));
    let tc = check_trace(&records, args.rho);
    let cert = rate_certificate(&records, args.rho, f_lower);
    let passed = tc.passed() && cert.passed;
    print_json(&json!({
        "records": records.len(),
        "monotone": tc.monotone,
        "sufficient_decrease": tc.sufficient_decrease,
        "positive_steps": tc.positive_steps,
        "violations": tc.violations,
        "certificate": cert.passed,
        "tightest_ratio": cert.tightest_ratio,
        "first_failure": cert.first_failure,
        "passed": passed,
    }));
    if passed {
        Ok(())
    } else {
        Err(Failure::Solver("trace check failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Compare(a) => compare(a),
        Command::MfDemo(a) => mf(a),
        Command::Check(a) => check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(2)
        }
    }
}
