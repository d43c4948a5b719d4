use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use entbal::balance::{balance_report, ecdf_points};
use entbal::bootstrap::{bootstrap_curve, bootstrap_curve_from_weights, BootstrapOptions, BootstrapResult, IntervalKind};
use entbal::dataset::{encode, load_csv, Dataset, Schema};
use entbal::drc::{
    default_span_grid, estimate_curve, high_density_range, linspace, CurveOptions, CvOptions, DoseResponseCurve,
    Kernel, SpanChoice,
};
use entbal::error::{Error, Result};
use entbal::pipeline::{compute_weights, PipelineConfig, WeightFit, WeightingMethod};
use entbal::simbench::{coverage_study, run_replications, Scenario, SimConfig};
use entbal::solver::SolverOptions;

/// Stdout writes that stop quietly when the reader goes away.
macro_rules! out {
    ($($t:tt)*) => { emit(&format!($($t)*)) };
}
macro_rules! outln {
    () => { emit("\n") };
    ($($t:tt)*) => { emit(&format!("{}\n", format_args!($($t)*))) };
}

fn emit(s: &str) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = stdout.write_all(s.as_bytes()).and_then(|_| stdout.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: writing to stdout: {e}");
        std::process::exit(1);
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "entbal",
    version,
    about = "Entropy-balancing weights and dose-response curves for continuous exposures"
)]
struct Cli {
    /// Worker threads (defaults to all available cores).
    #[arg(long, global = true, env = "ENTBAL_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for balancing weights and write them with solver diagnostics.
    Weights(WeightsArgs),
    /// Report covariate balance for a set of weights.
    Balance(BalanceArgs),
    /// Estimate the dose-response curve, optionally with bootstrap intervals.
    Drc(DrcArgs),
    /// Full-pipeline bootstrap of the dose-response curve.
    Bootstrap(BootstrapArgs),
    /// Replicated simulation scoring weighting methods against a known curve.
    Simulate(SimulateArgs),
    /// Bootstrap interval coverage over simulated datasets.
    Coverage(CoverageArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Serialize)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    exposure: String,
    /// Covariate as `name:kind`, kind one of continuous, binary, ordinal, categorical. Repeatable.
    #[arg(long = "covariate", required = true)]
    covariates: Vec<String>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let schema = Schema::from_specs(&self.outcome, &self.exposure, &self.covariates)?;
        load_csv(&self.input, &schema)
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct MethodArgs {
    /// Weighting method: unweighted, eb_P, eb_P_Q, eb_Px (exposure cross powers), normal_gps, normal_gps@q.
    #[arg(long)]
    method: Option<String>,
    /// Shorthand for `--method eb_<moments>`.
    #[arg(long, conflicts_with = "method")]
    moments: Option<usize>,
    /// Lower bound on each dual multiplier.
    #[arg(long, default_value_t = -100.0, allow_negative_numbers = true)]
    lower: f64,
    #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
    upper: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 10)]
    memory: usize,
}

impl MethodArgs {
    fn method(&self) -> Result<WeightingMethod> {
        match (&self.method, self.moments) {
            (Some(m), _) => m.parse(),
            (None, Some(p)) => Ok(WeightingMethod::entropy_balancing(p)),
            (None, None) => Ok(WeightingMethod::entropy_balancing(2)),
        }
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions {
            lower: self.lower,
            upper: self.upper,
            tol: self.tol,
            max_iter: self.max_iter,
            memory: self.memory,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct CurveArgs {
    /// Evaluation grid `lo:hi:count`; defaults to 100 points over the weighted 1%-99% exposure range.
    #[arg(long)]
    grid: Option<String>,
    /// Fixed span in (0, 1]; cross-validated when omitted.
    #[arg(long)]
    span: Option<f64>,
    /// Candidate spans for cross-validation, comma separated.
    #[arg(long, value_delimiter = ',')]
    spans: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2)]
    folds: usize,
    /// Seed for the cross-validation fold assignment.
    #[arg(long, default_value_t = 0)]
    cv_seed: u64,
    /// Score held-out points without the observation weights.
    #[arg(long)]
    unweighted_cv: bool,
}

impl CurveArgs {
    fn options(&self) -> CurveOptions {
        let span = match self.span {
            Some(s) => SpanChoice::Fixed(s),
            None => SpanChoice::CrossValidated(CvOptions {
                folds: self.folds,
                spans: self.spans.clone().unwrap_or_else(default_span_grid),
                seed: self.cv_seed,
                weighted: !self.unweighted_cv,
                kernel: Kernel::Tricube,
            }),
        };
        CurveOptions {
            span,
            kernel: Kernel::Tricube,
            warn_outside_high_density: true,
        }
    }

    fn grid(&self, a: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        match &self.grid {
            Some(g) => parse_grid(g),
            None => {
                let (lo, hi) = high_density_range(a, w);
                Ok(linspace(lo, hi, 100))
            }
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct OutArgs {
    /// Directory receiving every output file (created if missing).
    #[arg(long)]
    #[serde(skip)]
    out_dir: PathBuf,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args, Debug, Serialize)]
struct WeightsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct BalanceArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Weight CSV with a `weight` column in input row order; uniform when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct DrcArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Weight CSV with a `weight` column; solved with the method flags when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    curve: CurveArgs,
    /// Bootstrap replicates for standard errors and intervals.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Percentile intervals instead of estimate ± 2 se.
    #[arg(long)]
    percentile: bool,
    /// Also write every replicate curve.
    #[arg(long)]
    dump_replicates: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct BootstrapArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    curve: CurveArgs,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    percentile: bool,
    #[arg(long)]
    dump_replicates: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct SimArgs {
    /// main or no_effect.
    #[arg(long, default_value = "main")]
    scenario: String,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Units per replication.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 20240101)]
    seed: u64,
    /// Grid `lo:hi:count` within [0, 45].
    #[arg(long, default_value = "0:45:46")]
    grid: String,
    #[arg(long, default_value_t = 2)]
    folds: usize,
    #[arg(long, value_delimiter = ',')]
    spans: Option<Vec<f64>>,
    #[arg(long)]
    unweighted_cv: bool,
}

impl SimArgs {
    fn config(&self, methods: Vec<WeightingMethod>, solver: SolverOptions) -> Result<SimConfig> {
        Ok(SimConfig {
            scenario: self.scenario.parse::<Scenario>()?,
            n_per_rep: self.n,
            reps: self.reps,
            methods,
            grid: parse_grid(&self.grid)?,
            seed: self.seed,
            solver,
            cv: CvOptions {
                folds: self.folds,
                spans: self.spans.clone().unwrap_or_else(default_span_grid),
                seed: 0,
                weighted: !self.unweighted_cv,
                kernel: Kernel::Tricube,
            },
            kernel: Kernel::Tricube,
        })
    }
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "unweighted,eb_1,eb_2,eb_3,eb_4,normal_gps")]
    methods: Vec<String>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct CoverageArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value = "eb_2")]
    method: String,
    /// Bootstrap replicates per dataset.
    #[arg(long, default_value_t = 100)]
    bootstrap: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SolverArgs {
    #[arg(long, default_value_t = -100.0, allow_negative_numbers = true)]
    lower: f64,
    #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
    upper: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            lower: self.lower,
            upper: self.upper,
            tol: self.tol,
            max_iter: self.max_iter,
            ..SolverOptions::default()
        }
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("grid `{s}` is not `lo:hi:count`"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let count: usize = count.trim().parse().map_err(|_| bad())?;
    if count == 0 || !(lo.is_finite() && hi.is_finite()) || (count > 1 && !(lo < hi)) {
        return Err(bad());
    }
    Ok(linspace(lo, hi, count))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Io { path, source: e })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(dir, name, &s)
}

fn prepare(out: &OutArgs) -> Result<()> {
    fs::create_dir_all(&out.out_dir).map_err(|e| Error::Io {
        path: out.out_dir.clone(),
        source: e,
    })
}

#[derive(Serialize)]
struct ConfigEcho<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    args: &'a T,
}

/// Everything needed to rerun the command; thread count is left out because
/// it never changes results.
fn echo_config<T: Serialize>(dir: &Path, command: &str, args: &T) -> Result<()> {
    write_json(
        dir,
        "config.json",
        &ConfigEcho {
            command,
            version: env!("CARGO_PKG_VERSION"),
            args,
        },
    )
}

fn read_weights(path: &Path, n: usize) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "weight")
        .ok_or_else(|| Error::Schema(format!("{}: no `weight` column", path.display())))?;
    let mut w = Vec::with_capacity(n);
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(col).unwrap_or("");
        let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
            row: row + 1,
            column: "weight".into(),
            value: raw.into(),
        })?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidData(format!("weight on row {} is not finite and nonnegative", row + 1)));
        }
        w.push(v);
    }
    if w.len() != n {
        return Err(Error::InvalidData(format!(
            "{} holds {} weights for {n} data rows",
            path.display(),
            w.len()
        )));
    }
    entbal::stats::normalize(&w)
}

fn weights_csv(w: &[f64]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["row", "weight"])?;
    for (i, v) in w.iter().enumerate() {
        wtr.write_record([(i + 1).to_string(), v.to_string()])?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Serialize)]
struct WeightDiagnostics<'a> {
    method: String,
    n: usize,
    ess: f64,
    converged: bool,
    max_residual: Option<f64>,
    any_at_bound: Option<bool>,
    fit: &'a WeightFit,
}

fn cmd_weights(args: &WeightsArgs) -> Result<()> {
    prepare(&args.out)?;
    let ds = args.data.load()?;
    let dm = encode(&ds)?;
    let method = args.method.method()?;
    let fit = compute_weights(&dm, ds.exposure(), &method, &args.method.solver())?;
    let eb = fit.entropy_balancing.as_ref();
    let diag = WeightDiagnostics {
        method: method.to_string(),
        n: ds.n(),
        ess: fit.ess,
        converged: fit.converged,
        max_residual: eb.map(|s| s.max_residual()),
        any_at_bound: eb.map(|s| s.any_at_bound()),
        fit: &fit,
    };
    let dir = &args.out.out_dir;
    write(dir, "weights.csv", &weights_csv(&fit.weights)?)?;
    write_json(dir, "diagnostics.json", &diag)?;
    echo_config(dir, "weights", args)?;
    let report = balance_report(&dm, ds.exposure(), &fit.weights)?;
    write_json(dir, "balance.json", &report)?;
    match args.out.format {
        Format::Table => {
            outln!(
                "{method}: n = {}, ESS = {:.2}, converged = {}, max residual = {}",
                ds.n(),
                fit.ess,
                fit.converged,
                diag.max_residual.map_or("NA".into(), |r| format!("{r:.3e}"))
            );
            out!("{}", report.to_table());
        }
        Format::Csv => out!("{}", weights_csv(&fit.weights)?),
        Format::Json => outln!("{}", serde_json::to_string_pretty(&diag)?),
    }
    if !fit.converged {
        return Err(Error::NotConverged(format!(
            "{method} weights; diagnostics written to {}",
            dir.display()
        )));
    }
    Ok(())
}

fn ecdf_csv(names: &[String], columns: &[&[f64]], w: &[f64]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["variable", "x", "weighted", "unweighted"])?;
    for (name, col) in names.iter().zip(columns) {
        for p in ecdf_points(col, w) {
            wtr.write_record([name.clone(), p.x.to_string(), p.weighted.to_string(), p.unweighted.to_string()])?;
        }
    }
    let bytes = wtr.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn cmd_balance(args: &BalanceArgs) -> Result<()> {
    prepare(&args.out)?;
    let ds = args.data.load()?;
    let dm = encode(&ds)?;
    let w = match &args.weights {
        Some(p) => read_weights(p, ds.n())?,
        None => entbal::stats::uniform_weights(ds.n()),
    };
    let report = balance_report(&dm, ds.exposure(), &w)?;
    let dir = &args.out.out_dir;
    let table = report.to_table();
    let csv_text = report.to_csv()?;
    write(dir, "balance.txt", &table)?;
    write(dir, "balance.csv", &csv_text)?;
    write_json(dir, "balance.json", &report)?;
    let mut names = vec![args.data.exposure.clone()];
    names.extend(dm.names().iter().cloned());
    let mut cols: Vec<&[f64]> = vec![ds.exposure()];
    cols.extend(dm.columns().iter().map(Vec::as_slice));
    write(dir, "ecdf.csv", &ecdf_csv(&names, &cols, &w)?)?;
    echo_config(dir, "balance", args)?;
    match args.out.format {
        Format::Table => out!("{table}"),
        Format::Csv => out!("{csv_text}"),
        Format::Json => outln!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn curve_csv(c: &DoseResponseCurve) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["a0", "estimate", "se", "lo", "hi", "available"])?;
    for (a0, e) in c.grid.iter().zip(&c.estimates) {
        wtr.write_record([
            a0.to_string(),
            e.map(|v| v.to_string()).unwrap_or_default(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn boot_options(replicates: usize, seed: u64, percentile: bool, dump: bool) -> BootstrapOptions {
    BootstrapOptions {
        replicates,
        seed,
        interval: if percentile {
            IntervalKind::Percentile
        } else {
            IntervalKind::NormalSe
        },
        keep_replicates: dump,
    }
}

fn emit_bootstrap(out: &OutArgs, r: &BootstrapResult) -> Result<()> {
    let dir = &out.out_dir;
    let text = r.to_csv()?;
    write(dir, "curve.csv", &text)?;
    write_json(dir, "bootstrap.json", r)?;
    if let Some(rep) = r.replicates_csv()? {
        write(dir, "replicates.csv", &rep)?;
    }
    if !r.failures.is_empty() {
        eprintln!(
            "{} of {} replicates failed{}",
            r.failures.len(),
            r.replicates,
            if r.degraded { " (DEGRADED INFERENCE)" } else { "" }
        );
    }
    match out.format {
        Format::Table | Format::Csv => out!("{text}"),
        Format::Json => outln!("{}", serde_json::to_string_pretty(r)?),
    }
    Ok(())
}

fn pipeline_config(method: &MethodArgs, curve: &CurveArgs) -> Result<PipelineConfig> {
    Ok(PipelineConfig {
        method: method.method()?,
        solver: method.solver(),
        curve: curve.options(),
    })
}

fn cmd_drc(args: &DrcArgs) -> Result<()> {
    prepare(&args.out)?;
    let ds = args.data.load()?;
    let cfg = pipeline_config(&args.method, &args.curve)?;
    let weights = match &args.weights {
        Some(p) => read_weights(p, ds.n())?,
        None => {
            let fit = compute_weights(&encode(&ds)?, ds.exposure(), &cfg.method, &cfg.solver)?;
            if !fit.converged {
                return Err(Error::NotConverged(format!("{} weights", cfg.method)));
            }
            fit.weights
        }
    };
    let grid = args.curve.grid(ds.exposure(), &weights)?;
    echo_config(&args.out.out_dir, "drc", args)?;
    if let Some(b) = args.bootstrap {
        let opts = boot_options(b, args.seed, args.percentile, args.dump_replicates);
        let r = bootstrap_curve_from_weights(&ds, &weights, &cfg, &grid, &opts)?;
        return emit_bootstrap(&args.out, &r);
    }
    let curve = estimate_curve(ds.exposure(), ds.outcome(), &weights, &grid, &cfg.curve)?;
    let dir = &args.out.out_dir;
    let text = curve_csv(&curve)?;
    write(dir, "curve.csv", &text)?;
    write_json(dir, "curve.json", &curve)?;
    match args.out.format {
        Format::Table | Format::Csv => out!("{text}"),
        Format::Json => outln!("{}", serde_json::to_string_pretty(&curve)?),
    }
    Ok(())
}

fn cmd_bootstrap(args: &BootstrapArgs) -> Result<()> {
    prepare(&args.out)?;
    let ds = args.data.load()?;
    let cfg = pipeline_config(&args.method, &args.curve)?;
    let grid = match &args.curve.grid {
        Some(_) => args.curve.grid(ds.exposure(), &[])?,
        None => {
            let fit = compute_weights(&encode(&ds)?, ds.exposure(), &cfg.method, &cfg.solver)?;
            args.curve.grid(ds.exposure(), &fit.weights)?
        }
    };
    echo_config(&args.out.out_dir, "bootstrap", args)?;
    let opts = boot_options(args.replicates, args.seed, args.percentile, args.dump_replicates);
    let r = bootstrap_curve(&ds, &cfg, &grid, &opts)?;
    emit_bootstrap(&args.out, &r)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    prepare(&args.out)?;
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse())
        .collect::<Result<Vec<WeightingMethod>>>()?;
    let cfg = args.sim.config(methods, args.solver.options())?;
    echo_config(&args.out.out_dir, "simulate", args)?;
    let table = run_replications(&cfg)?;
    let dir = &args.out.out_dir;
    let text = table.to_table();
    let csv_text = table.to_csv()?;
    write(dir, "metrics.txt", &text)?;
    write(dir, "metrics.csv", &csv_text)?;
    write(dir, "balance.txt", &table.balance_table())?;
    write(dir, "curves.csv", &table.curves_csv()?)?;
    write_json(dir, "metrics.json", &table)?;
    match args.out.format {
        Format::Table => {
            out!("{text}");
            outln!();
            out!("{}", table.balance_table());
        }
        Format::Csv => out!("{csv_text}"),
        Format::Json => outln!("{}", serde_json::to_string_pretty(&table)?),
    }
    Ok(())
}

fn cmd_coverage(args: &CoverageArgs) -> Result<()> {
    prepare(&args.out)?;
    let method: WeightingMethod = args.method.parse()?;
    let cfg = args.sim.config(vec![method], args.solver.options())?;
    echo_config(&args.out.out_dir, "coverage", args)?;
    let table = coverage_study(&cfg, args.bootstrap)?;
    let dir = &args.out.out_dir;
    let text = table.to_table();
    let csv_text = table.to_csv()?;
    write(dir, "coverage.txt", &text)?;
    write(dir, "coverage.csv", &csv_text)?;
    write_json(dir, "coverage.json", &table)?;
    match args.out.format {
        Format::Table => out!("{text}"),
        Format::Csv => out!("{csv_text}"),
        Format::Json => outln!("{}", serde_json::to_string_pretty(&table)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Weights(a) => cmd_weights(a),
        Command::Balance(a) => cmd_balance(a),
        Command::Drc(a) => cmd_drc(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Coverage(a) => cmd_coverage(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
