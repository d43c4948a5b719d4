//! Simulated data with a known dose-response curve and the harnesses that
//! score weighting methods against it.
//!
//! Covariates are `X1 ~ N(-0.5, 1)`, `X2 ~ N(1, 1)`, `X3 ~ Bernoulli(0.3)`;
//! the exposure is noncentral chi-square with 3 degrees of freedom and
//! noncentrality `μ_A = 5|X1| + 6|X2| + 3X3`. Two outcome models share the
//! same draws: one with a quadratic exposure effect and covariate
//! interactions, one where the exposure has no effect at all.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, ChiSquared, Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::{conditional_slope, effective_sample_size, weighted_correlation, weighted_ks};
use crate::bootstrap::{bootstrap_curve, stream_rng, BootstrapOptions};
use crate::dataset::{Covariate, CovariateKind, Dataset, DesignMatrix, EncodedKind};
use crate::drc::{estimate_curve, global_poly_fit, linspace, CurveOptions, CvOptions, Kernel, SpanChoice};
use crate::error::{Error, Result};
use crate::pipeline::{compute_weights, PipelineConfig, WeightingMethod};
use crate::solver::SolverOptions;
use crate::stats::{mean, quantile, sample_sd};

/// `E[Y(a)]` in the no-effect scenario: `-0.5 + 1.25 + 1 + 2 - 0.5 + 0.3`.
pub const NO_EFFECT_TRUTH: f64 = 3.55;

/// Marginal curve of the main scenario, `-(a-5)(a+5)/300 + 0.13a + 0.8`.
pub fn true_curve_main(a: f64) -> f64 {
    -(a - 5.0) * (a + 5.0) / 300.0 + 0.13 * a + 0.8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Main,
    NoEffect,
}

impl Scenario {
    pub fn truth(self, a: f64) -> f64 {
        match self {
            Scenario::Main => true_curve_main(a),
            Scenario::NoEffect => NO_EFFECT_TRUTH,
        }
    }

    /// Degree of the global polynomial comparator.
    pub fn regression_degree(self) -> usize {
        match self {
            Scenario::Main => 2,
            Scenario::NoEffect => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Main => "main",
            Scenario::NoEffect => "no_effect",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" => Ok(Scenario::Main),
            "no_effect" | "noeffect" | "no-effect" => Ok(Scenario::NoEffect),
            _ => Err(Error::InvalidArgument(format!("unknown scenario `{s}` (main, no_effect)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimData {
    pub scenario: Scenario,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x3: Vec<f64>,
    pub mu_a: Vec<f64>,
    pub a: Vec<f64>,
    pub y: Vec<f64>,
}

impl SimData {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn truth(&self, a: f64) -> f64 {
        self.scenario.truth(a)
    }

    pub fn to_dataset(&self) -> Dataset {
        Dataset::new(
            self.y.clone(),
            self.a.clone(),
            vec![
                Covariate::numeric("X1", CovariateKind::Continuous, self.x1.clone()),
                Covariate::numeric("X2", CovariateKind::Continuous, self.x2.clone()),
                Covariate::numeric("X3", CovariateKind::Binary, self.x3.clone()),
            ],
        )
        .expect("simulated data are finite with binary X3")
    }

    pub fn design(&self) -> DesignMatrix {
        DesignMatrix::from_columns(
            vec![self.x1.clone(), self.x2.clone(), self.x3.clone()],
            vec!["X1".into(), "X2".into(), "X3".into()],
            vec![EncodedKind::Continuous, EncodedKind::Continuous, EncodedKind::Binary],
        )
        .expect("equal-length simulated columns")
    }
}

/// Noncentral chi-square draw as a Poisson mixture of central chi-squares:
/// `K ~ Poisson(ncp/2)`, then `χ²(df + 2K)`.
pub fn sample_noncentral_chi2<R: Rng + ?Sized>(df: f64, ncp: f64, rng: &mut R) -> f64 {
    let k = if ncp > 0.0 {
        Poisson::new(ncp / 2.0).expect("positive Poisson mean").sample(rng)
    } else {
        0.0
    };
    ChiSquared::new(df + 2.0 * k).expect("positive degrees of freedom").sample(rng)
}

/// Outcome of the main scenario given covariates, exposure and noise.
pub fn main_outcome(x1: f64, x2: f64, x3: f64, a: f64, eps: f64) -> f64 {
    -(a - 5.0) * (a + 5.0) / 300.0 + a * (x1 * x1 + x2 * x2) / 25.0 + x1 + x2 + x3 + eps
}

pub fn no_effect_outcome(x1: f64, x2: f64, x3: f64, eps: f64) -> f64 {
    x1 + x1 * x1 + x2 + x2 * x2 + x1 * x2 + x3 + eps
}

/// Draws `n` units from stream `stream` of `seed`.
pub fn generate(scenario: Scenario, n: usize, seed: u64, stream: u64) -> SimData {
    let mut rng = stream_rng(seed, stream);
    generate_with(scenario, n, &mut rng)
}

fn generate_with(scenario: Scenario, n: usize, rng: &mut ChaCha8Rng) -> SimData {
    let n1 = Normal::new(-0.5, 1.0).expect("valid normal");
    let n2 = Normal::new(1.0, 1.0).expect("valid normal");
    let b3 = Bernoulli::new(0.3).expect("valid probability");
    let mut d = SimData {
        scenario,
        x1: Vec::with_capacity(n),
        x2: Vec::with_capacity(n),
        x3: Vec::with_capacity(n),
        mu_a: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let x1: f64 = n1.sample(rng);
        let x2: f64 = n2.sample(rng);
        let x3 = f64::from(u8::from(b3.sample(rng)));
        let mu = 5.0 * x1.abs() + 6.0 * x2.abs() + 3.0 * x3;
        let a = sample_noncentral_chi2(3.0, mu, rng);
        let eps: f64 = StandardNormal.sample(rng);
        let y = match scenario {
            Scenario::Main => main_outcome(x1, x2, x3, a, eps),
            Scenario::NoEffect => no_effect_outcome(x1, x2, x3, eps),
        };
        d.x1.push(x1);
        d.x2.push(x2);
        d.x3.push(x3);
        d.mu_a.push(mu);
        d.a.push(a);
        d.y.push(y);
    }
    d
}

pub fn gen_main(n: usize, seed: u64) -> SimData {
    generate(Scenario::Main, n, seed, 0)
}

pub fn gen_noeffect(n: usize, seed: u64) -> SimData {
    generate(Scenario::NoEffect, n, seed, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub n_per_rep: usize,
    pub reps: usize,
    pub methods: Vec<WeightingMethod>,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub solver: SolverOptions,
    /// CV settings; the fold seed is replaced per replication.
    pub cv: CvOptions,
    pub kernel: Kernel,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Main,
            n_per_rep: 1000,
            reps: 200,
            methods: vec![WeightingMethod::Unweighted, WeightingMethod::entropy_balancing(2)],
            grid: linspace(0.0, 45.0, 46),
            seed: 20240101,
            solver: SolverOptions::default(),
            cv: CvOptions::default(),
            kernel: Kernel::Tricube,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no weighting methods requested".into()));
        }
        if self.n_per_rep < 10 {
            return Err(Error::InvalidArgument("n per replication must be at least 10".into()));
        }
        if self.grid.is_empty() || self.grid.iter().any(|g| !(0.0..=45.0).contains(g)) {
            return Err(Error::InvalidArgument("simulation grid must lie within [0, 45]".into()));
        }
        Ok(())
    }

    /// Fold seed for replication `rep`, from a stream disjoint from data draws.
    fn cv_seed(&self, rep: usize) -> u64 {
        use rand::RngCore;
        stream_rng(self.seed ^ 0xC2B2_AE3D_27D4_EB4F, rep as u64).next_u64()
    }

    fn pipeline(&self, method: WeightingMethod, rep: usize) -> PipelineConfig {
        PipelineConfig {
            method,
            solver: self.solver,
            curve: CurveOptions {
                span: SpanChoice::CrossValidated(CvOptions {
                    seed: self.cv_seed(rep),
                    ..self.cv.clone()
                }),
                kernel: self.kernel,
                warn_outside_high_density: false,
            },
        }
    }
}

/// Display name used in the text tables.
pub fn method_label(m: &WeightingMethod) -> String {
    match m {
        WeightingMethod::Unweighted => "Unweighted".into(),
        WeightingMethod::EntropyBalancing {
            covariate_order,
            exposure_order,
            ..
        } if covariate_order == exposure_order => format!("Entropy Balancing ({covariate_order})"),
        WeightingMethod::EntropyBalancing { .. } => format!("Entropy Balancing [{m}]"),
        WeightingMethod::NormalGps { .. } => "Linear Model".into(),
    }
}

/// Balance of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RepBalance {
    conditional: Vec<f64>,
    correlation: Vec<f64>,
    /// Exposure first, then each covariate.
    ks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RepOutcome {
    ess: f64,
    span: f64,
    loess: Vec<Option<f64>>,
    reg: Vec<f64>,
    balance: RepBalance,
}

fn rep_balance(dm: &DesignMatrix, a: &[f64], w: &[f64]) -> RepBalance {
    let mut out = RepBalance {
        conditional: Vec::new(),
        correlation: Vec::new(),
        ks: vec![weighted_ks(a, w)],
    };
    for x in dm.columns() {
        // Slope of the covariate on the exposure.
        out.conditional
            .push(conditional_slope(a, x, w).map_or(f64::NAN, |s| s.beta.abs()));
        out.correlation
            .push(weighted_correlation(x, a, w).map_or(f64::NAN, f64::abs));
        out.ks.push(weighted_ks(x, w));
    }
    out
}

fn run_one(cfg: &SimConfig, data: &SimData, method: WeightingMethod, rep: usize) -> Result<RepOutcome> {
    let dm = data.design();
    let p = cfg.pipeline(method, rep);
    let wf = compute_weights(&dm, &data.a, &p.method, &p.solver)?;
    if !wf.converged {
        return Err(Error::NotConverged(format!("{method} weights")));
    }
    let curve = estimate_curve(&data.a, &data.y, &wf.weights, &cfg.grid, &p.curve)?;
    let poly = global_poly_fit(&data.a, &data.y, &wf.weights, cfg.scenario.regression_degree())?;
    Ok(RepOutcome {
        ess: effective_sample_size(&wf.weights)?,
        span: curve.span_used,
        loess: curve.estimates,
        reg: poly.curve(&cfg.grid),
        balance: rep_balance(&dm, &data.a, &wf.weights),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: WeightingMethod,
    pub label: String,
    pub reps_used: usize,
    pub failures: usize,
    pub avg_ess: f64,
    pub loess_bias: f64,
    pub reg_bias: f64,
    pub loess_mse: f64,
    pub reg_mse: f64,
    /// Grid cells (rep × point) with a LOESS estimate.
    pub loess_cells: usize,
    pub mean_span: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceSummary {
    pub method: WeightingMethod,
    pub label: String,
    pub covariates: Vec<String>,
    /// `|slope|` of each covariate regressed on the exposure.
    pub avg_conditional: Vec<f64>,
    pub max_conditional: Vec<f64>,
    pub avg_correlation: Vec<f64>,
    pub max_correlation: Vec<f64>,
    /// Exposure first, then each covariate.
    pub avg_ks: Vec<f64>,
    pub max_ks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBundle {
    pub method: WeightingMethod,
    pub estimator: String,
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub mean: Vec<Option<f64>>,
    pub lo: Vec<Option<f64>>,
    pub hi: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub method: WeightingMethod,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub scenario: Scenario,
    pub reps: usize,
    pub n_per_rep: usize,
    pub metrics: Vec<MethodMetrics>,
    pub balance: Vec<BalanceSummary>,
    pub curves: Vec<CurveBundle>,
    pub failures: Vec<RepFailure>,
}

/// Mean and 2.5%/97.5% envelope over replications at each grid point.
fn bundle(method: WeightingMethod, estimator: &str, grid: &[f64], scenario: Scenario, rows: &[Vec<Option<f64>>]) -> CurveBundle {
    let mut mean_v = Vec::with_capacity(grid.len());
    let mut lo = Vec::with_capacity(grid.len());
    let mut hi = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let vals: Vec<f64> = rows.iter().filter_map(|r| r[i]).collect();
        if vals.is_empty() {
            mean_v.push(None);
            lo.push(None);
            hi.push(None);
        } else {
            mean_v.push(Some(mean(&vals)));
            lo.push(Some(quantile(&vals, 0.025)));
            hi.push(Some(quantile(&vals, 0.975)));
        }
    }
    CurveBundle {
        method,
        estimator: estimator.into(),
        grid: grid.to_vec(),
        truth: grid.iter().map(|&a| scenario.truth(a)).collect(),
        mean: mean_v,
        lo,
        hi,
    }
}

fn avg_max(rows: &[&Vec<f64>], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut avg = vec![0.0; k];
    let mut max = vec![0.0_f64; k];
    for r in rows {
        for j in 0..k {
            avg[j] += r[j] / rows.len() as f64;
            max[j] = max[j].max(r[j]);
        }
    }
    (avg, max)
}

/// Runs every method on `cfg.reps` simulated datasets and scores the curves.
///
/// Replications run in parallel; each draws from its own RNG stream, so the
/// result does not depend on the thread count.
pub fn run_replications(cfg: &SimConfig) -> Result<MetricsTable> {
    cfg.validate()?;
    let per_rep: Vec<Vec<std::result::Result<RepOutcome, String>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let data = generate(cfg.scenario, cfg.n_per_rep, cfg.seed, rep as u64);
            cfg.methods
                .iter()
                .map(|&m| run_one(cfg, &data, m, rep).map_err(|e| e.to_string()))
                .collect()
        })
        .collect();

    let truth: Vec<f64> = cfg.grid.iter().map(|&a| cfg.scenario.truth(a)).collect();
    let mut metrics = Vec::new();
    let mut balance = Vec::new();
    let mut curves = Vec::new();
    let mut failures = Vec::new();
    let covariates = vec!["X1".to_string(), "X2".to_string(), "X3".to_string()];

    for (mi, &method) in cfg.methods.iter().enumerate() {
        let mut ok: Vec<&RepOutcome> = Vec::new();
        for (rep, outcomes) in per_rep.iter().enumerate() {
            match &outcomes[mi] {
                Ok(o) => ok.push(o),
                Err(reason) => failures.push(RepFailure {
                    rep,
                    method,
                    reason: reason.clone(),
                }),
            }
        }
        let (mut lb, mut lm, mut cells) = (0.0, 0.0, 0usize);
        let (mut rb, mut rm) = (0.0, 0.0);
        for o in &ok {
            for (i, t) in truth.iter().enumerate() {
                if let Some(e) = o.loess[i] {
                    lb += e - t;
                    lm += (e - t) * (e - t);
                    cells += 1;
                }
                rb += o.reg[i] - t;
                rm += (o.reg[i] - t) * (o.reg[i] - t);
            }
        }
        let reg_cells = (ok.len() * truth.len()) as f64;
        let k = ok.len() as f64;
        metrics.push(MethodMetrics {
            method,
            label: method_label(&method),
            reps_used: ok.len(),
            failures: cfg.reps - ok.len(),
            avg_ess: ok.iter().map(|o| o.ess).sum::<f64>() / k,
            loess_bias: lb / cells as f64,
            reg_bias: rb / reg_cells,
            loess_mse: lm / cells as f64,
            reg_mse: rm / reg_cells,
            loess_cells: cells,
            mean_span: ok.iter().map(|o| o.span).sum::<f64>() / k,
        });

        let cond: Vec<&Vec<f64>> = ok.iter().map(|o| &o.balance.conditional).collect();
        let cor: Vec<&Vec<f64>> = ok.iter().map(|o| &o.balance.correlation).collect();
        let ks: Vec<&Vec<f64>> = ok.iter().map(|o| &o.balance.ks).collect();
        let (avg_conditional, max_conditional) = avg_max(&cond, covariates.len());
        let (avg_correlation, max_correlation) = avg_max(&cor, covariates.len());
        let (avg_ks, max_ks) = avg_max(&ks, covariates.len() + 1);
        balance.push(BalanceSummary {
            method,
            label: method_label(&method),
            covariates: covariates.clone(),
            avg_conditional,
            max_conditional,
            avg_correlation,
            max_correlation,
            avg_ks,
            max_ks,
        });

        let loess_rows: Vec<Vec<Option<f64>>> = ok.iter().map(|o| o.loess.clone()).collect();
        let reg_rows: Vec<Vec<Option<f64>>> = ok
            .iter()
            .map(|o| o.reg.iter().copied().map(Some).collect())
            .collect();
        curves.push(bundle(method, "loess", &cfg.grid, cfg.scenario, &loess_rows));
        curves.push(bundle(method, "reg", &cfg.grid, cfg.scenario, &reg_rows));
    }
    failures.sort_by_key(|f| f.rep);

    Ok(MetricsTable {
        scenario: cfg.scenario,
        reps: cfg.reps,
        n_per_rep: cfg.n_per_rep,
        metrics,
        balance,
        curves,
        failures,
    })
}

const NOT_IMPLEMENTED: &str = "external method: not implemented";

fn cbps_rows() -> impl Iterator<Item = String> {
    (1..=4).map(|k| format!("CBPS - Nonparametric: ({k})"))
}

impl MetricsTable {
    /// Average ESS, bias and MSE per method and estimator.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {} | {} replications of n = {}",
            self.scenario.name(),
            self.reps,
            self.n_per_rep
        );
        let _ = writeln!(
            s,
            "{:<28} | {:>9} | {:>8} {:>8} | {:>8} {:>8} | {:>5}",
            "", "", "Avg. Bias", "", "MSE", "", ""
        );
        let _ = writeln!(
            s,
            "{:<28} | {:>9} | {:>8} {:>8} | {:>8} {:>8} | {:>5}",
            "Weighting Method", "Avg. ESS", "LOESS", "Reg.", "LOESS", "Reg.", "fail"
        );
        let _ = writeln!(s, "{}", "-".repeat(88));
        for m in &self.metrics {
            let _ = writeln!(
                s,
                "{:<28} | {:>9.3} | {:>8.3} {:>8.3} | {:>8.3} {:>8.3} | {:>5}",
                m.label, m.avg_ess, m.loess_bias, m.reg_bias, m.loess_mse, m.reg_mse, m.failures
            );
        }
        for label in cbps_rows() {
            let _ = writeln!(s, "{label:<28} | {NOT_IMPLEMENTED}");
        }
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record([
            "method", "label", "reps_used", "failures", "avg_ess", "loess_bias", "reg_bias", "loess_mse",
            "reg_mse", "loess_cells", "mean_span",
        ])?;
        for m in &self.metrics {
            wtr.write_record([
                m.method.to_string(),
                m.label.clone(),
                m.reps_used.to_string(),
                m.failures.to_string(),
                m.avg_ess.to_string(),
                m.loess_bias.to_string(),
                m.reg_bias.to_string(),
                m.loess_mse.to_string(),
                m.reg_mse.to_string(),
                m.loess_cells.to_string(),
                m.mean_span.to_string(),
            ])?;
        }
        for label in cbps_rows() {
            let mut rec = vec![String::from("cbps"), label];
            rec.extend(std::iter::repeat_n(String::new(), 8));
            rec.push(NOT_IMPLEMENTED.to_string());
            wtr.write_record(&rec)?;
        }
        finish_csv(wtr)
    }

    /// Conditional, correlation and KS balance, averaged and maximized over reps.
    pub fn balance_table(&self) -> String {
        let mut s = String::new();
        let Some(first) = self.balance.first() else {
            return s;
        };
        let cov = &first.covariates;
        let mut header = format!("{:<28} |", "Method");
        for block in ["cond", "cor"] {
            for c in cov {
                let _ = write!(header, " {:>8}", format!("{block}:{c}"));
            }
            header.push_str(" |");
        }
        let _ = write!(header, " {:>8}", "ks:A");
        for c in cov {
            let _ = write!(header, " {:>8}", format!("ks:{c}"));
        }
        for (title, pick_max) in [("Average across replications", false), ("Maximum across replications", true)] {
            let _ = writeln!(s, "{title}");
            let _ = writeln!(s, "{header}");
            let _ = writeln!(s, "{}", "-".repeat(header.chars().count()));
            for b in &self.balance {
                let (cond, cor, ks) = if pick_max {
                    (&b.max_conditional, &b.max_correlation, &b.max_ks)
                } else {
                    (&b.avg_conditional, &b.avg_correlation, &b.avg_ks)
                };
                let _ = write!(s, "{:<28} |", b.label);
                for v in cond {
                    let _ = write!(s, " {v:>8.3}");
                }
                s.push_str(" |");
                for v in cor {
                    let _ = write!(s, " {v:>8.3}");
                }
                s.push_str(" |");
                for v in ks {
                    let _ = write!(s, " {v:>8.3}");
                }
                s.push('\n');
            }
            for label in cbps_rows() {
                let _ = writeln!(s, "{label:<28} | {NOT_IMPLEMENTED}");
            }
            s.push('\n');
        }
        s
    }

    /// Long-format curve bundles: `method,estimator,a0,truth,mean,lo,hi`.
    pub fn curves_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["method", "estimator", "a0", "truth", "mean", "lo", "hi"])?;
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.curves {
            for i in 0..c.grid.len() {
                wtr.write_record([
                    c.method.to_string(),
                    c.estimator.clone(),
                    c.grid[i].to_string(),
                    c.truth[i].to_string(),
                    f(c.mean[i]),
                    f(c.lo[i]),
                    f(c.hi[i]),
                ])?;
            }
        }
        finish_csv(wtr)
    }
}

fn finish_csv(wtr: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = wtr.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub a0: f64,
    pub truth: f64,
    /// Datasets whose interval exists at this point.
    pub datasets: usize,
    pub coverage: Option<f64>,
    pub mean_se: Option<f64>,
    pub sampling_sd: Option<f64>,
    pub se_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub scenario: Scenario,
    pub method: WeightingMethod,
    pub reps: usize,
    pub bootstrap_replicates: usize,
    pub points: Vec<CoveragePoint>,
    /// 1%, 5%, 95% and 99% quantiles of the exposure pooled over datasets.
    pub exposure_quantiles: [f64; 4],
    pub failed_datasets: usize,
    pub degraded_datasets: usize,
}

impl CoverageTable {
    /// Grid points inside `[lo, hi]`.
    pub fn points_between(&self, lo: f64, hi: f64) -> impl Iterator<Item = &CoveragePoint> {
        self.points.iter().filter(move |p| p.a0 >= lo && p.a0 <= hi)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["a0", "truth", "datasets", "coverage", "mean_se", "sampling_sd", "ratio"])?;
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.points {
            wtr.write_record([
                p.a0.to_string(),
                p.truth.to_string(),
                p.datasets.to_string(),
                f(p.coverage),
                f(p.mean_se),
                f(p.sampling_sd),
                f(p.se_ratio),
            ])?;
        }
        finish_csv(wtr)
    }

    pub fn to_table(&self) -> String {
        let q = self.exposure_quantiles;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} | {} datasets × B = {} | exposure quantiles 1%: {:.2}, 5%: {:.2}, 95%: {:.2}, 99%: {:.2}",
            method_label(&self.method),
            self.reps,
            self.bootstrap_replicates,
            q[0],
            q[1],
            q[2],
            q[3]
        );
        let _ = writeln!(s, "{:>8} {:>8} {:>9} {:>9} {:>11} {:>7}", "a0", "n", "coverage", "mean se", "sampling sd", "ratio");
        let f = |v: Option<f64>, p: usize| v.map_or("NA".to_string(), |x| format!("{x:.p$}"));
        for p in &self.points {
            let _ = writeln!(
                s,
                "{:>8.2} {:>8} {:>9} {:>9} {:>11} {:>7}",
                p.a0,
                p.datasets,
                f(p.coverage, 3),
                f(p.mean_se, 4),
                f(p.sampling_sd, 4),
                f(p.se_ratio, 3)
            );
        }
        let _ = writeln!(
            s,
            "failed datasets: {} | degraded bootstraps: {}",
            self.failed_datasets, self.degraded_datasets
        );
        s
    }
}

/// Bootstrap interval coverage of the true curve over repeated datasets,
/// using the first method in `cfg.methods`.
pub fn coverage_study(cfg: &SimConfig, bootstrap_replicates: usize) -> Result<CoverageTable> {
    cfg.validate()?;
    let method = cfg.methods[0];
    let results: Vec<(Vec<f64>, std::result::Result<crate::bootstrap::BootstrapResult, String>)> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let data = generate(cfg.scenario, cfg.n_per_rep, cfg.seed, rep as u64);
            let opts = BootstrapOptions {
                replicates: bootstrap_replicates,
                seed: {
                    use rand::RngCore;
                    stream_rng(cfg.seed ^ 0x1656_67B1_9E37_79F9, rep as u64).next_u64()
                },
                ..Default::default()
            };
            let r = bootstrap_curve(&data.to_dataset(), &cfg.pipeline(method, rep), &cfg.grid, &opts)
                .map_err(|e| e.to_string());
            (data.a, r)
        })
        .collect();

    let mut pooled = Vec::with_capacity(cfg.reps * cfg.n_per_rep);
    let mut ok = Vec::new();
    let mut failed = 0;
    for (a, r) in results {
        pooled.extend(a);
        match r {
            Ok(b) => ok.push(b),
            Err(e) => {
                log::warn!("coverage dataset failed: {e}");
                failed += 1;
            }
        }
    }
    let degraded = ok.iter().filter(|b| b.degraded).count();
    let points = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(i, &a0)| {
            let truth = cfg.scenario.truth(a0);
            let mut covered = 0usize;
            let mut ses = Vec::new();
            let mut ests = Vec::new();
            for b in &ok {
                if let (Some(lo), Some(hi), Some(se), Some(est)) = (b.lo[i], b.hi[i], b.se[i], b.point_estimates[i]) {
                    covered += usize::from(lo <= truth && truth <= hi);
                    ses.push(se);
                    ests.push(est);
                }
            }
            let n = ses.len();
            let mean_se = (n > 0).then(|| mean(&ses));
            let sampling_sd = (n > 1).then(|| sample_sd(&ests));
            CoveragePoint {
                a0,
                truth,
                datasets: n,
                coverage: (n > 0).then(|| covered as f64 / n as f64),
                mean_se,
                sampling_sd,
                se_ratio: match (mean_se, sampling_sd) {
                    (Some(m), Some(s)) if s > 0.0 => Some(m / s),
                    _ => None,
                },
            }
        })
        .collect();
    Ok(CoverageTable {
        scenario: cfg.scenario,
        method,
        reps: cfg.reps,
        bootstrap_replicates,
        points,
        exposure_quantiles: [
            quantile(&pooled, 0.01),
            quantile(&pooled, 0.05),
            quantile(&pooled, 0.95),
            quantile(&pooled, 0.99),
        ],
        failed_datasets: failed,
        degraded_datasets: degraded,
    })
}
