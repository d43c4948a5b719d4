//! Nonparametric bootstrap of the whole pipeline: resample rows, re-solve
//! the weights, re-select the span, refit the curve.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::drc::{estimate_curve, DoseResponseCurve, SpanChoice};
use crate::error::{Error, Result};
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineFit};
use crate::stats::{quantile, sample_sd};

/// Share of failed replicates above which inference is flagged as degraded.
pub const DEGRADED_FAILURE_SHARE: f64 = 0.2;

/// Independent stream `index` of the ChaCha generator keyed by `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    /// `f̂ ± 2·se`.
    #[default]
    NormalSe,
    /// 2.5% and 97.5% quantiles of the replicate curves.
    Percentile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    pub interval: IntervalKind,
    pub keep_replicates: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: 100,
            seed: 0,
            interval: IntervalKind::NormalSe,
            keep_replicates: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub grid: Vec<f64>,
    pub point_estimates: Vec<Option<f64>>,
    pub se: Vec<Option<f64>>,
    pub lo: Vec<Option<f64>>,
    pub hi: Vec<Option<f64>>,
    /// Replicates contributing an estimate at each grid point.
    pub available: Vec<usize>,
    pub replicates: usize,
    pub failures: Vec<ReplicateFailure>,
    pub degraded: bool,
    pub seed: u64,
    pub interval: IntervalKind,
    pub span_used: f64,
    pub replicate_spans: Vec<Option<f64>>,
    /// Per-replicate curves, `None` for failed replicates; kept on request.
    pub replicate_curves: Option<Vec<Option<Vec<Option<f64>>>>>,
}

impl BootstrapResult {
    /// `a0,estimate,se,lo,hi,available`; unavailable cells are empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["a0", "estimate", "se", "lo", "hi", "available"])?;
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for i in 0..self.grid.len() {
            wtr.write_record([
                self.grid[i].to_string(),
                f(self.point_estimates[i]),
                f(self.se[i]),
                f(self.lo[i]),
                f(self.hi[i]),
                self.available[i].to_string(),
            ])?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// One row per successful replicate: `replicate,span,<grid...>`.
    pub fn replicates_csv(&self) -> Result<Option<String>> {
        let Some(curves) = &self.replicate_curves else {
            return Ok(None);
        };
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["replicate".to_string(), "span".to_string()];
        header.extend(self.grid.iter().map(|g| g.to_string()));
        wtr.write_record(&header)?;
        for (b, curve) in curves.iter().enumerate() {
            if let Some(c) = curve {
                let mut rec = vec![b.to_string(), self.replicate_spans[b].map(|s| s.to_string()).unwrap_or_default()];
                rec.extend(c.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
                wtr.write_record(&rec)?;
            }
        }
        let bytes = wtr.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
        Ok(Some(String::from_utf8(bytes).expect("csv output is UTF-8")))
    }
}

/// Row indices for replicate `b`, drawn with replacement.
pub fn resample_indices(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, b as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn replicate_config(cfg: &PipelineConfig, seed: u64) -> PipelineConfig {
    let mut c = cfg.clone();
    c.curve.warn_outside_high_density = false;
    if let SpanChoice::CrossValidated(cv) = &mut c.curve.span {
        cv.seed = seed;
    }
    c
}

/// Bootstraps the pipeline with `opts.replicates` resamples.
///
/// The point estimate comes from the original data with `cfg` as given, so
/// it does not depend on the bootstrap seed.
pub fn bootstrap_curve(
    ds: &Dataset,
    cfg: &PipelineConfig,
    grid: &[f64],
    opts: &BootstrapOptions,
) -> Result<BootstrapResult> {
    let n = ds.n();
    let resamples: Vec<Vec<usize>> = (0..opts.replicates)
        .map(|b| resample_indices(n, opts.seed, b))
        .collect();
    bootstrap_with_resamples(ds, cfg, grid, &resamples, opts)
}

/// Bootstrap over caller-supplied resamples.
pub fn bootstrap_with_resamples(
    ds: &Dataset,
    cfg: &PipelineConfig,
    grid: &[f64],
    resamples: &[Vec<usize>],
    opts: &BootstrapOptions,
) -> Result<BootstrapResult> {
    if resamples.len() < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 replicates".into()));
    }
    let original = run_pipeline(ds, cfg, grid)?.curve;
    bootstrap_around(original, ds, cfg, grid, resamples, opts)
}

/// Bootstrap whose point estimate uses caller-supplied weights on the
/// original data; replicates still re-solve weights with `cfg.method`.
pub fn bootstrap_curve_from_weights(
    ds: &Dataset,
    weights: &[f64],
    cfg: &PipelineConfig,
    grid: &[f64],
    opts: &BootstrapOptions,
) -> Result<BootstrapResult> {
    if opts.replicates < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 replicates".into()));
    }
    let original = estimate_curve(ds.exposure(), ds.outcome(), weights, grid, &cfg.curve)?;
    let resamples: Vec<Vec<usize>> = (0..opts.replicates)
        .map(|b| resample_indices(ds.n(), opts.seed, b))
        .collect();
    bootstrap_around(original, ds, cfg, grid, &resamples, opts)
}

fn bootstrap_around(
    original: DoseResponseCurve,
    ds: &Dataset,
    cfg: &PipelineConfig,
    grid: &[f64],
    resamples: &[Vec<usize>],
    opts: &BootstrapOptions,
) -> Result<BootstrapResult> {
    let b_total = resamples.len();

    let fits: Vec<std::result::Result<PipelineFit, String>> = resamples
        .par_iter()
        .enumerate()
        .map(|(b, rows)| {
            // CV folds for replicate b come from a stream distinct from the resampling draws.
            let cv_seed = stream_rng(opts.seed ^ 0x9E37_79B9_7F4A_7C15, b as u64).next_u64();
            let sub = ds.select_rows(rows).map_err(|e| e.to_string())?;
            run_pipeline(&sub, &replicate_config(cfg, cv_seed), grid).map_err(|e| e.to_string())
        })
        .collect();

    let mut failures = Vec::new();
    let mut curves: Vec<Option<Vec<Option<f64>>>> = Vec::with_capacity(b_total);
    let mut spans = Vec::with_capacity(b_total);
    for (b, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(f) => {
                spans.push(Some(f.curve.span_used));
                curves.push(Some(f.curve.estimates));
            }
            Err(reason) => {
                failures.push(ReplicateFailure { replicate: b, reason });
                spans.push(None);
                curves.push(None);
            }
        }
    }
    let degraded = failures.len() as f64 > DEGRADED_FAILURE_SHARE * b_total as f64;
    if degraded {
        log::warn!(
            "DEGRADED INFERENCE: {} of {b_total} bootstrap replicates failed; intervals rest on the remainder",
            failures.len()
        );
    } else if !failures.is_empty() {
        log::warn!("{} of {b_total} bootstrap replicates failed and were excluded", failures.len());
    }

    let g = grid.len();
    let mut se = vec![None; g];
    let mut lo = vec![None; g];
    let mut hi = vec![None; g];
    let mut available = vec![0; g];
    for i in 0..g {
        let vals: Vec<f64> = curves.iter().flatten().filter_map(|c| c[i]).collect();
        available[i] = vals.len();
        let Some(est) = original.estimates[i] else {
            continue;
        };
        if vals.len() < 2 {
            continue;
        }
        let s = sample_sd(&vals);
        se[i] = Some(s);
        match opts.interval {
            IntervalKind::NormalSe => {
                lo[i] = Some(est - 2.0 * s);
                hi[i] = Some(est + 2.0 * s);
            }
            IntervalKind::Percentile => {
                lo[i] = Some(quantile(&vals, 0.025));
                hi[i] = Some(quantile(&vals, 0.975));
            }
        }
    }

    Ok(BootstrapResult {
        grid: grid.to_vec(),
        point_estimates: original.estimates,
        se,
        lo,
        hi,
        available,
        replicates: b_total,
        failures,
        degraded,
        seed: opts.seed,
        interval: opts.interval,
        span_used: original.span_used,
        replicate_spans: spans,
        replicate_curves: opts.keep_replicates.then_some(curves),
    })
}
