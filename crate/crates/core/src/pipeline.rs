//! Weighting methods and the encode → weight → curve pipeline shared by the
//! CLI, the bootstrap and the simulation harness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{encode, moment_targets, ColumnTransform, Dataset, DesignMatrix};
use crate::drc::{estimate_curve, CurveOptions, DoseResponseCurve};
use crate::error::{Error, Result};
use crate::gps::{fit_normal_gps, GpsWeights};
use crate::solver::{build_constraints, solve, ConstraintOptions, EbSolution, SolverOptions};
use crate::stats::uniform_weights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum WeightingMethod {
    Unweighted,
    EntropyBalancing {
        covariate_order: usize,
        exposure_order: usize,
        #[serde(default)]
        exposure_cross_powers: bool,
    },
    NormalGps {
        #[serde(default)]
        truncate: Option<f64>,
    },
}

impl WeightingMethod {
    pub fn entropy_balancing(order: usize) -> Self {
        Self::EntropyBalancing {
            covariate_order: order,
            exposure_order: order,
            exposure_cross_powers: false,
        }
    }
}

impl fmt::Display for WeightingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unweighted => write!(f, "unweighted"),
            Self::EntropyBalancing {
                covariate_order,
                exposure_order,
                exposure_cross_powers,
            } => {
                if covariate_order == exposure_order {
                    write!(f, "eb_{covariate_order}")?;
                } else {
                    write!(f, "eb_{covariate_order}_{exposure_order}")?;
                }
                if *exposure_cross_powers {
                    write!(f, "x")?;
                }
                Ok(())
            }
            Self::NormalGps { truncate: None } => write!(f, "normal_gps"),
            Self::NormalGps { truncate: Some(q) } => write!(f, "normal_gps@{q}"),
        }
    }
}

impl FromStr for WeightingMethod {
    type Err = Error;

    /// `unweighted`, `eb_P` (or `eb_P_Q`, suffix `x` for exposure cross
    /// powers), `normal_gps` (or `normal_gps@q` to truncate at quantile q).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown weighting method `{s}`"));
        let s = s.trim();
        if s == "unweighted" {
            return Ok(Self::Unweighted);
        }
        if let Some(rest) = s.strip_prefix("normal_gps") {
            if rest.is_empty() {
                return Ok(Self::NormalGps { truncate: None });
            }
            let q: f64 = rest.strip_prefix('@').ok_or_else(bad)?.parse().map_err(|_| bad())?;
            return Ok(Self::NormalGps { truncate: Some(q) });
        }
        if let Some(rest) = s.strip_prefix("eb_") {
            let (rest, cross) = match rest.strip_suffix('x') {
                Some(r) => (r, true),
                None => (rest, false),
            };
            let parts: Vec<&str> = rest.split('_').collect();
            let orders: Vec<usize> = parts
                .iter()
                .map(|p| p.parse::<usize>().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            let (p, q) = match orders.as_slice() {
                [p] => (*p, *p),
                [p, q] => (*p, *q),
                _ => return Err(bad()),
            };
            return Ok(Self::EntropyBalancing {
                covariate_order: p,
                exposure_order: q,
                exposure_cross_powers: cross,
            });
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFit {
    pub method: WeightingMethod,
    /// Normalized to sum to one.
    pub weights: Vec<f64>,
    pub ess: f64,
    /// False only for an entropy-balancing solve that stopped early.
    pub converged: bool,
    pub entropy_balancing: Option<EbSolution>,
    pub gps: Option<GpsWeights>,
}

/// Entropy-balancing weights on an encoded design.
///
/// Continuous covariates and the exposure are standardized first; the
/// balance conditions are unchanged but the dual is far better conditioned.
pub fn entropy_balance(
    dm: &DesignMatrix,
    exposure: &[f64],
    options: &ConstraintOptions,
    solver: &SolverOptions,
) -> Result<EbSolution> {
    let (z, _) = dm.standardized();
    let t = ColumnTransform::fit(exposure);
    let mut a = exposure.to_vec();
    t.apply_in_place(&mut a);
    let targets = moment_targets(&z, &a, options.covariate_order, options.exposure_order)?;
    let cs = build_constraints(&z, &a, &targets, options)?;
    solve(&cs, None, solver)
}

pub fn compute_weights(
    dm: &DesignMatrix,
    exposure: &[f64],
    method: &WeightingMethod,
    solver: &SolverOptions,
) -> Result<WeightFit> {
    match *method {
        WeightingMethod::Unweighted => Ok(WeightFit {
            method: *method,
            weights: uniform_weights(dm.n()),
            ess: dm.n() as f64,
            converged: true,
            entropy_balancing: None,
            gps: None,
        }),
        WeightingMethod::EntropyBalancing {
            covariate_order,
            exposure_order,
            exposure_cross_powers,
        } => {
            let opts = ConstraintOptions {
                covariate_order,
                exposure_order,
                exposure_cross_powers,
            };
            let sol = entropy_balance(dm, exposure, &opts, solver)?;
            Ok(WeightFit {
                method: *method,
                weights: sol.weights.clone(),
                ess: sol.ess,
                converged: sol.converged,
                entropy_balancing: Some(sol),
                gps: None,
            })
        }
        WeightingMethod::NormalGps { truncate } => {
            let g = fit_normal_gps(dm, exposure, truncate)?;
            Ok(WeightFit {
                method: *method,
                ess: crate::balance::effective_sample_size(&g.weights)?,
                weights: g.weights.clone(),
                converged: true,
                entropy_balancing: None,
                gps: Some(g),
            })
        }
    }
}

/// Everything needed to rerun weighting and curve estimation on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub method: WeightingMethod,
    pub solver: SolverOptions,
    pub curve: CurveOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            method: WeightingMethod::entropy_balancing(2),
            solver: SolverOptions::default(),
            curve: CurveOptions {
                warn_outside_high_density: false,
                ..CurveOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFit {
    pub weights: WeightFit,
    pub curve: DoseResponseCurve,
}

/// Encodes, weights and fits the curve. A non-converged weight solve is an
/// error here: downstream inference cannot use those weights.
pub fn run_pipeline(ds: &Dataset, cfg: &PipelineConfig, grid: &[f64]) -> Result<PipelineFit> {
    let dm = encode(ds)?;
    let weights = compute_weights(&dm, ds.exposure(), &cfg.method, &cfg.solver)?;
    if !weights.converged {
        return Err(Error::NotConverged(format!("{} weights", weights.method)));
    }
    let curve = estimate_curve(ds.exposure(), ds.outcome(), &weights.weights, grid, &cfg.curve)?;
    Ok(PipelineFit { weights, curve })
}
