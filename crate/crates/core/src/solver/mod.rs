//! Entropy-balancing weights for continuous exposures.
//!
//! The primal problem picks weights closest in KL divergence to base weights
//! `q` subject to zero weighted covariance between covariate powers and the
//! centred exposure, plus preserved marginal moments of both. Its Lagrangian
//! dual is the smooth convex function [`dual_objective`], minimized here
//! inside a box with a limited-memory quasi-Newton method.

mod binary;
mod constraints;
mod dual;
pub mod lbfgsb;

use serde::{Deserialize, Serialize};

pub use binary::{solve_binary, BinaryEbSolution, GroupSolution};
pub use constraints::{
    build_constraints, ConstraintKind, ConstraintLabel, ConstraintOptions, ConstraintSystem,
};
pub use dual::{dual_gradient, dual_objective, weights_from_theta};

use crate::balance::effective_sample_size;
use crate::error::{Error, Result};
use dual::DualEvaluator;
use lbfgsb::{minimize, LbfgsbOptions};

/// Distance from a bound under which a multiplier is reported as bound-active.
pub const AT_BOUND_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub lower: f64,
    pub upper: f64,
    /// Tolerance on the projected gradient, i.e. on the constraint residuals.
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lower: -100.0,
            upper: 100.0,
            tol: 1e-8,
            max_iter: 500,
            memory: 10,
        }
    }
}

/// Dual multipliers (λ, γ, φ in constraint order).
///
/// `values` live in the solver's working coordinates, where each constraint
/// column was divided by `scale[k]`; the box applies there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualParams {
    pub values: Vec<f64>,
    pub scale: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl DualParams {
    /// Multipliers for the unscaled constraint columns.
    pub fn raw(&self) -> Vec<f64> {
        self.values.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbSolution {
    pub weights: Vec<f64>,
    pub base_weights: Vec<f64>,
    pub theta: DualParams,
    pub dual_value: f64,
    /// `|Σ_i w_i c_ik|` on the unscaled columns.
    pub constraint_residuals: Vec<f64>,
    pub converged: bool,
    pub at_bound: Vec<bool>,
    pub ess: f64,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    pub labels: Vec<ConstraintLabel>,
    pub dropped: Vec<ConstraintLabel>,
}

impl EbSolution {
    pub fn max_residual(&self) -> f64 {
        self.constraint_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn any_at_bound(&self) -> bool {
        self.at_bound.iter().any(|&b| b)
    }
}

fn resolve_base(base: Option<&[f64]>, n: usize) -> Result<Vec<f64>> {
    match base {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(q) => {
            if q.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "base weights have length {}, expected {n}",
                    q.len()
                )));
            }
            if q.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument("base weights must be finite and nonnegative".into()));
            }
            crate::stats::normalize(q)
        }
    }
}

/// Minimizes the dual inside `[lower, upper]^K` from a cold start at θ = 0.
///
/// Columns are rescaled to unit standard deviation before optimizing, so
/// the box is comparable across covariate scales. Hitting the box never
/// aborts: the weights are returned with `at_bound` flags and residuals so
/// the imbalance shows up in diagnostics.
pub fn solve(cs: &ConstraintSystem, base: Option<&[f64]>, opts: &SolverOptions) -> Result<EbSolution> {
    if cs.k() == 0 {
        return Err(Error::InvalidArgument("constraint system has no columns".into()));
    }
    if !(opts.lower < opts.upper) {
        return Err(Error::InvalidArgument("solver bounds must satisfy lower < upper".into()));
    }
    let q = resolve_base(base, cs.n())?;
    let sd = cs.column_sd();
    if sd.iter().all(|s| *s == 0.0) && (0..cs.k()).all(|k| cs.column(k).iter().all(|v| *v == 0.0)) {
        return Err(Error::AllConstantConstraints);
    }
    let scale: Vec<f64> = sd.iter().map(|s| if *s > 0.0 { *s } else { 1.0 }).collect();
    let working = cs.scaled(&scale);
    // Scaled residual × scale = raw residual; never loosen the scaled test either.
    let tol_scale: Vec<f64> = scale.iter().map(|s| s.max(1.0)).collect();

    let k = cs.k();
    let mut eval = DualEvaluator::new(&working, &q);
    let result = minimize(
        |theta, grad| eval.eval(theta, grad),
        &vec![0.0; k],
        &vec![opts.lower; k],
        &vec![opts.upper; k],
        Some(&tol_scale),
        &LbfgsbOptions {
            memory: opts.memory,
            tol: opts.tol,
            max_iter: opts.max_iter,
        },
    );

    let weights = weights_from_theta(&result.x, &working, &q);
    let constraint_residuals: Vec<f64> = cs.weighted_sums(&weights).iter().map(|s| s.abs()).collect();
    let at_bound: Vec<bool> = result
        .x
        .iter()
        .map(|t| (t - opts.lower).abs() <= AT_BOUND_EPS || (opts.upper - t).abs() <= AT_BOUND_EPS)
        .collect();
    if at_bound.iter().any(|&b| b) {
        let names: Vec<&str> = cs
            .labels()
            .iter()
            .zip(&at_bound)
            .filter(|(_, &b)| b)
            .map(|(l, _)| l.name.as_str())
            .collect();
        log::warn!(
            "entropy balancing multipliers at the [{}, {}] bound for {}: exact balance is not attainable, check balance diagnostics",
            opts.lower,
            opts.upper,
            names.join(", ")
        );
    }
    if !result.converged {
        log::warn!(
            "entropy balancing stopped after {} iterations with projected gradient {:.3e} (tol {:.1e})",
            result.iterations,
            result.projected_gradient_norm,
            opts.tol
        );
    }
    let ess = effective_sample_size(&weights)?;
    Ok(EbSolution {
        weights,
        base_weights: q,
        theta: DualParams {
            values: result.x,
            scale,
            lower: opts.lower,
            upper: opts.upper,
        },
        dual_value: result.f,
        constraint_residuals,
        converged: result.converged,
        at_bound,
        ess,
        iterations: result.iterations,
        projected_gradient_norm: result.projected_gradient_norm,
        labels: cs.labels().to_vec(),
        dropped: cs.dropped().to_vec(),
    })
}
