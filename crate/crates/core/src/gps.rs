//! Stabilized inverse-probability weights from a normal linear generalized
//! propensity score: `w_i ∝ φ(A_i; Ā, s_A) / φ(A_i; x_i·β̂, s_resid)`.

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnTransform, DesignMatrix};
use crate::error::{Error, Result};
use crate::linalg::weighted_least_squares;
use crate::stats::{mean, quantile, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    pub sd: f64,
}

/// OLS fit of the exposure on first-order covariate terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    /// Intercept followed by one slope per design column, on the raw scale.
    pub coefficients: Vec<f64>,
    pub names: Vec<String>,
    /// `sqrt(RSS / (N - m - 1))`.
    pub residual_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsWeights {
    /// Strictly positive, summing to one.
    pub weights: Vec<f64>,
    pub numerator_params: NormalParams,
    pub denominator_fit: LinearFit,
    /// Cap applied to the unnormalized ratios, if truncation was requested.
    pub truncated_at: Option<f64>,
}

fn log_normal_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Fits the normal linear GPS and returns normalized stabilized weights.
///
/// `truncate = Some(q)` caps the weights at their `q`-th quantile before
/// renormalizing.
pub fn fit_normal_gps(dm: &DesignMatrix, exposure: &[f64], truncate: Option<f64>) -> Result<GpsWeights> {
    let n = dm.n();
    let m = dm.m();
    if exposure.len() != n {
        return Err(Error::InvalidData("exposure length differs from design rows".into()));
    }
    if n <= m + 1 {
        return Err(Error::InvalidArgument(format!(
            "normal GPS needs more than {} rows for {m} covariate columns, got {n}",
            m + 1
        )));
    }
    if let Some(q) = truncate {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidArgument(format!("truncation quantile {q} not in (0, 1]")));
        }
    }

    // Fit on centred/scaled columns, then map the coefficients back.
    let transforms: Vec<ColumnTransform> = dm.columns().iter().map(|c| ColumnTransform::fit(c)).collect();
    let mut design = Vec::with_capacity(m + 1);
    design.push(vec![1.0; n]);
    for (col, t) in dm.columns().iter().zip(&transforms) {
        let mut z = col.clone();
        t.apply_in_place(&mut z);
        design.push(z);
    }
    let (beta_z, _) = weighted_least_squares(&design, exposure, &vec![1.0; n])
        .ok_or_else(|| Error::SingularDesign("exposure regression on covariates".into()))?;

    let fitted: Vec<f64> = (0..n)
        .map(|i| design.iter().zip(&beta_z).map(|(c, b)| c[i] * b).sum())
        .collect();
    let rss: f64 = exposure.iter().zip(&fitted).map(|(a, f)| (a - f) * (a - f)).sum();
    let residual_sd = (rss / (n - m - 1) as f64).sqrt();
    let a_bar = mean(exposure);
    let s_a = sample_sd(exposure);
    if !(residual_sd > 1e-12 * s_a.max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateGps);
    }

    let mut coefficients = vec![beta_z[0]];
    for (b, t) in beta_z[1..].iter().zip(&transforms) {
        let slope = b / t.scale;
        coefficients[0] -= slope * t.center;
        coefficients.push(slope);
    }
    let mut names = vec!["(intercept)".to_string()];
    names.extend(dm.names().iter().cloned());

    let log_ratio: Vec<f64> = exposure
        .iter()
        .zip(&fitted)
        .map(|(a, f)| log_normal_density(*a, a_bar, s_a) - log_normal_density(*a, *f, residual_sd))
        .collect();
    let max = log_ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = log_ratio.iter().map(|l| (l - max).exp()).collect();

    let truncated_at = truncate.map(|q| {
        let cap = quantile(&weights, q);
        weights.iter_mut().for_each(|w| *w = w.min(cap));
        cap * max.exp()
    });
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    if weights.iter().any(|w| !(*w > 0.0)) {
        log::warn!("normal GPS produced weights that underflow to zero");
    }

    Ok(GpsWeights {
        weights,
        numerator_params: NormalParams { mean: a_bar, sd: s_a },
        denominator_fit: LinearFit {
            coefficients,
            names,
            residual_sd,
        },
        truncated_at,
    })
}
