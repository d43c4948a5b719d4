//! Balance diagnostics for weights on a continuous exposure.
//!
//! Every statistic is computed twice, once with uniform weights and once with
//! the supplied weights, so the report shows what weighting changed:
//! correlation and conditional-mean (slope) balance between the exposure and
//! each encoded covariate, marginal mean/sd/KS, and the effective sample size.
//! Weights need not be normalized; every statistic is scale invariant.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};
use crate::stats::{uniform_weights, weighted_covariance, weighted_mean, weighted_variance};

/// Relative variance floor below which a variable is treated as constant.
const VARIANCE_FLOOR: f64 = 1e-14;

fn has_variance(x: &[f64], w: &[f64]) -> bool {
    let v = weighted_variance(x, w);
    let m2 = x.iter().zip(w).map(|(xi, wi)| wi * xi * xi).sum::<f64>() / w.iter().sum::<f64>();
    v > VARIANCE_FLOOR * m2.max(f64::MIN_POSITIVE)
}

/// `(Σw)² / Σw²`.
pub fn effective_sample_size(w: &[f64]) -> Result<f64> {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    if !(s2 > 0.0) {
        return Err(Error::ZeroWeights);
    }
    Ok(s * s / s2)
}

/// Weighted Pearson correlation; `None` if either variable has no weighted variance.
pub fn weighted_correlation(x: &[f64], a: &[f64], w: &[f64]) -> Option<f64> {
    if !has_variance(x, w) || !has_variance(a, w) {
        return None;
    }
    let r = weighted_covariance(x, a, w) / (weighted_variance(x, w) * weighted_variance(a, w)).sqrt();
    Some(r.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeTest {
    pub beta: f64,
    pub se: f64,
    /// `None` when the fit is exact (zero standard error).
    pub t: Option<f64>,
    pub p: Option<f64>,
}

/// Weighted least-squares slope of `a` on `x` (with intercept).
///
/// The standard error is the usual weighted-OLS one,
/// `σ̂² / Σ w (x - x̄_w)²` with `σ̂² = Σ w r² / (n - 2)`, and the p-value uses
/// a normal reference.
pub fn conditional_slope(x: &[f64], a: &[f64], w: &[f64]) -> Option<SlopeTest> {
    if !has_variance(x, w) {
        return None;
    }
    let sxx = weighted_variance(x, w);
    let beta = weighted_covariance(x, a, w) / sxx;
    let intercept = weighted_mean(a, w) - beta * weighted_mean(x, w);
    let n_pos = w.iter().filter(|v| **v > 0.0).count();
    if n_pos <= 2 {
        return Some(SlopeTest {
            beta,
            se: f64::NAN,
            t: None,
            p: None,
        });
    }
    let sw: f64 = w.iter().sum();
    let rss: f64 = x
        .iter()
        .zip(a)
        .zip(w)
        .map(|((xi, ai), wi)| {
            let r = ai - intercept - beta * xi;
            wi * r * r
        })
        .sum::<f64>()
        / sw;
    let sigma2 = rss / (n_pos as f64 - 2.0);
    let se = (sigma2 / sxx).sqrt();
    let (t, p) = if se > 0.0 {
        let t = beta / se;
        (Some(t), Some(erfc(t.abs() / std::f64::consts::SQRT_2)))
    } else {
        (None, None)
    };
    Some(SlopeTest { beta, se, t, p })
}

/// `max_t |F_w(t) - F_u(t)|` over the observed points, where `F_u` is the
/// uniformly weighted ECDF of the same sample.
pub fn weighted_ks(x: &[f64], w: &[f64]) -> f64 {
    ecdf_points(x, w)
        .iter()
        .map(|p| (p.weighted - p.unweighted).abs())
        .fold(0.0, f64::max)
        .min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub x: f64,
    pub weighted: f64,
    pub unweighted: f64,
}

/// Both ECDFs evaluated at each distinct observed value.
pub fn ecdf_points(x: &[f64], w: &[f64]) -> Vec<EcdfPoint> {
    let n = x.len();
    let total: f64 = w.iter().sum();
    let u = 1.0 / n as f64;
    let total_u: f64 = (0..n).map(|_| u).sum();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut out = Vec::new();
    let (mut fw, mut fu) = (0.0, 0.0);
    let mut k = 0;
    // Both ECDFs accumulate identically so uniform weights give exactly 0.
    while k < n {
        let v = x[idx[k]];
        while k < n && x[idx[k]] == v {
            fw += w[idx[k]];
            fu += u;
            k += 1;
        }
        out.push(EcdfPoint {
            x: v,
            weighted: (fw / total).min(1.0),
            unweighted: (fu / total_u).min(1.0),
        });
    }
    out
}

/// Summary of one variable under one weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub mean: f64,
    /// Weighted standard deviation with the reliability-weight correction
    /// `1 / (1 - Σ w̃²)`; equals the sample sd under uniform weights.
    pub sd: f64,
    pub correlation: Option<f64>,
    pub slope: Option<SlopeTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateBalance {
    pub name: String,
    pub unweighted: VariableSummary,
    pub weighted: VariableSummary,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureBalance {
    pub unweighted_mean: f64,
    pub unweighted_sd: f64,
    pub weighted_mean: f64,
    pub weighted_sd: f64,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub n: usize,
    pub ess: f64,
    pub exposure: ExposureBalance,
    pub covariates: Vec<CovariateBalance>,
}

fn corrected_sd(x: &[f64], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let sum_sq: f64 = w.iter().map(|v| (v / total) * (v / total)).sum();
    (weighted_variance(x, w) / (1.0 - sum_sq)).sqrt()
}

fn summarize(x: &[f64], a: &[f64], w: &[f64]) -> VariableSummary {
    VariableSummary {
        mean: weighted_mean(x, w),
        sd: corrected_sd(x, w),
        correlation: weighted_correlation(x, a, w),
        slope: conditional_slope(x, a, w),
    }
}

pub fn balance_report(dm: &DesignMatrix, exposure: &[f64], w: &[f64]) -> Result<BalanceReport> {
    let n = dm.n();
    if exposure.len() != n || w.len() != n {
        return Err(Error::InvalidData("design, exposure and weights differ in length".into()));
    }
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let ess = effective_sample_size(w)?;
    let u = uniform_weights(n);
    let covariates = dm
        .columns()
        .iter()
        .zip(dm.names())
        .map(|(x, name)| CovariateBalance {
            name: name.clone(),
            unweighted: summarize(x, exposure, &u),
            weighted: summarize(x, exposure, w),
            ks: weighted_ks(x, w),
        })
        .collect();
    Ok(BalanceReport {
        n,
        ess,
        exposure: ExposureBalance {
            unweighted_mean: weighted_mean(exposure, &u),
            unweighted_sd: corrected_sd(exposure, &u),
            weighted_mean: weighted_mean(exposure, w),
            weighted_sd: corrected_sd(exposure, w),
            ks: weighted_ks(exposure, w),
        },
        covariates,
    })
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    match v {
        Some(x) => format!("{x:.prec$}"),
        None => "NA".to_string(),
    }
}

impl BalanceReport {
    /// Aligned text table: unweighted block, weighted block, KS.
    ///
    /// Slopes (β) are from regressing the exposure on each covariate, on the
    /// covariate's raw scale.
    pub fn to_table(&self) -> String {
        let name_w = self
            .covariates
            .iter()
            .map(|c| c.name.len())
            .chain(std::iter::once(8))
            .max()
            .unwrap_or(8);
        let mut s = String::new();
        let block = "    Mean       SD     Cor.        β        t        p";
        let _ = writeln!(s, "{:name_w$} | {:^52} | {:^52} |", "", "Unweighted", "Weighted");
        let _ = writeln!(s, "{:name_w$} |{block} |{block} |     KS", "Variable");
        let _ = writeln!(s, "{}", "-".repeat(name_w + 2 * 55 + 12));
        let e = &self.exposure;
        let dash = format!("{:>9}{:>9}{:>9}{:>9}", "-", "-", "-", "-");
        let _ = writeln!(
            s,
            "{:name_w$} |{:>8.2} {:>8.2}{dash} |{:>8.2} {:>8.2}{dash} | {:>6.3}",
            "exposure", e.unweighted_mean, e.unweighted_sd, e.weighted_mean, e.weighted_sd, e.ks
        );
        for c in &self.covariates {
            let part = |v: &VariableSummary| {
                format!(
                    "{:>8.2} {:>8.2} {:>8} {:>8} {:>8} {:>8}",
                    v.mean,
                    v.sd,
                    fmt_opt(v.correlation, 3),
                    fmt_opt(v.slope.map(|sl| sl.beta), 3),
                    fmt_opt(v.slope.and_then(|sl| sl.t), 2),
                    fmt_opt(v.slope.and_then(|sl| sl.p), 2),
                )
            };
            let _ = writeln!(
                s,
                "{:name_w$} |{} |{} | {:>6.3}",
                c.name,
                part(&c.unweighted),
                part(&c.weighted),
                c.ks
            );
        }
        let _ = writeln!(s, "{}", "-".repeat(name_w + 2 * 55 + 12));
        let _ = writeln!(s, "effective sample size: unweighted {} | weighted {:.2}", self.n, self.ess);
        s
    }

    /// Flat CSV, one row per variable; unavailable statistics are left empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record([
            "variable", "u_mean", "u_sd", "u_cor", "u_beta", "u_t", "u_p", "w_mean", "w_sd", "w_cor",
            "w_beta", "w_t", "w_p", "ks",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let e = &self.exposure;
        wtr.write_record([
            "exposure".to_string(),
            e.unweighted_mean.to_string(),
            e.unweighted_sd.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            e.weighted_mean.to_string(),
            e.weighted_sd.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            e.ks.to_string(),
        ])?;
        for c in &self.covariates {
            let mut rec = vec![c.name.clone()];
            for v in [&c.unweighted, &c.weighted] {
                rec.push(v.mean.to_string());
                rec.push(v.sd.to_string());
                rec.push(opt(v.correlation));
                rec.push(opt(v.slope.map(|s| s.beta)));
                rec.push(opt(v.slope.and_then(|s| s.t)));
                rec.push(opt(v.slope.and_then(|s| s.p)));
            }
            rec.push(c.ks.to_string());
            wtr.write_record(&rec)?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::EncodedKind;

    #[test]
    fn self_correlation_is_one() {
        let x = [1.0, 2.0, 5.0, 3.0];
        let w = [0.1, 0.4, 0.2, 0.3];
        assert!((weighted_correlation(&x, &x, &w).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_correlation_is_pearson() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let a = [2.0, 1.0, 4.0, 3.0, 6.0];
        // Classical Pearson r by hand: Sxy = 10, Sxx = 10, Syy = 14.8.
        let r = 10.0 / (10.0f64 * 14.8).sqrt();
        assert!((weighted_correlation(&x, &a, &[0.2; 5]).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_is_not_available() {
        assert!(weighted_correlation(&[1.0; 3], &[1.0, 2.0, 3.0], &[1.0; 3]).is_none());
        assert!(conditional_slope(&[1.0; 3], &[1.0, 2.0, 3.0], &[1.0; 3]).is_none());
    }

    #[test]
    fn slope_of_exact_line() {
        let s = conditional_slope(&[0.0, 1.0, 2.0], &[0.0, 2.0, 4.0], &[1.0 / 3.0; 3]).unwrap();
        assert!((s.beta - 2.0).abs() < 1e-12);
        assert!(s.t.is_none());
    }

    #[test]
    fn slope_t_matches_classical_ols() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let a = [2.0, 1.0, 4.0, 3.0, 6.0];
        // OLS: β = 1, RSS = Syy - Sxy²/Sxx = 14.8 - 10 = 4.8, σ² = 4.8/3, se = sqrt(σ²/10).
        let s = conditional_slope(&x, &a, &[0.2; 5]).unwrap();
        let se = (4.8f64 / 3.0 / 10.0).sqrt();
        assert!((s.beta - 1.0).abs() < 1e-12);
        assert!((s.se - se).abs() < 1e-12);
        assert!((s.t.unwrap() - 1.0 / se).abs() < 1e-10);
    }

    #[test]
    fn ks_two_point() {
        assert!((weighted_ks(&[0.0, 1.0], &[0.9, 0.1]) - 0.4).abs() < 1e-15);
        assert_eq!(weighted_ks(&[3.0, 1.0, 2.0], &[1.0 / 3.0; 3]), 0.0);
        assert!(weighted_ks(&[3.0, 1.0, 2.0], &[1.0, 1.0, 1.0]) < 1e-15);
    }

    #[test]
    fn ks_handles_ties() {
        // Tied values form one ECDF jump.
        let x = [1.0, 1.0, 2.0, 2.0];
        let w = [0.5, 0.0, 0.0, 0.5];
        assert!(weighted_ks(&x, &w).abs() < 1e-15);
    }

    #[test]
    fn ess_cases() {
        assert!((effective_sample_size(&vec![1.0 / 1000.0; 1000]).unwrap() - 1000.0).abs() < 1e-9);
        let mut w = vec![0.0; 10];
        w[3] = 1.0;
        assert_eq!(effective_sample_size(&w).unwrap(), 1.0);
        assert!(effective_sample_size(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn uniform_report_has_identical_sections() {
        let dm = DesignMatrix::from_columns(
            vec![vec![0.3, 1.2, -0.5, 2.0, 0.1], vec![1.0, 0.0, 1.0, 1.0, 0.0]],
            vec!["x1".into(), "x3".into()],
            vec![EncodedKind::Continuous, EncodedKind::Binary],
        )
        .unwrap();
        let a = [1.0, 4.0, 2.0, 8.0, 3.0];
        let rep = balance_report(&dm, &a, &[0.2; 5]).unwrap();
        for c in &rep.covariates {
            assert_eq!(c.unweighted, c.weighted);
            assert_eq!(c.ks, 0.0);
        }
        assert_eq!(rep.exposure.ks, 0.0);
        assert!((rep.ess - 5.0).abs() < 1e-12);
        let json = serde_json::to_string(&rep).unwrap();
        let back: BalanceReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
        assert!(rep.to_table().contains("x3"));
        assert_eq!(rep.to_csv().unwrap().lines().count(), 4);
    }
}
