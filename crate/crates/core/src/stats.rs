//! Small weighted-moment helpers shared by the estimation modules.

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() as f64 - 1.0)).sqrt()
}

/// Rescales nonnegative weights so they sum to one.
pub fn normalize(w: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroWeights);
    }
    Ok(w.iter().map(|v| v / total).collect())
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Σ w x / Σ w.
pub fn weighted_mean(x: &[f64], w: &[f64]) -> f64 {
    let (mut sx, mut sw) = (0.0, 0.0);
    for (xi, wi) in x.iter().zip(w) {
        sx += wi * xi;
        sw += wi;
    }
    sx / sw
}

/// Population-form weighted variance Σ w (x - x̄_w)² / Σ w.
///
/// This is the quantity pinned by first- and second-moment balance constraints.
pub fn weighted_variance(x: &[f64], w: &[f64]) -> f64 {
    let m = weighted_mean(x, w);
    let (mut s, mut sw) = (0.0, 0.0);
    for (xi, wi) in x.iter().zip(w) {
        s += wi * (xi - m) * (xi - m);
        sw += wi;
    }
    s / sw
}

/// Weighted covariance in population form.
pub fn weighted_covariance(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let mx = weighted_mean(x, w);
    let my = weighted_mean(y, w);
    let (mut s, mut sw) = (0.0, 0.0);
    for ((xi, yi), wi) in x.iter().zip(y).zip(w) {
        s += wi * (xi - mx) * (yi - my);
        sw += wi;
    }
    s / sw
}

/// Inverse of the weighted ECDF: the smallest observed x with F_w(x) ≥ p.
pub fn weighted_quantile(x: &[f64], w: &[f64], p: f64) -> f64 {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let total: f64 = w.iter().sum();
    let target = p.clamp(0.0, 1.0) * total;
    let mut acc = 0.0;
    for &i in &idx {
        acc += w[i];
        if acc >= target * (1.0 - 1e-12) && w[i] > 0.0 {
            return x[i];
        }
    }
    x[*idx.last().expect("non-empty sample")]
}

/// Unweighted quantile with linear interpolation between order statistics.
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
