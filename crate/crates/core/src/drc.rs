//! Weighted local linear regression of the outcome on the exposure.
//!
//! Each fit minimizes `Σ w_i κ_i (Y_i - β0 - β1 A_i)²` where `κ_i` is the
//! tricube of the distance to `a0` divided by the distance to the
//! `ceil(αN)`-th nearest neighbor. The span α is picked by weighted k-fold
//! cross-validation. A global weighted polynomial and curve contrasts round
//! out the module.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::weighted_least_squares;
use crate::stats::weighted_quantile;

/// Quantiles of the weighted exposure distribution treated as its
/// high-density range.
pub const HIGH_DENSITY_QUANTILES: (f64, f64) = (0.01, 0.99);

/// Minimum number of neighbors with positive weight in a local fit.
pub const MIN_LOCAL_POINTS: usize = 3;

pub fn tricube(u: f64) -> f64 {
    let u = u.abs();
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Tricube,
    /// `κ ≡ 1` inside the neighborhood.
    Uniform,
}

impl Kernel {
    fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Tricube => tricube(u),
            Kernel::Uniform => {
                if u.abs() <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFitConfig {
    pub span: f64,
    pub kernel: Kernel,
}

impl LocalFitConfig {
    pub fn new(span: f64) -> Self {
        Self {
            span,
            kernel: Kernel::Tricube,
        }
    }

    /// Neighborhood size `ceil(αN)`.
    pub fn neighbors(&self, n: usize) -> usize {
        // Guard against α·N landing a hair above an integer.
        (((self.span * n as f64) - 1e-9).ceil().max(1.0) as usize).min(n)
    }
}

/// `f̂(a0) = β0 + β1·a0` with coefficients on the raw exposure scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub estimate: f64,
    pub beta0: f64,
    pub beta1: f64,
}

/// Data sorted by exposure, ready for repeated local fits.
#[derive(Debug, Clone)]
pub struct LocalSmoother {
    a: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl LocalSmoother {
    pub fn new(a: &[f64], y: &[f64], w: &[f64]) -> Result<Self> {
        let n = a.len();
        if y.len() != n || w.len() != n {
            return Err(Error::InvalidData("exposure, outcome and weights differ in length".into()));
        }
        if n == 0 {
            return Err(Error::InvalidData("no observations".into()));
        }
        if a.iter().chain(y).chain(w).any(|v| !v.is_finite()) || w.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidData("non-finite values or negative weights".into()));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]));
        Ok(Self {
            a: idx.iter().map(|&i| a[i]).collect(),
            y: idx.iter().map(|&i| y[i]).collect(),
            w: idx.iter().map(|&i| w[i]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.a[0]
    }

    pub fn max(&self) -> f64 {
        self.a[self.a.len() - 1]
    }

    /// Index range of the `k` nearest neighbors of `a0`, widened to include
    /// every point tied with the k-th distance, plus that distance.
    fn window(&self, a0: f64, k: usize) -> (usize, usize, f64) {
        let a = &self.a;
        let n = a.len();
        let mut hi = a.partition_point(|v| *v < a0);
        let mut lo = hi;
        while hi - lo < k {
            let take_left = if lo == 0 {
                false
            } else if hi == n {
                true
            } else {
                a0 - a[lo - 1] <= a[hi] - a0
            };
            if take_left {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        let dk = (a0 - a[lo]).abs().max((a[hi - 1] - a0).abs());
        while lo > 0 && a0 - a[lo - 1] <= dk {
            lo -= 1;
        }
        while hi < n && a[hi] - a0 <= dk {
            hi += 1;
        }
        (lo, hi, dk)
    }

    pub fn fit(&self, a0: f64, cfg: &LocalFitConfig) -> Result<LocalFit> {
        if !(cfg.span > 0.0 && cfg.span <= 1.0) {
            return Err(Error::InvalidArgument(format!("span {} not in (0, 1]", cfg.span)));
        }
        let k = cfg.neighbors(self.len());
        if k < MIN_LOCAL_POINTS {
            return Err(Error::LocalDegeneracy {
                a0,
                reason: format!("neighborhood of {k} points is below the minimum of {MIN_LOCAL_POINTS}"),
            });
        }
        let (lo, hi, dk) = self.window(a0, k);
        if !(dk > 0.0) {
            return Err(Error::LocalDegeneracy {
                a0,
                reason: "every neighbor sits at a0".into(),
            });
        }
        // Centred at a0 for conditioning.
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut positive = 0;
        for i in lo..hi {
            let d = self.a[i] - a0;
            let v = self.w[i] * cfg.kernel.eval(d / dk);
            if v <= 0.0 {
                continue;
            }
            positive += 1;
            s0 += v;
            s1 += v * d;
            s2 += v * d * d;
            t0 += v * self.y[i];
            t1 += v * d * self.y[i];
        }
        if positive < MIN_LOCAL_POINTS {
            return Err(Error::LocalDegeneracy {
                a0,
                reason: format!("only {positive} neighbors carry positive weight"),
            });
        }
        let det = s0 * s2 - s1 * s1;
        if !(det > 1e-12 * s0 * s2) {
            return Err(Error::LocalDegeneracy {
                a0,
                reason: "weighted exposure values in the neighborhood are identical".into(),
            });
        }
        let beta1 = (s0 * t1 - s1 * t0) / det;
        let estimate = (t0 - beta1 * s1) / s0;
        Ok(LocalFit {
            estimate,
            beta0: estimate - beta1 * a0,
            beta1,
        })
    }
}

/// One-off local linear fit at `a0`.
pub fn local_linear_fit(a0: f64, a: &[f64], y: &[f64], w: &[f64], cfg: &LocalFitConfig) -> Result<LocalFit> {
    LocalSmoother::new(a, y, w)?.fit(a0, cfg)
}

pub fn default_span_grid() -> Vec<f64> {
    (2..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub spans: Vec<f64>,
    pub seed: u64,
    /// Weight the held-out squared errors by the observation weights.
    pub weighted: bool,
    pub kernel: Kernel,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 2,
            spans: default_span_grid(),
            seed: 0,
            weighted: true,
            kernel: Kernel::Tricube,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub span: f64,
    /// Out-of-fold error per candidate; `None` where a fit failed.
    pub errors: Vec<(f64, Option<f64>)>,
}

/// Picks the span with the smallest out-of-fold squared prediction error.
///
/// Folds come from a seeded random permutation. Candidates whose error is
/// within `1e-10·Σ w Y²` of the minimum count as tied and the largest span
/// among them wins.
pub fn select_span_cv(a: &[f64], y: &[f64], w: &[f64], opts: &CvOptions) -> Result<CvResult> {
    let n = a.len();
    if opts.folds < 2 {
        return Err(Error::InvalidArgument("cross-validation needs at least 2 folds".into()));
    }
    if opts.spans.is_empty() || opts.spans.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
        return Err(Error::InvalidArgument("span grid must be non-empty and within (0, 1]".into()));
    }
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidData("exposure, outcome and weights differ in length".into()));
    }
    if n < opts.folds {
        return Err(Error::InvalidData("fewer observations than folds".into()));
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % opts.folds;
    }

    let mut smoothers = Vec::with_capacity(opts.folds);
    for f in 0..opts.folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let pick = |v: &[f64]| -> Vec<f64> { train.iter().map(|&i| v[i]).collect() };
        smoothers.push(LocalSmoother::new(&pick(a), &pick(y), &pick(w))?);
    }

    let errors: Vec<(f64, Option<f64>)> = opts
        .spans
        .iter()
        .map(|&span| {
            let cfg = LocalFitConfig {
                span,
                kernel: opts.kernel,
            };
            let total = (0..n).try_fold(0.0, |acc, i| {
                let fit = smoothers[fold_of[i]].fit(a[i], &cfg).ok()?;
                let r = y[i] - fit.estimate;
                Some(acc + if opts.weighted { w[i] } else { 1.0 } * r * r)
            });
            (span, total)
        })
        .collect();

    let best = errors
        .iter()
        .filter_map(|(_, e)| *e)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::NoValidSpan);
    }
    let scale: f64 = (0..n)
        .map(|i| if opts.weighted { w[i] } else { 1.0 } * y[i] * y[i])
        .sum();
    let tie = best + 1e-10 * scale;
    let span = errors
        .iter()
        .filter(|(_, e)| e.is_some_and(|e| e <= tie))
        .map(|(s, _)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CvResult { span, errors })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpanChoice {
    Fixed(f64),
    CrossValidated(CvOptions),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    pub span: SpanChoice,
    pub kernel: Kernel,
    /// Log a warning when grid points fall outside the high-density range.
    pub warn_outside_high_density: bool,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            span: SpanChoice::CrossValidated(CvOptions::default()),
            kernel: Kernel::Tricube,
            warn_outside_high_density: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseResponseCurve {
    pub grid: Vec<f64>,
    /// `None` marks a gap: outside the exposure range or a degenerate fit.
    pub estimates: Vec<Option<f64>>,
    pub local_coefs: Vec<Option<(f64, f64)>>,
    pub span_used: f64,
    pub high_density_range: (f64, f64),
    pub cv: Option<CvResult>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("evaluation grid is empty".into()));
    }
    if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(Error::InvalidArgument("evaluation grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

impl DoseResponseCurve {
    /// A curve from tabulated values, e.g. a known truth.
    pub fn from_values(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument("grid and values differ in length".into()));
        }
        let lo = grid[0];
        let hi = grid[grid.len() - 1];
        Ok(Self {
            estimates: values.into_iter().map(Some).collect(),
            local_coefs: vec![None; grid.len()],
            grid,
            span_used: f64::NAN,
            high_density_range: (lo, hi),
            cv: None,
        })
    }

    /// Linear interpolation between adjacent grid points.
    pub fn value_at(&self, a: f64) -> Result<f64> {
        let g = &self.grid;
        if !(a >= g[0] && a <= g[g.len() - 1]) {
            return Err(Error::OutsideGrid(a));
        }
        let j = g.partition_point(|v| *v < a);
        if g[j] == a {
            return self.estimates[j].ok_or(Error::CurveGap(a));
        }
        let (l, r) = (
            self.estimates[j - 1].ok_or(Error::CurveGap(a))?,
            self.estimates[j].ok_or(Error::CurveGap(a))?,
        );
        let t = (a - g[j - 1]) / (g[j] - g[j - 1]);
        Ok(l + t * (r - l))
    }

    pub fn gaps(&self) -> usize {
        self.estimates.iter().filter(|e| e.is_none()).count()
    }
}

/// `τ̂(a, a') = f̂(a') - f̂(a)`.
pub fn contrast(curve: &DoseResponseCurve, a: f64, a_prime: f64) -> Result<f64> {
    Ok(curve.value_at(a_prime)? - curve.value_at(a)?)
}

/// `count` equally spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

pub fn high_density_range(a: &[f64], w: &[f64]) -> (f64, f64) {
    (
        weighted_quantile(a, w, HIGH_DENSITY_QUANTILES.0),
        weighted_quantile(a, w, HIGH_DENSITY_QUANTILES.1),
    )
}

/// Local linear fits over `grid`.
///
/// Grid points outside `[min A, max A]` and points whose local system is
/// degenerate become gaps rather than failing the whole curve.
pub fn estimate_curve(
    a: &[f64],
    y: &[f64],
    w: &[f64],
    grid: &[f64],
    opts: &CurveOptions,
) -> Result<DoseResponseCurve> {
    check_grid(grid)?;
    let smoother = LocalSmoother::new(a, y, w)?;
    let (span, cv) = match &opts.span {
        SpanChoice::Fixed(s) => (*s, None),
        SpanChoice::CrossValidated(cv_opts) => {
            let r = select_span_cv(a, y, w, cv_opts)?;
            (r.span, Some(r))
        }
    };
    let cfg = LocalFitConfig {
        span,
        kernel: opts.kernel,
    };
    let hd = high_density_range(a, w);
    let (amin, amax) = (smoother.min(), smoother.max());
    let mut estimates = Vec::with_capacity(grid.len());
    let mut local_coefs = Vec::with_capacity(grid.len());
    let mut outside_hd = 0;
    for &a0 in grid {
        if a0 < amin || a0 > amax {
            estimates.push(None);
            local_coefs.push(None);
            continue;
        }
        if a0 < hd.0 || a0 > hd.1 {
            outside_hd += 1;
        }
        match smoother.fit(a0, &cfg) {
            Ok(f) => {
                estimates.push(Some(f.estimate));
                local_coefs.push(Some((f.beta0, f.beta1)));
            }
            Err(Error::LocalDegeneracy { a0, reason }) => {
                log::debug!("gap at a0 = {a0}: {reason}");
                estimates.push(None);
                local_coefs.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    if opts.warn_outside_high_density && outside_hd > 0 {
        log::warn!(
            "{outside_hd} grid point(s) lie outside the high-density exposure range [{:.4}, {:.4}]",
            hd.0,
            hd.1
        );
    }
    Ok(DoseResponseCurve {
        grid: grid.to_vec(),
        estimates,
        local_coefs,
        span_used: span,
        high_density_range: hd,
        cv,
    })
}

/// Global weighted polynomial regression of `y` on `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    /// `β_0, β_1, ...` on the raw exposure scale.
    pub coefficients: Vec<f64>,
    center: f64,
    scale: f64,
    scaled_coefficients: Vec<f64>,
}

impl PolyFit {
    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn predict(&self, a: f64) -> f64 {
        let z = (a - self.center) / self.scale;
        self.scaled_coefficients.iter().rev().fold(0.0, |acc, b| acc * z + b)
    }

    pub fn curve(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&a| self.predict(a)).collect()
    }
}

pub fn global_poly_fit(a: &[f64], y: &[f64], w: &[f64], degree: usize) -> Result<PolyFit> {
    let n = a.len();
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidData("exposure, outcome and weights differ in length".into()));
    }
    if n <= degree + 1 {
        return Err(Error::InvalidArgument(format!(
            "degree-{degree} fit needs more than {} observations",
            degree + 1
        )));
    }
    let center = crate::stats::mean(a);
    let spread = a.iter().map(|v| (v - center).abs()).fold(0.0, f64::max);
    let scale = if spread > 0.0 { spread } else { 1.0 };
    let z: Vec<f64> = a.iter().map(|v| (v - center) / scale).collect();
    let design: Vec<Vec<f64>> = (0..=degree)
        .map(|p| z.iter().map(|v| v.powi(p as i32)).collect())
        .collect();
    let (b, _) = weighted_least_squares(&design, y, w)
        .ok_or_else(|| Error::SingularDesign(format!("degree-{degree} polynomial in the exposure")))?;

    // Σ_j b_j ((a - c)/s)^j expanded in powers of a.
    let mut coefficients = vec![0.0; degree + 1];
    for (j, bj) in b.iter().enumerate() {
        let f = bj / scale.powi(j as i32);
        let mut binom = 1.0;
        for k in 0..=j {
            coefficients[k] += f * binom * (-center).powi((j - k) as i32);
            binom = binom * (j - k) as f64 / (k + 1) as f64;
        }
    }
    Ok(PolyFit {
        coefficients,
        center,
        scale,
        scaled_coefficients: b,
    })
}
