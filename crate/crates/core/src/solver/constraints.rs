use serde::{Deserialize, Serialize};

use crate::dataset::{DesignMatrix, EncodedKind, MomentTargets};
use crate::error::{Error, Result};

/// Which balance condition a constraint column encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `(X_j^p - μ_j^p)(A^q - μ_A^q)`; `q = 1` unless cross powers are enabled.
    Covariance {
        column: usize,
        power: usize,
        exposure_power: usize,
    },
    /// `A^q - μ_A^q`.
    ExposureMarginal { power: usize },
    /// `X_j^p - μ_j^p`.
    CovariateMarginal { column: usize, power: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintLabel {
    #[serde(flatten)]
    pub kind: ConstraintKind,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintOptions {
    pub covariate_order: usize,
    pub exposure_order: usize,
    /// Adds covariance columns against `A^q` for every `q ≤ exposure_order`
    /// instead of the centred exposure alone.
    pub exposure_cross_powers: bool,
}

impl ConstraintOptions {
    pub fn moments(order: usize) -> Self {
        Self {
            covariate_order: order,
            exposure_order: order,
            exposure_cross_powers: false,
        }
    }
}

/// Centred constraint columns `c_ik`; every constraint reads `Σ_i w_i c_ik = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSystem {
    n: usize,
    /// Column-major `n × k`.
    data: Vec<f64>,
    labels: Vec<ConstraintLabel>,
    /// Constraints dropped because their column was numerically constant.
    dropped: Vec<ConstraintLabel>,
}

impl ConstraintSystem {
    /// Builds a system from explicit columns, e.g. for hand-made test problems.
    pub fn from_columns(columns: Vec<Vec<f64>>, labels: Vec<ConstraintLabel>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 || columns.iter().any(|c| c.len() != n) || labels.len() != columns.len() {
            return Err(Error::InvalidData("constraint columns are ragged or unlabeled".into()));
        }
        Ok(Self {
            n,
            data: columns.concat(),
            labels,
            dropped: Vec::new(),
        })
    }

    /// Unlabeled columns, named `c0, c1, ...`.
    pub fn from_raw_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..columns.len())
            .map(|k| ConstraintLabel {
                kind: ConstraintKind::CovariateMarginal { column: k, power: 1 },
                name: format!("c{k}"),
            })
            .collect();
        Self::from_columns(columns, labels)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn labels(&self) -> &[ConstraintLabel] {
        &self.labels
    }

    pub fn dropped(&self) -> &[ConstraintLabel] {
        &self.dropped
    }

    /// Row `i` as a vector `c_i`.
    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.k()).map(|k| self.data[k * self.n + i]).collect()
    }

    /// Restricts the system to the given rows.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * self.k());
        for k in 0..self.k() {
            let col = self.column(k);
            data.extend(rows.iter().map(|&i| col[i]));
        }
        Self {
            n,
            data,
            labels: self.labels.clone(),
            dropped: self.dropped.clone(),
        }
    }

    /// Copy with every column divided by `scale[k]`.
    pub(crate) fn scaled(&self, scale: &[f64]) -> Self {
        let mut out = self.clone();
        for (k, s) in scale.iter().enumerate() {
            for v in &mut out.data[k * self.n..(k + 1) * self.n] {
                *v /= s;
            }
        }
        out
    }

    /// Equally weighted standard deviation of each column.
    pub fn column_sd(&self) -> Vec<f64> {
        (0..self.k())
            .map(|k| {
                let c = self.column(k);
                let m = c.iter().sum::<f64>() / self.n as f64;
                (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.n as f64).sqrt()
            })
            .collect()
    }

    /// `Σ_i w_i c_ik` for each k.
    pub fn weighted_sums(&self, w: &[f64]) -> Vec<f64> {
        (0..self.k())
            .map(|k| self.column(k).iter().zip(w).map(|(c, wi)| c * wi).sum())
            .collect()
    }
}

/// True when `x` carries no variation beyond rounding relative to its magnitude.
fn is_constant(x: &[f64]) -> bool {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
    let mag = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    mag == 0.0 || sd <= 1e-10 * mag
}

fn powered(x: &[f64], p: usize) -> Vec<f64> {
    x.iter().map(|v| v.powi(p as i32)).collect()
}

/// Assembles covariance, exposure-marginal and covariate-marginal columns,
/// in that order, from raw powers and their moment targets.
///
/// Constant power columns are dropped (with a warning) together with every
/// constraint that would use them; rare dummy levels make this routine.
pub fn build_constraints(
    dm: &DesignMatrix,
    exposure: &[f64],
    targets: &MomentTargets,
    opts: &ConstraintOptions,
) -> Result<ConstraintSystem> {
    let n = dm.n();
    if exposure.len() != n {
        return Err(Error::InvalidData("exposure length differs from design rows".into()));
    }
    if targets.covariate.len() != dm.m() {
        return Err(Error::InvalidArgument("moment targets do not match design columns".into()));
    }
    if targets.exposure.len() < opts.exposure_order {
        return Err(Error::InvalidArgument(format!(
            "exposure order {} exceeds the {} available targets",
            opts.exposure_order,
            targets.exposure.len()
        )));
    }
    if opts.covariate_order == 0 || opts.exposure_order == 0 {
        return Err(Error::InvalidArgument("moment orders must be at least 1".into()));
    }

    // Centred exposure powers A^q - μ_A^q.
    let exposure_terms: Vec<Option<Vec<f64>>> = (1..=opts.exposure_order)
        .map(|q| {
            let raw = powered(exposure, q);
            (!is_constant(&raw)).then(|| raw.iter().map(|v| v - targets.exposure[q - 1]).collect())
        })
        .collect();

    // Centred covariate powers X_j^p - μ_j^p.
    let mut covariate_terms: Vec<(usize, usize, Option<Vec<f64>>)> = Vec::new();
    for j in 0..dm.m() {
        let order = match dm.kind(j) {
            EncodedKind::Binary => 1,
            EncodedKind::Continuous => opts.covariate_order,
        };
        if targets.covariate[j].len() < order {
            return Err(Error::InvalidArgument(format!(
                "covariate order {order} exceeds targets for `{}`",
                dm.names()[j]
            )));
        }
        for p in 1..=order {
            let raw = powered(dm.column(j), p);
            let centred =
                (!is_constant(&raw)).then(|| raw.iter().map(|v| v - targets.covariate[j][p - 1]).collect());
            covariate_terms.push((j, p, centred));
        }
    }

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut dropped = Vec::new();
    let mut push = |label: ConstraintLabel, col: Option<Vec<f64>>| match col {
        Some(c) => {
            columns.push(c);
            labels.push(label);
        }
        None => {
            log::warn!("dropping constant constraint column {}", label.name);
            dropped.push(label);
        }
    };

    let cross_powers: Vec<usize> = if opts.exposure_cross_powers {
        (1..=opts.exposure_order).collect()
    } else {
        vec![1]
    };
    for (j, p, xterm) in &covariate_terms {
        for &q in &cross_powers {
            let col = match (xterm, &exposure_terms[q - 1]) {
                (Some(x), Some(a)) => Some(x.iter().zip(a).map(|(u, v)| u * v).collect()),
                _ => None,
            };
            let a_name = if q == 1 { "A".to_string() } else { format!("A^{q}") };
            push(
                ConstraintLabel {
                    kind: ConstraintKind::Covariance {
                        column: *j,
                        power: *p,
                        exposure_power: q,
                    },
                    name: format!("cov({}, {a_name})", power_name(&dm.names()[*j], *p)),
                },
                col,
            );
        }
    }
    for (q, term) in exposure_terms.iter().enumerate() {
        push(
            ConstraintLabel {
                kind: ConstraintKind::ExposureMarginal { power: q + 1 },
                name: format!("marginal({})", power_name("A", q + 1)),
            },
            term.clone(),
        );
    }
    for (j, p, xterm) in &covariate_terms {
        push(
            ConstraintLabel {
                kind: ConstraintKind::CovariateMarginal { column: *j, power: *p },
                name: format!("marginal({})", power_name(&dm.names()[*j], *p)),
            },
            xterm.clone(),
        );
    }

    if columns.is_empty() {
        return Err(Error::AllConstantConstraints);
    }
    Ok(ConstraintSystem {
        n,
        data: columns.concat(),
        labels,
        dropped,
    })
}

fn power_name(name: &str, p: usize) -> String {
    if p == 1 {
        name.to_string()
    } else {
        format!("{name}^{p}")
    }
}
