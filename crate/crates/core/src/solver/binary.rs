//! Entropy balancing for a binary exposure: each exposure group is reweighted
//! separately so its weighted covariate moments match the full-sample targets.

use serde::{Deserialize, Serialize};

use super::constraints::{ConstraintKind, ConstraintLabel, ConstraintSystem};
use super::{solve, EbSolution, SolverOptions};
use crate::dataset::{DesignMatrix, EncodedKind, MomentTargets};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSolution {
    pub label: u8,
    /// Row indices (into the full sample) belonging to this group.
    pub rows: Vec<usize>,
    /// Weights over `rows`, summing to one.
    pub solution: EbSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryEbSolution {
    pub n: usize,
    /// Group 0 then group 1.
    pub groups: [GroupSolution; 2],
}

impl BinaryEbSolution {
    /// Length-`n` weights for `group`, zero outside it.
    pub fn group_weights(&self, group: u8) -> Vec<f64> {
        let g = &self.groups[group as usize];
        let mut w = vec![0.0; self.n];
        for (&i, wi) in g.rows.iter().zip(&g.solution.weights) {
            w[i] = *wi;
        }
        w
    }

    /// `τ̂ = Σ w_i 1[A_i = 1] Y_i - Σ w_i 1[A_i = 0] Y_i`.
    pub fn effect(&self, outcome: &[f64]) -> f64 {
        let mean = |g: &GroupSolution| -> f64 {
            g.rows
                .iter()
                .zip(&g.solution.weights)
                .map(|(&i, w)| w * outcome[i])
                .sum()
        };
        mean(&self.groups[1]) - mean(&self.groups[0])
    }
}

/// Solves one entropy-balancing problem per exposure group.
///
/// Within group `a`, the weights minimize KL divergence to uniform subject to
/// `Σ_{i: A_i = a} w_i X_ij^p = μ_j^p` and `Σ w_i = 1`.
pub fn solve_binary(
    dm: &DesignMatrix,
    group: &[u8],
    targets: &MomentTargets,
    covariate_order: usize,
    opts: &SolverOptions,
) -> Result<BinaryEbSolution> {
    if group.len() != dm.n() {
        return Err(Error::InvalidData("group vector length differs from design rows".into()));
    }
    if let Some(bad) = group.iter().find(|g| **g > 1) {
        return Err(Error::InvalidData(format!("group labels must be 0 or 1, found {bad}")));
    }
    if targets.covariate.len() != dm.m() {
        return Err(Error::InvalidArgument("moment targets do not match design columns".into()));
    }

    let solve_group = |label: u8| -> Result<GroupSolution> {
        let rows: Vec<usize> = (0..dm.n()).filter(|&i| group[i] == label).collect();
        if rows.is_empty() {
            return Err(Error::InvalidData(format!("exposure group {label} is empty")));
        }
        let mut columns = Vec::new();
        let mut labels = Vec::new();
        for j in 0..dm.m() {
            let order = match dm.kind(j) {
                EncodedKind::Binary => 1,
                EncodedKind::Continuous => covariate_order,
            };
            for p in 1..=order {
                let target = *targets.covariate[j].get(p - 1).ok_or_else(|| {
                    Error::InvalidArgument(format!("missing order-{p} target for `{}`", dm.names()[j]))
                })?;
                let col: Vec<f64> = rows
                    .iter()
                    .map(|&i| dm.column(j)[i].powi(p as i32) - target)
                    .collect();
                let mag = col.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                if mag <= 1e-14 * (1.0 + target.abs()) {
                    // Already satisfied by every row.
                    continue;
                }
                columns.push(col);
                labels.push(ConstraintLabel {
                    kind: ConstraintKind::CovariateMarginal { column: j, power: p },
                    name: if p == 1 {
                        dm.names()[j].clone()
                    } else {
                        format!("{}^{p}", dm.names()[j])
                    },
                });
            }
        }
        if rows.len() <= columns.len() {
            log::warn!(
                "group {label} has {} members for {} constraints; exact balance is likely infeasible",
                rows.len(),
                columns.len()
            );
        }
        let solution = if columns.is_empty() {
            uniform_solution(rows.len(), opts)
        } else {
            let cs = ConstraintSystem::from_columns(columns, labels)?;
            solve(&cs, None, opts)?
        };
        Ok(GroupSolution {
            label,
            rows,
            solution,
        })
    };

    let g0 = solve_group(0)?;
    let g1 = solve_group(1)?;
    Ok(BinaryEbSolution {
        n: dm.n(),
        groups: [g0, g1],
    })
}

fn uniform_solution(n: usize, opts: &SolverOptions) -> EbSolution {
    let w = vec![1.0 / n as f64; n];
    EbSolution {
        weights: w.clone(),
        base_weights: w,
        theta: super::DualParams {
            values: Vec::new(),
            scale: Vec::new(),
            lower: opts.lower,
            upper: opts.upper,
        },
        dual_value: 0.0,
        constraint_residuals: Vec::new(),
        converged: true,
        at_bound: Vec::new(),
        ess: n as f64,
        iterations: 0,
        projected_gradient_norm: 0.0,
        labels: Vec::new(),
        dropped: Vec::new(),
    }
}
