//! Box-constrained limited-memory BFGS.
//!
//! Variables sitting on a bound whose gradient points out of the box are
//! frozen for the iteration; the two-loop recursion runs on the remaining
//! free coordinates and a backtracking Armijo search walks the projected
//! path `P(x + t d)`. Convergence is declared on the infinity norm of the
//! projected gradient `P(x - g) - x`.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsbOptions {
    pub memory: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsbResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Weighted infinity norm of the projected gradient at `x`.
    pub projected_gradient_norm: f64,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Minimizes `fg` (which writes the gradient into its second argument and
/// returns the objective) over the box `[lower, upper]`.
///
/// `tol_scale[k]` multiplies coordinate `k` of the projected gradient before
/// it is compared with `opts.tol`.
pub fn minimize<F>(
    mut fg: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    tol_scale: Option<&[f64]>,
    opts: &LbfgsbOptions,
) -> LbfgsbResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n);
    assert!(lower.iter().zip(upper).all(|(l, u)| l < u), "empty box");
    let ones = vec![1.0; n];
    let tol_scale = tol_scale.unwrap_or(&ones);

    let mut x: Vec<f64> = (0..n).map(|k| x0[k].clamp(lower[k], upper[k])).collect();
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    let mut evaluations = 1;

    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut x_trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut iterations = 0;
    let mut pg_norm = projected_gradient_norm(&x, &g, lower, upper, tol_scale);

    while iterations < opts.max_iter && pg_norm > opts.tol {
        iterations += 1;
        let free: Vec<bool> = (0..n)
            .map(|k| {
                let at_lower = x[k] <= lower[k] && g[k] > 0.0;
                let at_upper = x[k] >= upper[k] && g[k] < 0.0;
                !(at_lower || at_upper)
            })
            .collect();

        let mut accepted = false;
        for attempt in 0..2 {
            let mut d = if attempt == 0 && !memory.is_empty() {
                two_loop(&g, &free, &memory)
            } else {
                memory.clear();
                steepest(&g, &free)
            };
            let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) || d.iter().any(|v| !v.is_finite()) {
                if attempt == 0 {
                    continue;
                }
                break;
            }
            if memory.is_empty() {
                // Unit-length first step; the curvature scale is still unknown.
                let dn = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                if dn > 1.0 {
                    d.iter_mut().for_each(|v| *v /= dn);
                }
            }

            let f_slack = 8.0 * f64::EPSILON * (1.0 + f.abs());
            let mut t = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                for k in 0..n {
                    x_trial[k] = (x[k] + t * d[k]).clamp(lower[k], upper[k]);
                }
                let decrease: f64 = (0..n).map(|k| g[k] * (x_trial[k] - x[k])).sum();
                let f_trial = fg(&x_trial, &mut g_trial);
                evaluations += 1;
                if f_trial.is_finite() && f_trial <= f + ARMIJO_C1 * decrease + f_slack {
                    let s: Vec<f64> = (0..n).map(|k| x_trial[k] - x[k]).collect();
                    let y: Vec<f64> = (0..n).map(|k| g_trial[k] - g[k]).collect();
                    let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                    let yy: f64 = y.iter().map(|v| v * v).sum();
                    if sy > 1e-12 * yy && sy > 0.0 {
                        if memory.len() == opts.memory {
                            memory.pop_front();
                        }
                        memory.push_back((s, y, 1.0 / sy));
                    }
                    x.copy_from_slice(&x_trial);
                    g.copy_from_slice(&g_trial);
                    f = f_trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                break;
            }
        }
        pg_norm = projected_gradient_norm(&x, &g, lower, upper, tol_scale);
        if !accepted {
            // No descent possible along either direction: numerically stalled.
            break;
        }
    }

    LbfgsbResult {
        converged: pg_norm <= opts.tol,
        x,
        f,
        grad: g,
        iterations,
        evaluations,
        projected_gradient_norm: pg_norm,
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64], scale: &[f64]) -> f64 {
    (0..x.len())
        .map(|k| ((x[k] - g[k]).clamp(lower[k], upper[k]) - x[k]).abs() * scale[k])
        .fold(0.0, f64::max)
}

fn steepest(g: &[f64], free: &[bool]) -> Vec<f64> {
    g.iter().zip(free).map(|(v, &f)| if f { -v } else { 0.0 }).collect()
}

fn masked_dot(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(free)
        .filter(|(_, &f)| f)
        .map(|((x, y), _)| x * y)
        .sum()
}

/// Two-loop recursion on the free subspace.
fn two_loop(g: &[f64], free: &[bool], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().zip(free).map(|(v, &f)| if f { *v } else { 0.0 }).collect();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, _) in memory.iter().rev() {
        let sy = masked_dot(s, y, free);
        if sy <= 0.0 {
            alphas.push(0.0);
            continue;
        }
        let a = masked_dot(s, &q, free) / sy;
        for k in 0..q.len() {
            if free[k] {
                q[k] -= a * y[k];
            }
        }
        alphas.push(a);
    }
    let (s_last, y_last, _) = memory.back().expect("non-empty memory");
    let sy = masked_dot(s_last, y_last, free);
    let yy = masked_dot(y_last, y_last, free);
    let gamma = if sy > 0.0 && yy > 0.0 { sy / yy } else { 1.0 };
    q.iter_mut().for_each(|v| *v *= gamma);
    for ((s, y, _), a) in memory.iter().zip(alphas.iter().rev()) {
        let sy = masked_dot(s, y, free);
        if sy <= 0.0 {
            continue;
        }
        let b = masked_dot(y, &q, free) / sy;
        for k in 0..q.len() {
            if free[k] {
                q[k] += (a - b) * s[k];
            }
        }
    }
    q.iter().zip(free).map(|(v, &f)| if f { -v } else { 0.0 }).collect()
}
