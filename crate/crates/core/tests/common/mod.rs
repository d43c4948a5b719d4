//! Independent oracles shared by the oracle suites and the acceptance run.
#![allow(dead_code)]

use entbal::drc::Kernel;
use entbal::solver::{dual_gradient, dual_objective, ConstraintSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};

pub fn random_system(rng: &mut ChaCha8Rng, n: usize, k: usize) -> ConstraintSystem {
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            let m = raw.iter().sum::<f64>() / n as f64;
            raw.iter().map(|v| v - m).collect()
        })
        .collect();
    ConstraintSystem::from_raw_columns(cols).unwrap()
}

/// Largest relative gap between the analytic dual gradient and central
/// differences over `instances` random problems.
pub fn worst_gradient_error(seed: u64, instances: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let n = rng.random_range(5..40);
        let k = rng.random_range(1..5);
        let cs = random_system(&mut rng, n, k);
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
        let theta: Vec<f64> = (0..k).map(|_| rng.random_range(-1.5..1.5)).collect();
        let g = dual_gradient(&theta, &cs, &q);
        for j in 0..k {
            let h = 1e-5;
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let fd = (dual_objective(&tp, &cs, &q) - dual_objective(&tm, &cs, &q)) / (2.0 * h);
            worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1e-3));
        }
    }
    worst
}

fn log_sum_exp(theta: &[f64], cols: &[Vec<f64>], n: usize) -> f64 {
    let eta: Vec<f64> = (0..n)
        .map(|i| -(0..cols.len()).map(|k| theta[k] * cols[k][i]).sum::<f64>() - (n as f64).ln())
        .collect();
    let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + eta.iter().map(|e| (e - m).exp()).sum::<f64>().ln()
}

/// Weights from a zooming grid search of the dual (K ≤ 2), uniform base.
pub fn dense_search_weights(cols: &[Vec<f64>]) -> Vec<f64> {
    let k = cols.len();
    let n = cols[0].len();
    assert!(k == 1 || k == 2);
    let mut centre = vec![0.0; k];
    let mut half = 8.0;
    let steps = 40;
    for _ in 0..30 {
        let mut best = (f64::INFINITY, centre.clone());
        let pts: Vec<f64> = (0..=steps).map(|s| -half + 2.0 * half * s as f64 / steps as f64).collect();
        let mut visit = |theta: Vec<f64>| {
            let v = log_sum_exp(&theta, cols, n);
            if v < best.0 {
                best = (v, theta);
            }
        };
        if k == 1 {
            for d in &pts {
                visit(vec![centre[0] + d]);
            }
        } else {
            for d0 in &pts {
                for d1 in &pts {
                    visit(vec![centre[0] + d0, centre[1] + d1]);
                }
            }
        }
        centre = best.1;
        half *= 0.25;
    }
    let e: Vec<f64> = (0..n)
        .map(|i| (-(0..k).map(|j| centre[j] * cols[j][i]).sum::<f64>()).exp())
        .collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Local linear fit by direct solution of the raw-scale weighted normal equations.
pub fn direct_local_linear(a: &[f64], y: &[f64], w: &[f64], a0: f64, span: f64, kernel: Kernel) -> (f64, f64) {
    let n = a.len();
    let k = (span * n as f64 - 1e-9).ceil() as usize;
    let mut d: Vec<f64> = a.iter().map(|v| (v - a0).abs()).collect();
    d.sort_by(f64::total_cmp);
    let dk = d[k - 1];
    let kern = |u: f64| match kernel {
        Kernel::Tricube if u.abs() < 1.0 => (1.0 - u.abs().powi(3)).powi(3),
        Kernel::Uniform if u.abs() <= 1.0 => 1.0,
        _ => 0.0,
    };
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let v = w[i] * kern((a[i] - a0) / dk);
        s0 += v;
        s1 += v * a[i];
        s2 += v * a[i] * a[i];
        t0 += v * y[i];
        t1 += v * a[i] * y[i];
    }
    let det = s0 * s2 - s1 * s1;
    ((s2 * t0 - s1 * t1) / det, (s0 * t1 - s1 * t0) / det)
}

/// Monte-Carlo mean and standard error of `f(X1, X2, X3, ε)` under the
/// simulation's covariate law.
pub fn marginalize(seed: u64, draws: usize, f: impl Fn(f64, f64, f64, f64) -> f64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n1 = Normal::new(-0.5, 1.0).unwrap();
    let n2 = Normal::new(1.0, 1.0).unwrap();
    let b3 = Bernoulli::new(0.3).unwrap();
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let x1 = n1.sample(&mut rng);
        let x2 = n2.sample(&mut rng);
        let x3 = f64::from(u8::from(b3.sample(&mut rng)));
        let eps: f64 = StandardNormal.sample(&mut rng);
        let v = f(x1, x2, x3, eps);
        s += v;
        s2 += v * v;
    }
    let m = s / draws as f64;
    let var = (s2 / draws as f64 - m * m) * draws as f64 / (draws - 1) as f64;
    (m, (var / draws as f64).sqrt())
}
