mod common;

use entbal::balance::{effective_sample_size, weighted_correlation};
use entbal::dataset::{moment_targets, DesignMatrix, EncodedKind};
use entbal::pipeline::entropy_balance;
use entbal::simbench::gen_main;
use entbal::solver::{
    build_constraints, dual_objective, solve, solve_binary, ConstraintOptions, SolverOptions,
};
use entbal::stats::{weighted_mean, weighted_variance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn gradient_matches_central_differences() {
    let worst = common::worst_gradient_error(11, 50);
    assert!(worst < 1e-5, "worst relative gradient error {worst}");
}

#[test]
fn dual_is_convex_along_random_lines() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let cs = common::random_system(&mut rng, 25, 3);
        let q = vec![1.0 / 25.0; 25];
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t: f64 = rng.random_range(0.0..1.0);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let lhs = dual_objective(&mid, &cs, &q);
        let rhs = t * dual_objective(&a, &cs, &q) + (1.0 - t) * dual_objective(&b, &cs, &q);
        assert!(lhs <= rhs + 1e-12);
    }
}

#[test]
fn solution_matches_dense_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let opts = SolverOptions::default();
    for trial in 0..20 {
        let n = rng.random_range(6..=20);
        let k = 1 + trial % 2;
        let cs = common::random_system(&mut rng, n, k);
        let cols: Vec<Vec<f64>> = (0..k).map(|j| cs.column(j).to_vec()).collect();
        let sol = solve(&cs, None, &opts).unwrap();
        assert!(sol.converged, "trial {trial} did not converge");
        let oracle = common::dense_search_weights(&cols);
        for (w, o) in sol.weights.iter().zip(&oracle) {
            assert!((w - o).abs() < 1e-4, "trial {trial}: {w} vs {o}");
        }
    }
}

fn kl(w: &[f64], q: &[f64]) -> f64 {
    w.iter().zip(q).filter(|(wi, _)| **wi > 0.0).map(|(wi, qi)| wi * (wi / qi).ln()).sum()
}

#[test]
fn solution_minimizes_kl_among_feasible_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let n = 30;
    let cs = common::random_system(&mut rng, n, 2);
    let q = vec![1.0 / n as f64; n];
    let sol = solve(&cs, None, &SolverOptions::default()).unwrap();
    let base = kl(&sol.weights, &q);
    // Feasible directions: orthogonal to the constraint columns and to 1.
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0; n], cs.column(0).to_vec(), cs.column(1).to_vec()];
    for i in 0..basis.len() {
        for j in 0..i {
            let p = dot(&basis[i], &basis[j]);
            let bj = basis[j].clone();
            basis[i].iter_mut().zip(&bj).for_each(|(a, b)| *a -= p * b);
        }
        let norm = dot(&basis[i], &basis[i]).sqrt();
        basis[i].iter_mut().for_each(|a| *a /= norm);
    }
    for _ in 0..200 {
        let mut d: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        for b in &basis {
            let p = dot(&d, b);
            d.iter_mut().zip(b).for_each(|(a, bb)| *a -= p * bb);
        }
        let scale = 0.5 * sol.weights.iter().copied().fold(f64::INFINITY, f64::min)
            / d.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let w2: Vec<f64> = sol.weights.iter().zip(&d).map(|(w, di)| w + scale * di).collect();
        assert!(kl(&w2, &q) >= base - 1e-14);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn weights_are_positive_and_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let cs = common::random_system(&mut rng, 50, 3);
    let sol = solve(&cs, None, &SolverOptions::default()).unwrap();
    assert!(sol.weights.iter().all(|w| *w > 0.0));
    assert!((sol.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn independent_exposure_leaves_weights_nearly_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let n = 2000;
    let x1: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let dm = DesignMatrix::from_columns(
        vec![x1, x2],
        vec!["x1".into(), "x2".into()],
        vec![EncodedKind::Continuous, EncodedKind::Continuous],
    )
    .unwrap();
    let sol = entropy_balance(&dm, &a, &ConstraintOptions::moments(2), &SolverOptions::default()).unwrap();
    assert!(sol.converged);
    let max_theta = sol.theta.raw().iter().map(|t| t.abs()).fold(0.0, f64::max);
    assert!(max_theta < 0.1, "max |θ| = {max_theta}");
    assert!(sol.ess > 0.9 * n as f64);
}

#[test]
fn main_draw_balances_covariance_and_preserves_marginals() {
    let d = gen_main(1000, 2024);
    let dm = d.design();
    let sol = entropy_balance(&dm, &d.a, &ConstraintOptions::moments(2), &SolverOptions::default()).unwrap();
    assert!(sol.converged && !sol.any_at_bound());
    assert!(sol.max_residual() < 1e-6);
    let w = &sol.weights;
    let u = vec![1.0 / 1000.0; 1000];
    for x in dm.columns() {
        assert!(weighted_correlation(x, &d.a, w).unwrap().abs() < 1e-3);
        assert!((weighted_mean(x, w) - weighted_mean(x, &u)).abs() < 1e-6);
    }
    for x in [&d.x1, &d.x2, &d.a] {
        assert!((weighted_mean(x, w) - weighted_mean(x, &u)).abs() < 1e-6);
        let rel = (weighted_variance(x, w) - weighted_variance(x, &u)).abs() / weighted_variance(x, &u);
        assert!(rel < 1e-6);
    }
    assert!((effective_sample_size(w).unwrap() - sol.ess).abs() < 1e-9);
}

#[test]
fn collinear_exposure_signals_positivity_failure() {
    let d = gen_main(300, 5);
    let dm = d.design();
    let sol = entropy_balance(&dm, &d.x1, &ConstraintOptions::moments(2), &SolverOptions::default()).unwrap();
    assert!(!sol.converged || sol.max_residual() > 1e-3 || sol.any_at_bound());
}

#[test]
fn binary_solver_matches_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 400;
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let group: Vec<u8> = x
        .iter()
        .map(|v| u8::from(rng.random_range(0.0..1.0) < 1.0 / (1.0 + (-v).exp())))
        .collect();
    let dm = DesignMatrix::from_columns(vec![x.clone()], vec!["x".into()], vec![EncodedKind::Continuous]).unwrap();
    let targets = moment_targets(&dm, &vec![0.0; n], 1, 1).unwrap();
    let sol = solve_binary(&dm, &group, &targets, 1, &SolverOptions::default()).unwrap();
    let mu = targets.covariate[0][0];
    for g in 0..2u8 {
        let xs: Vec<f64> = (0..n).filter(|&i| group[i] == g).map(|i| x[i]).collect();
        // Tilted mean is increasing in t; bisect for Σ e^{t x} x / Σ e^{t x} = μ.
        let tilted = |t: f64| {
            let e: Vec<f64> = xs.iter().map(|v| (t * v).exp()).collect();
            xs.iter().zip(&e).map(|(v, ei)| v * ei).sum::<f64>() / e.iter().sum::<f64>()
        };
        let (mut lo, mut hi) = (-20.0, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if tilted(mid) < mu {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        let e: Vec<f64> = xs.iter().map(|v| (t * v).exp()).collect();
        let z: f64 = e.iter().sum();
        let got = &sol.groups[g as usize].solution.weights;
        for (w, ei) in got.iter().zip(&e) {
            assert!((w - ei / z).abs() < 1e-8);
        }
    }
    let w1 = sol.group_weights(1);
    assert!((weighted_mean(&x, &w1) - mu).abs() < 1e-7);
}

#[test]
fn build_constraints_orders_families() {
    let d = gen_main(200, 9);
    let dm = d.design();
    let t = moment_targets(&dm, &d.a, 2, 2).unwrap();
    let cs = build_constraints(&dm, &d.a, &t, &ConstraintOptions::moments(2)).unwrap();
    // Covariance: 2+2+1, exposure marginals: 2, covariate marginals: 2+2+1.
    assert_eq!(cs.k(), 12);
}
