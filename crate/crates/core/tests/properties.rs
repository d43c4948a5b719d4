use entbal::balance::{conditional_slope, effective_sample_size, weighted_correlation, weighted_ks};
use entbal::dataset::{encode, load_csv, Covariate, CovariateKind, Dataset, DesignMatrix, EncodedKind, Schema};
use entbal::drc::{estimate_curve, CurveOptions, SpanChoice};
use entbal::pipeline::entropy_balance;
use entbal::solver::{weights_from_theta, ConstraintOptions, ConstraintSystem, SolverOptions};
use entbal::stats::{weighted_mean, weighted_variance};
use proptest::prelude::*;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, n)
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, n)
}

proptest! {
    #[test]
    fn ess_is_scale_invariant_and_bounded(w in weights(30), c in 1e-3f64..1e3) {
        let e = effective_sample_size(&w).unwrap();
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        prop_assert!((effective_sample_size(&scaled).unwrap() - e).abs() < 1e-9 * e);
        prop_assert!(e >= 1.0 - 1e-12 && e <= 30.0 + 1e-9);
    }

    #[test]
    fn ks_lies_in_unit_interval(x in values(25), w in weights(25)) {
        let ks = weighted_ks(&x, &w);
        prop_assert!((0.0..=1.0).contains(&ks));
        prop_assert!(weighted_ks(&x, &[1.0; 25]) < 1e-12);
    }

    #[test]
    fn correlation_and_slope_are_scale_invariant(x in values(20), a in values(20), w in weights(20), c in 1e-2f64..1e2) {
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        if let (Some(r1), Some(r2)) = (weighted_correlation(&x, &a, &w), weighted_correlation(&x, &a, &scaled)) {
            prop_assert!((r1 - r2).abs() < 1e-9);
            prop_assert!(r1.abs() <= 1.0 + 1e-12);
        }
        if let (Some(s1), Some(s2)) = (conditional_slope(&x, &a, &w), conditional_slope(&x, &a, &scaled)) {
            prop_assert!((s1.beta - s2.beta).abs() < 1e-8 * s1.beta.abs().max(1.0));
        }
    }

    #[test]
    fn curve_is_scale_invariant(a in prop::collection::vec(0.0f64..10.0, 25), y in values(25), w in weights(25), c in 1e-2f64..1e2) {
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        let opts = CurveOptions { span: SpanChoice::Fixed(0.6), warn_outside_high_density: false, ..Default::default() };
        let grid = [2.0, 5.0, 8.0];
        let c1 = estimate_curve(&a, &y, &w, &grid, &opts);
        let c2 = estimate_curve(&a, &y, &scaled, &grid, &opts);
        if let (Ok(c1), Ok(c2)) = (c1, c2) {
            for (e1, e2) in c1.estimates.iter().zip(&c2.estimates) {
                match (e1, e2) {
                    (Some(u), Some(v)) => prop_assert!((u - v).abs() < 1e-7 * u.abs().max(1.0)),
                    (None, None) => {}
                    _ => prop_assert!(false, "gap pattern changed under scaling"),
                }
            }
        }
    }

    #[test]
    fn softmax_weights_are_positive_and_normalized(
        cols in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 15), 1..4),
        theta_seed in prop::collection::vec(-30.0f64..30.0, 4),
    ) {
        let k = cols.len();
        let cs = ConstraintSystem::from_raw_columns(cols).unwrap();
        let q = vec![1.0 / 15.0; 15];
        let w = weights_from_theta(&theta_seed[..k], &cs, &q);
        prop_assert!(w.iter().all(|v| *v >= 0.0 && v.is_finite()));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn converged_eb_preserves_marginal_moments(
        seed in 0u64..1000,
        order in 2usize..=3,
    ) {
        let d = entbal::simbench::generate(entbal::simbench::Scenario::Main, 300, seed, 0);
        let dm = d.design();
        let sol = entropy_balance(&dm, &d.a, &ConstraintOptions::moments(order), &SolverOptions::default()).unwrap();
        prop_assume!(sol.converged && !sol.any_at_bound());
        let u = vec![1.0 / 300.0; 300];
        for x in [&d.x1, &d.x2, &d.x3, &d.a] {
            prop_assert!((weighted_mean(x, &sol.weights) - weighted_mean(x, &u)).abs() < 1e-6);
        }
        for x in [&d.x1, &d.x2, &d.a] {
            let v0 = weighted_variance(x, &u);
            prop_assert!((weighted_variance(x, &sol.weights) - v0).abs() < 1e-6 * v0.max(1.0));
        }
    }

    #[test]
    fn csv_round_trip(
        rows in prop::collection::vec((-1e6f64..1e6, -1e3f64..1e3, -10.0f64..10.0, prop::bool::ANY, 0usize..3), 4..30),
    ) {
        let levels = ["north", "south", "east"];
        let mut y = Vec::new();
        let mut a = Vec::new();
        let mut x = Vec::new();
        let mut b = Vec::new();
        let mut g = Vec::new();
        for (yi, ai, xi, bi, gi) in &rows {
            y.push(*yi);
            a.push(*ai);
            x.push(*xi);
            b.push(f64::from(u8::from(*bi)));
            g.push(levels[*gi].to_string());
        }
        let ds = Dataset::new(
            y,
            a,
            vec![
                Covariate::numeric("x", CovariateKind::Continuous, x),
                Covariate::numeric("b", CovariateKind::Binary, b),
                Covariate::categorical("g", g),
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        ds.write_csv(&path, "y", "a").unwrap();
        let schema = Schema::from_specs("y", "a", &["x:continuous".into(), "b:binary".into(), "g:categorical".into()]).unwrap();
        let back = load_csv(&path, &schema).unwrap();
        prop_assert_eq!(&back, &ds);
    }
}

#[test]
fn categorical_encoding_drops_first_sorted_level() {
    let ds = Dataset::new(
        vec![0.0; 5],
        vec![1.0, 2.0, 3.0, 4.0, 5.0],
        vec![Covariate::categorical(
            "race",
            ["white", "black", "other", "black", "white"].map(String::from).to_vec(),
        )],
    )
    .unwrap();
    let dm = encode(&ds).unwrap();
    assert_eq!(dm.names(), ["race=other", "race=white"]);
    assert_eq!(dm.column(0), [0.0, 0.0, 1.0, 0.0, 0.0]);
    assert_eq!(dm.kinds(), [EncodedKind::Binary, EncodedKind::Binary]);
    let _ = DesignMatrix::from_columns(vec![vec![1.0]], vec!["x".into()], vec![EncodedKind::Continuous]).unwrap();
}
