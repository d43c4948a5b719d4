use entbal::bootstrap::{
    bootstrap_curve, bootstrap_curve_from_weights, bootstrap_with_resamples, BootstrapOptions, IntervalKind,
};
use entbal::dataset::{Covariate, CovariateKind, Dataset};
use entbal::drc::{linspace, SpanChoice};
use entbal::gps::fit_normal_gps;
use entbal::pipeline::{PipelineConfig, WeightingMethod};
use entbal::simbench::generate;
use entbal::simbench::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn small() -> Dataset {
    generate(Scenario::Main, 200, 31, 0).to_dataset()
}

fn grid() -> Vec<f64> {
    linspace(5.0, 25.0, 9)
}

#[test]
fn constant_outcome_has_zero_se() {
    let d = small();
    let flat = Dataset::new(vec![2.5; d.n()], d.exposure().to_vec(), d.covariates().to_vec()).unwrap();
    let opts = BootstrapOptions {
        replicates: 10,
        ..Default::default()
    };
    let r = bootstrap_curve(&flat, &PipelineConfig::default(), &grid(), &opts).unwrap();
    for (e, s) in r.point_estimates.iter().zip(&r.se) {
        if let (Some(e), Some(s)) = (e, s) {
            assert!((e - 2.5).abs() < 1e-9);
            assert!(s.abs() < 1e-9);
        }
    }
}

#[test]
fn identical_resamples_have_zero_se() {
    let d = small();
    let identity: Vec<usize> = (0..d.n()).collect();
    let resamples = vec![identity; 5];
    let cfg = PipelineConfig {
        curve: entbal::drc::CurveOptions {
            span: SpanChoice::Fixed(0.5),
            warn_outside_high_density: false,
            ..Default::default()
        },
        ..Default::default()
    };
    let r = bootstrap_with_resamples(&d, &cfg, &grid(), &resamples, &BootstrapOptions::default()).unwrap();
    assert!(r.failures.is_empty());
    for (i, s) in r.se.iter().enumerate() {
        if let Some(s) = s {
            assert!(s.abs() < 1e-12);
            assert!((r.lo[i].unwrap() - r.point_estimates[i].unwrap()).abs() < 1e-11);
        }
    }
}

#[test]
fn bootstrap_is_deterministic_and_seed_sensitive() {
    let d = small();
    let opts = BootstrapOptions {
        replicates: 8,
        seed: 4,
        keep_replicates: true,
        ..Default::default()
    };
    let cfg = PipelineConfig::default();
    let r1 = bootstrap_curve(&d, &cfg, &grid(), &opts).unwrap();
    let r2 = bootstrap_curve(&d, &cfg, &grid(), &opts).unwrap();
    assert_eq!(r1, r2);
    let r3 = bootstrap_curve(&d, &cfg, &grid(), &BootstrapOptions { seed: 5, ..opts }).unwrap();
    assert_eq!(r1.point_estimates, r3.point_estimates);
    assert_ne!(r1.se, r3.se);
    assert_eq!(r1.replicates_csv().unwrap().unwrap().lines().count(), 9);
}

#[test]
fn intervals_follow_requested_form() {
    let d = small();
    let cfg = PipelineConfig::default();
    let opts = BootstrapOptions {
        replicates: 20,
        seed: 1,
        ..Default::default()
    };
    let r = bootstrap_curve(&d, &cfg, &grid(), &opts).unwrap();
    for i in 0..r.grid.len() {
        if let (Some(e), Some(s)) = (r.point_estimates[i], r.se[i]) {
            assert!((r.lo[i].unwrap() - (e - 2.0 * s)).abs() < 1e-12);
            assert!((r.hi[i].unwrap() - (e + 2.0 * s)).abs() < 1e-12);
        }
    }
    let p = bootstrap_curve(
        &d,
        &cfg,
        &grid(),
        &BootstrapOptions {
            interval: IntervalKind::Percentile,
            ..opts
        },
    )
    .unwrap();
    assert_eq!(p.se, r.se);
    for i in 0..p.grid.len() {
        if let (Some(lo), Some(hi)) = (p.lo[i], p.hi[i]) {
            assert!(lo <= hi);
        }
    }
}

#[test]
fn supplied_weights_set_the_point_estimate() {
    let d = small();
    let n = d.n();
    let cfg = PipelineConfig::default();
    let uniform = vec![1.0 / n as f64; n];
    let opts = BootstrapOptions {
        replicates: 4,
        ..Default::default()
    };
    let r = bootstrap_curve_from_weights(&d, &uniform, &cfg, &grid(), &opts).unwrap();
    let unweighted = PipelineConfig {
        method: WeightingMethod::Unweighted,
        ..cfg.clone()
    };
    let direct = entbal::drc::estimate_curve(d.exposure(), d.outcome(), &uniform, &grid(), &unweighted.curve).unwrap();
    assert_eq!(r.point_estimates, direct.estimates);
}

#[test]
fn too_few_replicates_rejected() {
    let d = small();
    let opts = BootstrapOptions {
        replicates: 1,
        ..Default::default()
    };
    assert!(bootstrap_curve(&d, &PipelineConfig::default(), &grid(), &opts).is_err());
}

#[test]
fn gps_weights_near_uniform_without_confounding() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 3000;
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
    let a: Vec<f64> = (0..n).map(|_| 3.0 + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
    let ds = Dataset::new(
        vec![0.0; n],
        a.clone(),
        vec![
            Covariate::numeric("x", CovariateKind::Continuous, x),
            Covariate::numeric("b", CovariateKind::Binary, b),
        ],
    )
    .unwrap();
    let dm = entbal::dataset::encode(&ds).unwrap();
    let g = fit_normal_gps(&dm, &a, None).unwrap();
    let ess = entbal::balance::effective_sample_size(&g.weights).unwrap();
    assert!(ess > 0.98 * n as f64, "ESS {ess}");
}
