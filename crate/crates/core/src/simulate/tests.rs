use super::generators::{MeanFn, Noise};
use super::*;

fn haar_cfg(n: usize, k: usize, reps: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(Scenario::RawUstat);
    c.n = n;
    c.reps = reps;
    c.seed = 42;
    c.kernel = Some(KernelConfig::Haar { k });
    c
}

#[test]
fn zero_kernel_gives_point_mass() {
    let mut c = haar_cfg(20, 8, 50);
    c.kernel = Some(KernelConfig::Constant { value: 0.0 });
    let (r, reps) = run_normality(&c).unwrap();
    assert!(reps.iter().all(|x| x.statistic == 0.0));
    assert!((r.ks_distance - 0.5).abs() < 1e-15);
}

#[test]
fn haar_variance_ratio_matches_finite_n_target() {
    let (n, k) = (50usize, 8usize);
    let (r, _) = run_normality(&haar_cfg(n, k, 8000)).unwrap();
    let target = (k as f64 - 1.0) / k as f64 * n as f64 / (n as f64 - 1.0);
    // SE of a variance estimate from 8000 draws is about 1.6%·(1 + kurtosis/2).
    assert!((r.empirical_var_ratio / target - 1.0).abs() < 0.08, "{r:?}");
    assert!((r.k_n - k as f64).abs() < 1e-9);
    assert_eq!(r.spot_checks, 80);
    assert!(r.max_spot_check_error < 1e-12);
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let mut c = haar_cfg(64, 256, 40);
    c.kernel = Some(KernelConfig::Fourier { k: 16 });
    let one = with_threads(Some(1), || run_normality(&c)).unwrap().unwrap();
    let again = with_threads(Some(1), || run_normality(&c)).unwrap().unwrap();
    let four = with_threads(Some(4), || run_normality(&c)).unwrap().unwrap();
    assert_eq!(one.1, again.1);
    for (a, b) in one.1.iter().zip(&four.1) {
        assert!((a.u - b.u).abs() <= 1e-9 * a.u.abs().max(1.0));
    }
    assert!((one.0.ks_distance - four.0.ks_distance).abs() < 1e-9);
}

#[test]
fn single_cell_conditional_matches_unconditional() {
    let mut c = haar_cfg(40, 64, 30);
    c.response = Response::Regression {
        mean: MeanFn::Linear {
            slope: 1.0,
            intercept: 0.5,
        },
        noise: Noise::Gaussian { sd: 0.3 },
    };
    let (_, plain) = run_normality(&c).unwrap();
    c.partition = Some(PartitionConfig { cells: Some(1) });
    let (r, cond) = run_conditional_normality(&c).unwrap();
    assert_eq!(r.frozen_counts, Some(vec![40]));
    for (a, b) in plain.iter().zip(&cond) {
        assert_eq!(a.u, b.u);
        assert!((b.v - b.u).abs() <= 1e-12 * b.u.abs().max(1.0));
    }
}

#[test]
fn conditional_statistic_is_standardized() {
    let mut c = haar_cfg(100, 1024, 2000);
    c.partition = Some(PartitionConfig { cells: Some(32) });
    let (r, reps) = run_conditional_normality(&c).unwrap();
    assert_eq!(r.cells, Some(32));
    assert_eq!(r.frozen_counts.as_ref().unwrap().iter().sum::<usize>(), 100);
    let m = stats::moments(&reps.iter().map(|x| x.statistic).collect::<Vec<_>>());
    assert!(m.mean.abs() < 4.0 / (2000f64).sqrt(), "{m:?}");
    assert!((m.var - 1.0).abs() < 0.15, "{m:?}");
}

#[test]
fn variance_ratios_are_finite() {
    let mut c = haar_cfg(200, 4096, 1);
    c.partition = Some(PartitionConfig { cells: Some(64) });
    let v = conditional_variance_ratios(&c, 10).unwrap();
    assert_eq!(v.len(), 10);
    assert!(v.iter().all(|r| r.is_finite() && *r > 0.0));
}

#[test]
fn resolve_fills_defaults() {
    let mut c = haar_cfg(200, 4096, 10);
    c.partition = Some(PartitionConfig { cells: None });
    let r = c.resolve().unwrap();
    assert_eq!(r.grid, Some(4096));
    assert_eq!(r.partition.unwrap().cells, Some(128));
    assert_eq!(r.resolve().unwrap(), r);
    let text = serde_json::to_string(&r).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
}

#[test]
fn unknown_fields_are_rejected() {
    let bad = r#"{"scenario":"raw_ustat","n":10,"kernel":{"family":"haar","k":8},"colour":1}"#;
    assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
    let bad = r#"{"scenario":"raw_ustat","n":10,"kernel":{"family":"gabor","k":8}}"#;
    assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
}

#[test]
fn sq_regression_scenario_is_centered() {
    let mut c = ExperimentConfig::new(Scenario::SqRegression);
    c.n = 400;
    c.reps = 300;
    c.seed = 5;
    
    c.kernel = Some(KernelConfig::Haar { k: 64 });
    c.response = Response::Regression {
        mean: MeanFn::Linear {
            slope: 1.0,
            intercept: 0.0,
        },
        noise: Noise::Gaussian { sd: 0.5 },
    };
    let (r, _) = run_estimator(&c).unwrap();
    let truth = r.truth.unwrap();
    assert!((truth - 1.0 / 3.0).abs() < 1e-6);
    let se = (r.scale * r.scale).sqrt() / (c.reps as f64).sqrt();
    // Bias of the Haar projection at k = 64 is −‖(I−K)b‖² = −1/(12·64²).
    assert!((r.mc_mean - truth).abs() < 4.0 * se + 1e-4, "{r:?}");
    assert!(r.empirical_var_ratio > 0.7 && r.empirical_var_ratio < 1.4, "{r:?}");
}

#[test]
fn mean_response_scenario_runs() {
    let mut c = ExperimentConfig::new(Scenario::MeanResponse);
    c.n = 500;
    c.reps = 200;
    
    c.kernel = Some(KernelConfig::Haar { k: 64 });
    c.response = Response::Regression {
        mean: MeanFn::Linear {
            slope: 1.0,
            intercept: 0.0,
        },
        noise: Noise::Gaussian { sd: 0.5 },
    };
    c.propensity = generators::Propensity::Linear { lo: 0.5, hi: 0.9 };
    let (r, _) = run_estimator(&c).unwrap();
    assert!((r.truth.unwrap() - 0.5).abs() < 1e-9);
    assert!((r.mc_mean - 0.5).abs() < 4.0 * r.scale / (c.reps as f64).sqrt() + 1e-3, "{r:?}");
}

#[test]
fn multinomial_scenario_dispatches() {
    let mut c = ExperimentConfig::new(Scenario::MultinomialForm);
    c.n = 64;
    c.reps = 100;
    match run_experiment(&c).unwrap() {
        Outcome::Multinomial(s) => {
            assert_eq!(s.cells, 64);
            assert!(s.max_decomposition_error < 1e-10);
        }
        other => panic!("{other:?}"),
    }
}
