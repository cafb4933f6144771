//! Properties named in the acceptance criteria, as plain checks so the
//! proptest suite and the acceptance runner share them.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};
use simexplore_core::export;
use simexplore_core::ingest::{parse_table, Compression, Format};
use simexplore_core::measures::{self, compute_all, CriticalValueRule, Measure, PerformanceInput};
use simexplore_core::plotdata::{self, PlotKind, PlotSpec};

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || a == b
}

pub fn stratum() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(0.01f64..3.0, n),
            -3.0f64..3.0,
        )
    })
}

pub fn input(est: &[f64], se: &[f64], theta: f64) -> PerformanceInput {
    PerformanceInput::from_values(est)
        .with_ses(se)
        .with_truth(theta)
}

pub fn check_shift(est: &[f64], se: &[f64], theta: f64, c: f64) -> Result<(), TestCaseError> {
    let base = input(est, se, theta);
    let shifted: Vec<f64> = est.iter().map(|x| x + c).collect();
    let moved = input(&shifted, se, theta + c);
    let b0 = measures::bias(&base).unwrap();
    let b1 = measures::bias(&moved).unwrap();
    prop_assert!((b0.value - b1.value).abs() <= 1e-10 * (1.0 + c.abs()));
    let e0 = measures::empirical_se(&base).unwrap().value;
    let e1 = measures::empirical_se(&moved).unwrap().value;
    prop_assert!((e0 - e1).abs() <= 1e-9 * (1.0 + c.abs()));
    // Proportions: only decisions far from the boundary are stable
    // under rounding, so compare the indicators that are clearly decided.
    let rule = CriticalValueRule::Normal;
    let z = 1.959_963_984_540_054;
    let far = |i: usize| ((est[i] - theta).abs() / se[i] - z).abs() > 1e-6;
    let c0 = measures::coverage_indicators(&base, rule).unwrap();
    let c1 = measures::coverage_indicators(&moved, rule).unwrap();
    for i in 0..est.len() {
        if far(i) {
            prop_assert_eq!(c0[i], c1[i]);
        }
    }
    Ok(())
}

pub fn check_scale(est: &[f64], se: &[f64], theta: f64, k: f64) -> Result<(), TestCaseError> {
    let base = input(est, se, theta);
    let scaled_est: Vec<f64> = est.iter().map(|x| k * x).collect();
    let scaled_se: Vec<f64> = se.iter().map(|x| k * x).collect();
    let scaled = input(&scaled_est, &scaled_se, k * theta);
    let pairs = [
        (
            measures::bias(&base).unwrap(),
            measures::bias(&scaled).unwrap(),
            k,
        ),
        (
            measures::empirical_se(&base).unwrap(),
            measures::empirical_se(&scaled).unwrap(),
            k,
        ),
        (
            measures::model_se(&base).unwrap(),
            measures::model_se(&scaled).unwrap(),
            k,
        ),
        (
            measures::mse(&base).unwrap(),
            measures::mse(&scaled).unwrap(),
            k * k,
        ),
    ];
    for (a, b, f) in pairs {
        prop_assert!(
            (a.value * f - b.value).abs() <= 1e-9 * (1.0 + b.value.abs()),
            "{:?}",
            a.measure
        );
        prop_assert!(
            (a.mcse.unwrap() * f - b.mcse.unwrap()).abs() <= 1e-9 * (1.0 + b.mcse.unwrap())
        );
    }
    let neg: Vec<f64> = est.iter().map(|x| -k * x).collect();
    let e = measures::empirical_se(&PerformanceInput::from_values(&neg)).unwrap();
    prop_assert!(rel_close(
        e.value,
        k * measures::empirical_se(&base).unwrap().value,
        1e-12
    ));
    Ok(())
}

pub fn check_mse_decomposition(est: &[f64], se: &[f64], theta: f64) -> Result<(), TestCaseError> {
    let inp = input(est, se, theta);
    let n = est.len() as f64;
    let mse = measures::mse(&inp).unwrap().value;
    let bias = measures::bias(&inp).unwrap().value;
    let s = measures::empirical_se(&inp).unwrap().value;
    let rhs = bias * bias + s * s * (n - 1.0) / n;
    prop_assert!(rel_close(mse, rhs, 1e-12), "mse {} vs {}", mse, rhs);
    Ok(())
}

pub fn check_binomial_mcse(est: &[f64], se: &[f64], theta: f64) -> Result<(), TestCaseError> {
    let inp = input(est, se, theta);
    for r in [
        measures::coverage(&inp, CriticalValueRule::Normal).unwrap(),
        measures::bias_eliminated_coverage(&inp, CriticalValueRule::Normal).unwrap(),
        measures::power(&inp, CriticalValueRule::Normal).unwrap(),
    ] {
        let n = r.n_used as f64;
        let p = r.value;
        let m = r.mcse.unwrap();
        prop_assert_eq!(m, (p * (1.0 - p) / n).sqrt());
        prop_assert!((m * m * n - p * (1.0 - p)).abs() <= 1e-15);
        prop_assert!((0.0..=1.0).contains(&p));
    }
    Ok(())
}

pub fn check_zip_coverage(seed: u64, n_rep: usize) -> Result<(), TestCaseError> {
    let d = super::synth(seed, n_rep, 2, 3);
    let cov = compute_all(&d, &[Measure::Coverage]).estimates;
    let z = plotdata::zip_data(&d, &PlotSpec::new(PlotKind::Zip)).unwrap();
    prop_assert_eq!(z.strata.len(), cov.len());
    for (s, c) in z.strata.iter().zip(&cov) {
        let stripes: Vec<_> = z
            .stripes
            .iter()
            .filter(|x| x.method == s.method && x.dgm == s.dgm)
            .collect();
        let hits = stripes.iter().filter(|x| x.covers).count();
        prop_assert_eq!(hits as f64 / stripes.len() as f64, c.value);
        let mut pct: Vec<f64> = stripes.iter().map(|x| x.rank_percentile).collect();
        pct.sort_by(f64::total_cmp);
        let n = stripes.len();
        let expect: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64 * 100.0).collect();
        prop_assert_eq!(pct, expect);
    }
    Ok(())
}

pub fn check_tidy_round_trip(seed: u64, n_rep: usize) -> Result<(), TestCaseError> {
    let d = super::synth(seed, n_rep, 2, 3);
    let est = compute_all(&d, &Measure::ALL).estimates;
    let names = d.mapping.dgm.clone();
    for fmt in [Format::Csv, Format::Tsv, Format::JsonRecords] {
        let once = export::tidy_table(&est, &names, fmt).unwrap();
        let raw = parse_table(&once, fmt, Compression::None, usize::MAX).unwrap();
        let back = export::estimates_from_tidy(&raw, &names).unwrap();
        prop_assert_eq!(&back, &est);
        prop_assert_eq!(export::tidy_table(&back, &names, fmt).unwrap(), once);
    }
    Ok(())
}

pub fn check_svg_deterministic(seed: u64, n_rep: usize, k: usize) -> Result<(), TestCaseError> {
    let d = super::synth(seed, n_rep, 2, 3);
    let kind = PlotKind::ALL[k];
    let spec = PlotSpec {
        measure: Some(Measure::Bias),
        ..PlotSpec::new(kind)
    };
    let est = compute_all(&d, &[Measure::Bias]).estimates;
    let data = plotdata::plot_data(&d, &est, &spec).unwrap();
    let again = plotdata::plot_data(&d, &est, &spec).unwrap();
    prop_assert_eq!(&data, &again);
    let a = plotdata::render_svg(&spec, &data).unwrap();
    let b = plotdata::render_svg(&spec, &again).unwrap();
    prop_assert_eq!(a, b);
    Ok(())
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng)
        .run(&strategy, check)
        .map_err(|e| e.to_string())
}

/// Each named property over `cases` deterministic random inputs.
pub fn run_named(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    vec![
        (
            "shift equivariance",
            run(cases, (stratum(), -100.0f64..100.0), |((e, s, t), c)| {
                check_shift(&e, &s, t, c)
            }),
        ),
        (
            "scale equivariance",
            run(cases, (stratum(), 0.01f64..100.0), |((e, s, t), k)| {
                check_scale(&e, &s, t, k)
            }),
        ),
        (
            "MSE decomposition",
            run(cases, stratum(), |(e, s, t)| {
                check_mse_decomposition(&e, &s, t)
            }),
        ),
        (
            "zip-coverage identity",
            run(cases, (any::<u64>(), 1usize..60), |(seed, n)| {
                check_zip_coverage(seed, n)
            }),
        ),
        (
            "binomial MCSE exactness",
            run(cases, stratum(), |(e, s, t)| check_binomial_mcse(&e, &s, t)),
        ),
        (
            "export round-trip fixed point",
            run(cases, (any::<u64>(), 2usize..30), |(seed, n)| {
                check_tidy_round_trip(seed, n)
            }),
        ),
        (
            "deterministic SVG bytes",
            run(
                cases,
                (any::<u64>(), 2usize..30, 0usize..9),
                |(seed, n, k)| check_svg_deterministic(seed, n, k),
            ),
        ),
    ]
}
