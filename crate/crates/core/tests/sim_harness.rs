use ghl::family::Link;
use ghl::gof::Method;
use ghl::sampling::{sample_response, stream};
use ghl::sim::{
    generate, generate_large_model, generate_null, large_model_coefficients, power1_coefficients,
    run_replications, CovariateLaw, RunOptions, SettingId, SettingSpec,
};

struct Moments {
    mean: Vec<f64>,
    var: Vec<f64>,
    corr01: f64,
}

fn moments(rows: &[Vec<f64>]) -> Moments {
    let n = rows.len() as f64;
    let p = rows[0].len();
    let mean: Vec<f64> = (0..p)
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n)
        .collect();
    let var: Vec<f64> = (0..p)
        .map(|k| rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0))
        .collect();
    let corr01 = if p > 1 {
        let cov = rows
            .iter()
            .map(|r| (r[0] - mean[0]) * (r[1] - mean[1]))
            .sum::<f64>()
            / (n - 1.0);
        cov / (var[0] * var[1]).sqrt()
    } else {
        f64::NAN
    };
    Moments { mean, var, corr01 }
}

fn draw(law: &CovariateLaw, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, 0);
    (0..n).map(|_| law.draw(&mut rng)).collect()
}

fn within(value: f64, target: f64, se: f64) {
    assert!(
        (value - target).abs() <= 3.0 * se,
        "{value} vs {target} (se {se})"
    );
}

const N: usize = 100_000;

#[test]
fn uniform_covariate_law() {
    let m = moments(&draw(&CovariateLaw::Uniform { lo: -3.0, hi: 3.0 }, N, 1));
    let n = N as f64;
    within(m.mean[0], 0.0, (3.0 / n).sqrt());
    // Fourth central moment of U(-3, 3) is 81/5.
    within(m.var[0], 3.0, ((81.0 / 5.0 - 9.0) / n).sqrt());
}

#[test]
fn exponential_covariate_law() {
    let m = moments(&draw(&CovariateLaw::Exponential { rate: 1.0 }, N, 2));
    let n = N as f64;
    within(m.mean[0], 1.0, (1.0 / n).sqrt());
    within(m.var[0], 1.0, (8.0 / n).sqrt());
}

#[test]
fn correlated_normal_law() {
    let m = moments(&draw(&CovariateLaw::CorrelatedNormal { rho: 0.7 }, N, 3));
    let n = N as f64;
    for k in 0..2 {
        within(m.mean[k], 0.0, (1.0 / n).sqrt());
        within(m.var[k], 1.0, (2.0 / n).sqrt());
    }
    within(m.corr01, 0.7, (1.0 - 0.49) / n.sqrt());

    let spec = SettingSpec::new(SettingId::Null5, 10_000, None, None, 0).unwrap();
    let sim = generate_null(&spec, &mut stream(4, 0)).unwrap();
    let rows: Vec<Vec<f64>> = (0..10_000)
        .map(|i| vec![sim.data.design()[(i, 1)], sim.data.design()[(i, 2)]])
        .collect();
    assert!((moments(&rows).corr01 - 0.7).abs() <= 0.05);
}

#[test]
fn normal_bernoulli_mixture_law() {
    let law = CovariateLaw::NormalBernoulliMixture {
        p: 0.5,
        shift: 1.0,
        rho: 0.5,
    };
    let m = moments(&draw(&law, N, 5));
    let n = N as f64;
    // Each coordinate is ±1 plus N(0, 1): mean 0, variance 2, and
    // covariance 1 + 0.5 between the two.
    for k in 0..2 {
        within(m.mean[k], 0.0, (2.0 / n).sqrt());
        // Fourth central moment of the mixture is 1 + 6 + 3 = 10.
        within(m.var[k], 2.0, ((10.0 - 4.0) / n).sqrt());
    }
    within(m.mean[2], 0.5, (0.25 / n).sqrt());
    assert!((m.corr01 - 0.75).abs() <= 0.01);
}

#[test]
fn standard_normal_law() {
    let m = moments(&draw(&CovariateLaw::StandardNormal { dim: 3 }, N, 6));
    let n = N as f64;
    for k in 0..3 {
        within(m.mean[k], 0.0, (1.0 / n).sqrt());
        within(m.var[k], 1.0, (2.0 / n).sqrt());
    }
    within(m.corr01, 0.0, 1.0 / n.sqrt());
}

#[test]
fn null_mean_ranges() {
    let span = |id| {
        let spec = SettingSpec::new(id, 10_000, None, None, 0).unwrap();
        let sim = generate_null(&spec, &mut stream(7, 0)).unwrap();
        let lo = sim.true_mean.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = sim.true_mean.iter().copied().fold(0.0, f64::max);
        (lo, hi)
    };
    let (lo, hi) = span(SettingId::Null1);
    assert!(
        (0.09..0.12).contains(&lo) && (80.0..100.0).contains(&hi),
        "{lo} {hi}"
    );
    let (lo, hi) = span(SettingId::Null3);
    assert!(
        (0.09..0.12).contains(&lo) && (0.9..1.01).contains(&hi),
        "{lo} {hi}"
    );
}

#[test]
fn sqrt_link_null_settings_square_the_predictor() {
    let spec = SettingSpec::new(SettingId::Null2b, 50, None, None, 0).unwrap();
    assert_eq!(spec.true_link, Link::Sqrt);
    let sim = generate(&spec, &mut stream(8, 0)).unwrap();
    for i in 0..50 {
        let x = sim.data.design()[(i, 1)];
        assert!((sim.true_mean[i] - (2.08 + 0.360 * x).powi(2)).abs() < 1e-12);
    }
}

#[test]
fn negative_binomial_overdispersion() {
    let spec = SettingSpec::new(SettingId::Power2, 100, Some(0.5), None, 0).unwrap();
    let mut rng = stream(9, 0);
    for x in [-2.0, 0.0, 2.0] {
        let mu = spec.true_mean(&[1.0, x]);
        let ys: Vec<f64> = (0..N)
            .map(|_| sample_response(&spec.true_family, mu, &mut rng))
            .collect();
        let m = moments(&ys.iter().map(|&y| vec![y]).collect::<Vec<_>>());
        let ratio = m.var[0] / m.mean[0];
        let expected = 1.0 + 0.5 * mu;
        assert!(
            (ratio - expected).abs() <= 0.03 * expected,
            "x={x}: {ratio} vs {expected}"
        );
    }
}

#[test]
fn power1_without_quadratic_term_is_log_linear() {
    // The quadratic coefficient vanishes at log J = 18 * 0.0633.
    let j = (18.0f64 * 0.0633).exp();
    let beta = power1_coefficients(j);
    assert!(beta[2].abs() < 1e-12);
}

#[test]
fn large_model_design() {
    let beta = large_model_coefficients(2);
    assert_eq!(beta.len(), 2);
    assert!((beta[1] - 0.0717f64.sqrt()).abs() < 1e-12);
    assert!((beta[1] - 0.2678).abs() < 1e-4);
    for d in [10, 20, 50] {
        let ss: f64 = large_model_coefficients(d)[1..].iter().map(|b| b * b).sum();
        assert!((ss - 0.0717).abs() < 1e-12);
    }
    let sim = generate_large_model(20, 10_000, 0, &mut stream(10, 0)).unwrap();
    let inside = sim
        .true_mean
        .iter()
        .filter(|m| (1.0..=10.0).contains(*m))
        .count();
    assert!(inside as f64 / 10_000.0 >= 0.9);
    assert!(generate_large_model(20, 20, 0, &mut stream(10, 0)).is_err());
}

fn options(tests: Vec<Method>, reps: usize, alpha: f64) -> RunOptions {
    RunOptions {
        tests,
        reps,
        alpha,
        ..RunOptions::default()
    }
}

#[test]
fn smoke_null_run_holds_nominal_level() {
    let spec = SettingSpec::new(SettingId::Null2, 100, None, None, 11).unwrap();
    let result = run_replications(&spec, &options(vec![Method::Ghl], 200, 0.05)).unwrap();
    assert_eq!(result.reps_completed + result.reps_discarded, 200);
    assert_eq!(
        result.discards.values().sum::<usize>(),
        result.reps_discarded
    );
    let rate = result.rate(Method::Ghl).unwrap();
    assert!((0.01..=0.11).contains(&rate), "rate {rate}");
}

#[test]
fn alpha_one_rejects_everything() {
    let spec = SettingSpec::new(SettingId::Null1, 60, None, None, 12).unwrap();
    let result = run_replications(
        &spec,
        &options(vec![Method::Ghl, Method::NaiveGhl], 30, 1.0),
    )
    .unwrap();
    assert_eq!(result.rate(Method::Ghl), Some(1.0));
    assert_eq!(result.rate(Method::NaiveGhl), Some(1.0));
}

#[test]
fn replications_are_deterministic() {
    let spec = SettingSpec::new(SettingId::Power3, 80, Some(12.0), None, 13).unwrap();
    let opts = RunOptions {
        sw_boot: 50,
        sw_reps: Some(4),
        ..options(vec![Method::Ghl, Method::NaiveGhl, Method::Sw], 24, 0.05)
    };
    let a = serde_json::to_string(&run_replications(&spec, &opts).unwrap()).unwrap();
    let b = serde_json::to_string(&run_replications(&spec, &opts).unwrap()).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let c =
        pool.install(|| serde_json::to_string(&run_replications(&spec, &opts).unwrap()).unwrap());
    assert_eq!(a, c);
}
