mod common;

use common::{fd_gradient, fixture_batch, newton_raphson};
use ghl::family::{Family, FamilyKind, Link};
use ghl::glm::{fisher_information, fit_irls, hat_matrix, score, Dataset, FitOptions};
use ghl::sampling::{sample_response, stream};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn twenty_row_poisson() -> Dataset {
    let x: Vec<f64> = (0..20).map(|i| -1.0 + 0.1 * i as f64).collect();
    let y = [
        1.0, 0.0, 2.0, 1.0, 1.0, 3.0, 2.0, 2.0, 1.0, 4.0, 3.0, 2.0, 5.0, 3.0, 4.0, 6.0, 4.0, 7.0,
        5.0, 8.0,
    ];
    let design = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    Dataset::new(design, DVector::from_row_slice(&y)).unwrap()
}

#[test]
fn poisson_fit_matches_newton_raphson() {
    let data = twenty_row_poisson();
    let model = fit_irls(&data, &Family::poisson(), Link::Log, &FitOptions::default()).unwrap();
    let oracle = newton_raphson(&data, FamilyKind::Poisson, Link::Log);
    for (a, b) in model.beta.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    assert!(model.converged && model.score_norm <= 1e-8);
}

#[test]
fn score_matches_finite_differences_away_from_optimum() {
    let data = Dataset::new(
        DMatrix::from_fn(
            10,
            2,
            |i, j| if j == 0 { 1.0 } else { (i as f64 - 4.5) / 3.0 },
        ),
        DVector::from_row_slice(&[0.0, 1.0, 1.0, 2.0, 1.0, 3.0, 2.0, 4.0, 3.0, 6.0]),
    )
    .unwrap();
    let beta = [0.3, -0.4];
    let s = score(
        &data,
        &DVector::from_row_slice(&beta),
        &Family::poisson(),
        Link::Log,
    )
    .unwrap();
    let fd = fd_gradient(&data, &beta, FamilyKind::Poisson, Link::Log, 1e-5);
    for (a, b) in s.iter().zip(&fd) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn fixture_batch_scores_vanish_and_match_fd() {
    for f in fixture_batch(404, 30) {
        let beta = DVector::from_column_slice(&f.model.beta);
        let s = score(&f.data, &beta, &f.model.family, f.model.link).unwrap();
        assert!(s.amax() <= 1e-8);
        let fd = fd_gradient(
            &f.data,
            &f.model.beta,
            f.model.family.kind,
            f.model.link,
            1e-5,
        );
        for (a, b) in s.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn hat_matrix_is_a_rank_d_projection() {
    let mut rng = stream(31, 0);
    let n = 30;
    let design = DMatrix::<f64>::from_fn(n, 3, |_, j| {
        if j == 0 {
            1.0
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    let y = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            sample_response(
                &Family::poisson(),
                (0.5 + design[(i, 1)] - design[(i, 2)]).exp(),
                &mut rng,
            )
        }),
    );
    let data = Dataset::new(design, y).unwrap();
    let model = fit_irls(&data, &Family::poisson(), Link::Log, &FitOptions::default()).unwrap();
    let h = hat_matrix(&data, &model).unwrap();
    assert!((&h * &h - &h).amax() <= 1e-8);
    assert!((h.trace() - 3.0).abs() <= 1e-8);
    assert!((&h - h.transpose()).amax() <= 1e-12);
    let eig = h.symmetric_eigenvalues();
    assert!(eig.iter().all(|&l| (-1e-8..=1.0 + 1e-8).contains(&l)));
}

#[test]
fn canonical_fit_log_likelihood_never_decreases() {
    // Re-running with max_iter = k reproduces the first k iterates.
    let data = twenty_row_poisson();
    let mut last = f64::NEG_INFINITY;
    for k in 1..8 {
        let opts = FitOptions {
            max_iter: k,
            ..FitOptions::default()
        };
        let m = fit_irls(&data, &Family::poisson(), Link::Log, &opts).unwrap();
        assert!(m.log_likelihood >= last - 1e-12);
        last = m.log_likelihood;
    }
}

#[test]
fn information_is_symmetric_psd() {
    let data = twenty_row_poisson();
    let info = fisher_information(
        &data,
        &DVector::from_row_slice(&[0.2, 0.9]),
        &Family::poisson(),
        Link::Log,
    )
    .unwrap();
    assert!((&info - info.transpose()).amax() == 0.0);
    let eig = info.symmetric_eigenvalues();
    let max = eig.max();
    assert!(eig.min() >= -1e-10 * max);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converged_fits_satisfy_score_tolerance(seed in 0u64..10_000, n in 15usize..60, logistic in any::<bool>()) {
        let mut rng = stream(seed, 1);
        let design = DMatrix::<f64>::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
        let (family, link) = if logistic { (Family::bernoulli(), Link::Logit) } else { (Family::poisson(), Link::Log) };
        let y = DVector::from_iterator(n, (0..n).map(|i| {
            let eta = 0.3 + 0.5 * design[(i, 1)];
            sample_response(&family, link.inverse(eta), &mut rng)
        }));
        let data = Dataset::new(design, y).unwrap();
        if let Ok(model) = fit_irls(&data, &family, link, &FitOptions::default()) {
            if model.converged {
                prop_assert!(model.score_norm <= 1e-8);
                for (e, m) in model.eta.iter().zip(&model.mu) {
                    prop_assert_eq!(link.inverse(*e), *m);
                }
            }
        }
    }
}
