mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use common::{lasso_oracle, ols, random_pd};
use pqs::criterion::{
    aic, cross_validate, cross_validate_path, estimate_k, fold_assignment, select, solve_u1, u1_objective,
    SelectOptions,
};
use pqs::fitter::default_lambda_grid;
use pqs::simbench::{generate_design, generate_response};
use pqs::{fit, Dataset, Family, FitConfig, FitResult, PenaltyKind, PenaltySpec, RngStream, Selector};

fn hand_fit(penalty: PenaltySpec, beta_hat: Vec<f64>) -> FitResult {
    let (inactive, active) = (0..beta_hat.len()).partition(|&j| beta_hat[j] == 0.0);
    FitResult {
        penalty,
        beta_hat,
        inactive,
        active,
        objective: 0.0,
        loglik: 0.0,
        iterations: 0,
        converged: true,
        objective_trace: vec![],
    }
}

fn simulated(family: Family, p: usize, n: usize, beta: &DVector<f64>, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed);
    let x = generate_design(p, n, &mut rng).unwrap();
    let y = generate_response(family, &x, beta, &mut rng);
    Dataset::new(family, x, y).unwrap()
}

proptest! {
    #[test]
    fn solve_u1_satisfies_kkt(seed in any::<u64>(), d in 1usize..6, lambda in 0.0..2.0f64) {
        let mut rng = RngStream::new(seed);
        let j = random_pd(d, &mut rng);
        let tau = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let u = solve_u1(&j, &tau, lambda, 1e-12).unwrap();
        let g = &j * &u - &tau;
        for k in 0..d {
            if u[k] == 0.0 {
                prop_assert!(g[k].abs() <= lambda + 1e-8);
            } else {
                prop_assert!((g[k] + lambda * u[k].signum()).abs() <= 1e-8);
            }
        }
        let (_, best) = lasso_oracle(&j, &tau, lambda);
        prop_assert!((u1_objective(&j, &tau, lambda, &u) - best).abs() <= 1e-9 * (1.0 + best.abs()));
    }
}

#[test]
fn k_closed_form_for_scad_and_mcp() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let j = DMatrix::<f64>::identity(3, 3);
    for (i, lambda) in [0.3, 1.0, 10.0].into_iter().enumerate() {
        for pen in [PenaltySpec::scad(lambda, 2.7).unwrap(), PenaltySpec::mcp(lambda, 3.0).unwrap()] {
            let f = hand_fit(pen, vec![0.0, 50.0, -60.0]);
            let k = estimate_k(&f, &j, &pen, 20_000, &mut RngStream::new(i as u64)).unwrap();
            let target = 2.0 * (1.0 - normal.cdf(lambda));
            assert!((k.k_hat - target).abs() <= 3.0 * k.stderr + 1e-12, "λ={lambda}: {} vs {target}", k.k_hat);
        }
    }
}

#[test]
fn k_is_zero_without_inactive_coordinates() {
    let pen = PenaltySpec::scad(0.5, 2.7).unwrap();
    let f = hand_fit(pen, vec![1.0, 2.0]);
    let k = estimate_k(&f, &DMatrix::identity(2, 2), &pen, 10, &mut RngStream::new(1)).unwrap();
    assert_eq!((k.k_hat, k.stderr), (0.0, 0.0));
    let bridge = PenaltySpec::bridge(0.5, 0.2).unwrap();
    assert!(estimate_k(&f, &DMatrix::identity(2, 2), &bridge, 10, &mut RngStream::new(1)).is_err());
    assert!(estimate_k(&f, &DMatrix::identity(2, 2), &pen, 1, &mut RngStream::new(1)).is_err());
}

#[test]
fn all_inactive_uses_the_raw_draws() {
    // with no active block, û = S(s, λ) coordinatewise when J is diagonal
    let normal = Normal::new(0.0, 1.0).unwrap();
    let pen = PenaltySpec::mcp(0.5, 3.0).unwrap();
    let f = hand_fit(pen, vec![0.0, 0.0]);
    let k = estimate_k(&f, &DMatrix::identity(2, 2), &pen, 40_000, &mut RngStream::new(9)).unwrap();
    let target = 4.0 * (1.0 - normal.cdf(0.5));
    assert!((k.k_hat - target).abs() <= 3.0 * k.stderr);
}

#[test]
fn stderr_scales_with_sample_count() {
    let pen = PenaltySpec::scad(0.5, 2.7).unwrap();
    let f = hand_fit(pen, vec![0.0, 3.0, 0.0]);
    let j = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
    let small = estimate_k(&f, &j, &pen, 1000, &mut RngStream::new(2)).unwrap();
    let large = estimate_k(&f, &j, &pen, 4000, &mut RngStream::new(3)).unwrap();
    let ratio = small.stderr / large.stderr;
    assert!((1.6..=2.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn aic_for_q_below_one_ignores_sampling() {
    let beta = DVector::from_vec(vec![1.0, 0.0, 0.5]);
    let data = simulated(Family::Logistic, 3, 100, &beta, 5);
    let pen = PenaltySpec::bridge(0.3, 0.2).unwrap();
    let f = fit(Family::Logistic, &data, &pen, &FitConfig::default()).unwrap();
    let a = aic(&f, Family::Logistic, &data, &pen, 10, &mut RngStream::new(1)).unwrap();
    let b = aic(&f, Family::Logistic, &data, &pen, 5000, &mut RngStream::new(77)).unwrap();
    assert_eq!(a.aic, b.aic);
    assert_eq!(a.k_hat, 0.0);
    assert_eq!(a.aic, -2.0 * f.loglik + 2.0 * f.active_count() as f64);
}

#[test]
fn aic_for_fully_active_lasso_is_classical() {
    let beta = DVector::from_vec(vec![1.0, -1.0]);
    let data = simulated(Family::GaussianLinear, 2, 80, &beta, 6);
    let pen = PenaltySpec::scad(0.05, 2.7).unwrap();
    let f = fit(Family::GaussianLinear, &data, &pen, &FitConfig::default()).unwrap();
    assert_eq!(f.active_count(), 2);
    let a = aic(&f, Family::GaussianLinear, &data, &pen, 100, &mut RngStream::new(1)).unwrap();
    assert_eq!(a.aic, -2.0 * a.loglik + 4.0);
}

#[test]
fn cv_matches_per_fold_ols() {
    let beta = DVector::from_vec(vec![0.7]);
    let data = simulated(Family::GaussianLinear, 1, 37, &beta, 12);
    let rng = RngStream::new(44);
    let report = cross_validate(
        Family::GaussianLinear,
        &data,
        PenaltyKind::Bridge { q: 1.0 },
        0.0,
        5,
        &FitConfig::default(),
        &mut rng.clone(),
    )
    .unwrap();
    let groups = fold_assignment(37, 5, &mut rng.clone()).unwrap();
    let constant = 0.5 * (2.0 * std::f64::consts::PI).ln();
    for (f, held) in groups.iter().enumerate() {
        let train: Vec<usize> = (0..37).filter(|i| !held.contains(i)).collect();
        let x = data.x().select_rows(&train);
        let y = DVector::from_iterator(train.len(), train.iter().map(|&i| data.y()[i]));
        let b = ols(&x, &y)[0];
        let rss: f64 = held.iter().map(|&i| (data.y()[i] - data.x()[(i, 0)] * b).powi(2)).sum();
        let expected = rss + 2.0 * constant * held.len() as f64;
        assert!((report.per_fold[f] - expected).abs() < 1e-8, "fold {f}");
    }
    assert!((report.deviance - report.per_fold.iter().sum::<f64>()).abs() < 1e-12);

    let again = cross_validate(
        Family::GaussianLinear,
        &data,
        PenaltyKind::Bridge { q: 1.0 },
        0.0,
        5,
        &FitConfig::default(),
        &mut rng.clone(),
    )
    .unwrap();
    assert_eq!(report, again);
}

#[test]
fn cv_path_reports_every_lambda() {
    let beta = DVector::from_vec(vec![0.5, 0.0, 1.0]);
    let data = simulated(Family::Logistic, 3, 90, &beta, 13);
    let kind = PenaltyKind::Mcp { r: 3.0 };
    let grid = default_lambda_grid(Family::Logistic, &data, kind, 8, 0.01);
    let reports =
        cross_validate_path(Family::Logistic, &data, kind, &grid, 4, &FitConfig::default(), &mut RngStream::new(3))
            .unwrap();
    assert_eq!(reports.len(), 8);
    for (r, &l) in reports.iter().zip(&grid) {
        assert_eq!(r.lambda, l);
        assert_eq!(r.per_fold.len(), 4);
        assert!(r.deviance.is_finite() && r.deviance > 0.0);
    }
}

#[test]
fn selection_picks_the_minimum_and_repeats() {
    let beta = DVector::from_vec(vec![1.0, 0.0, 0.0, -1.0]);
    let data = simulated(Family::GaussianLinear, 4, 100, &beta, 14);
    let kind = PenaltyKind::Scad { r: 2.7 };
    let grid = default_lambda_grid(Family::GaussianLinear, &data, kind, 15, 1e-3);
    let options = SelectOptions { mc_samples: 200, folds: 5 };
    for selector in [Selector::Aic, Selector::Cv] {
        let rng = RngStream::new(21);
        let a = select(selector, Family::GaussianLinear, &data, kind, &grid, &FitConfig::default(), &options, &rng).unwrap();
        let b = select(selector, Family::GaussianLinear, &data, kind, &grid, &FitConfig::default(), &options, &rng).unwrap();
        assert_eq!(a.scores, b.scores);
        let min = a.scores.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(a.scores[a.chosen], min);
        assert_eq!(a.lambda_hat(), grid[a.chosen]);
    }
}
