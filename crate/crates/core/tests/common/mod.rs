#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use pqs::RngStream;

/// `A Aᵀ + 0.1 I` with uniform entries in A.
pub fn random_pd(d: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

/// Exact minimizer of `uᵀJu/2 − uᵀτ + λ‖u‖₁` for small `d`, by enumerating
/// sign patterns and keeping the best sign-consistent stationary point.
pub fn lasso_oracle(j: &DMatrix<f64>, tau: &DVector<f64>, lambda: f64) -> (DVector<f64>, f64) {
    let d = tau.len();
    let objective = |u: &DVector<f64>| 0.5 * u.dot(&(j * u)) - u.dot(tau) + lambda * u.lp_norm(1);
    let mut best = (DVector::zeros(d), 0.0);
    for code in 0..3usize.pow(d as u32) {
        let mut signs = vec![0.0; d];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = [0.0, 1.0, -1.0][c % 3];
            c /= 3;
        }
        let support: Vec<usize> = (0..d).filter(|&k| signs[k] != 0.0).collect();
        if support.is_empty() {
            continue;
        }
        let jaa = j.select_rows(&support).select_columns(&support);
        let rhs = DVector::from_iterator(support.len(), support.iter().map(|&k| tau[k] - lambda * signs[k]));
        let Some(ua) = jaa.lu().solve(&rhs) else { continue };
        if support.iter().enumerate().any(|(i, &k)| ua[i] * signs[k] <= 0.0) {
            continue;
        }
        let mut u = DVector::zeros(d);
        for (i, &k) in support.iter().enumerate() {
            u[k] = ua[i];
        }
        let f = objective(&u);
        if f < best.1 {
            best = (u, f);
        }
    }
    best
}

/// Undamped Newton–Raphson for the logistic MLE.
pub fn logistic_newton(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut beta = DVector::zeros(x.ncols());
    for _ in 0..100 {
        let eta = x * &beta;
        let mu = eta.map(|t| 1.0 / (1.0 + (-t).exp()));
        let w = mu.map(|m| m * (1.0 - m));
        let grad = x.transpose() * (y - &mu);
        let mut h = DMatrix::zeros(x.ncols(), x.ncols());
        for i in 0..x.nrows() {
            let row = x.row(i);
            h += row.transpose() * row * w[i];
        }
        let step = h.lu().solve(&grad).expect("nonsingular Hessian");
        beta += &step;
        if step.amax() < 1e-13 {
            break;
        }
    }
    beta
}

/// Ordinary least squares through the normal equations.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    (x.transpose() * x).lu().solve(&(x.transpose() * y)).unwrap()
}
