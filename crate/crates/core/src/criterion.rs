//! Tuning-parameter selection: the AIC-type criterion with its Monte-Carlo
//! bias term, and K-fold cross-validation as a baseline.
//!
//! For `q < 1` the criterion is `−2ℓ(β̂) + 2|active|`. For `q = 1` it adds
//! `2K̂`, where `K = E[û⁽¹⁾ᵀ s⁽¹ᐟ²⁾]` is estimated by drawing
//! `s ~ N(0, Ĵ_n(β̂))` and solving, per draw,
//!
//! ```text
//! û⁽¹⁾ = argmin_u  uᵀ J⁽¹ᐟ²⁾ u / 2 − uᵀ τ + λ‖u‖₁
//! τ    = s⁽¹⁾ − J⁽¹²⁾ J⁽²²⁾⁻¹ (s⁽²⁾ − p'_λ(β̂⁽²⁾))
//! ```
//!
//! by cyclic coordinate descent with soft thresholding.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{information, log_likelihood, Dataset, Family};
use crate::fitter::{fit_path, FitConfig, FitResult};
use crate::partinfo::{partition, sample_gaussian, PartitionedInfo};
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::rng::RngStream;

pub const DEFAULT_MC_SAMPLES: usize = 1000;
pub const DEFAULT_FOLDS: usize = 5;
const SOLVER_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100_000;

/// `S(z, λ) = sgn(z) max(|z| − λ, 0)`.
pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Minimizes `uᵀJu/2 − uᵀτ + λ‖u‖₁` by cyclic coordinate descent, stopping
/// once a full sweep moves no coordinate by `tol` or more.
pub fn solve_u1(j: &DMatrix<f64>, tau: &DVector<f64>, lambda: f64, tol: f64) -> Result<DVector<f64>> {
    let d = tau.len();
    if j.nrows() != d || j.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "coordinate descent",
            expected: d,
            found: j.nrows(),
        });
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidPenalty("lambda must be nonnegative".into()));
    }
    for k in 0..d {
        if !(j[(k, k)] > 0.0) {
            return Err(Error::NonPositiveDiagonal {
                index: k,
                value: j[(k, k)],
            });
        }
    }
    let mut u = DVector::<f64>::zeros(d);
    if d == 0 {
        return Ok(u);
    }
    for _ in 0..MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for k in 0..d {
            let off: f64 = (0..d).filter(|&l| l != k).map(|l| j[(k, l)] * u[l]).sum();
            let updated = soft_threshold(tau[k] - off, lambda) / j[(k, k)];
            max_change = max_change.max((updated - u[k]).abs());
            u[k] = updated;
        }
        if max_change < tol {
            break;
        }
    }
    Ok(u)
}

/// `uᵀJu/2 − uᵀτ + λ‖u‖₁`.
pub fn u1_objective(j: &DMatrix<f64>, tau: &DVector<f64>, lambda: f64, u: &DVector<f64>) -> f64 {
    0.5 * u.dot(&(j * u)) - u.dot(tau) + lambda * u.lp_norm(1)
}

/// Quantities built from one draw `s ~ N(0, Ĵ_n)`.
#[derive(Debug, Clone)]
pub struct BiasSampleWorkspace {
    pub s1: DVector<f64>,
    pub s2: DVector<f64>,
    pub s_1given2: DVector<f64>,
    pub p_prime2: DVector<f64>,
    pub tau: DVector<f64>,
    pub u1: DVector<f64>,
}

impl BiasSampleWorkspace {
    pub fn build(
        info: &PartitionedInfo,
        s: &DVector<f64>,
        p_prime2: &DVector<f64>,
        lambda: f64,
    ) -> Result<Self> {
        let parts = &info.partition;
        let s1 = parts.gather_inactive(s);
        let s2 = parts.gather_active(s);
        let s_1given2 = &s1 - &info.gain * &s2;
        let tau = &s1 - &info.gain * (&s2 - p_prime2);
        let u1 = solve_u1(&info.j1given2, &tau, lambda, SOLVER_TOL)?;
        if u1.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coordinate descent solution"));
        }
        Ok(Self {
            s1,
            s2,
            s_1given2,
            p_prime2: p_prime2.clone(),
            tau,
            u1,
        })
    }

    /// `û⁽¹⁾ᵀ s⁽¹ᐟ²⁾`
    pub fn contribution(&self) -> f64 {
        self.u1.dot(&self.s_1given2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub k_hat: f64,
    pub stderr: f64,
}

/// Monte-Carlo estimate of the `q = 1` bias term.
pub fn estimate_k(
    fit: &FitResult,
    j: &DMatrix<f64>,
    penalty: &PenaltySpec,
    mc_samples: usize,
    rng: &mut RngStream,
) -> Result<KEstimate> {
    if penalty.q_type() != 1.0 {
        return Err(Error::InvalidConfig(
            "the K term applies only to penalties with q = 1".into(),
        ));
    }
    if mc_samples < 2 {
        return Err(Error::InvalidConfig("mc_samples must be at least 2".into()));
    }
    let parts = fit.partition();
    if parts.inactive().is_empty() {
        return Ok(KEstimate {
            k_hat: 0.0,
            stderr: 0.0,
        });
    }
    let info = partition(j, &parts)?;
    let p_prime2 = DVector::from_iterator(
        parts.active().len(),
        parts
            .active()
            .iter()
            .map(|&k| penalty.derivative(fit.beta_hat[k]))
            .collect::<Result<Vec<_>>>()?,
    );
    let draws = sample_gaussian(j, mc_samples, rng)?;
    let mut values = Vec::with_capacity(mc_samples);
    for row in draws.row_iter() {
        let s = row.transpose();
        let ws = BiasSampleWorkspace::build(&info, &s, &p_prime2, penalty.lambda())?;
        values.push(ws.contribution());
    }
    let (mean, sd) = mean_sd(&values);
    Ok(KEstimate {
        k_hat: mean,
        stderr: sd / (mc_samples as f64).sqrt(),
    })
}

/// Sample mean and (n−1)-denominator standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicReport {
    pub lambda: f64,
    pub loglik: f64,
    pub active_count: usize,
    pub k_hat: f64,
    pub k_hat_stderr: f64,
    pub aic: f64,
    pub mc_samples: usize,
}

/// `−2ℓ + 2|active| + 2K̂·1{q = 1}`.
pub fn aic_value(loglik: f64, active_count: usize, k_hat: f64, q_type: f64) -> f64 {
    let base = -2.0 * loglik + 2.0 * active_count as f64;
    if q_type == 1.0 {
        base + 2.0 * k_hat
    } else {
        base
    }
}

pub fn aic(
    fit: &FitResult,
    family: Family,
    data: &Dataset,
    penalty: &PenaltySpec,
    mc_samples: usize,
    rng: &mut RngStream,
) -> Result<AicReport> {
    let beta = fit.beta();
    let loglik = log_likelihood(family, data, &beta)?;
    let active_count = fit.active_count();
    let (k, samples) = if penalty.q_type() == 1.0 {
        let j = information(family, data, &beta)?;
        (estimate_k(fit, &j, penalty, mc_samples, rng)?, mc_samples)
    } else {
        (
            KEstimate {
                k_hat: 0.0,
                stderr: 0.0,
            },
            0,
        )
    };
    Ok(AicReport {
        lambda: penalty.lambda(),
        loglik,
        active_count,
        k_hat: k.k_hat,
        k_hat_stderr: k.stderr,
        aic: aic_value(loglik, active_count, k.k_hat, penalty.q_type()),
        mc_samples: samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub lambda: f64,
    pub folds: usize,
    /// −2 × held-out log-likelihood summed over folds
    pub deviance: f64,
    pub per_fold: Vec<f64>,
}

/// Shuffles `0..n` and cuts it into `folds` groups whose sizes differ by at
/// most one (larger groups first).
pub fn fold_assignment(n: usize, folds: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    use rand::seq::SliceRandom;
    if folds < 2 || folds > n {
        return Err(Error::InvalidConfig(format!(
            "folds must lie in [2, n] = [2, {n}], got {folds}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(idx[start..start + size].to_vec());
        start += size;
    }
    Ok(out)
}

/// K-fold cross-validated deviance at every λ of a descending grid, sharing
/// one shuffle across the grid.
pub fn cross_validate_path(
    family: Family,
    data: &Dataset,
    kind: PenaltyKind,
    lambdas: &[f64],
    folds: usize,
    config: &FitConfig,
    rng: &mut RngStream,
) -> Result<Vec<CvReport>> {
    let groups = fold_assignment(data.n(), folds, rng)?;
    let per_fold: Vec<Vec<f64>> = groups
        .par_iter()
        .enumerate()
        .map(|(f, held)| {
            fold_deviances(family, data, kind, lambdas, held, config)
                .map_err(|e| Error::FoldFit { fold: f, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let vals: Vec<f64> = per_fold.iter().map(|f| f[k]).collect();
            CvReport {
                lambda,
                folds,
                deviance: vals.iter().sum(),
                per_fold: vals,
            }
        })
        .collect())
}

fn fold_deviances(
    family: Family,
    data: &Dataset,
    kind: PenaltyKind,
    lambdas: &[f64],
    held: &[usize],
    config: &FitConfig,
) -> Result<Vec<f64>> {
    let mut is_held = vec![false; data.n()];
    for &i in held {
        is_held[i] = true;
    }
    let train: Vec<usize> = (0..data.n()).filter(|&i| !is_held[i]).collect();
    let train_data = data.select_rows(&train);
    let test_data = data.select_rows(held);
    let fits = fit_path(family, &train_data, kind, lambdas, config)?;
    fits.iter()
        .map(|f| Ok(-2.0 * log_likelihood(family, &test_data, &f.beta())?))
        .collect()
}

pub fn cross_validate(
    family: Family,
    data: &Dataset,
    kind: PenaltyKind,
    lambda: f64,
    folds: usize,
    config: &FitConfig,
    rng: &mut RngStream,
) -> Result<CvReport> {
    let mut reports = cross_validate_path(family, data, kind, &[lambda], folds, config, rng)?;
    Ok(reports.remove(0))
}

/// λ with the smallest score; ties go to the largest λ. NaN scores never win.
pub fn select_lambda(reports: &[(f64, f64)]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &(lambda, score) in reports {
        let score = if score.is_nan() { f64::INFINITY } else { score };
        best = match best {
            None => Some((lambda, score)),
            Some((bl, bs)) if score < bs || (score == bs && lambda > bl) => Some((lambda, score)),
            keep => keep,
        };
    }
    best.map(|(l, _)| l).ok_or(Error::EmptySelection)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Aic,
    Cv,
}

impl Selector {
    pub fn name(self) -> &'static str {
        match self {
            Selector::Aic => "aic",
            Selector::Cv => "cv",
        }
    }
}

/// Outcome of scoring a whole grid.
#[derive(Debug, Clone)]
pub struct Selection {
    pub selector: Selector,
    pub fits: Vec<FitResult>,
    pub aic: Option<Vec<AicReport>>,
    pub cv: Option<Vec<CvReport>>,
    pub scores: Vec<f64>,
    pub chosen: usize,
}

impl Selection {
    pub fn lambda_hat(&self) -> f64 {
        self.fits[self.chosen].penalty.lambda()
    }

    pub fn chosen_fit(&self) -> &FitResult {
        &self.fits[self.chosen]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectOptions {
    pub mc_samples: usize,
    pub folds: usize,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            mc_samples: DEFAULT_MC_SAMPLES,
            folds: DEFAULT_FOLDS,
        }
    }
}

/// Fits the grid on the full data and scores each λ with `selector`.
/// Draws for grid point `k` come from `rng.split(k)`; the CV shuffle from
/// `rng.split(u64::MAX)`.
pub fn select(
    selector: Selector,
    family: Family,
    data: &Dataset,
    kind: PenaltyKind,
    lambdas: &[f64],
    config: &FitConfig,
    options: &SelectOptions,
    rng: &RngStream,
) -> Result<Selection> {
    let fits = fit_path(family, data, kind, lambdas, config)?;
    let (scores, aic_reports, cv_reports): (Vec<f64>, _, _) = match selector {
        Selector::Aic => {
            let reports = fits
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    let mut stream = rng.split(k as u64);
                    aic(f, family, data, &f.penalty, options.mc_samples, &mut stream)
                })
                .collect::<Result<Vec<_>>>()?;
            (reports.iter().map(|r| r.aic).collect(), Some(reports), None)
        }
        Selector::Cv => {
            let mut stream = rng.split(u64::MAX);
            let reports =
                cross_validate_path(family, data, kind, lambdas, options.folds, config, &mut stream)?;
            (reports.iter().map(|r| r.deviance).collect(), None, Some(reports))
        }
    };
    let pairs: Vec<(f64, f64)> = lambdas.iter().copied().zip(scores.iter().copied()).collect();
    let lambda_hat = select_lambda(&pairs)?;
    let chosen = lambdas
        .iter()
        .position(|&l| l == lambda_hat)
        .expect("selected lambda comes from the grid");
    Ok(Selection {
        selector,
        fits,
        aic: aic_reports,
        cv: cv_reports,
        scores,
        chosen,
    })
}
