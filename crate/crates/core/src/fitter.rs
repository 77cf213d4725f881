//! Penalized maximum likelihood by local quadratic approximation (LQA).
//!
//! The estimator minimizes
//!
//! ```text
//! −Σ_i g_i(β) + n^{1/2} Σ_j p_λ(β_j)
//! ```
//!
//! Each outer step replaces `p_λ(|β_j|)` by the quadratic
//! `p'_λ(|β_j^t|) / (2|β_j^t|) · β_j²` around the current iterate, which
//! majorizes every penalty that is concave in `|β|`, and minimizes the
//! resulting smooth problem by damped Newton. Coordinates that fall below
//! `zero_threshold` are set to zero and stay there for the rest of the fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{log_likelihood, weighted_gram, Dataset, Family};
use crate::partinfo::{cholesky_jittered, cholesky_solve, ActiveSetPartition};
use crate::penalty::{PenaltyKind, PenaltySpec};

const MAX_HALVINGS: usize = 30;
/// Coordinates shrinking below this size are tried at zero each step.
const SNAP_LEVEL: f64 = 1e-3;

/// Starting point of the outer iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    /// Unpenalized maximum likelihood estimate, reached by Newton from zero.
    #[default]
    Mle,
    /// A given coefficient vector. Zero entries stay zero.
    Warm(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub tol: f64,
    pub zero_threshold: f64,
    pub init: Init,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 200,
            max_inner_iters: 50,
            tol: 1e-8,
            zero_threshold: 1e-6,
            init: Init::Mle,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if !(self.zero_threshold > 0.0) {
            return Err(Error::InvalidConfig("zero_threshold must be positive".into()));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::InvalidConfig("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub penalty: PenaltySpec,
    pub beta_hat: Vec<f64>,
    pub inactive: Vec<usize>,
    pub active: Vec<usize>,
    pub objective: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted outer step, starting at the initial point.
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta_hat)
    }

    pub fn partition(&self) -> ActiveSetPartition {
        ActiveSetPartition::from_coefficients(&self.beta_hat)
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }
}

/// `−Σ g_i(β) + n^{1/2} Σ p_λ(β_j)`.
pub fn objective(
    family: Family,
    data: &Dataset,
    penalty: &PenaltySpec,
    beta: &DVector<f64>,
) -> Result<f64> {
    let ll = log_likelihood(family, data, beta)?;
    Ok(-ll + (data.n() as f64).sqrt() * penalty.total(beta.as_slice()))
}

/// Fits the penalized estimator at a single tuning parameter.
pub fn fit(
    family: Family,
    data: &Dataset,
    penalty: &PenaltySpec,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let start = match &config.init {
        Init::Mle => unpenalized_mle(family, data, config)?,
        Init::Warm(b) => {
            if b.len() != data.p() {
                return Err(Error::DimensionMismatch {
                    context: "warm start",
                    expected: data.p(),
                    found: b.len(),
                });
            }
            b.clone()
        }
    };
    lqa(family, data, penalty, config, start)
}

/// Fits along a strictly descending grid, warm-starting each fit from the
/// previous solution. Coordinates that the previous fit set to zero are
/// restarted from the unpenalized estimate, since LQA cannot leave zero.
pub fn fit_path(
    family: Family,
    data: &Dataset,
    kind: PenaltyKind,
    lambdas: &[f64],
    config: &FitConfig,
) -> Result<Vec<FitResult>> {
    config.validate()?;
    kind.validate()?;
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig("lambda grid is empty".into()));
    }
    if lambdas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidConfig("lambda grid must be strictly descending".into()));
    }
    let specs = lambdas
        .iter()
        .map(|&l| kind.with_lambda(l))
        .collect::<Result<Vec<_>>>()?;

    let mle = unpenalized_mle(family, data, config)?;
    let mut prev: Option<DVector<f64>> = None;
    let mut out = Vec::with_capacity(lambdas.len());
    for spec in specs {
        let start = match (&prev, &config.init) {
            (Some(b), _) => b.zip_map(&mle, |w, m| if w == 0.0 { m } else { w }),
            (None, Init::Warm(b)) => b.clone(),
            (None, Init::Mle) => mle.clone(),
        };
        let res = lqa(family, data, &spec, config, start).map_err(|e| Error::PathFit {
            lambda: spec.lambda(),
            source: Box::new(e),
        })?;
        prev = Some(res.beta());
        out.push(res);
    }
    Ok(out)
}

/// Descending log-spaced grid from `λ_max` to `ratio · λ_max`.
///
/// `λ_max` is the smallest tuning parameter at which zero is the global
/// minimizer of every one-coordinate problem at `β = 0`; for `q = 1` this
/// is `‖Σ_i g'_i(0)‖_∞ / n^{1/2}`.
pub fn default_lambda_grid(
    family: Family,
    data: &Dataset,
    kind: PenaltyKind,
    len: usize,
    ratio: f64,
) -> Vec<f64> {
    let lambda_max = lambda_max(family, data, kind);
    match len {
        0 => Vec::new(),
        1 => vec![lambda_max],
        _ => (0..len)
            .map(|k| lambda_max * ratio.powf(k as f64 / (len - 1) as f64))
            .collect(),
    }
}

pub fn lambda_max(family: Family, data: &Dataset, kind: PenaltyKind) -> f64 {
    let n = data.n() as f64;
    let q = kind.q_type();
    let (mean0, var0) = (family.mean(0.0), family.variance(0.0));
    let mut best = 0.0f64;
    for col in data.x().column_iter() {
        let score: f64 = col
            .iter()
            .zip(data.y().iter())
            .map(|(&x, &y)| x * (y - mean0))
            .sum();
        let info = var0 * col.norm_squared() / n;
        let lambda = if q >= 1.0 {
            score.abs() / n.sqrt()
        } else if info > 0.0 {
            let b = score.abs() / (n * info);
            let mu = (2.0 * b * (1.0 - q) / (2.0 - q)).powf(2.0 - q) / (2.0 * (1.0 - q));
            n.sqrt() * info * mu
        } else {
            0.0
        };
        best = best.max(lambda);
    }
    if best > 0.0 && best.is_finite() {
        best
    } else {
        1.0
    }
}

/// Unpenalized MLE by damped Newton from zero.
pub fn unpenalized_mle(family: Family, data: &Dataset, config: &FitConfig) -> Result<DVector<f64>> {
    let all: Vec<usize> = (0..data.p()).collect();
    let zero_weights = DVector::zeros(data.p());
    newton_majorant(
        family,
        data,
        &all,
        &zero_weights,
        DVector::zeros(data.p()),
        config,
    )
}

fn lqa(
    family: Family,
    data: &Dataset,
    penalty: &PenaltySpec,
    config: &FitConfig,
    start: DVector<f64>,
) -> Result<FitResult> {
    let p = data.p();
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("starting coefficients"));
    }
    let sqrt_n = (data.n() as f64).sqrt();
    let prunes = penalty.lambda() > 0.0;
    let mut pruned = vec![false; p];
    let mut beta = start;
    if prunes {
        for j in 0..p {
            if beta[j].abs() < config.zero_threshold {
                pruned[j] = true;
                beta[j] = 0.0;
            }
        }
    }
    let obj_at = |b: &DVector<f64>| objective(family, data, penalty, b);
    let mut obj = obj_at(&beta)?;
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_outer_iters {
        let surviving: Vec<usize> = (0..p).filter(|&j| !pruned[j]).collect();
        if surviving.is_empty() {
            converged = true;
            break;
        }
        iterations += 1;
        let weights = DVector::from_iterator(
            surviving.len(),
            surviving.iter().map(|&j| {
                let b = beta[j].abs();
                if b == 0.0 {
                    0.0
                } else {
                    sqrt_n * penalty.derivative_abs(b) / b
                }
            }),
        );
        let candidate = newton_majorant(family, data, &surviving, &weights, beta.clone(), config)?;

        let obj_candidate = obj_at(&candidate)?;
        let mut chosen = None;
        if let Some(polished) = polish(family, data, penalty, &candidate)? {
            let o = obj_at(&polished)?;
            if o <= obj.min(obj_candidate) {
                chosen = Some((polished, o));
            }
        }
        if prunes && chosen.is_none() {
            let (tiny, shrinking): (Vec<usize>, Vec<usize>) = surviving
                .iter()
                .copied()
                .filter(|&j| {
                    let c = candidate[j].abs();
                    c < config.zero_threshold || (c < SNAP_LEVEL && c < beta[j].abs())
                })
                .partition(|&j| candidate[j].abs() < config.zero_threshold);
            // snapping shrinking coordinates must also beat the plain step
            let both: Vec<usize> = tiny.iter().chain(&shrinking).copied().collect();
            let trials = [
                (if shrinking.is_empty() { Vec::new() } else { both }, obj.min(obj_candidate)),
                (tiny, obj),
            ];
            for (zeroed, bar) in trials {
                if zeroed.is_empty() {
                    continue;
                }
                let mut trial = candidate.clone();
                for &j in &zeroed {
                    trial[j] = 0.0;
                }
                let o = obj_at(&trial)?;
                if o <= bar {
                    for &j in &zeroed {
                        pruned[j] = true;
                    }
                    chosen = Some((trial, o));
                    break;
                }
            }
        }
        let (next, next_obj) = match chosen {
            Some(c) => c,
            None if obj_candidate <= obj => (candidate, obj_candidate),
            None => {
                // no descent left; the iterate is a fixed point up to rounding
                converged = (&candidate - &beta).amax() < config.tol;
                break;
            }
        };
        let delta = (&next - &beta).amax();
        beta = next;
        obj = next_obj;
        trace.push(obj);
        if delta < config.tol {
            converged = true;
            break;
        }
    }

    let loglik = log_likelihood(family, data, &beta)?;
    let beta_hat: Vec<f64> = beta.iter().copied().collect();
    let parts = ActiveSetPartition::from_coefficients(&beta_hat);
    Ok(FitResult {
        penalty: *penalty,
        objective: -loglik + sqrt_n * penalty.total(&beta_hat),
        inactive: parts.inactive().to_vec(),
        active: parts.active().to_vec(),
        beta_hat,
        loglik,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// One Newton step on the exact objective over the nonzero coordinates of
/// `beta`. `None` if the restricted Hessian is not positive definite, the
/// step is not finite, or it would change the sign of any coordinate.
fn polish(
    family: Family,
    data: &Dataset,
    penalty: &PenaltySpec,
    beta: &DVector<f64>,
) -> Result<Option<DVector<f64>>> {
    let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if support.is_empty() {
        return Ok(None);
    }
    let sqrt_n = (data.n() as f64).sqrt();
    let xs = data.x().select_columns(&support);
    let eta = data.x() * beta;
    let resid = DVector::from_iterator(
        eta.len(),
        eta.iter().zip(data.y().iter()).map(|(&t, &yi)| yi - family.mean(t)),
    );
    let mut grad = -xs.tr_mul(&resid);
    let mut hess = weighted_gram(&xs, &eta.map(|t| family.variance(t)));
    for (k, &j) in support.iter().enumerate() {
        let b = beta[j].abs();
        grad[k] += sqrt_n * beta[j].signum() * penalty.derivative_abs(b);
        hess[(k, k)] += sqrt_n * penalty.second_derivative_abs(b);
    }
    let Some(chol) = nalgebra::Cholesky::new(hess) else {
        return Ok(None);
    };
    let step = chol.solve(&grad);
    if step.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let mut out = beta.clone();
    for (k, &j) in support.iter().enumerate() {
        let v = beta[j] - step[k];
        if v == 0.0 || v.signum() != beta[j].signum() {
            return Ok(None);
        }
        out[j] = v;
    }
    Ok(Some(out))
}

/// Minimizes `−Σ g_i(β) + ½ Σ_{j∈S} w_j β_j²` over the coordinates in `S`
/// (others fixed at their value in `beta`, which must be zero).
fn newton_majorant(
    family: Family,
    data: &Dataset,
    coords: &[usize],
    weights: &DVector<f64>,
    beta: DVector<f64>,
    config: &FitConfig,
) -> Result<DVector<f64>> {
    let xs: DMatrix<f64> = data.x().select_columns(coords);
    let y = data.y();
    let surrogate = |bs: &DVector<f64>| -> f64 {
        let eta = &xs * bs;
        if eta.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let nll: f64 = eta
            .iter()
            .zip(y.iter())
            .map(|(&t, &yi)| -family.log_density(yi, t))
            .sum();
        nll + 0.5 * bs.iter().zip(weights.iter()).map(|(b, w)| w * b * b).sum::<f64>()
    };

    let mut bs = beta.select_rows(coords);
    let mut current = surrogate(&bs);
    for _ in 0..config.max_inner_iters {
        let eta = &xs * &bs;
        let resid = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(y.iter()).map(|(&t, &yi)| yi - family.mean(t)),
        );
        let grad = -xs.tr_mul(&resid) + weights.component_mul(&bs);
        let var = eta.map(|t| family.variance(t));
        let mut hess = weighted_gram(&xs, &var);
        for k in 0..coords.len() {
            hess[(k, k)] += weights[k];
        }
        let factor = cholesky_jittered(&hess).map_err(|_| Error::SingularNewton)?;
        let rhs = DMatrix::from_column_slice(grad.len(), 1, grad.as_slice());
        let step: DVector<f64> = cholesky_solve(&factor, &rhs).column(0).into_owned();
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularNewton);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = &bs - &step * t;
            let value = surrogate(&cand);
            if value <= current {
                accepted = Some((cand, value));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, value)) = accepted else { break };
        let change = (&cand - &bs).amax();
        bs = cand;
        current = value;
        if change < config.tol {
            break;
        }
    }

    let mut out = beta;
    for (k, &j) in coords.iter().enumerate() {
        out[j] = bs[k];
    }
    Ok(out)
}
