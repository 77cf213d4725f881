//! Natural exponential family GLMs with canonical link.
//!
//! Each observation contributes `g_i(β) = y_i θ_i − a(θ_i) + b(y_i)` with
//! `θ_i = x_iᵀβ`. Only scalar responses are supported.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model family. The Gaussian model has unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    #[serde(alias = "linear")]
    GaussianLinear,
    Logistic,
}

impl Family {
    /// Cumulant function `a(θ)`.
    pub fn cumulant(self, theta: f64) -> f64 {
        match self {
            Family::GaussianLinear => 0.5 * theta * theta,
            // log(1 + e^θ) without overflow
            Family::Logistic => theta.max(0.0) + (-theta.abs()).exp().ln_1p(),
        }
    }

    /// Mean function `a'(θ)`.
    pub fn mean(self, theta: f64) -> f64 {
        match self {
            Family::GaussianLinear => theta,
            Family::Logistic => sigmoid(theta),
        }
    }

    /// Variance function `a''(θ)`.
    pub fn variance(self, theta: f64) -> f64 {
        match self {
            Family::GaussianLinear => 1.0,
            Family::Logistic => {
                let e = (-theta.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
        }
    }

    /// Base measure term `b(y)`.
    pub fn base_measure(self, y: f64) -> f64 {
        match self {
            Family::GaussianLinear => -0.5 * y * y - 0.5 * (2.0 * PI).ln(),
            Family::Logistic => 0.0,
        }
    }

    /// Log-density of a single response at natural parameter `θ`.
    pub fn log_density(self, y: f64, theta: f64) -> f64 {
        y * theta - self.cumulant(theta) + self.base_measure(y)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::GaussianLinear => "linear",
            Family::Logistic => "logistic",
        }
    }
}

pub(crate) fn sigmoid(theta: f64) -> f64 {
    if theta >= 0.0 {
        1.0 / (1.0 + (-theta).exp())
    } else {
        let e = theta.exp();
        e / (1.0 + e)
    }
}

/// Regressors and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    /// Builds a dataset, checking shape, finiteness, and (for logistic models)
    /// that every response is 0 or 1.
    pub fn new(family: Family, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidDataset(
                "need at least one row and one column".into(),
            ));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "responses",
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        if family == Family::Logistic && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidDataset(
                "logistic responses must be 0 or 1".into(),
            ));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
        }
    }
}

fn linear_predictor(data: &Dataset, beta: &DVector<f64>) -> Result<DVector<f64>> {
    if beta.len() != data.p() {
        return Err(Error::DimensionMismatch {
            context: "coefficients",
            expected: data.p(),
            found: beta.len(),
        });
    }
    let eta = data.x() * beta;
    if eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear predictor"));
    }
    Ok(eta)
}

/// `Σ_i g_i(β)`.
pub fn log_likelihood(family: Family, data: &Dataset, beta: &DVector<f64>) -> Result<f64> {
    let eta = linear_predictor(data, beta)?;
    Ok(eta
        .iter()
        .zip(data.y().iter())
        .map(|(&theta, &y)| family.log_density(y, theta))
        .sum())
}

/// Scaled score `n^{-1/2} Σ_i x_i (y_i − a'(x_iᵀβ))`.
pub fn score_scaled(family: Family, data: &Dataset, beta: &DVector<f64>) -> Result<DVector<f64>> {
    let eta = linear_predictor(data, beta)?;
    let resid = DVector::from_iterator(
        data.n(),
        eta.iter()
            .zip(data.y().iter())
            .map(|(&theta, &y)| y - family.mean(theta)),
    );
    Ok(data.x().tr_mul(&resid) / (data.n() as f64).sqrt())
}

/// Average information `n^{-1} Σ_i a''(x_iᵀβ) x_i x_iᵀ`.
pub fn information(family: Family, data: &Dataset, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let eta = linear_predictor(data, beta)?;
    let weights = eta.map(|theta| family.variance(theta));
    Ok(weighted_gram(data.x(), &weights) / data.n() as f64)
}

/// `Xᵀ diag(w) X`, symmetrized.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
    let mut wx = x.clone();
    for (mut row, &w) in wx.row_iter_mut().zip(weights.iter()) {
        row *= w;
    }
    let g = x.tr_mul(&wx);
    (&g + g.transpose()) * 0.5
}
