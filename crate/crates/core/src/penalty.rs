//! Bridge, SCAD and MCP penalties.
//!
//! SCAD and MCP use the shape parameter `r > 1`; the conventional SCAD
//! parameter `a` corresponds to `r + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default SCAD shape (`a = 3.7` in the conventional parameterization).
pub const DEFAULT_SCAD_R: f64 = 2.7;
/// Default MCP shape.
pub const DEFAULT_MCP_R: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PenaltyKind {
    /// `λ|β|^q`, with `q = 1` giving the lasso.
    Bridge { q: f64 },
    Scad { r: f64 },
    Mcp { r: f64 },
}

impl PenaltyKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltyKind::Bridge { q } => {
                if !(q > 0.0 && q <= 1.0) {
                    return Err(Error::InvalidPenalty("q must lie in (0,1]".into()));
                }
            }
            PenaltyKind::Scad { r } | PenaltyKind::Mcp { r } => {
                if !(r > 1.0 && r.is_finite()) {
                    return Err(Error::InvalidPenalty("r must exceed 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Exponent of the penalty's behaviour near the origin.
    pub fn q_type(&self) -> f64 {
        match *self {
            PenaltyKind::Bridge { q } => q,
            PenaltyKind::Scad { .. } | PenaltyKind::Mcp { .. } => 1.0,
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Result<PenaltySpec> {
        PenaltySpec::new(self, lambda)
    }

    pub fn name(&self) -> &'static str {
        match self {
            PenaltyKind::Bridge { .. } => "bridge",
            PenaltyKind::Scad { .. } => "scad",
            PenaltyKind::Mcp { .. } => "mcp",
        }
    }
}

/// A penalty family together with its tuning parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    kind: PenaltyKind,
    lambda: f64,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidPenalty("lambda must be nonnegative".into()));
        }
        kind.validate()?;
        Ok(Self { kind, lambda })
    }

    pub fn bridge(lambda: f64, q: f64) -> Result<Self> {
        Self::new(PenaltyKind::Bridge { q }, lambda)
    }

    pub fn scad(lambda: f64, r: f64) -> Result<Self> {
        Self::new(PenaltyKind::Scad { r }, lambda)
    }

    pub fn mcp(lambda: f64, r: f64) -> Result<Self> {
        Self::new(PenaltyKind::Mcp { r }, lambda)
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn q_type(&self) -> f64 {
        self.kind.q_type()
    }

    /// `p_λ(β)`.
    pub fn value(&self, beta: f64) -> f64 {
        let lambda = self.lambda;
        let b = beta.abs();
        if b == 0.0 || lambda == 0.0 {
            return 0.0;
        }
        match self.kind {
            PenaltyKind::Bridge { q } => lambda * b.powf(q),
            PenaltyKind::Scad { r } => {
                if b <= lambda {
                    lambda * b
                } else if b <= (r + 1.0) * lambda {
                    lambda * b - (b - lambda).powi(2) / (2.0 * r)
                } else {
                    lambda * lambda * (1.0 + r / 2.0)
                }
            }
            PenaltyKind::Mcp { r } => {
                let outer = r * lambda * lambda / 2.0;
                if b <= r * lambda {
                    outer - (r * lambda - b).powi(2) / (2.0 * r)
                } else {
                    outer
                }
            }
        }
    }

    /// `Σ_j p_λ(β_j)`.
    pub fn total(&self, beta: &[f64]) -> f64 {
        beta.iter().map(|&b| self.value(b)).sum()
    }

    /// `dp_λ/dβ`, defined away from the origin.
    pub fn derivative(&self, beta: f64) -> Result<f64> {
        if beta == 0.0 {
            return Err(Error::DerivativeAtOrigin);
        }
        Ok(beta.signum() * self.derivative_abs(beta.abs()))
    }

    /// `p'_λ(|β|)` for `|β| > 0`.
    pub(crate) fn derivative_abs(&self, b: f64) -> f64 {
        let lambda = self.lambda;
        if lambda == 0.0 {
            return 0.0;
        }
        match self.kind {
            PenaltyKind::Bridge { q } => lambda * q * b.powf(q - 1.0),
            PenaltyKind::Scad { r } => {
                if b <= lambda {
                    lambda
                } else if b <= (r + 1.0) * lambda {
                    lambda - (b - lambda) / r
                } else {
                    0.0
                }
            }
            PenaltyKind::Mcp { r } => {
                if b <= r * lambda {
                    lambda - b / r
                } else {
                    0.0
                }
            }
        }
    }
}

impl PenaltySpec {
    /// `p''_λ(|β|)` for `|β| > 0`, taking the left branch at kinks.
    pub(crate) fn second_derivative_abs(&self, b: f64) -> f64 {
        let lambda = self.lambda;
        if lambda == 0.0 {
            return 0.0;
        }
        match self.kind {
            PenaltyKind::Bridge { q } => lambda * q * (q - 1.0) * b.powf(q - 2.0),
            PenaltyKind::Scad { r } => {
                if b > lambda && b <= (r + 1.0) * lambda {
                    -1.0 / r
                } else {
                    0.0
                }
            }
            PenaltyKind::Mcp { r } => {
                if b <= r * lambda {
                    -1.0 / r
                } else {
                    0.0
                }
            }
        }
    }
}
