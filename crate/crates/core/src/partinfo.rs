//! Block partition of an information matrix by inactive/active coordinates,
//! its Schur complement, and Gaussian sampling through a triangular factor.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Diagonal jitter tried, in order, when a factorization fails.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Inactive (zero) and active (nonzero) coordinate indices, each ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSetPartition {
    inactive: Vec<usize>,
    active: Vec<usize>,
}

impl ActiveSetPartition {
    pub fn new(mut inactive: Vec<usize>, mut active: Vec<usize>, p: usize) -> Result<Self> {
        inactive.sort_unstable();
        active.sort_unstable();
        let mut seen = vec![false; p];
        for &j in inactive.iter().chain(active.iter()) {
            if j >= p || seen[j] {
                return Err(Error::InvalidConfig(format!(
                    "index {j} is out of range or repeated in a partition of {p} coordinates"
                )));
            }
            seen[j] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig(
                "partition does not cover every coordinate".into(),
            ));
        }
        Ok(Self { inactive, active })
    }

    /// Zero coefficients are inactive, everything else is active.
    pub fn from_coefficients(beta: &[f64]) -> Self {
        let (inactive, active) = (0..beta.len()).partition(|&j| beta[j] == 0.0);
        Self { inactive, active }
    }

    pub fn inactive(&self) -> &[usize] {
        &self.inactive
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn p(&self) -> usize {
        self.inactive.len() + self.active.len()
    }

    pub fn gather_inactive(&self, v: &DVector<f64>) -> DVector<f64> {
        v.select_rows(&self.inactive)
    }

    pub fn gather_active(&self, v: &DVector<f64>) -> DVector<f64> {
        v.select_rows(&self.active)
    }

    /// Writes block vectors back into a p-vector.
    pub fn scatter(&self, inactive: &DVector<f64>, active: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.p());
        for (k, &j) in self.inactive.iter().enumerate() {
            out[j] = inactive[k];
        }
        for (k, &j) in self.active.iter().enumerate() {
            out[j] = active[k];
        }
        out
    }
}

/// Lower-triangular factor `L` with `L Lᵀ = m + jitter·I`, escalating jitter
/// along [`JITTER_LADDER`].
pub fn cholesky_jittered(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = m.nrows();
    if dim == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix to factorize"));
    }
    for &jitter in &JITTER_LADDER {
        let shifted = m + DMatrix::identity(dim, dim) * jitter;
        if let Some(chol) = Cholesky::new(shifted) {
            return Ok(chol.l());
        }
    }
    let sym = (m + m.transpose()) * 0.5;
    let min_eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();
    Err(Error::NotPositiveDefinite {
        min_eigenvalue,
        jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

/// Solves `L Lᵀ x = rhs` for every column of `rhs`.
pub(crate) fn cholesky_solve(l: &DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    if l.nrows() == 0 {
        return DMatrix::zeros(0, rhs.ncols());
    }
    let y = l
        .solve_lower_triangular(rhs)
        .expect("cholesky factor has a nonzero diagonal");
    l.tr_solve_lower_triangular(&y)
        .expect("cholesky factor has a nonzero diagonal")
}

#[derive(Debug, Clone)]
pub struct PartitionedInfo {
    pub partition: ActiveSetPartition,
    pub j11: DMatrix<f64>,
    pub j12: DMatrix<f64>,
    pub j21: DMatrix<f64>,
    pub j22: DMatrix<f64>,
    /// `J11 − J12 J22⁻¹ J21`
    pub j1given2: DMatrix<f64>,
    /// Lower factor of `J22`.
    pub j22_factor: DMatrix<f64>,
    /// `J12 J22⁻¹`
    pub gain: DMatrix<f64>,
}

impl PartitionedInfo {
    /// `J22⁻¹ v`.
    pub fn j22_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        cholesky_solve(&self.j22_factor, &m).column(0).into_owned()
    }
}

/// Splits `j` into (inactive, active) blocks and forms the Schur complement.
pub fn partition(j: &DMatrix<f64>, parts: &ActiveSetPartition) -> Result<PartitionedInfo> {
    let p = parts.p();
    if j.nrows() != p || j.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "information matrix",
            expected: p,
            found: j.nrows(),
        });
    }
    let (i1, i2) = (parts.inactive(), parts.active());
    let j11 = j.select_rows(i1).select_columns(i1);
    let j12 = j.select_rows(i1).select_columns(i2);
    let j21 = j.select_rows(i2).select_columns(i1);
    let j22 = j.select_rows(i2).select_columns(i2);

    let j22_factor = cholesky_jittered(&j22)?;
    // J22⁻¹ J21, |active| × |inactive|
    let solved = cholesky_solve(&j22_factor, &j21);
    let schur = &j11 - &j12 * &solved;
    let j1given2 = (&schur + schur.transpose()) * 0.5;
    let gain = solved.transpose();

    Ok(PartitionedInfo {
        partition: parts.clone(),
        j11,
        j12,
        j21,
        j22,
        j1given2,
        j22_factor,
        gain,
    })
}

/// `count` i.i.d. rows drawn from `N(0, j)`.
pub fn sample_gaussian(j: &DMatrix<f64>, count: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    if j.nrows() != j.ncols() {
        return Err(Error::DimensionMismatch {
            context: "covariance matrix",
            expected: j.nrows(),
            found: j.ncols(),
        });
    }
    let l = cholesky_jittered(j)?;
    Ok(standard_normal_matrix(count, j.nrows(), rng) * l.transpose())
}

/// Row-major fill so the draw order does not depend on storage layout.
pub(crate) fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for k in 0..cols {
            z[(i, k)] = StandardNormal.sample(rng);
        }
    }
    z
}
