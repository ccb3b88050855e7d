//! Correlated Gaussian measurement noise: a covariance carried together
//! with its Cholesky factor, the multivariate normal log density, and
//! correlated draws.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{NgseError, Result};

/// Pivots at or below this are treated as a degenerate covariance.
pub const PIVOT_TOLERANCE: f64 = 1e-12;
const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCovariance {
    matrix: DMatrix<f64>,
    chol_factor: DMatrix<f64>,
}

impl NoiseCovariance {
    /// Builds the covariance `L·Lᵀ` from a lower-triangular factor with
    /// strictly positive diagonal. Entries above the diagonal are ignored.
    pub fn from_factor(factor: DMatrix<f64>) -> Result<Self> {
        let k = factor.nrows();
        if factor.ncols() != k {
            return Err(NgseError::DimensionMismatch {
                expected: k,
                got: factor.ncols(),
                context: "cholesky factor columns",
            });
        }
        let lower = factor.lower_triangle();
        if let Some(i) = (0..k).find(|&i| !(lower[(i, i)] > PIVOT_TOLERANCE.sqrt())) {
            return Err(NgseError::NotPositiveDefinite {
                index: i,
                pivot: lower[(i, i)] * lower[(i, i)],
            });
        }
        if lower.iter().any(|v| !v.is_finite()) {
            return Err(NgseError::Domain("cholesky factor must be finite".into()));
        }
        let mut matrix = &lower * lower.transpose();
        // exact symmetry
        for i in 0..k {
            for j in 0..i {
                let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        Ok(Self {
            matrix,
            chol_factor: lower,
        })
    }

    /// Diagonal covariance from standard deviations and one common
    /// pairwise correlation.
    pub fn from_sds_and_correlation(sds: &[f64], rho: f64) -> Result<Self> {
        let k = sds.len();
        let m = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                sds[i] * sds[i]
            } else {
                rho * sds[i] * sds[j]
            }
        });
        cholesky_factorize(&m)
    }

    pub fn identity(k: usize) -> Self {
        Self {
            matrix: DMatrix::identity(k, k),
            chol_factor: DMatrix::identity(k, k),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol_factor
    }

    /// `ln det C = 2 Σ ln L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol_factor.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn std_devs(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|v| v.sqrt()).collect()
    }

    /// `L⁻¹ v` by forward substitution.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        forward_solve(&self.chol_factor, v)
    }

    /// Permutes methods: entry `(i, j)` of the result is `C[order[i], order[j]]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        let k = self.dim();
        let m = DMatrix::from_fn(k, k, |i, j| self.matrix[(order[i], order[j])]);
        cholesky_factorize(&m)
    }
}

pub(crate) fn forward_solve(lower: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let k = lower.nrows();
    let mut out = DVector::zeros(k);
    for i in 0..k {
        let mut s = v[i];
        for j in 0..i {
            s -= lower[(i, j)] * out[j];
        }
        out[i] = s / lower[(i, i)];
    }
    out
}

/// Lower Cholesky factorization of a symmetric matrix.
pub fn cholesky_factorize(matrix: &DMatrix<f64>) -> Result<NoiseCovariance> {
    let k = matrix.nrows();
    if matrix.ncols() != k {
        return Err(NgseError::DimensionMismatch {
            expected: k,
            got: matrix.ncols(),
            context: "covariance must be square",
        });
    }
    for i in 0..k {
        for j in 0..i {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOLERANCE {
                return Err(NgseError::Domain(format!(
                    "covariance is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut lower = DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        let mut pivot = matrix[(j, j)];
        for m in 0..j {
            pivot -= lower[(j, m)] * lower[(j, m)];
        }
        if !(pivot > PIVOT_TOLERANCE) {
            return Err(NgseError::NotPositiveDefinite { index: j, pivot });
        }
        let d = pivot.sqrt();
        lower[(j, j)] = d;
        for i in (j + 1)..k {
            let mut s = matrix[(i, j)];
            for m in 0..j {
                s -= lower[(i, m)] * lower[(j, m)];
            }
            lower[(i, j)] = s / d;
        }
    }
    let mut sym = matrix.clone();
    for i in 0..k {
        for j in 0..i {
            sym[(j, i)] = sym[(i, j)];
        }
    }
    Ok(NoiseCovariance {
        matrix: sym,
        chol_factor: lower,
    })
}

/// `ln N(x; mean, C)` via a triangular solve against the stored factor.
pub fn mvn_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &NoiseCovariance) -> Result<f64> {
    let k = cov.dim();
    if x.len() != k || mean.len() != k {
        return Err(NgseError::DimensionMismatch {
            expected: k,
            got: if x.len() != k { x.len() } else { mean.len() },
            context: "mvn_log_density vector length",
        });
    }
    let z = cov.whiten(&(x - mean));
    Ok(-0.5 * k as f64 * (2.0 * PI).ln() - 0.5 * cov.log_det() - 0.5 * z.norm_squared())
}

/// Maps standard normal draws `z` to `L·z`, a draw from `N(0, C)`.
pub fn correlated_sample(cov: &NoiseCovariance, z: &DVector<f64>) -> Result<DVector<f64>> {
    if z.len() != cov.dim() {
        return Err(NgseError::DimensionMismatch {
            expected: cov.dim(),
            got: z.len(),
            context: "standard normal draw length",
        });
    }
    Ok(cov.chol_factor() * z)
}
