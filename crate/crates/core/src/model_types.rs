//! Shared domain types and the polynomial design vector.
//!
//! A method's expected measurement is a polynomial of order `M` in the
//! latent truth `a ∈ [0, 1]`. Coefficients are stored highest order first,
//! so row `k` of a [`CoefficientMatrix`] reads `(u_M, …, u_1, u_0)` and the
//! matching design vector is `(a^M, …, a, 1)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NgseError, Result};

pub const DEFAULT_QUADRATURE_NODES: usize = 128;
pub const MIN_QUADRATURE_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_methods: usize,
    pub poly_order: usize,
    pub quadrature_nodes: usize,
}

impl ModelConfig {
    pub fn new(num_methods: usize, poly_order: usize) -> Result<Self> {
        Self::with_nodes(num_methods, poly_order, DEFAULT_QUADRATURE_NODES)
    }

    pub fn with_nodes(num_methods: usize, poly_order: usize, quadrature_nodes: usize) -> Result<Self> {
        if num_methods < 2 {
            return Err(NgseError::Config(format!(
                "at least 2 methods are required, got {num_methods}"
            )));
        }
        if poly_order < 1 {
            return Err(NgseError::Config("polynomial order must be at least 1".into()));
        }
        if quadrature_nodes < MIN_QUADRATURE_NODES {
            return Err(NgseError::Config(format!(
                "quadrature_nodes must be at least {MIN_QUADRATURE_NODES}, got {quadrature_nodes}"
            )));
        }
        Ok(Self {
            num_methods,
            poly_order,
            quadrature_nodes,
        })
    }

    /// Columns of the coefficient matrix, `M + 1`.
    pub fn num_coeffs(&self) -> usize {
        self.poly_order + 1
    }

    /// Length of the unconstrained parameter vector.
    pub fn num_free_params(&self) -> usize {
        let k = self.num_methods;
        k * self.num_coeffs() + k * (k + 1) / 2 + 2
    }
}

/// Measured values, one row per patient and one column per method.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    values: DMatrix<f64>,
    method_names: Vec<String>,
    patient_ids: Vec<String>,
}

impl MeasurementSet {
    pub fn new(values: DMatrix<f64>, method_names: Vec<String>, patient_ids: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(NgseError::EmptyData);
        }
        if values.nrows() != patient_ids.len() {
            return Err(NgseError::DimensionMismatch {
                expected: values.nrows(),
                got: patient_ids.len(),
                context: "patient ids",
            });
        }
        if values.ncols() != method_names.len() {
            return Err(NgseError::DimensionMismatch {
                expected: values.ncols(),
                got: method_names.len(),
                context: "method names",
            });
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            // column-major storage
            let row = idx % values.nrows();
            let column = idx / values.nrows();
            return Err(NgseError::Parse {
                row: row + 1,
                column: column + 1,
                message: "non-finite measurement".into(),
            });
        }
        Ok(Self {
            values,
            method_names,
            patient_ids,
        })
    }

    /// Builds a set with generated labels (`m1…mK`, `p1…pP`).
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let methods = (1..=values.ncols()).map(|k| format!("m{k}")).collect();
        let patients = (1..=values.nrows()).map(|p| format!("p{p}")).collect();
        Self::new(values, methods, patients)
    }

    pub fn num_patients(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_methods(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn method_names(&self) -> &[String] {
        &self.method_names
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn row(&self, p: usize) -> DVector<f64> {
        self.values.row(p).transpose()
    }

    /// Reorders methods; `order[j]` is the source column of new column `j`.
    pub fn permute_methods(&self, order: &[usize]) -> Result<Self> {
        let k = self.num_methods();
        check_permutation(order, k)?;
        let values = DMatrix::from_fn(self.num_patients(), k, |p, j| self.values[(p, order[j])]);
        let names = order.iter().map(|&j| self.method_names[j].clone()).collect();
        Self::new(values, names, self.patient_ids.clone())
    }

    /// Reorders patients; `order[i]` is the source row of new row `i`.
    pub fn permute_patients(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.num_patients())?;
        let values = DMatrix::from_fn(self.num_patients(), self.num_methods(), |i, k| {
            self.values[(order[i], k)]
        });
        let ids = order.iter().map(|&i| self.patient_ids[i].clone()).collect();
        Self::new(values, self.method_names.clone(), ids)
    }

    /// Concatenates the rows of `other` below `self`.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        if other.num_methods() != self.num_methods() {
            return Err(NgseError::DimensionMismatch {
                expected: self.num_methods(),
                got: other.num_methods(),
                context: "stacked measurement sets",
            });
        }
        let p1 = self.num_patients();
        let values = DMatrix::from_fn(p1 + other.num_patients(), self.num_methods(), |i, k| {
            if i < p1 {
                self.values[(i, k)]
            } else {
                other.values[(i - p1, k)]
            }
        });
        let mut ids = self.patient_ids.clone();
        ids.extend(other.patient_ids.iter().cloned());
        Self::new(values, self.method_names.clone(), ids)
    }
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(NgseError::DimensionMismatch {
            expected: n,
            got: order.len(),
            context: "permutation length",
        });
    }
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(NgseError::Domain(format!("{order:?} is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

/// Polynomial calibration coefficients, `K × (M + 1)`, highest order first.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    coeffs: DMatrix<f64>,
}

impl CoefficientMatrix {
    pub fn new(coeffs: DMatrix<f64>) -> Result<Self> {
        if coeffs.ncols() < 2 || coeffs.nrows() == 0 {
            return Err(NgseError::Domain(format!(
                "coefficient matrix must be K x (M+1) with M >= 1, got {}x{}",
                coeffs.nrows(),
                coeffs.ncols()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(NgseError::Domain("coefficients must be finite".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(NgseError::Domain("coefficient rows differ in length".into()));
        }
        Self::new(DMatrix::from_fn(k, width, |i, j| rows[i][j]))
    }

    /// Linear (`M = 1`) coefficients from per-method slopes and intercepts.
    pub fn linear(slopes: &[f64], intercepts: &[f64]) -> Result<Self> {
        if slopes.len() != intercepts.len() {
            return Err(NgseError::DimensionMismatch {
                expected: slopes.len(),
                got: intercepts.len(),
                context: "intercepts",
            });
        }
        let rows: Vec<Vec<f64>> = slopes.iter().zip(intercepts).map(|(&s, &c)| vec![s, c]).collect();
        Self::from_rows(&rows)
    }

    pub fn num_methods(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn poly_order(&self) -> usize {
        self.coeffs.ncols() - 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn get(&self, method: usize, power: usize) -> f64 {
        self.coeffs[(method, self.poly_order() - power)]
    }

    /// Linear coefficient `u_{k,1}` of every method.
    pub fn slopes(&self) -> Vec<f64> {
        (0..self.num_methods()).map(|k| self.get(k, 1)).collect()
    }

    pub fn intercepts(&self) -> Vec<f64> {
        (0..self.num_methods()).map(|k| self.get(k, 0)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.coeffs
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

impl std::ops::Add for &CoefficientMatrix {
    type Output = CoefficientMatrix;

    fn add(self, rhs: Self) -> CoefficientMatrix {
        CoefficientMatrix {
            coeffs: &self.coeffs + &rhs.coeffs,
        }
    }
}

/// Beta prior parameters of the latent truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    pub alpha: f64,
    pub beta: f64,
}

impl PriorParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(NgseError::Domain(format!(
                "beta prior parameters must be positive and finite, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn swapped(self) -> Self {
        Self {
            alpha: self.beta,
            beta: self.alpha,
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// `(a^M, a^{M-1}, …, a, 1)`.
pub fn design_vector(a: f64, poly_order: usize) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&a) {
        return Err(NgseError::Domain(format!("truth {a} outside [0, 1]")));
    }
    if poly_order < 1 {
        return Err(NgseError::Domain("polynomial order must be at least 1".into()));
    }
    let mut out = DVector::zeros(poly_order + 1);
    let mut power = 1.0;
    for i in (0..=poly_order).rev() {
        out[i] = power;
        power *= a;
    }
    Ok(out)
}

/// Expected measurement of every method at truth `a`.
pub fn predict_means(theta: &CoefficientMatrix, a: f64) -> Result<DVector<f64>> {
    let design = design_vector(a, theta.poly_order())?;
    Ok(theta.matrix() * design)
}
