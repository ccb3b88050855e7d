use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{NgseError, Result};
use crate::likelihood::{NllGradient, ParameterBundle};
use crate::model_types::{CoefficientMatrix, ModelConfig, PriorParams};
use crate::noise_model::NoiseCovariance;

/// Unconstrained parameter vector.
///
/// Layout: `Θ` row-major, then the lower triangle of the Cholesky factor
/// `L` row by row (`L₀₀, L₁₀, L₁₁, L₂₀, …`) with diagonal entries stored as
/// logs, then `ln α`, `ln β`. Every finite vector unpacks to a valid bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedParams(pub Vec<f64>);

impl PackedParams {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn pack(params: &ParameterBundle) -> PackedParams {
    let mut out = Vec::new();
    for row in params.theta.matrix().row_iter() {
        out.extend(row.iter());
    }
    let l = params.cov.chol_factor();
    for i in 0..l.nrows() {
        for j in 0..=i {
            out.push(if i == j { l[(i, i)].ln() } else { l[(i, j)] });
        }
    }
    out.push(params.prior.alpha.ln());
    out.push(params.prior.beta.ln());
    PackedParams(out)
}

pub fn unpack(x: &PackedParams, config: &ModelConfig) -> Result<ParameterBundle> {
    let k = config.num_methods;
    let width = config.num_coeffs();
    if x.len() != config.num_free_params() {
        return Err(NgseError::DimensionMismatch {
            expected: config.num_free_params(),
            got: x.len(),
            context: "packed parameter length",
        });
    }
    let v = x.as_slice();
    if v.iter().any(|e| !e.is_finite()) {
        return Err(NgseError::Domain("packed parameters must be finite".into()));
    }
    let theta = CoefficientMatrix::new(DMatrix::from_row_slice(k, width, &v[..k * width]))?;
    let mut pos = k * width;
    let mut l = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            l[(i, j)] = if i == j { v[pos].exp() } else { v[pos] };
            pos += 1;
        }
    }
    let cov = NoiseCovariance::from_factor(l)?;
    let prior = PriorParams::new(v[pos].exp(), v[pos + 1].exp())?;
    ParameterBundle::new(theta, cov, prior)
}

/// Maps a natural-coordinate gradient onto the packed layout of [`pack`].
pub fn pack_gradient(grad: &NllGradient, params: &ParameterBundle) -> Vec<f64> {
    let mut out = Vec::new();
    for row in grad.theta.row_iter() {
        out.extend(row.iter());
    }
    let l = params.cov.chol_factor();
    for i in 0..l.nrows() {
        for j in 0..=i {
            // chain rule through the log of the diagonal
            out.push(if i == j { grad.chol[(i, i)] * l[(i, i)] } else { grad.chol[(i, j)] });
        }
    }
    out.push(grad.alpha * params.prior.alpha);
    out.push(grad.beta * params.prior.beta);
    out
}

/// Human-readable names for each packed coordinate.
pub fn packed_labels(config: &ModelConfig) -> Vec<String> {
    let k = config.num_methods;
    let m = config.poly_order;
    let mut out = Vec::with_capacity(config.num_free_params());
    for row in 0..k {
        for col in 0..=m {
            out.push(format!("theta[{row}][a^{}]", m - col));
        }
    }
    for i in 0..k {
        for j in 0..=i {
            if i == j {
                out.push(format!("ln L[{i}][{i}]"));
            } else {
                out.push(format!("L[{i}][{j}]"));
            }
        }
    }
    out.push("ln alpha".into());
    out.push("ln beta".into());
    out
}
