use nalgebra::DMatrix;

use crate::error::{NgseError, Result};

/// Finite-difference step for coordinate value `x`.
pub fn fd_step(x: f64) -> f64 {
    (1e-4 * x.abs()).max(1e-4)
}

/// Central finite-difference Hessian of `f` at `x`.
///
/// Every off-diagonal entry is evaluated on its own, so the asymmetry of
/// the result measures the rounding noise of the scheme.
pub fn central_hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let steps: Vec<f64> = x.iter().map(|&v| fd_step(v)).collect();
    let f0 = f(x);
    let mut h = DMatrix::zeros(n, n);
    let mut probe = x.to_vec();
    for i in 0..n {
        probe[i] = x[i] + steps[i];
        let fp = f(&probe);
        probe[i] = x[i] - steps[i];
        let fm = f(&probe);
        probe[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut eval = |si: f64, sj: f64| {
                probe[i] += si * steps[i];
                probe[j] += sj * steps[j];
                let v = f(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let fpp = eval(1.0, 1.0);
            let fpm = eval(1.0, -1.0);
            let fmp = eval(-1.0, 1.0);
            let fmm = eval(-1.0, -1.0);
            h[(i, j)] = (fpp - fpm - fmp + fmm) / (4.0 * steps[i] * steps[j]);
        }
    }
    h
}

/// `max |H_ij - H_ji| / max |H|`.
pub fn relative_asymmetry(h: &DMatrix<f64>) -> f64 {
    let scale = h.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    (h - h.transpose()).abs().max() / scale
}

/// Square roots of the diagonal of `H⁻¹` for a positive-definite `H`.
pub fn inverse_diagonal_sqrt(h: &DMatrix<f64>) -> Result<Vec<f64>> {
    let sym = (h + h.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(NgseError::SingularInformation);
    }
    let chol = nalgebra::Cholesky::new(sym).ok_or(NgseError::SingularInformation)?;
    let inv = chol.inverse();
    let out: Vec<f64> = inv.diagonal().iter().map(|v| v.sqrt()).collect();
    if out.iter().all(|v| v.is_finite() && *v > 0.0) {
        Ok(out)
    } else {
        Err(NgseError::SingularInformation)
    }
}
