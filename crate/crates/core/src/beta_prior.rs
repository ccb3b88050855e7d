//! Beta prior on the latent truth: log-gamma, log-beta, the log density,
//! and the regularized incomplete beta function with its inverse (used by
//! the simulator for inverse-CDF sampling).

use std::f64::consts::PI;

use crate::error::{NgseError, Result};
use crate::model_types::PriorParams;

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        let series = LANCZOS_COEFFS[1..]
            .iter()
            .enumerate()
            .fold(LANCZOS_COEFFS[0], |acc, (i, c)| acc + c / (x + (i + 1) as f64));
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
    }
}

/// `ln B(α, β)`.
pub fn log_beta_function(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(NgseError::Domain(format!(
            "beta function arguments must be positive, got ({alpha}, {beta})"
        )));
    }
    Ok(ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta))
}

/// Log density of the beta prior. Boundary points where the density is
/// zero map to `-inf`; boundary singularities (α < 1 or β < 1) map to `+inf`.
pub fn beta_log_pdf(a: f64, prior: PriorParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&a) {
        return Err(NgseError::Domain(format!("truth {a} outside [0, 1]")));
    }
    let ln_b = log_beta_function(prior.alpha, prior.beta)?;
    Ok(xlogy(prior.alpha - 1.0, a) + xlogy(prior.beta - 1.0, 1.0 - a) - ln_b)
}

/// Log density with `ln B(α, β)` supplied by the caller; the inner
/// quadrature loop evaluates this once per node.
pub(crate) fn beta_log_pdf_unchecked(a: f64, prior: PriorParams, ln_b: f64) -> f64 {
    xlogy(prior.alpha - 1.0, a) + xlogy(prior.beta - 1.0, 1.0 - a) - ln_b
}

// x * ln(y) with 0 * ln(0) = 0
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Regularized incomplete beta function `I_x(α, β)`.
pub fn regularized_incomplete_beta(x: f64, prior: PriorParams) -> f64 {
    let (a, b) = (prior.alpha, prior.beta);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    // the continued fraction converges fast for x < (a+1)/(a+b+2)
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * incomplete_beta_cf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * incomplete_beta_cf(1.0 - x, b, a) / b
    }
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
fn incomplete_beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Inverse of the beta CDF by bisection on `I_x(α, β) = u`, bracket width
/// below `tol`.
pub fn beta_quantile(u: f64, prior: PriorParams, tol: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if regularized_incomplete_beta(mid, prior) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
