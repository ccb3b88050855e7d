//! BFGS with a backtracking Armijo line search.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct QuasiNewtonOptions {
    pub max_iterations: usize,
    pub f_tolerance: f64,
    pub x_tolerance: f64,
    /// Gradient infinity norm accepted when the line search stalls.
    pub g_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct QuasiNewtonOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-5 * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let fp = f(&probe);
            probe[i] = x[i] - h;
            let fm = f(&probe);
            probe[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Minimizes `f` using central finite-difference gradients.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &QuasiNewtonOptions) -> QuasiNewtonOutcome {
    minimize_with_gradient(
        |x: &[f64]| {
            let fx = f(x);
            (fx, fd_gradient(&mut f, x))
        },
        x0,
        opts,
    )
}

/// Minimizes with a caller-supplied `(value, gradient)` oracle. A NaN or
/// infinite value marks a point as infeasible.
pub fn minimize_with_gradient<F>(mut fg: F, x0: &[f64], opts: &QuasiNewtonOptions) -> QuasiNewtonOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut eval = |v: &DVector<f64>| {
        let (r, g) = fg(v.as_slice());
        if r.is_finite() && g.iter().all(|e| e.is_finite()) {
            (r, DVector::from_vec(g))
        } else {
            (f64::INFINITY, DVector::zeros(n))
        }
    };
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, mut g) = eval(&x);
    if !fx.is_finite() {
        return QuasiNewtonOutcome {
            x: x0.to_vec(),
            f: fx,
            iterations: 0,
            converged: false,
        };
    }
    let mut inv_h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let mut dir = -(&inv_h * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            inv_h = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
            fresh = true;
        }
        // backtracking line search
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + step * &dir;
            let (ft, gt) = eval(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if fresh {
                let converged = g.amax() < opts.g_tolerance;
                return QuasiNewtonOutcome {
                    x: x.iter().copied().collect(),
                    f: fx,
                    iterations,
                    converged,
                };
            }
            inv_h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let s = &x_new - &x;
        let improvement = fx - f_new;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                // scale the initial inverse Hessian to the observed curvature
                inv_h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &inv_h * &y;
            let yhy = y.dot(&hy);
            inv_h += ((1.0 + rho * yhy) * rho) * (&s * s.transpose())
                - rho * (&hy * s.transpose() + &s * hy.transpose());
            fresh = false;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        if improvement < opts.f_tolerance && s.amax() < opts.x_tolerance {
            return QuasiNewtonOutcome {
                x: x.iter().copied().collect(),
                f: fx,
                iterations,
                converged: true,
            };
        }
    }
    QuasiNewtonOutcome {
        x: x.iter().copied().collect(),
        f: fx,
        iterations,
        converged: false,
    }
}
