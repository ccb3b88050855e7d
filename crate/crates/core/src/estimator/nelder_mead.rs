//! Nelder-Mead simplex minimizer with dimension-adaptive coefficients
//! (Gao & Han, 2012) and restart-on-convergence.

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Spread of objective values across the simplex.
    pub f_tolerance: f64,
    /// Largest coordinate distance from the best vertex.
    pub x_tolerance: f64,
    pub initial_step: f64,
    /// Restarts from the converged point before accepting it.
    pub max_restarts: usize,
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimizes `f` starting from `x0`. Non-finite objective values are
/// treated as `+inf`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexOutcome {
    let mut counted = Counted { f, evaluations: 0 };
    let mut x = x0.to_vec();
    let mut fx = counted.call(&x);
    let mut iterations = 0;
    let mut restarts = 0;
    loop {
        let budget = opts.max_iterations.saturating_sub(iterations);
        let run = run_simplex(&mut counted, &x, fx, opts, budget);
        iterations += run.iterations;
        let improvement = fx - run.f;
        let first = restarts == 0;
        x = run.x;
        fx = run.f;
        if !run.converged {
            return SimplexOutcome {
                x,
                f: fx,
                iterations,
                evaluations: counted.evaluations,
                converged: false,
            };
        }
        // a restart that cannot improve confirms the optimum
        if (!first && improvement < opts.f_tolerance) || restarts >= opts.max_restarts {
            return SimplexOutcome {
                x,
                f: fx,
                iterations,
                evaluations: counted.evaluations,
                converged: true,
            };
        }
        restarts += 1;
    }
}

struct Run {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

fn run_simplex<F: FnMut(&[f64]) -> f64>(
    f: &mut Counted<F>,
    x0: &[f64],
    f0: f64,
    opts: &SimplexOptions,
    budget: usize,
) -> Run {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        let fv = f.call(&v);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    let mut centroid = vec![0.0; n];
    loop {
        // stable sort keeps vertex order deterministic on ties
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let spread = simplex[n].1 - best.1;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread.is_finite() && spread < opts.f_tolerance && diameter < opts.x_tolerance {
            return Run {
                x: best.0.clone(),
                f: best.1,
                iterations,
                converged: true,
            };
        }
        if iterations >= budget {
            return Run {
                x: best.0.clone(),
                f: best.1,
                iterations,
                converged: false,
            };
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let worst = simplex[n].0.clone();
        let f_worst = simplex[n].1;
        let f_second = simplex[n - 1].1;
        let f_best = simplex[0].1;

        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = f.call(&xr);
        if fr < f_best {
            let xe = along(alpha * gamma);
            let fe = f.call(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < f_worst {
            let xc = along(alpha * rho);
            let fc = f.call(&xc);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = f.call(&xc);
            (xc, fc)
        };
        if fc < fr.min(f_worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for (v, fv) in simplex[1..].iter_mut() {
            for (x, b) in v.iter_mut().zip(&best) {
                *x = b + sigma * (*x - b);
            }
            *fv = f.call(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SimplexOptions {
        SimplexOptions {
            max_iterations: 20_000,
            f_tolerance: 1e-12,
            x_tolerance: 1e-7,
            initial_step: 0.5,
            max_restarts: 3,
        }
    }

    #[test]
    fn minimizes_shifted_quadratic() {
        let target = [1.0, -2.0, 0.5, 3.0];
        let out = minimize(
            |x: &[f64]| x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b) * 3.0).sum(),
            &[0.0; 4],
            &opts(),
        );
        assert!(out.converged);
        for (a, b) in out.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn minimizes_rosenbrock() {
        let out = minimize(
            |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
            &opts(),
        );
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5, "{:?}", out.x);
    }

    #[test]
    fn reports_non_convergence_on_budget() {
        let mut o = opts();
        o.max_iterations = 5;
        let out = minimize(|x: &[f64]| x.iter().map(|v| v * v).sum(), &[10.0; 6], &o);
        assert!(!out.converged);
        assert!(out.iterations <= 5);
    }

    #[test]
    fn infinite_regions_are_avoided() {
        let out = minimize(
            |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.3).powi(2) + x[1] * x[1] },
            &[1.0, 1.0],
            &opts(),
        );
        assert!(out.converged);
        assert!((out.x[0] - 0.3).abs() < 1e-6);
    }
}
