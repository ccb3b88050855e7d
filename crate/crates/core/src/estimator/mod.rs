//! Maximum-likelihood fitting of `(Θ, C, α, β)`.
//!
//! The search runs in the unconstrained [`PackedParams`] coordinates, where
//! the log-Cholesky covariance and log prior parameters keep every iterate
//! valid. Each start is refined independently, by default with BFGS on the
//! exact quadrature gradient; the lowest converged optimum wins, ties going
//! to the lower start index.

pub mod hessian;
pub mod nelder_mead;
pub mod quasi_newton;
mod packing;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use packing::{pack, pack_gradient, packed_labels, unpack, PackedParams};

use crate::error::{NgseError, Result};
use crate::likelihood::{gauss_legendre_rule, NllEvaluator, ParameterBundle};
use crate::model_types::{CoefficientMatrix, MeasurementSet, ModelConfig, PriorParams};
use crate::noise_model::NoiseCovariance;
use nelder_mead::SimplexOptions;
use quasi_newton::QuasiNewtonOptions;

/// Log-normal jitter applied to the deterministic first guess.
pub const START_JITTER_SIGMA: f64 = 0.3;
const SIMPLEX_STEP: f64 = 0.1;
const SIMPLEX_RESTARTS: usize = 2;
/// Gradient norm accepted when the BFGS line search can make no progress.
const GRADIENT_TOLERANCE: f64 = 1e-4;

/// Local optimizer used for each start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    /// BFGS with the analytic gradient.
    #[default]
    QuasiNewton,
    /// Derivative-free adaptive Nelder-Mead with restarts.
    NelderMead,
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Optimizer::QuasiNewton => "quasi-newton",
            Optimizer::NelderMead => "nelder-mead",
        })
    }
}

impl std::str::FromStr for Optimizer {
    type Err = NgseError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quasi-newton" | "bfgs" => Ok(Optimizer::QuasiNewton),
            "nelder-mead" | "simplex" => Ok(Optimizer::NelderMead),
            other => Err(NgseError::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_starts: usize,
    pub max_iterations: usize,
    pub nll_tolerance: f64,
    pub param_tolerance: f64,
    pub seed: u64,
    /// Compute Fisher-information standard errors after fitting.
    pub compute_std_errors: bool,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 10,
            max_iterations: 2000,
            nll_tolerance: 1e-8,
            param_tolerance: 1e-6,
            seed: 0,
            compute_std_errors: true,
            optimizer: Optimizer::QuasiNewton,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 || self.max_iterations == 0 {
            return Err(NgseError::Config("n_starts and max_iterations must be positive".into()));
        }
        if !(self.nll_tolerance > 0.0 && self.param_tolerance > 0.0) {
            return Err(NgseError::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartDiagnostic {
    pub start: usize,
    pub initial_nll: f64,
    pub final_nll: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub params: ParameterBundle,
    pub method_names: Vec<String>,
    pub nll: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_starts: usize,
    /// Packed-coordinate standard errors, when the information is invertible.
    pub std_errors: Option<Vec<f64>>,
    pub start_diagnostics: Vec<StartDiagnostic>,
    /// False for `M > 1`, where the flip symmetry is not resolved.
    pub canonical: bool,
    pub flipped: bool,
}

/// Smallest patient count accepted: `ceil(3 · free parameters / K)`.
pub fn minimum_patients(config: &ModelConfig) -> usize {
    (3 * config.num_free_params()).div_ceil(config.num_methods)
}

fn check_data(data: &MeasurementSet, config: &ModelConfig) -> Result<()> {
    if data.num_methods() != config.num_methods {
        return Err(NgseError::DimensionMismatch {
            expected: config.num_methods,
            got: data.num_methods(),
            context: "data columns vs configured methods",
        });
    }
    let required = minimum_patients(config);
    if data.num_patients() < required {
        return Err(NgseError::InsufficientData {
            patients: data.num_patients(),
            required,
            free_params: config.num_free_params(),
        });
    }
    Ok(())
}

/// Deterministic first guess followed by `n_starts - 1` jittered copies.
///
/// The first guess maps the prior support onto each column's observed
/// range (slope = max - min, intercept = min), uses 10% of each column's
/// sample variance as the noise variance with no correlation, and sets
/// `α = β = 2`. Jitter multiplies every natural parameter by
/// `exp(0.3·z)`, which is additive in the log-stored coordinates.
pub fn initial_guesses(data: &MeasurementSet, config: &ModelConfig, options: &FitOptions) -> Result<Vec<PackedParams>> {
    check_data(data, config)?;
    let k = config.num_methods;
    let m = config.poly_order;
    let values = data.values();
    let p = data.num_patients() as f64;

    let mut rows = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for col in values.column_iter() {
        let min = col.min();
        let max = col.max();
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (p - 1.0);
        let mut row = vec![0.0; m + 1];
        row[m - 1] = max - min;
        row[m] = min;
        rows.push(row);
        variances.push((0.1 * var).max(1e-10));
    }
    let first = ParameterBundle::new(
        CoefficientMatrix::from_rows(&rows)?,
        NoiseCovariance::from_factor(DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            k,
            variances.iter().map(|v| v.sqrt()),
        )))?,
        PriorParams::new(2.0, 2.0)?,
    )?;
    let base = pack(&first);

    let n_theta = k * (m + 1);
    let log_coords = log_coordinates(config);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut out = vec![base.clone()];
    for _ in 1..options.n_starts {
        let mut v = base.0.clone();
        for (i, x) in v.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            if i < n_theta || !log_coords[i] {
                *x *= (START_JITTER_SIGMA * z).exp();
            } else {
                *x += START_JITTER_SIGMA * z;
            }
        }
        out.push(PackedParams(v));
    }
    Ok(out)
}

// true where the packed coordinate is stored as a log
fn log_coordinates(config: &ModelConfig) -> Vec<bool> {
    let k = config.num_methods;
    let mut out = vec![false; k * config.num_coeffs()];
    for i in 0..k {
        for j in 0..=i {
            out.push(i == j);
        }
    }
    out.extend([true, true]);
    out
}

fn objective<'a>(evaluator: &'a NllEvaluator<'a>, config: &'a ModelConfig) -> impl Fn(&[f64]) -> f64 + 'a {
    move |x: &[f64]| {
        unpack(&PackedParams(x.to_vec()), config)
            .and_then(|b| evaluator.evaluate(&b))
            .unwrap_or(f64::INFINITY)
    }
}

fn objective_with_gradient<'a>(
    evaluator: &'a NllEvaluator<'a>,
    config: &'a ModelConfig,
) -> impl Fn(&[f64]) -> (f64, Vec<f64>) + 'a {
    move |x: &[f64]| {
        unpack(&PackedParams(x.to_vec()), config)
            .and_then(|b| {
                let (f, g) = evaluator.evaluate_with_gradient(&b)?;
                Ok((f, pack_gradient(&g, &b)))
            })
            .unwrap_or_else(|_| (f64::INFINITY, vec![0.0; x.len()]))
    }
}

struct LocalOutcome {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

fn local_search(evaluator: &NllEvaluator, config: &ModelConfig, options: &FitOptions, x0: &[f64]) -> LocalOutcome {
    match options.optimizer {
        Optimizer::QuasiNewton => {
            let qn = QuasiNewtonOptions {
                max_iterations: options.max_iterations,
                f_tolerance: options.nll_tolerance,
                x_tolerance: options.param_tolerance,
                g_tolerance: GRADIENT_TOLERANCE,
            };
            let o = quasi_newton::minimize_with_gradient(objective_with_gradient(evaluator, config), x0, &qn);
            LocalOutcome {
                x: o.x,
                f: o.f,
                iterations: o.iterations,
                converged: o.converged,
            }
        }
        Optimizer::NelderMead => {
            let simplex = SimplexOptions {
                max_iterations: options.max_iterations,
                f_tolerance: options.nll_tolerance,
                x_tolerance: options.param_tolerance,
                initial_step: SIMPLEX_STEP,
                max_restarts: SIMPLEX_RESTARTS,
            };
            let o = nelder_mead::minimize(objective(evaluator, config), x0, &simplex);
            LocalOutcome {
                x: o.x,
                f: o.f,
                iterations: o.iterations,
                converged: o.converged,
            }
        }
    }
}

/// Multi-start maximum-likelihood fit.
pub fn fit(data: &MeasurementSet, config: &ModelConfig, options: &FitOptions) -> Result<EstimationResult> {
    options.validate()?;
    let guesses = initial_guesses(data, config, options)?;
    let rule = gauss_legendre_rule(config.quadrature_nodes)?;
    let evaluator = NllEvaluator::new(data, &rule);

    let outcomes: Vec<_> = guesses
        .par_iter()
        .map(|x0| {
            let initial = objective(&evaluator, config)(&x0.0);
            (initial, local_search(&evaluator, config, options, &x0.0))
        })
        .collect();

    let start_diagnostics: Vec<StartDiagnostic> = outcomes
        .iter()
        .enumerate()
        .map(|(start, (initial, o))| StartDiagnostic {
            start,
            initial_nll: *initial,
            final_nll: o.f,
            converged: o.converged,
            iterations: o.iterations,
        })
        .collect();

    let best = outcomes
        .iter()
        .enumerate()
        .filter(|(_, (_, o))| o.converged && o.f.is_finite())
        .min_by(|(i, (_, a)), (j, (_, b))| a.f.total_cmp(&b.f).then(i.cmp(j)))
        .map(|(i, _)| i)
        .ok_or(NgseError::NoConvergedStart {
            n_starts: options.n_starts,
            max_iterations: options.max_iterations,
        })?;
    let outcome = &outcomes[best].1;

    let raw = EstimationResult {
        params: unpack(&PackedParams(outcome.x.clone()), config)?,
        method_names: data.method_names().to_vec(),
        nll: outcome.f,
        converged: true,
        iterations: outcome.iterations,
        n_starts: options.n_starts,
        std_errors: None,
        start_diagnostics,
        canonical: true,
        flipped: false,
    };
    let mut result = canonicalize(raw, config);
    if options.compute_std_errors {
        result.std_errors = standard_errors(data, &result, config).ok();
    }
    Ok(result)
}

/// Resolves the `a → 1 - a` ambiguity of linear models so that method 1
/// has a non-negative slope. Higher orders pass through with
/// `canonical = false`.
pub fn canonicalize(mut result: EstimationResult, config: &ModelConfig) -> EstimationResult {
    if config.poly_order != 1 {
        result.canonical = false;
        return result;
    }
    result.canonical = true;
    if result.params.theta.get(0, 1) < 0.0 {
        if let Ok(flipped) = result.params.flipped() {
            result.params = flipped;
            result.flipped = !result.flipped;
            // packed coordinates changed; errors must be recomputed
            result.std_errors = None;
        }
    }
    result
}

/// Observed information: finite-difference Hessian of the NLL at the
/// packed optimum.
pub fn observed_information(data: &MeasurementSet, params: &ParameterBundle, config: &ModelConfig) -> Result<DMatrix<f64>> {
    let rule = gauss_legendre_rule(config.quadrature_nodes)?;
    let evaluator = NllEvaluator::new(data, &rule);
    let x = pack(params);
    Ok(hessian::central_hessian(objective(&evaluator, config), &x.0))
}

/// Asymptotic standard errors in packed coordinates: square roots of the
/// diagonal of the inverse observed information.
pub fn standard_errors(data: &MeasurementSet, result: &EstimationResult, config: &ModelConfig) -> Result<Vec<f64>> {
    if !result.converged {
        return Err(NgseError::Domain("standard errors need a converged fit".into()));
    }
    let h = observed_information(data, &result.params, config)?;
    hessian::inverse_diagonal_sqrt(&h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::total_negative_log_likelihood;
    use crate::simulator::{simulate, SimulationSpec};

    fn scenario(p: usize, seed: u64) -> (SimulationSpec, MeasurementSet) {
        let truth = ParameterBundle::new(
            CoefficientMatrix::linear(&[0.9, 1.1, 1.0], &[0.0, 0.05, -0.02]).unwrap(),
            NoiseCovariance::from_sds_and_correlation(&[0.05, 0.15, 0.10], 0.3).unwrap(),
            PriorParams::new(2.0, 5.0).unwrap(),
        )
        .unwrap();
        let spec = SimulationSpec::new(p, ModelConfig::new(3, 1).unwrap(), truth, seed).unwrap();
        let data = simulate(&spec).0;
        (spec, data)
    }

    fn quick_options(seed: u64) -> FitOptions {
        FitOptions {
            n_starts: 3,
            seed,
            ..FitOptions::default()
        }
    }

    #[test]
    fn first_guess_follows_column_range() {
        let values = DMatrix::from_row_slice(
            15,
            2,
            &(0..30).map(|i| if i % 2 == 0 { 0.1 + 0.8 * (i as f64 / 28.0) } else { 1.0 }).collect::<Vec<_>>(),
        );
        let data = MeasurementSet::from_matrix(values).unwrap();
        let cfg = ModelConfig::new(2, 1).unwrap();
        let opts = FitOptions {
            n_starts: 1,
            ..FitOptions::default()
        };
        let guesses = initial_guesses(&data, &cfg, &opts).unwrap();
        assert_eq!(guesses.len(), 1);
        let b = unpack(&guesses[0], &cfg).unwrap();
        assert!((b.theta.get(0, 1) - 0.8).abs() < 1e-12);
        assert!((b.theta.get(0, 0) - 0.1).abs() < 1e-12);
        assert_eq!((b.prior.alpha, b.prior.beta), (2.0, 2.0));
        assert!(b.cov.matrix()[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn guesses_are_seeded() {
        let (_, data) = scenario(60, 1);
        let cfg = ModelConfig::new(3, 1).unwrap();
        let opts = FitOptions {
            seed: 42,
            ..FitOptions::default()
        };
        let a = initial_guesses(&data, &cfg, &opts).unwrap();
        let b = initial_guesses(&data, &cfg, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_ne!(a[1], a[2]);
        let other = initial_guesses(&data, &cfg, &FitOptions { seed: 43, ..opts }).unwrap();
        assert_eq!(a[0], other[0]);
        assert_ne!(a[1], other[1]);
    }

    #[test]
    fn insufficient_data_floor() {
        let cfg = ModelConfig::new(3, 1).unwrap();
        assert_eq!(minimum_patients(&cfg), 14);
        let (_, data) = scenario(13, 1);
        assert!(matches!(
            initial_guesses(&data, &cfg, &FitOptions::default()),
            Err(NgseError::InsufficientData { patients: 13, required: 14, .. })
        ));
    }

    #[test]
    fn canonicalize_flips_negative_slopes() {
        let cfg = ModelConfig::new(2, 1).unwrap();
        let params = ParameterBundle::new(
            CoefficientMatrix::linear(&[-0.9, -1.1], &[0.8, 1.0]).unwrap(),
            NoiseCovariance::from_sds_and_correlation(&[0.1, 0.2], 0.2).unwrap(),
            PriorParams::new(2.0, 5.0).unwrap(),
        )
        .unwrap();
        let result = EstimationResult {
            params: params.clone(),
            method_names: vec!["a".into(), "b".into()],
            nll: 0.0,
            converged: true,
            iterations: 0,
            n_starts: 1,
            std_errors: Some(vec![1.0; 9]),
            start_diagnostics: vec![],
            canonical: false,
            flipped: false,
        };
        let c = canonicalize(result.clone(), &cfg);
        assert_eq!(c.params.theta.slopes(), vec![0.9, 1.1]);
        assert!((c.params.theta.intercepts()[0] - (-0.9 + 0.8)).abs() < 1e-15);
        assert_eq!((c.params.prior.alpha, c.params.prior.beta), (5.0, 2.0));
        assert!(c.flipped && c.canonical && c.std_errors.is_none());

        let (_, data) = scenario(40, 3);
        let data = data.permute_methods(&[0, 1, 2]).unwrap();
        let two = MeasurementSet::from_matrix(data.values().columns(0, 2).into_owned()).unwrap();
        let rule = gauss_legendre_rule(128).unwrap();
        let before = total_negative_log_likelihood(&two, &params, &rule).unwrap();
        let after = total_negative_log_likelihood(&two, &c.params, &rule).unwrap();
        assert!((before - after).abs() < 1e-9);

        let again = canonicalize(c.clone(), &cfg);
        assert_eq!(again.params, c.params);

        let quad_cfg = ModelConfig::new(2, 2).unwrap();
        assert!(!canonicalize(result, &quad_cfg).canonical);
    }

    #[test]
    fn fit_recovers_simulated_scenario() {
        let (spec, data) = scenario(300, 11);
        let cfg = spec.config;
        let result = fit(&data, &cfg, &quick_options(5)).unwrap();
        assert!(result.converged);
        assert!(result.params.theta.get(0, 1) >= 0.0);
        let sd = result.params.cov.std_devs();
        assert!(sd[0] < sd[2] && sd[2] < sd[1], "{sd:?}");
        for d in &result.start_diagnostics {
            assert!(result.nll <= d.initial_nll);
        }
        let se = result.std_errors.as_ref().expect("standard errors");
        assert!(se.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn fit_is_deterministic() {
        let (spec, data) = scenario(100, 2);
        let a = fit(&data, &spec.config, &quick_options(9)).unwrap();
        let b = fit(&data, &spec.config, &quick_options(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn information_is_symmetric_and_additive() {
        let (spec, data) = scenario(300, 4);
        let cfg = spec.config;
        let result = fit(&data, &cfg, &quick_options(1)).unwrap();
        let h = observed_information(&data, &result.params, &cfg).unwrap();
        assert!(hessian::relative_asymmetry(&h) < 1e-3);
        let se = result.std_errors.clone().unwrap();
        let doubled = data.stack(&data).unwrap();
        let se2 = standard_errors(&doubled, &result, &cfg).unwrap();
        for (a, b) in se.iter().zip(&se2) {
            let ratio = b / a;
            assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.1 * std::f64::consts::FRAC_1_SQRT_2, "{ratio}");
        }
    }

    #[test]
    fn column_permutation_is_equivariant() {
        let (spec, data) = scenario(300, 6);
        let cfg = spec.config;
        let order = [0, 2, 1];
        let a = fit(&data, &cfg, &quick_options(2)).unwrap();
        let b = fit(&data.permute_methods(&order).unwrap(), &cfg, &quick_options(2)).unwrap();
        assert!((a.nll - b.nll).abs() < 1e-6, "{} vs {}", a.nll, b.nll);
        let expected = a.params.permute_methods(&order).unwrap();
        assert!((expected.theta.matrix() - b.params.theta.matrix()).abs().max() < 1e-3);
        assert!((expected.cov.matrix() - b.params.cov.matrix()).abs().max() < 1e-4);
        assert_eq!(b.method_names, vec!["m1", "m3", "m2"]);
    }

    #[test]
    fn nelder_mead_reaches_same_optimum() {
        let (spec, data) = scenario(200, 8);
        let cfg = spec.config;
        let qn = fit(&data, &cfg, &FitOptions { compute_std_errors: false, ..quick_options(3) }).unwrap();
        let nm = fit(
            &data,
            &cfg,
            &FitOptions {
                n_starts: 1,
                max_iterations: 20000,
                compute_std_errors: false,
                optimizer: Optimizer::NelderMead,
                ..quick_options(3)
            },
        )
        .unwrap();
        // a single simplex start lands at a stationary point no better than the best BFGS start
        assert!(nm.converged);
        assert!(qn.nll <= nm.nll + 1e-6, "{} vs {}", qn.nll, nm.nll);
    }

    #[test]
    fn optimizer_names_parse() {
        assert_eq!("nelder-mead".parse::<Optimizer>().unwrap(), Optimizer::NelderMead);
        assert_eq!("BFGS".parse::<Optimizer>().unwrap(), Optimizer::QuasiNewton);
        assert_eq!(Optimizer::default().to_string(), "quasi-newton");
        assert!("newton".parse::<Optimizer>().is_err());
    }

    #[test]
    fn no_converged_start_is_reported() {
        let (spec, data) = scenario(100, 2);
        let opts = FitOptions {
            n_starts: 2,
            max_iterations: 3,
            ..FitOptions::default()
        };
        assert!(matches!(
            fit(&data, &spec.config, &opts),
            Err(NgseError::NoConvergedStart { n_starts: 2, .. })
        ));
    }
}
