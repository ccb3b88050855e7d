//! Forward model: draws latent truths from the beta prior and produces
//! measurements `Θ·d(a) + L·z`. Truths come back on a separate channel and
//! never enter the [`MeasurementSet`].
//!
//! Patient `p` draws from its own ChaCha stream (`seed`, stream `p`): one
//! open-interval uniform for the truth, then `K` standard normals.

use nalgebra::{DMatrix, DVector};
use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::beta_prior::beta_quantile;
use crate::error::{NgseError, Result};
use crate::likelihood::ParameterBundle;
use crate::model_types::{predict_means, MeasurementSet, ModelConfig};
use crate::noise_model::correlated_sample;

/// Bisection tolerance of the inverse-CDF beta sampler.
pub const QUANTILE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub patients: usize,
    pub config: ModelConfig,
    pub truth_params: ParameterBundle,
    pub seed: u64,
    pub method_names: Vec<String>,
}

impl SimulationSpec {
    pub fn new(patients: usize, config: ModelConfig, truth_params: ParameterBundle, seed: u64) -> Result<Self> {
        let names = (1..=config.num_methods).map(|k| format!("m{k}")).collect();
        Self::with_names(patients, config, truth_params, seed, names)
    }

    pub fn with_names(
        patients: usize,
        config: ModelConfig,
        truth_params: ParameterBundle,
        seed: u64,
        method_names: Vec<String>,
    ) -> Result<Self> {
        if patients == 0 {
            return Err(NgseError::Config("simulation needs at least one patient".into()));
        }
        if truth_params.num_methods() != config.num_methods || truth_params.theta.poly_order() != config.poly_order {
            return Err(NgseError::Config(format!(
                "truth parameters are {}x{} but config is K={}, M={}",
                truth_params.num_methods(),
                truth_params.theta.poly_order() + 1,
                config.num_methods,
                config.poly_order
            )));
        }
        if method_names.len() != config.num_methods {
            return Err(NgseError::DimensionMismatch {
                expected: config.num_methods,
                got: method_names.len(),
                context: "method names",
            });
        }
        Ok(Self {
            patients,
            config,
            truth_params,
            seed,
            method_names,
        })
    }

    fn patient_rng(&self, p: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(p as u64);
        rng
    }

    pub fn patient_ids(&self) -> Vec<String> {
        (1..=self.patients).map(|p| format!("p{p:05}")).collect()
    }
}

fn draw_truth(rng: &mut ChaCha8Rng, spec: &SimulationSpec) -> f64 {
    let u: f64 = rng.sample(Open01);
    beta_quantile(u, spec.truth_params.prior, QUANTILE_TOLERANCE)
}

/// I.i.d. beta draws by inverse CDF, one per patient.
pub fn sample_truths(spec: &SimulationSpec) -> Vec<f64> {
    (0..spec.patients)
        .into_par_iter()
        .map(|p| draw_truth(&mut spec.patient_rng(p), spec))
        .collect()
}

/// Simulated measurements and the hidden truths that produced them.
pub fn simulate(spec: &SimulationSpec) -> (MeasurementSet, Vec<f64>) {
    let k = spec.config.num_methods;
    let rows: Vec<(f64, DVector<f64>)> = (0..spec.patients)
        .into_par_iter()
        .map(|p| {
            let mut rng = spec.patient_rng(p);
            let a = draw_truth(&mut rng, spec);
            let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mean = predict_means(&spec.truth_params.theta, a).expect("truth drawn inside [0, 1]");
            let noise = correlated_sample(&spec.truth_params.cov, &z).expect("dimension checked in spec");
            (a, mean + noise)
        })
        .collect();
    let values = DMatrix::from_fn(spec.patients, k, |p, j| rows[p].1[j]);
    let truths = rows.iter().map(|(a, _)| *a).collect();
    let data = MeasurementSet::new(values, spec.method_names.clone(), spec.patient_ids())
        .expect("simulated values are finite");
    (data, truths)
}
