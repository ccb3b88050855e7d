//! No-gold-standard evaluation of quantitative measurement methods.
//!
//! Given only the values that `K` methods measured on `P` patients, the
//! crate fits a polynomial calibration per method, a full noise covariance,
//! and a beta distribution for the unobserved true values by marginal
//! maximum likelihood, then ranks the methods by precision.

pub mod beta_prior;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod io;
pub mod likelihood;
pub mod model_types;
pub mod noise_model;
pub mod ranking;
pub mod simulator;

pub use error::{NgseError, Result};
pub use estimator::{fit, EstimationResult, FitOptions, Optimizer};
pub use likelihood::{ParameterBundle, QuadratureRule};
pub use model_types::{CoefficientMatrix, MeasurementSet, ModelConfig, PriorParams};
pub use noise_model::NoiseCovariance;
pub use ranking::{rank_methods, RankingMode, RankingReport};
