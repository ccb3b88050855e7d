//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated;
//! matrices are rows separated by `;`. Unknown keys are rejected so typos
//! do not pass silently.
//!
//! ```text
//! # simulation
//! patients     = 500
//! order        = 1
//! methods      = A, B, C
//! coefficients = 0.9, 0.0; 1.1, 0.05; 1.0, -0.02
//! noise_sd     = 0.05, 0.15, 0.10
//! correlation  = 0.3
//! alpha        = 2
//! beta         = 5
//! seed         = 7
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::read_to_string;
use crate::error::{NgseError, Result};
use crate::likelihood::ParameterBundle;
use crate::model_types::{CoefficientMatrix, ModelConfig, PriorParams, DEFAULT_QUADRATURE_NODES};
use crate::noise_model::{cholesky_factorize, NoiseCovariance};
use crate::simulator::SimulationSpec;

pub const SIMULATION_KEYS: &[&str] = &[
    "patients",
    "order",
    "methods",
    "coefficients",
    "noise_sd",
    "correlation",
    "covariance",
    "alpha",
    "beta",
    "seed",
    "quadrature_nodes",
];

pub const FIT_KEYS: &[&str] = &[
    "input",
    "output",
    "order",
    "starts",
    "max_iterations",
    "nll_tolerance",
    "param_tolerance",
    "seed",
    "quadrature_nodes",
    "ranking",
    "rescale",
    "threads",
    "optimizer",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueConfig {
    entries: BTreeMap<String, String>,
}

impl KeyValueConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| NgseError::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            if entries.insert(key.clone(), value.trim().to_owned()).is_some() {
                return Err(NgseError::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?)
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(NgseError::Config(format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| NgseError::Config(format!("invalid value {v:?} for {key}")))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| NgseError::Config(format!("missing required key {key:?}")))
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key).map(parse_list).transpose()
    }

    pub fn matrix(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        self.raw(key)
            .map(|v| v.split(';').map(parse_list).collect())
            .transpose()
    }
}

pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| NgseError::Config(format!("invalid number {s:?}")))
        })
        .collect()
}

/// `lo,hi` with `lo < hi`.
pub fn parse_interval(text: &str) -> Result<[f64; 2]> {
    match parse_list(text)?.as_slice() {
        &[lo, hi] if lo < hi => Ok([lo, hi]),
        _ => Err(NgseError::Config(format!("rescale must be lo,hi with lo < hi, got {text:?}"))),
    }
}

/// Builds a [`SimulationSpec`] from a simulation config. The noise is given
/// either as `covariance` (full matrix) or as `noise_sd` plus an optional
/// common pairwise `correlation`.
pub fn simulation_spec(cfg: &KeyValueConfig) -> Result<SimulationSpec> {
    cfg.check_keys(SIMULATION_KEYS)?;
    let patients: usize = cfg.require("patients")?;
    let rows = cfg
        .matrix("coefficients")?
        .ok_or_else(|| NgseError::Config("missing required key \"coefficients\"".into()))?;
    let theta = CoefficientMatrix::from_rows(&rows)?;
    let k = theta.num_methods();
    let order: usize = cfg.get("order")?.unwrap_or(theta.poly_order());
    if order != theta.poly_order() {
        return Err(NgseError::Config(format!(
            "order {order} does not match {} coefficients per row",
            theta.poly_order() + 1
        )));
    }
    let cov = match (cfg.matrix("covariance")?, cfg.list("noise_sd")?) {
        (Some(m), None) => {
            if m.len() != k || m.iter().any(|r| r.len() != k) {
                return Err(NgseError::Config(format!("covariance must be {k}x{k}")));
            }
            cholesky_factorize(&DMatrix::from_fn(k, k, |i, j| m[i][j]))?
        }
        (None, Some(sds)) => {
            if sds.len() != k {
                return Err(NgseError::Config(format!("noise_sd needs {k} entries")));
            }
            let rho: f64 = cfg.get("correlation")?.unwrap_or(0.0);
            NoiseCovariance::from_sds_and_correlation(&sds, rho)?
        }
        _ => {
            return Err(NgseError::Config(
                "give exactly one of covariance or noise_sd".into(),
            ))
        }
    };
    let prior = PriorParams::new(cfg.require("alpha")?, cfg.require("beta")?)?;
    let nodes = cfg.get("quadrature_nodes")?.unwrap_or(DEFAULT_QUADRATURE_NODES);
    let config = ModelConfig::with_nodes(k, order, nodes)?;
    let names = match cfg.raw("methods") {
        Some(v) => v.split(',').map(|s| s.trim().to_owned()).collect(),
        None => (1..=k).map(|i| format!("m{i}")).collect(),
    };
    SimulationSpec::with_names(
        patients,
        config,
        ParameterBundle::new(theta, cov, prior)?,
        cfg.get("seed")?.unwrap_or(0),
        names,
    )
}
