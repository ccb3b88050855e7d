//! JSON fit report, `schema_version: 1`.
//!
//! Floats are written in shortest round-trip form, so reading a report
//! back reproduces every number bit for bit.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::measurements::Provenance;
use super::read_to_string;
use crate::error::{NgseError, Result};
use crate::estimator::{packed_labels, EstimationResult, FitOptions, Optimizer, StartDiagnostic};
use crate::likelihood::ParameterBundle;
use crate::model_types::{CoefficientMatrix, ModelConfig, PriorParams};
use crate::noise_model::cholesky_factorize;
use crate::ranking::{RankingMode, RankingReport};

pub const SCHEMA_VERSION: u32 = 1;

pub const STD_ERROR_NOTE: &str = "standard errors are in packed coordinates: theta entries as is, \
     Cholesky diagonal entries as ln L_ii, off-diagonal L_ij as is, ln alpha, ln beta; \
     no back-transformation to covariance or prior scale is applied";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub num_methods: usize,
    pub poly_order: usize,
    pub quadrature_nodes: usize,
    pub n_starts: usize,
    pub max_iterations: usize,
    pub nll_tolerance: f64,
    pub param_tolerance: f64,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
    pub ranking_mode: RankingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub patients: usize,
    pub methods: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSection {
    /// Rows per method, highest polynomial order first.
    pub theta: Vec<Vec<f64>>,
    pub covariance: Vec<Vec<f64>>,
    pub correlation: Vec<Vec<f64>>,
    pub alpha: f64,
    pub beta: f64,
    pub nll: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_starts: usize,
    pub canonical: bool,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrorSection {
    pub coordinates: String,
    pub note: String,
    pub labels: Vec<String>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub config: ConfigEcho,
    pub data: DataSummary,
    pub fit: FitSection,
    pub starts: Vec<StartDiagnostic>,
    pub standard_errors: StdErrorSection,
    pub ranking: RankingReport,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Report {
    pub fn new(
        result: &EstimationResult,
        ranking: &RankingReport,
        config: &ModelConfig,
        options: &FitOptions,
        provenance: Provenance,
        patients: usize,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config: ConfigEcho {
                num_methods: config.num_methods,
                poly_order: config.poly_order,
                quadrature_nodes: config.quadrature_nodes,
                n_starts: options.n_starts,
                max_iterations: options.max_iterations,
                nll_tolerance: options.nll_tolerance,
                param_tolerance: options.param_tolerance,
                seed: options.seed,
                optimizer: options.optimizer,
                ranking_mode: ranking.mode,
            },
            data: DataSummary {
                patients,
                methods: result.method_names.clone(),
                provenance,
            },
            fit: FitSection {
                theta: result.params.theta.rows(),
                covariance: rows(result.params.cov.matrix()),
                correlation: ranking.correlation.clone(),
                alpha: result.params.prior.alpha,
                beta: result.params.prior.beta,
                nll: result.nll,
                converged: result.converged,
                iterations: result.iterations,
                n_starts: result.n_starts,
                canonical: result.canonical,
                flipped: result.flipped,
            },
            starts: result.start_diagnostics.clone(),
            standard_errors: StdErrorSection {
                coordinates: "packed".into(),
                note: STD_ERROR_NOTE.into(),
                labels: packed_labels(config),
                values: result.std_errors.clone(),
            },
            ranking: ranking.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(NgseError::Config(format!(
                "unsupported report schema_version {}",
                report.schema_version
            )));
        }
        Ok(report)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        ModelConfig::with_nodes(
            self.config.num_methods,
            self.config.poly_order,
            self.config.quadrature_nodes,
        )
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            n_starts: self.config.n_starts,
            max_iterations: self.config.max_iterations,
            nll_tolerance: self.config.nll_tolerance,
            param_tolerance: self.config.param_tolerance,
            seed: self.config.seed,
            compute_std_errors: true,
            optimizer: self.config.optimizer,
        }
    }

    /// Rebuilds the fitted result recorded in the report.
    pub fn estimation_result(&self) -> Result<EstimationResult> {
        let k = self.fit.covariance.len();
        let cov = cholesky_factorize(&DMatrix::from_fn(k, k, |i, j| self.fit.covariance[i][j]))?;
        let params = ParameterBundle::new(
            CoefficientMatrix::from_rows(&self.fit.theta)?,
            cov,
            PriorParams::new(self.fit.alpha, self.fit.beta)?,
        )?;
        Ok(EstimationResult {
            params,
            method_names: self.data.methods.clone(),
            nll: self.fit.nll,
            converged: self.fit.converged,
            iterations: self.fit.iterations,
            n_starts: self.fit.n_starts,
            std_errors: self.standard_errors.values.clone(),
            start_diagnostics: self.starts.clone(),
            canonical: self.fit.canonical,
            flipped: self.fit.flipped,
        })
    }
}

/// Writes the report as pretty-printed JSON.
pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    std::fs::write(path, report.to_json()?)?;
    Ok(())
}

/// Plain-text ranking table.
pub fn ranking_table(ranking: &RankingReport) -> String {
    let mut out = format!("ranking mode: {}\n", ranking.mode);
    out.push_str(&format!(
        "{:<6}{:<16}{:>14}{:>14}{:>16}\n",
        "rank", "method", "noise_sd", "slope", "normalized_sd"
    ));
    let mut order: Vec<_> = ranking.methods.iter().collect();
    order.sort_by_key(|m| m.rank);
    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.6}"));
    for m in order {
        out.push_str(&format!(
            "{:<6}{:<16}{:>14.6}{:>14}{:>16}\n",
            m.rank,
            m.name,
            m.noise_sd,
            fmt_opt(m.slope),
            fmt_opt(m.normalized_sd)
        ));
    }
    out
}
