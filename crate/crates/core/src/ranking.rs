//! Precision ranking of the fitted methods.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{NgseError, Result};
use crate::estimator::EstimationResult;
use crate::noise_model::NoiseCovariance;

/// Slopes at or below this magnitude cannot be normalized.
pub const MIN_SLOPE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingMode {
    /// Sort on `σ_k`.
    Raw,
    /// Sort on `σ_k / |u_{k,1}|` (linear models only).
    Normalized,
}

impl RankingMode {
    /// Normalized for linear models, raw otherwise.
    pub fn default_for_order(poly_order: usize) -> Self {
        if poly_order == 1 {
            Self::Normalized
        } else {
            Self::Raw
        }
    }
}

impl fmt::Display for RankingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Raw => "raw",
            Self::Normalized => "normalized",
        })
    }
}

impl FromStr for RankingMode {
    type Err = NgseError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(Self::Raw),
            "normalized" | "normalised" => Ok(Self::Normalized),
            other => Err(NgseError::Config(format!("unknown ranking mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRank {
    pub name: String,
    pub noise_sd: f64,
    pub slope: Option<f64>,
    pub normalized_sd: Option<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub mode: RankingMode,
    pub methods: Vec<MethodRank>,
    pub correlation: Vec<Vec<f64>>,
}

impl RankingReport {
    pub fn ranks(&self) -> Vec<usize> {
        self.methods.iter().map(|m| m.rank).collect()
    }
}

/// `r_ij = C_ij / √(C_ii C_jj)`.
pub fn correlation_matrix(cov: &NoiseCovariance) -> DMatrix<f64> {
    let c = cov.matrix();
    let k = c.nrows();
    DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else {
            (c[(i, j)] / (c[(i, i)] * c[(j, j)]).sqrt()).clamp(-1.0, 1.0)
        }
    })
}

/// Ranks by ascending score; rank 1 is the most precise, ties keep
/// method order.
pub fn ranks_from_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0; scores.len()];
    for (pos, &k) in order.iter().enumerate() {
        ranks[k] = pos + 1;
    }
    ranks
}

pub fn rank_methods(result: &EstimationResult, mode: RankingMode) -> Result<RankingReport> {
    if !result.converged {
        return Err(NgseError::Domain("ranking needs a converged fit".into()));
    }
    let sds = result.params.cov.std_devs();
    let linear = result.params.theta.poly_order() == 1;
    let slopes = linear.then(|| result.params.theta.slopes());

    let scores: Vec<f64> = match mode {
        RankingMode::Raw => sds.clone(),
        RankingMode::Normalized => {
            let slopes = slopes.as_ref().ok_or_else(|| {
                NgseError::Config("normalized ranking needs a linear (order 1) model".into())
            })?;
            if let Some((method, &slope)) = slopes.iter().enumerate().find(|(_, s)| s.abs() <= MIN_SLOPE) {
                return Err(NgseError::DegenerateSlope { method, slope });
            }
            sds.iter().zip(slopes).map(|(s, u)| s / u.abs()).collect()
        }
    };
    let ranks = ranks_from_scores(&scores);

    let methods = (0..sds.len())
        .map(|k| {
            let slope = slopes.as_ref().map(|s| s[k]);
            MethodRank {
                name: result
                    .method_names
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| format!("m{}", k + 1)),
                noise_sd: sds[k],
                slope,
                normalized_sd: slope.filter(|u| u.abs() > MIN_SLOPE).map(|u| sds[k] / u.abs()),
                rank: ranks[k],
            }
        })
        .collect();
    let corr = correlation_matrix(&result.params.cov);
    Ok(RankingReport {
        mode,
        methods,
        correlation: corr.row_iter().map(|r| r.iter().copied().collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::ParameterBundle;
    use crate::model_types::{CoefficientMatrix, PriorParams};
    use crate::noise_model::cholesky_factorize;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn result(sds: &[f64], slopes: &[f64]) -> EstimationResult {
        let params = ParameterBundle::new(
            CoefficientMatrix::linear(slopes, &vec![0.0; slopes.len()]).unwrap(),
            NoiseCovariance::from_sds_and_correlation(sds, 0.0).unwrap(),
            PriorParams::new(2.0, 2.0).unwrap(),
        )
        .unwrap();
        EstimationResult {
            params,
            method_names: (0..sds.len()).map(|k| format!("method{k}")).collect(),
            nll: 1.0,
            converged: true,
            iterations: 1,
            n_starts: 1,
            std_errors: None,
            start_diagnostics: vec![],
            canonical: true,
            flipped: false,
        }
    }

    #[test]
    fn raw_ranking_examples() {
        let r = rank_methods(&result(&[0.3, 0.1, 0.2], &[1.0, 1.0, 1.0]), RankingMode::Raw).unwrap();
        assert_eq!(r.ranks(), vec![3, 1, 2]);
        let tie = rank_methods(&result(&[0.1, 0.1], &[1.0, 1.0]), RankingMode::Raw).unwrap();
        assert_eq!(tie.ranks(), vec![1, 2]);
    }

    #[test]
    fn normalized_ranking_example() {
        let r = rank_methods(&result(&[0.2, 0.2], &[2.0, 1.0]), RankingMode::Normalized).unwrap();
        let norm: Vec<f64> = r.methods.iter().map(|m| m.normalized_sd.unwrap()).collect();
        assert!((norm[0] - 0.1).abs() < 1e-12 && (norm[1] - 0.2).abs() < 1e-12);
        assert_eq!(r.ranks(), vec![1, 2]);
        assert_eq!(r.methods[0].name, "method0");
    }

    #[test]
    fn degenerate_slope() {
        assert!(matches!(
            rank_methods(&result(&[0.2, 0.2], &[1.0, 1e-10]), RankingMode::Normalized),
            Err(NgseError::DegenerateSlope { method: 1, .. })
        ));
        assert!(rank_methods(&result(&[0.2, 0.2], &[1.0, 1e-10]), RankingMode::Raw).is_ok());
    }

    #[test]
    fn correlation_examples() {
        let diag = cholesky_factorize(&dmatrix![2.0, 0.0; 0.0, 3.0]).unwrap();
        assert_eq!(correlation_matrix(&diag), DMatrix::<f64>::identity(2, 2));
        let c = cholesky_factorize(&dmatrix![4.0, 2.0; 2.0, 5.0]).unwrap();
        let r = correlation_matrix(&c);
        assert!((r[(0, 1)] - 2.0 / 20f64.sqrt()).abs() < 1e-15);
        assert!((r[(0, 1)] - 0.4472).abs() < 1e-4);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("raw".parse::<RankingMode>().unwrap(), RankingMode::Raw);
        assert_eq!("Normalized".parse::<RankingMode>().unwrap(), RankingMode::Normalized);
        assert!("best".parse::<RankingMode>().is_err());
        assert_eq!(RankingMode::default_for_order(1), RankingMode::Normalized);
        assert_eq!(RankingMode::default_for_order(2), RankingMode::Raw);
    }

    proptest! {
        #[test]
        fn correlations_are_bounded(v in proptest::collection::vec(-1.0f64..1.0, 6), d in proptest::collection::vec(0.05f64..2.0, 3)) {
            let mut l = DMatrix::zeros(3, 3);
            let mut it = v.iter();
            for i in 0..3 {
                l[(i, i)] = d[i];
                for j in 0..i {
                    l[(i, j)] = *it.next().unwrap();
                }
            }
            let c = NoiseCovariance::from_factor(l).unwrap();
            let r = correlation_matrix(&c);
            for i in 0..3 {
                prop_assert_eq!(r[(i, i)], 1.0);
                for j in 0..3 {
                    prop_assert!(r[(i, j)].abs() <= 1.0);
                }
            }
        }

        #[test]
        fn raw_ranking_is_scale_invariant(sds in proptest::collection::vec(0.01f64..1.0, 4), s in 0.1f64..10.0) {
            let scaled: Vec<f64> = sds.iter().map(|x| x * s).collect();
            prop_assert_eq!(ranks_from_scores(&sds), ranks_from_scores(&scaled));
        }

        #[test]
        fn ranks_are_a_permutation(scores in proptest::collection::vec(0.0f64..1.0, 1..8)) {
            let mut r = ranks_from_scores(&scores);
            r.sort_unstable();
            prop_assert_eq!(r, (1..=scores.len()).collect::<Vec<_>>());
        }
    }
}
