//! Marginal likelihood of the measurements with the latent truth integrated
//! out against its beta prior.
//!
//! Each patient contributes
//! `ln ∫ N(row; Θ·d(a), C) · Beta(a; α, β) da`, evaluated on a Gauss-Legendre
//! rule with a log-sum-exp over nodes. The prior is discretized as
//! `π_j ∝ w_j · Beta(a_j; α, β)` and renormalized to sum to one over the
//! nodes. Without that, a prior sharp enough to fall between or onto single
//! nodes makes the discretized likelihood unbounded in `(α, β)`.
//!
//! [`patient_log_marginal`] is the direct form; [`NllEvaluator`]
//! precomputes the per-node whitened means so that a whole dataset costs
//! `O(P·N·K)` per evaluation. Both routes are tested against each other.

mod quadrature;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use quadrature::{gauss_legendre_rule, QuadratureRule};

use crate::beta_prior::{beta_log_pdf_unchecked, log_beta_function};
use crate::error::{NgseError, Result};
use crate::model_types::{predict_means, CoefficientMatrix, MeasurementSet, PriorParams};
use crate::noise_model::{forward_solve, mvn_log_density, NoiseCovariance};

/// The argument triple `(Θ, C, (α, β))` of the likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBundle {
    pub theta: CoefficientMatrix,
    pub cov: NoiseCovariance,
    pub prior: PriorParams,
}

impl ParameterBundle {
    pub fn new(theta: CoefficientMatrix, cov: NoiseCovariance, prior: PriorParams) -> Result<Self> {
        if theta.num_methods() != cov.dim() {
            return Err(NgseError::DimensionMismatch {
                expected: theta.num_methods(),
                got: cov.dim(),
                context: "covariance dimension vs coefficient rows",
            });
        }
        Ok(Self { theta, cov, prior })
    }

    pub fn num_methods(&self) -> usize {
        self.theta.num_methods()
    }

    /// The `a → 1 - a` reparameterization for linear models: each row
    /// `(u₁, u₀)` becomes `(-u₁, u₁ + u₀)` and `α`, `β` swap. The likelihood
    /// is unchanged.
    pub fn flipped(&self) -> Result<Self> {
        if self.theta.poly_order() != 1 {
            return Err(NgseError::Domain("flip is only defined for linear models".into()));
        }
        let rows: Vec<Vec<f64>> = self
            .theta
            .rows()
            .into_iter()
            .map(|r| vec![-r[0], r[0] + r[1]])
            .collect();
        Self::new(
            CoefficientMatrix::from_rows(&rows)?,
            self.cov.clone(),
            self.prior.swapped(),
        )
    }

    /// Reorders methods; `order[j]` is the source method of new method `j`.
    pub fn permute_methods(&self, order: &[usize]) -> Result<Self> {
        let rows = self.theta.rows();
        let permuted: Vec<Vec<f64>> = order.iter().map(|&k| rows[k].clone()).collect();
        Self::new(
            CoefficientMatrix::from_rows(&permuted)?,
            self.cov.permute(order)?,
            self.prior,
        )
    }
}

/// Numerically stable `ln Σ exp(t_j)`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + s.ln()
}

/// `ln π_j`: the beta prior discretized on the rule's nodes, normalized so
/// that `Σ π_j = 1`.
pub fn prior_node_log_weights(rule: &QuadratureRule, prior: PriorParams) -> Result<Vec<f64>> {
    let ln_weights: Vec<f64> = rule.weights().iter().map(|w| w.ln()).collect();
    normalized_log_prior(rule.nodes(), &ln_weights, prior)
}

fn normalized_log_prior(nodes: &[f64], ln_weights: &[f64], prior: PriorParams) -> Result<Vec<f64>> {
    let ln_b = log_beta_function(prior.alpha, prior.beta)?;
    let mut out: Vec<f64> = nodes
        .iter()
        .zip(ln_weights)
        .map(|(&a, lw)| lw + beta_log_pdf_unchecked(a, prior, ln_b))
        .collect();
    let total = log_sum_exp(&out);
    if !total.is_finite() {
        return Err(NgseError::Domain(format!(
            "prior ({}, {}) has no mass on the quadrature nodes",
            prior.alpha, prior.beta
        )));
    }
    for v in &mut out {
        *v -= total;
    }
    Ok(out)
}

/// Log marginal density of one patient's measurement vector.
pub fn patient_log_marginal(row: &DVector<f64>, params: &ParameterBundle, rule: &QuadratureRule) -> Result<f64> {
    if row.len() != params.num_methods() {
        return Err(NgseError::DimensionMismatch {
            expected: params.num_methods(),
            got: row.len(),
            context: "measurement row length",
        });
    }
    if row.iter().any(|v| !v.is_finite()) {
        return Err(NgseError::Domain("measurement row must be finite".into()));
    }
    let ln_prior = prior_node_log_weights(rule, params.prior)?;
    let mut terms = Vec::with_capacity(rule.len());
    for (&a, lp) in rule.nodes().iter().zip(&ln_prior) {
        let mean = predict_means(&params.theta, a)?;
        terms.push(lp + mvn_log_density(row, &mean, &params.cov)?);
    }
    Ok(log_sum_exp(&terms))
}

/// `-Σ_p ln pr(row_p | Θ, C, α, β)`.
pub fn total_negative_log_likelihood(
    data: &MeasurementSet,
    params: &ParameterBundle,
    rule: &QuadratureRule,
) -> Result<f64> {
    NllEvaluator::new(data, rule).evaluate(params)
}

/// Doubling self-check: `|NLL(N) - NLL(2N)| / P`.
pub fn quadrature_doubling_gap(data: &MeasurementSet, params: &ParameterBundle, nodes: usize) -> Result<f64> {
    let coarse = total_negative_log_likelihood(data, params, &gauss_legendre_rule(nodes)?)?;
    let fine = total_negative_log_likelihood(data, params, &gauss_legendre_rule(2 * nodes)?)?;
    Ok((coarse - fine).abs() / data.num_patients() as f64)
}

/// Reusable evaluator of the total negative log-likelihood for one dataset
/// and quadrature rule.
#[derive(Debug, Clone)]
pub struct NllEvaluator<'a> {
    data: &'a MeasurementSet,
    rule: &'a QuadratureRule,
    ln_weights: Vec<f64>,
}

impl<'a> NllEvaluator<'a> {
    pub fn new(data: &'a MeasurementSet, rule: &'a QuadratureRule) -> Self {
        Self {
            data,
            rule,
            ln_weights: rule.weights().iter().map(|w| w.ln()).collect(),
        }
    }

    pub fn data(&self) -> &MeasurementSet {
        self.data
    }

    pub fn rule(&self) -> &QuadratureRule {
        self.rule
    }

    fn check_dims(&self, params: &ParameterBundle) -> Result<()> {
        let k = params.num_methods();
        if self.data.num_methods() != k {
            return Err(NgseError::DimensionMismatch {
                expected: k,
                got: self.data.num_methods(),
                context: "data columns vs methods",
            });
        }
        Ok(())
    }

    /// Per node: whitened mean (node-major, K entries each), the constant
    /// part of the log term, and the normalized log prior weight.
    fn node_tables(&self, params: &ParameterBundle) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let k = params.num_methods();
        let n = self.rule.len();
        let lower = params.cov.chol_factor();
        let ln_prior = normalized_log_prior(self.rule.nodes(), &self.ln_weights, params.prior)?;
        let norm_const = -0.5 * k as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * params.cov.log_det();
        let mut whitened_means: Vec<f64> = Vec::with_capacity(n * k);
        let mut node_consts = Vec::with_capacity(n);
        for (j, lp) in ln_prior.iter().enumerate() {
            let mean = predict_means(&params.theta, self.rule.nodes()[j])?;
            whitened_means.extend(forward_solve(lower, &mean).iter());
            node_consts.push(norm_const + lp);
        }
        Ok((whitened_means, node_consts, ln_prior))
    }

    pub fn evaluate(&self, params: &ParameterBundle) -> Result<f64> {
        self.check_dims(params)?;
        let (whitened_means, node_consts, _) = self.node_tables(params)?;
        let k = params.num_methods();
        let n = self.rule.len();
        let lower = params.cov.chol_factor();
        let values = self.data.values();
        let per_patient: Vec<f64> = (0..self.data.num_patients())
            .into_par_iter()
            .map_init(
                || (vec![0.0; k], vec![0.0; n]),
                |(white_row, terms), p| {
                    patient_terms(values.row(p).iter(), lower, &whitened_means, &node_consts, white_row, terms)
                },
            )
            .collect();

        // fixed-order reduction keeps the result independent of scheduling
        Ok(-per_patient.iter().sum::<f64>())
    }

    /// Negative log-likelihood and its exact gradient for the same
    /// quadrature rule.
    ///
    /// The gradient is assembled from posterior moments of the design vector
    /// and of `ln a`, `ln(1 - a)` under the node weights of each patient,
    /// against the same moments under the discretized prior.
    pub fn evaluate_with_gradient(&self, params: &ParameterBundle) -> Result<(f64, NllGradient)> {
        self.check_dims(params)?;
        let (whitened_means, node_consts, ln_prior) = self.node_tables(params)?;
        let k = params.num_methods();
        let n = self.rule.len();
        let order = params.theta.poly_order();
        let width = order + 1;
        let lower = params.cov.chol_factor();
        let values = self.data.values();
        let nodes = self.rule.nodes();
        // per node: a^q for q = 0..=2M, then ln a and ln(1 - a)
        let stride = 2 * order + 3;
        let mut node_stats = Vec::with_capacity(n * stride);
        for &a in nodes {
            let mut pw = 1.0;
            for _ in 0..=2 * order {
                node_stats.push(pw);
                pw *= a;
            }
            node_stats.push(a.ln());
            node_stats.push((-a).ln_1p());
        }

        // per patient: log marginal followed by posterior means of node_stats
        let per_patient: Vec<Vec<f64>> = (0..self.data.num_patients())
            .into_par_iter()
            .map_init(
                || (vec![0.0; k], vec![0.0; n]),
                |(white_row, terms), p| {
                    let log_marginal =
                        patient_terms(values.row(p).iter(), lower, &whitened_means, &node_consts, white_row, terms);
                    let mut out = vec![0.0; stride + 1];
                    out[0] = log_marginal;
                    if log_marginal.is_finite() {
                        for (j, &w) in terms.iter().enumerate() {
                            for (o, v) in out[1..].iter_mut().zip(&node_stats[j * stride..(j + 1) * stride]) {
                                *o += w * v;
                            }
                        }
                    }
                    out
                },
            )
            .collect();

        // design index r carries power M - r
        let p_count = self.data.num_patients() as f64;
        let mut ll = 0.0;
        let mut xd = DMatrix::zeros(k, width);
        let mut power_sums = vec![0.0; 2 * order + 1];
        let (mut ln_a, mut ln_1ma) = (0.0, 0.0);
        for (p, m) in per_patient.iter().enumerate() {
            ll += m[0];
            for r in 0..width {
                let e = m[1 + order - r];
                for i in 0..k {
                    xd[(i, r)] += values[(p, i)] * e;
                }
            }
            for (s, v) in power_sums.iter_mut().zip(&m[1..]) {
                *s += v;
            }
            ln_a += m[stride - 1];
            ln_1ma += m[stride];
        }
        let d_sum = DMatrix::from_fn(width, width, |r, c| power_sums[2 * order - r - c]);
        if !ll.is_finite() {
            return Err(NgseError::Domain("log-likelihood is not finite".into()));
        }
        let xx = values.transpose() * values;

        let theta = params.theta.matrix();
        let l_inv = lower
            .solve_lower_triangular(&DMatrix::identity(k, k))
            .ok_or_else(|| NgseError::Domain("singular Cholesky factor".into()))?;
        let c_inv = l_inv.transpose() * &l_inv;
        let resid = &xd - theta * &d_sum;
        let grad_theta = &c_inv * &resid;
        let scatter = &xx - &xd * theta.transpose() - theta * xd.transpose() + theta * &d_sum * theta.transpose();
        let grad_cov = (&c_inv * scatter * &c_inv - &c_inv * p_count) * 0.5;
        let mut grad_chol = (grad_cov * lower) * 2.0;
        for i in 0..k {
            for j in i + 1..k {
                grad_chol[(i, j)] = 0.0;
            }
        }
        // prior means of ln a and ln(1 - a) under the discretized prior
        let (mut prior_ln_a, mut prior_ln_1ma) = (0.0, 0.0);
        for (j, lp) in ln_prior.iter().enumerate() {
            let w = lp.exp();
            prior_ln_a += w * node_stats[j * stride + stride - 2];
            prior_ln_1ma += w * node_stats[j * stride + stride - 1];
        }
        let grad_alpha = ln_a - p_count * prior_ln_a;
        let grad_beta = ln_1ma - p_count * prior_ln_1ma;

        Ok((
            -ll,
            NllGradient {
                theta: -grad_theta,
                chol: -grad_chol,
                alpha: -grad_alpha,
                beta: -grad_beta,
            },
        ))
    }
}

/// Gradient of the negative log-likelihood in natural coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct NllGradient {
    /// With respect to each coefficient of `Θ`.
    pub theta: DMatrix<f64>,
    /// With respect to the lower-triangular entries of the Cholesky factor;
    /// the strict upper triangle is zero.
    pub chol: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
}

/// Returns the log-sum-exp of one patient's per-node log terms and leaves
/// the normalized node weights (summing to one) in `terms`.
fn patient_terms<'v>(
    row: impl Iterator<Item = &'v f64>,
    lower: &DMatrix<f64>,
    whitened_means: &[f64],
    node_consts: &[f64],
    white_row: &mut [f64],
    terms: &mut [f64],
) -> f64 {
    let k = white_row.len();
    for (i, &v) in row.enumerate() {
        let mut s = v;
        for m in 0..i {
            s -= lower[(i, m)] * white_row[m];
        }
        white_row[i] = s / lower[(i, i)];
    }
    let mut max = f64::NEG_INFINITY;
    for (j, t_out) in terms.iter_mut().enumerate() {
        let mu = &whitened_means[j * k..(j + 1) * k];
        let sq: f64 = white_row.iter().zip(mu).map(|(y, m)| (y - m) * (y - m)).sum();
        let t = node_consts[j] - 0.5 * sq;
        *t_out = t;
        if t > max {
            max = t;
        }
    }
    if !max.is_finite() {
        return max;
    }
    let mut s = 0.0;
    for t in terms.iter_mut() {
        *t = (*t - max).exp();
        s += *t;
    }
    for t in terms.iter_mut() {
        *t /= s;
    }
    max + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::noise_model::cholesky_factorize;

    fn normal_cdf(x: f64) -> f64 {
        0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
    }

    fn k1_uniform_bundle() -> ParameterBundle {
        ParameterBundle::new(
            CoefficientMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
            cholesky_factorize(&dmatrix![0.01]).unwrap(),
            PriorParams::new(1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn random_bundle(rng: &mut impl Rng, k: usize) -> ParameterBundle {
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| vec![rng.gen_range(0.5..1.5), rng.gen_range(-0.2..0.2)])
            .collect();
        let mut l = DMatrix::zeros(k, k);
        for i in 0..k {
            l[(i, i)] = rng.gen_range(0.02..0.3);
            for j in 0..i {
                l[(i, j)] = rng.gen_range(-0.1..0.1);
            }
        }
        ParameterBundle::new(
            CoefficientMatrix::from_rows(&rows).unwrap(),
            NoiseCovariance::from_factor(l).unwrap(),
            PriorParams::new(rng.gen_range(0.7..6.0), rng.gen_range(0.7..6.0)).unwrap(),
        )
        .unwrap()
    }

    fn random_data(rng: &mut impl Rng, p: usize, k: usize) -> MeasurementSet {
        MeasurementSet::from_matrix(DMatrix::from_fn(p, k, |_, _| rng.gen_range(-0.2..1.2))).unwrap()
    }

    #[test]
    fn uniform_prior_matches_gaussian_cdf_oracle() {
        let rule = gauss_legendre_rule(128).unwrap();
        let params = k1_uniform_bundle();
        for x in [0.5, 0.6, 0.3] {
            // ∫₀¹ N(x; a, 0.1²) da = Φ((1-x)/0.1) - Φ(-x/0.1)
            let oracle = (normal_cdf((1.0 - x) / 0.1) - normal_cdf(-x / 0.1)).ln();
            let got = patient_log_marginal(&dvector![x], &params, &rule).unwrap();
            assert!((got - oracle).abs() < 1e-6, "x={x}: {got} vs {oracle}");
        }
        let centre = patient_log_marginal(&dvector![0.5], &params, &rule).unwrap();
        assert!((centre - -5.733e-7).abs() < 1e-9);
        let shifted = patient_log_marginal(&dvector![0.6], &params, &rule).unwrap();
        assert!(shifted < centre);
    }

    #[test]
    fn fast_path_matches_direct_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rule = gauss_legendre_rule(64).unwrap();
        for _ in 0..5 {
            let params = random_bundle(&mut rng, 3);
            let data = random_data(&mut rng, 20, 3);
            let direct: f64 = (0..20)
                .map(|p| -patient_log_marginal(&data.row(p), &params, &rule).unwrap())
                .sum();
            let fast = total_negative_log_likelihood(&data, &params, &rule).unwrap();
            assert!((direct - fast).abs() < 1e-9 * direct.abs().max(1.0), "{direct} vs {fast}");
        }
    }

    #[test]
    fn single_patient_total_is_negated_marginal() {
        let params = k1_uniform_bundle();
        let rule = gauss_legendre_rule(128).unwrap();
        let data = MeasurementSet::from_matrix(dmatrix![0.42]).unwrap();
        let total = total_negative_log_likelihood(&data, &params, &rule).unwrap();
        let single = patient_log_marginal(&dvector![0.42], &params, &rule).unwrap();
        assert!((total + single).abs() < 1e-13);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let params = k1_uniform_bundle();
        let rule = gauss_legendre_rule(16).unwrap();
        let data = MeasurementSet::from_matrix(dmatrix![0.1, 0.2]).unwrap();
        assert!(total_negative_log_likelihood(&data, &params, &rule).is_err());
        assert!(patient_log_marginal(&dvector![0.1, 0.2], &params, &rule).is_err());
    }

    #[test]
    fn huge_rows_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = random_bundle(&mut rng, 3);
        let rule = gauss_legendre_rule(128).unwrap();
        let data = MeasurementSet::from_matrix(dmatrix![1e6, -1e6, 3e5; 0.5, 0.5, 0.5]).unwrap();
        let nll = total_negative_log_likelihood(&data, &params, &rule).unwrap();
        assert!(nll.is_finite());
        assert!(patient_log_marginal(&dvector![1e6, -1e6, 3e5], &params, &rule)
            .unwrap()
            .is_finite());
    }

    #[test]
    fn quadrature_doubling_converges() {
        // smooth prior density (α, β ≥ 2) and on-model data
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|_| vec![rng.gen_range(0.5..1.5), rng.gen_range(-0.2..0.2)])
                .collect();
            let sds: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..0.3)).collect();
            let params = ParameterBundle::new(
                CoefficientMatrix::from_rows(&rows).unwrap(),
                NoiseCovariance::from_sds_and_correlation(&sds, 0.2).unwrap(),
                PriorParams::new(rng.gen_range(2.0..6.0), rng.gen_range(2.0..6.0)).unwrap(),
            )
            .unwrap();
            let spec = crate::simulator::SimulationSpec::new(
                50,
                crate::model_types::ModelConfig::new(3, 1).unwrap(),
                params.clone(),
                rng.gen(),
            )
            .unwrap();
            let data = crate::simulator::simulate(&spec).0;
            let gap = quadrature_doubling_gap(&data, &params, 128).unwrap();
            assert!(gap < 1e-8, "gap {gap}");
        }
    }

    #[test]
    fn patient_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rule = gauss_legendre_rule(128).unwrap();
        for _ in 0..3 {
            let params = random_bundle(&mut rng, 3);
            let data = random_data(&mut rng, 40, 3);
            let mut order: Vec<usize> = (0..40).collect();
            order.reverse();
            order.swap(3, 17);
            let a = total_negative_log_likelihood(&data, &params, &rule).unwrap();
            let b = total_negative_log_likelihood(&data.permute_patients(&order).unwrap(), &params, &rule).unwrap();
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn method_permutation_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let rule = gauss_legendre_rule(128).unwrap();
        for order in [[1, 2, 0], [2, 0, 1], [0, 2, 1]] {
            let params = random_bundle(&mut rng, 3);
            let data = random_data(&mut rng, 30, 3);
            let a = total_negative_log_likelihood(&data, &params, &rule).unwrap();
            let b = total_negative_log_likelihood(
                &data.permute_methods(&order).unwrap(),
                &params.permute_methods(&order).unwrap(),
                &rule,
            )
            .unwrap();
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn flip_leaves_likelihood_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rule = gauss_legendre_rule(128).unwrap();
        for _ in 0..5 {
            let params = random_bundle(&mut rng, 3);
            let data = random_data(&mut rng, 30, 3);
            let a = total_negative_log_likelihood(&data, &params, &rule).unwrap();
            let b = total_negative_log_likelihood(&data, &params.flipped().unwrap(), &rule).unwrap();
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn duplicated_data_doubles_nll() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let rule = gauss_legendre_rule(128).unwrap();
        let params = random_bundle(&mut rng, 3);
        let data = random_data(&mut rng, 25, 3);
        let once = total_negative_log_likelihood(&data, &params, &rule).unwrap();
        let twice = total_negative_log_likelihood(&data.stack(&data).unwrap(), &params, &rule).unwrap();
        assert!((twice - 2.0 * once).abs() < 1e-9 * once.abs());
    }

    #[test]
    fn monte_carlo_marginal_agrees() {
        use rand_distr::{Beta, Distribution};
        let params = ParameterBundle::new(
            CoefficientMatrix::linear(&[0.9, 1.1, 1.0], &[0.0, 0.05, -0.02]).unwrap(),
            NoiseCovariance::from_sds_and_correlation(&[0.05, 0.15, 0.10], 0.3).unwrap(),
            PriorParams::new(2.0, 5.0).unwrap(),
        )
        .unwrap();
        let row = dvector![0.3, 0.4, 0.25];
        let rule = gauss_legendre_rule(128).unwrap();
        let quad = patient_log_marginal(&row, &params, &rule).unwrap().exp();
        let prior = Beta::new(2.0, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let draws = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let a = prior.sample(&mut rng);
            let mean = predict_means(&params.theta, a).unwrap();
            acc += mvn_log_density(&row, &mean, &params.cov).unwrap().exp();
        }
        let mc = acc / draws as f64;
        assert!((mc - quad).abs() < 0.01 * quad, "{mc} vs {quad}");
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_sum_exp(&[0.0]) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn flip_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_bundle(&mut rng, 2);
        let back = b.flipped().unwrap().flipped().unwrap();
        assert!((back.theta.matrix() - b.theta.matrix()).abs().max() < 1e-15);
        assert_eq!(back.prior, b.prior);
    }
}
