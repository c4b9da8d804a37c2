//! The covariate-adjusted beta-model: `P(a_ij = 1) = μ(β_i + β_j + z_ijᵀγ)`,
//! edges independent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{log1p_exp, mu};
use crate::network::{Network, PairCovariates};

/// Degree parameters `beta` (one per node) and homophily parameters `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ModelParams {
    pub fn new(beta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if beta.iter().chain(&gamma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        Ok(Self { beta, gamma })
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            beta: vec![0.0; n],
            gamma: vec![0.0; p],
        }
    }

    pub(crate) fn check_against(&self, cov: &PairCovariates) -> Result<()> {
        if self.beta.len() != cov.n() {
            return Err(Error::DimensionMismatch {
                what: "beta",
                got: self.beta.len(),
                expected: cov.n(),
            });
        }
        if self.gamma.len() != cov.p() {
            return Err(Error::DimensionMismatch {
                what: "gamma",
                got: self.gamma.len(),
                expected: cov.p(),
            });
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `π_ij = β_i + β_j + z_ijᵀγ`.
pub fn pi(params: &ModelParams, cov: &PairCovariates, i: usize, j: usize) -> Result<f64> {
    params.check_against(cov)?;
    let z = cov.try_get(i, j)?;
    Ok(params.beta[i] + params.beta[j] + dot(z, &params.gamma))
}

/// Calls `f(i, j, pair_idx, z_ij, π_ij)` for every pair `i < j` in layout order.
#[inline]
pub(crate) fn for_each_pair<F>(beta: &[f64], gamma: &[f64], cov: &PairCovariates, mut f: F)
where
    F: FnMut(usize, usize, usize, &[f64], f64),
{
    let n = cov.n();
    let mut idx = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = cov.by_index(idx);
            f(i, j, idx, z, beta[i] + beta[j] + dot(z, gamma));
            idx += 1;
        }
    }
}

/// Bernoulli log-likelihood
/// `Σ_i β_i d_i + Σ_{i<j} a_ij z_ijᵀγ - Σ_{i<j} log(1 + e^{π_ij})`.
pub fn log_likelihood(params: &ModelParams, net: &Network) -> Result<f64> {
    params.check_against(net.covariates())?;
    let mut ll = 0.0;
    for_each_pair(&params.beta, &params.gamma, net.covariates(), |_, _, idx, _, pi| {
        if net.edge_by_index(idx) {
            ll += pi;
        }
        ll -= log1p_exp(pi);
    });
    Ok(ll)
}

/// Draws a network with independent edges `a_ij ~ Bernoulli(μ(π_ij))`.
pub fn sample_network<R: Rng + ?Sized>(
    params: &ModelParams,
    covariates: PairCovariates,
    rng: &mut R,
) -> Result<Network> {
    params.check_against(&covariates)?;
    let mut probs = Vec::with_capacity(crate::network::pair_count(covariates.n()));
    for_each_pair(&params.beta, &params.gamma, &covariates, |_, _, _, _, pi| {
        probs.push(mu(pi))
    });
    let mut net = Network::empty(covariates);
    for (idx, prob) in probs.into_iter().enumerate() {
        if rng.random::<f64>() < prob {
            net.set_by_index(idx);
        }
    }
    Ok(net)
}
