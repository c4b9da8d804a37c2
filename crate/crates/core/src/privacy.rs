//! (k, ε)-edge-differentially-private release of `(d, y)`.
//!
//! Degrees get two-sided geometric (discrete Laplace) noise with
//! `λ₁ = exp(-ε / (4k))`; the covariate total gets continuous Laplace noise
//! with scale `λ₂ = 2 p k z* / ε`. Each channel spends `ε / 2`.

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::SufficientStats;
use crate::rng::stream_rng;

/// Total privacy parameter `epsilon` against changes of up to `k` edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    k: u64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, k: u64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidBudget(format!("epsilon must be finite and > 0, got {epsilon}")));
        }
        if k == 0 {
            return Err(Error::InvalidBudget("k must be at least 1".into()));
        }
        Ok(Self { epsilon, k })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// `λ₁ = exp(-ε/(4k))`, the discrete-noise parameter for the degrees.
    pub fn lambda_degree(&self) -> f64 {
        (-self.epsilon / (4.0 * self.k as f64)).exp()
    }

    /// `λ₂ = 2 p k z* / ε`, the Laplace scale for the covariate total.
    pub fn lambda_covariate(&self, p: usize, z_star: f64) -> f64 {
        2.0 * p as f64 * self.k as f64 * z_star / self.epsilon
    }
}

/// L1 global sensitivity of the degree sequence: `2k`.
pub fn sensitivity_degree(budget: &PrivacyBudget) -> u64 {
    2 * budget.k()
}

/// L1 global sensitivity of `Σ a_ij z_ij`: `p k z*`.
pub fn sensitivity_covariate(budget: &PrivacyBudget, p: usize, z_star: f64) -> Result<f64> {
    if !(z_star.is_finite() && z_star >= 0.0) {
        return Err(Error::InvalidParameter(format!("z* must be finite and >= 0, got {z_star}")));
    }
    Ok(p as f64 * budget.k() as f64 * z_star)
}

/// One draw with `P(X = x) = (1-λ)/(1+λ) λ^|x|`, as the difference of two
/// i.i.d. `Geometric(1 - λ)` failure counts.
pub fn sample_discrete_laplace<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<i64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!("discrete Laplace needs 0 < λ < 1, got {lambda}")));
    }
    let geom = Geometric::new(1.0 - lambda)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let a = geom.sample(rng) as i64;
    let b = geom.sample(rng) as i64;
    Ok(a - b)
}

/// One Laplace(0, `scale`) draw, as the difference of two exponentials.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParameter(format!("Laplace scale must be > 0, got {scale}")));
    }
    let exp = Exp::new(1.0 / scale).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(exp.sample(rng) - exp.sample(rng))
}

/// Noisy sufficient statistics plus the calibration that produced them.
///
/// `budget == None` marks an exact (non-private) release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ReleasedWire", try_from = "ReleasedWire")]
pub struct ReleasedStats {
    pub d_tilde: Vec<i64>,
    pub y_tilde: Vec<f64>,
    pub budget: Option<PrivacyBudget>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub seed: Option<u64>,
}

impl ReleasedStats {
    /// The statistics themselves, without noise.
    pub fn exact(stats: &SufficientStats) -> Self {
        Self {
            d_tilde: stats.d.iter().map(|&d| d as i64).collect(),
            y_tilde: stats.y.clone(),
            budget: None,
            lambda1: 0.0,
            lambda2: 0.0,
            seed: None,
        }
    }

    pub fn n(&self) -> usize {
        self.d_tilde.len()
    }

    pub fn p(&self) -> usize {
        self.y_tilde.len()
    }

    pub fn d_tilde_f64(&self) -> Vec<f64> {
        self.d_tilde.iter().map(|&d| d as f64).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ReleasedWire {
    n: usize,
    p: usize,
    d_tilde: Vec<i64>,
    y_tilde: Vec<f64>,
    epsilon: Option<f64>,
    k: Option<u64>,
    lambda1: f64,
    lambda2: f64,
    seed: Option<u64>,
}

impl From<ReleasedStats> for ReleasedWire {
    fn from(r: ReleasedStats) -> Self {
        Self {
            n: r.d_tilde.len(),
            p: r.y_tilde.len(),
            epsilon: r.budget.map(|b| b.epsilon()),
            k: r.budget.map(|b| b.k()),
            d_tilde: r.d_tilde,
            y_tilde: r.y_tilde,
            lambda1: r.lambda1,
            lambda2: r.lambda2,
            seed: r.seed,
        }
    }
}

impl TryFrom<ReleasedWire> for ReleasedStats {
    type Error = Error;

    fn try_from(w: ReleasedWire) -> Result<Self> {
        if w.d_tilde.len() != w.n {
            return Err(Error::DimensionMismatch { what: "d_tilde", got: w.d_tilde.len(), expected: w.n });
        }
        if w.y_tilde.len() != w.p {
            return Err(Error::DimensionMismatch { what: "y_tilde", got: w.y_tilde.len(), expected: w.p });
        }
        let budget = match (w.epsilon, w.k) {
            (Some(e), Some(k)) => Some(PrivacyBudget::new(e, k)?),
            (None, None) => None,
            _ => return Err(Error::InvalidBudget("epsilon and k must both be present or both absent".into())),
        };
        Ok(Self {
            d_tilde: w.d_tilde,
            y_tilde: w.y_tilde,
            budget,
            lambda1: w.lambda1,
            lambda2: w.lambda2,
            seed: w.seed,
        })
    }
}

/// Releases `(d̃, ỹ)` drawing noise from `rng`.
///
/// `p` is taken from `stats.y`; with `p = 0` only the degrees are perturbed.
/// When `λ₁` underflows to zero (huge ε) the degree noise is identically zero.
pub fn release_with_rng<R: Rng + ?Sized>(
    stats: &SufficientStats,
    budget: PrivacyBudget,
    z_star: f64,
    rng: &mut R,
) -> Result<ReleasedStats> {
    let p = stats.y.len();
    sensitivity_covariate(&budget, p, z_star)?;
    let lambda1 = budget.lambda_degree();
    let lambda2 = budget.lambda_covariate(p, z_star);

    let mut d_tilde = Vec::with_capacity(stats.d.len());
    for &d in &stats.d {
        let xi = if lambda1 > 0.0 { sample_discrete_laplace(lambda1, rng)? } else { 0 };
        d_tilde.push(d as i64 + xi);
    }
    let mut y_tilde = Vec::with_capacity(p);
    for &y in &stats.y {
        let eta = if lambda2 > 0.0 { sample_laplace(lambda2, rng)? } else { 0.0 };
        y_tilde.push(y + eta);
    }
    Ok(ReleasedStats {
        d_tilde,
        y_tilde,
        budget: Some(budget),
        lambda1,
        lambda2,
        seed: None,
    })
}

/// Seeded release; the seed is recorded in the output.
pub fn release(
    stats: &SufficientStats,
    budget: PrivacyBudget,
    z_star: f64,
    seed: u64,
) -> Result<ReleasedStats> {
    let mut rng = stream_rng(seed, 0);
    let mut out = release_with_rng(stats, budget, z_star, &mut rng)?;
    out.seed = Some(seed);
    Ok(out)
}
