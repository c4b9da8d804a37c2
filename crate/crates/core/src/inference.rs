//! Standard errors, Wald intervals and bias correction for fitted models.
//!
//! * `β_i - β_j` uses `se = (1/v̂_ii + 1/v̂_jj)^{1/2}` with `v̂_ii = Σ_{j≠i} μ'(π̂_ij)`.
//! * `γ` uses the inverse profiled information `H(β̂, γ̂)⁻¹` as its covariance.
//! * The incidental-parameter bias of `γ̂` is estimated from
//!   `B = N^{-1/2} Σ_k [Σ_{j≠k} z_kj μ''(π_kj)] / [Σ_{j≠k} μ'(π_kj)]`.
//!
//! All of it is conditional on the estimate existing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::{h_from_blocks, jacobian_blocks, FitResult};
use crate::link::mu_derivs;
use crate::model::{for_each_pair, ModelParams};
use crate::network::{pair_count, PairCovariates};

/// Standard normal quantile.
pub fn normal_quantile(prob: f64) -> f64 {
    Normal::standard().inverse_cdf(prob)
}

/// Two-sided critical value `z_{(1+level)/2}`.
pub fn critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level must be in (0, 1), got {level}")));
    }
    Ok(normal_quantile(0.5 + level / 2.0))
}

/// A labelled Wald interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInterval {
    pub parameter: String,
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl ParamInterval {
    fn wald(parameter: String, estimate: f64, std_error: f64, level: f64) -> Result<Self> {
        let z = critical_value(level)?;
        Ok(Self {
            parameter,
            estimate,
            std_error,
            lower: estimate - z * std_error,
            upper: estimate + z * std_error,
            level,
        })
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// How `Cov(γ̂)` is formed from `H = H(β̂, γ̂)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaVariance {
    /// `H⁻¹`, from the linearisation `γ̂ - γ ≈ H⁻¹ Σ s_ij`.
    #[default]
    ProfiledInverse,
    /// `H / N²`, i.e. `Var(√N cᵀγ̂) = cᵀ H̄ c` with `H̄ = H/N`. Kept for comparison only.
    InformationScaled,
}

/// Which bias-correction formula to apply to `γ̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasCorrection {
    /// `γ̂ + (√N / 2) H⁻¹ B̂`: removes the second-order bias
    /// `E[γ̂ - γ] ≈ -½ H⁻¹ Σ_k Σ_j z_kj μ''_kj / v_kk`.
    #[default]
    SecondOrder,
    /// `γ̂ - N^{-1/2} H⁻¹ B̂`, taken literally. Its magnitude is `O(n⁻³)`.
    Literal,
}

fn require_exists(fit: &FitResult) -> Result<ModelParams> {
    fit.params()
}

/// Returns `(V, H)` for `fit`, recomputing them if the fit was stored without matrices.
pub fn fit_matrices(fit: &FitResult, cov: &PairCovariates) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let params = require_exists(fit)?;
    match (&fit.v, &fit.h) {
        (Some(v), Some(h)) => Ok((v.clone(), h.clone())),
        _ => {
            let blocks = jacobian_blocks(&params, cov)?;
            let h = h_from_blocks(&blocks, false)?;
            Ok((blocks.v, h))
        }
    }
}

/// Wald interval for the contrast `β_i - β_j` (0-based nodes).
pub fn beta_contrast_ci(fit: &FitResult, i: usize, j: usize, level: f64) -> Result<ParamInterval> {
    let params = require_exists(fit)?;
    let n = params.beta.len();
    for index in [i, j] {
        if index >= n {
            return Err(Error::NodeOutOfRange { index, n });
        }
    }
    if i == j {
        return Err(Error::SelfPair(i));
    }
    let v = fit
        .v
        .as_ref()
        .ok_or_else(|| Error::Data("fit carries no V matrix; recompute with fit_matrices".into()))?;
    let se = (1.0 / v[(i, i)] + 1.0 / v[(j, j)]).sqrt();
    ParamInterval::wald(
        format!("beta[{}]-beta[{}]", i + 1, j + 1),
        params.beta[i] - params.beta[j],
        se,
        level,
    )
}

/// The plug-in bias vector `B` at `params`.
pub fn bias_b(params: &ModelParams, cov: &PairCovariates) -> Result<Vec<f64>> {
    params.check_against(cov)?;
    let n = cov.n();
    let p = cov.p();
    if p == 0 {
        return Ok(Vec::new());
    }
    let mut num = vec![0.0; n * p];
    let mut den = vec![0.0; n];
    for_each_pair(&params.beta, &params.gamma, cov, |i, j, _, z, pi| {
        let d = mu_derivs(pi);
        den[i] += d.d1;
        den[j] += d.d1;
        for (t, &zt) in z.iter().enumerate() {
            num[i * p + t] += zt * d.d2;
            num[j * p + t] += zt * d.d2;
        }
    });
    let mut b = vec![0.0; p];
    for k in 0..n {
        for t in 0..p {
            b[t] += num[k * p + t] / den[k];
        }
    }
    let scale = (pair_count(n) as f64).sqrt();
    b.iter_mut().for_each(|x| *x /= scale);
    Ok(b)
}

fn solve_h(h: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    h.clone()
        .lu()
        .solve(&DVector::from_column_slice(rhs))
        .map(|x| x.as_slice().to_vec())
        .ok_or(Error::Singular("H is singular"))
}

/// Bias-corrected `γ̂_bc` under `rule`.
pub fn bias_correct(fit: &FitResult, cov: &PairCovariates, rule: BiasCorrection) -> Result<Vec<f64>> {
    let params = require_exists(fit)?;
    if params.gamma.is_empty() {
        return Ok(Vec::new());
    }
    let (_, h) = fit_matrices(fit, cov)?;
    let b = bias_b(&params, cov)?;
    apply_bias_correction(&params.gamma, &h, &b, cov.n(), rule)
}

pub(crate) fn apply_bias_correction(
    gamma: &[f64],
    h: &DMatrix<f64>,
    b: &[f64],
    n: usize,
    rule: BiasCorrection,
) -> Result<Vec<f64>> {
    let shift = solve_h(h, b)?;
    let root_n = (pair_count(n) as f64).sqrt();
    let factor = match rule {
        BiasCorrection::SecondOrder => 0.5 * root_n,
        BiasCorrection::Literal => -1.0 / root_n,
    };
    Ok(gamma.iter().zip(&shift).map(|(g, s)| g + factor * s).collect())
}

/// Estimated covariance of `γ̂`.
pub fn gamma_covariance(h: &DMatrix<f64>, n: usize, variance: GammaVariance) -> Result<DMatrix<f64>> {
    match variance {
        GammaVariance::ProfiledInverse => h.clone().try_inverse().ok_or(Error::Singular("H is singular")),
        GammaVariance::InformationScaled => {
            let nn = pair_count(n) as f64;
            Ok(h / (nn * nn))
        }
    }
}

/// Options for γ intervals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GammaCiOptions {
    pub bias_correct: bool,
    pub correction: BiasCorrection,
    pub variance: GammaVariance,
}

/// Wald intervals for each `γ_t`, optionally centred at `γ̂_bc`.
pub fn gamma_ci(
    fit: &FitResult,
    cov: &PairCovariates,
    level: f64,
    opts: GammaCiOptions,
) -> Result<Vec<ParamInterval>> {
    let params = require_exists(fit)?;
    if params.gamma.is_empty() {
        return Ok(Vec::new());
    }
    let (_, h) = fit_matrices(fit, cov)?;
    let cov_gamma = gamma_covariance(&h, cov.n(), opts.variance)?;
    let (centre, label) = if opts.bias_correct {
        let b = bias_b(&params, cov)?;
        (apply_bias_correction(&params.gamma, &h, &b, cov.n(), opts.correction)?, "gamma_bc")
    } else {
        (params.gamma.clone(), "gamma")
    };
    centre
        .iter()
        .enumerate()
        .map(|(t, &g)| ParamInterval::wald(format!("{label}[{}]", t + 1), g, cov_gamma[(t, t)].sqrt(), level))
        .collect()
}

/// Everything [`InferenceReport::build`] needs besides the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    pub level: f64,
    /// 0-based node pairs for contrast intervals.
    pub pairs: Vec<(usize, usize)>,
    pub correction: BiasCorrection,
    pub variance: GammaVariance,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            pairs: Vec::new(),
            correction: BiasCorrection::default(),
            variance: GammaVariance::default(),
        }
    }
}

/// Per-parameter inference for a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub level: f64,
    /// `v̂_ii`, the diagonal of `V` at the estimate.
    pub v_diag: Vec<f64>,
    /// Estimated `Cov(γ̂)`, row-major.
    pub gamma_cov: Vec<Vec<f64>>,
    pub b_hat: Vec<f64>,
    pub gamma_bc: Vec<f64>,
    pub intervals: Vec<ParamInterval>,
}

impl InferenceReport {
    /// Intervals for every `β_i` (se `v̂_ii^{-1/2}`), each requested contrast,
    /// and `γ` both uncorrected and bias-corrected.
    pub fn build(fit: &FitResult, cov: &PairCovariates, opts: &InferenceOptions) -> Result<Self> {
        let params = require_exists(fit)?;
        let (v, h) = fit_matrices(fit, cov)?;
        let mut with_mats = fit.clone();
        with_mats.v = Some(v.clone());
        with_mats.h = Some(h.clone());

        let v_diag: Vec<f64> = v.diagonal().iter().copied().collect();
        let mut intervals = Vec::new();
        for (i, (&b, &vii)) in params.beta.iter().zip(&v_diag).enumerate() {
            intervals.push(ParamInterval::wald(format!("beta[{}]", i + 1), b, vii.powf(-0.5), opts.level)?);
        }
        for &(i, j) in &opts.pairs {
            intervals.push(beta_contrast_ci(&with_mats, i, j, opts.level)?);
        }

        let (gamma_cov, b_hat, gamma_bc) = if params.gamma.is_empty() {
            (Vec::new(), Vec::new(), Vec::new())
        } else {
            let c = gamma_covariance(&h, cov.n(), opts.variance)?;
            let b = bias_b(&params, cov)?;
            let bc = apply_bias_correction(&params.gamma, &h, &b, cov.n(), opts.correction)?;
            for bias_correct in [false, true] {
                let g = GammaCiOptions { bias_correct, correction: opts.correction, variance: opts.variance };
                intervals.extend(gamma_ci(&with_mats, cov, opts.level, g)?);
            }
            let rows = (0..c.nrows()).map(|r| c.row(r).iter().copied().collect()).collect();
            (rows, b, bc)
        };

        Ok(Self { level: opts.level, v_diag, gamma_cov, b_hat, gamma_bc, intervals })
    }

    /// One row per interval: `parameter,estimate,std_error,lower,upper,level`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,estimate,std_error,lower,upper,level\n");
        for iv in &self.intervals {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                iv.parameter, iv.estimate, iv.std_error, iv.lower, iv.upper, iv.level
            ));
        }
        out
    }
}
