//! Moment estimation from released statistics.
//!
//! The estimating equations are
//!
//! ```text
//! F_i(β, γ) = Σ_{j≠i} μ(π_ij) - d̃_i = 0,   i = 1..n
//! Q(β, γ)   = Σ_{i<j} z_ij μ(π_ij) - ỹ = 0
//! ```
//!
//! and are solved in two nested stages. For fixed `γ` the degree equations are
//! solved by the multiplicative fixed-point map
//! `β_i ← β_i + log d̃_i - log Σ_j μ(π_ij)` (all coordinates from the previous
//! iterate). The outer stage runs Newton on the profiled residual
//! `Q_c(γ) = Q(β̂_γ, γ)`, whose Jacobian is the Schur complement
//! `H = ∂Q/∂γ - ∂Q/∂β V⁻¹ ∂F/∂γ` with `V = ∂F/∂β`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, NonExistence, Result};
use crate::link::{mu, mu_prime};
use crate::model::{dot, for_each_pair, ModelParams};
use crate::network::{pair_count, PairCovariates};
use crate::privacy::ReleasedStats;

/// Stopping rules and detectors for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Inner loop stops once `‖β⁽ᵗ⁺¹⁾ - β⁽ᵗ⁾‖∞` falls below this.
    pub beta_tol: f64,
    /// Outer loop stops once `‖γ⁽ˢ⁺¹⁾ - γ⁽ˢ⁾‖∞` falls below this.
    pub gamma_tol: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    /// `‖β‖∞` beyond this is treated as divergence.
    pub beta_divergence_bound: f64,
    /// Replace `V⁻¹` by `diag(1/v_ii)` when forming `H`.
    pub use_s_approx: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            beta_tol: 1e-8,
            gamma_tol: 1e-8,
            max_inner_iters: 5000,
            max_outer_iters: 100,
            beta_divergence_bound: 30.0,
            use_s_approx: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_tol > 0.0 && self.gamma_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_inner_iters == 0 || self.max_outer_iters == 0 {
            return Err(Error::InvalidParameter("iteration caps must be at least 1".into()));
        }
        if self.beta_divergence_bound.is_nan() || self.beta_divergence_bound <= 0.0 {
            return Err(Error::InvalidParameter("divergence bound must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of [`fit`].
///
/// When `exists` is false the estimate vectors are empty and `failure` says
/// which detector fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta_hat: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub exists: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<NonExistence>,
    pub inner_iters: usize,
    pub outer_iters: usize,
    /// `‖F(β̂, γ̂)‖∞`, absent for failed fits.
    pub f_residual_norm: Option<f64>,
    /// `‖Q(β̂, γ̂)‖∞`, absent for failed fits.
    pub q_residual_norm: Option<f64>,
    #[serde(default, with = "matrix_rows", skip_serializing_if = "Option::is_none")]
    pub v: Option<DMatrix<f64>>,
    #[serde(default, with = "matrix_rows", skip_serializing_if = "Option::is_none")]
    pub h: Option<DMatrix<f64>>,
}

impl FitResult {
    fn failed(reason: NonExistence) -> Self {
        Self {
            beta_hat: Vec::new(),
            gamma_hat: Vec::new(),
            exists: false,
            failure: Some(reason),
            inner_iters: 0,
            outer_iters: 0,
            f_residual_norm: None,
            q_residual_norm: None,
            v: None,
            h: None,
        }
    }

    /// Fitted parameters; errors if the estimate does not exist.
    pub fn params(&self) -> Result<ModelParams> {
        if !self.exists {
            return Err(Error::NonExistent(
                self.failure.unwrap_or(NonExistence::InnerIterationLimit),
            ));
        }
        ModelParams::new(self.beta_hat.clone(), self.gamma_hat.clone())
    }

    /// Drops `V` and `H` (they can be recomputed from the estimates).
    pub fn without_matrices(mut self) -> Self {
        self.v = None;
        self.h = None;
        self
    }
}

/// Row-major `[[..], ..]` encoding for optional dense matrices.
mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref()
            .map(|m| {
                (0..m.nrows())
                    .map(|r| m.row(r).iter().copied().collect::<Vec<f64>>())
                    .collect::<Vec<_>>()
            })
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
        let Some(rows) = rows else { return Ok(None) };
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(Some(DMatrix::from_row_iterator(nrows, ncols, rows.into_iter().flatten())))
    }
}

fn check_dims(params: &ModelParams, cov: &PairCovariates, released: &ReleasedStats) -> Result<()> {
    params.check_against(cov)?;
    if released.n() != cov.n() {
        return Err(Error::DimensionMismatch { what: "d_tilde", got: released.n(), expected: cov.n() });
    }
    if released.p() != cov.p() {
        return Err(Error::DimensionMismatch { what: "y_tilde", got: released.p(), expected: cov.p() });
    }
    Ok(())
}

/// `F_i(β, γ) = Σ_{j≠i} μ(π_ij) - d̃_i`.
pub fn f_residual(params: &ModelParams, cov: &PairCovariates, released: &ReleasedStats) -> Result<Vec<f64>> {
    check_dims(params, cov, released)?;
    Ok(f_residual_raw(&params.beta, &params.gamma, cov, &released.d_tilde_f64()))
}

fn f_residual_raw(beta: &[f64], gamma: &[f64], cov: &PairCovariates, d: &[f64]) -> Vec<f64> {
    let mut f: Vec<f64> = d.iter().map(|&x| -x).collect();
    for_each_pair(beta, gamma, cov, |i, j, _, _, pi| {
        let m = mu(pi);
        f[i] += m;
        f[j] += m;
    });
    f
}

/// `Q(β, γ) = Σ_{i<j} z_ij μ(π_ij) - ỹ`.
pub fn q_residual(params: &ModelParams, cov: &PairCovariates, released: &ReleasedStats) -> Result<Vec<f64>> {
    check_dims(params, cov, released)?;
    Ok(q_residual_raw(&params.beta, &params.gamma, cov, &released.y_tilde))
}

fn q_residual_raw(beta: &[f64], gamma: &[f64], cov: &PairCovariates, y: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = y.iter().map(|&x| -x).collect();
    if q.is_empty() {
        return q;
    }
    for_each_pair(beta, gamma, cov, |_, _, _, z, pi| {
        let m = mu(pi);
        for (acc, zt) in q.iter_mut().zip(z) {
            *acc += zt * m;
        }
    });
    q
}

/// The four blocks of the Jacobian of `(F, Q)` with respect to `(β, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlocks {
    /// `V = ∂F/∂β`, `n × n`
    pub v: DMatrix<f64>,
    /// `∂F/∂γ`, `n × p`
    pub f_gamma: DMatrix<f64>,
    /// `∂Q/∂β`, `p × n`
    pub q_beta: DMatrix<f64>,
    /// `∂Q/∂γ`, `p × p`
    pub q_gamma: DMatrix<f64>,
}

pub fn jacobian_blocks(params: &ModelParams, cov: &PairCovariates) -> Result<JacobianBlocks> {
    params.check_against(cov)?;
    Ok(jacobian_raw(&params.beta, &params.gamma, cov))
}

fn jacobian_raw(beta: &[f64], gamma: &[f64], cov: &PairCovariates) -> JacobianBlocks {
    let n = cov.n();
    let p = cov.p();
    let mut v = DMatrix::zeros(n, n);
    let mut f_gamma = DMatrix::zeros(n, p);
    let mut q_beta = DMatrix::zeros(p, n);
    let mut q_gamma = DMatrix::zeros(p, p);
    for_each_pair(beta, gamma, cov, |i, j, _, z, pi| {
        let w = mu_prime(pi);
        v[(i, j)] = w;
        v[(j, i)] = w;
        v[(i, i)] += w;
        v[(j, j)] += w;
        for (t, &zt) in z.iter().enumerate() {
            let wz = w * zt;
            f_gamma[(i, t)] += wz;
            f_gamma[(j, t)] += wz;
            q_beta[(t, i)] += wz;
            q_beta[(t, j)] += wz;
            for (s, &zs) in z.iter().enumerate() {
                q_gamma[(t, s)] += wz * zs;
            }
        }
    });
    JacobianBlocks { v, f_gamma, q_beta, q_gamma }
}

/// `V = ∂F/∂β`: `v_ij = μ'(π_ij)` off the diagonal, `v_ii = Σ_{j≠i} v_ij`.
pub fn fisher_v(params: &ModelParams, cov: &PairCovariates) -> Result<DMatrix<f64>> {
    params.check_against(cov)?;
    let n = cov.n();
    let mut v = DMatrix::zeros(n, n);
    for_each_pair(&params.beta, &params.gamma, cov, |i, j, _, _, pi| {
        let w = mu_prime(pi);
        v[(i, j)] = w;
        v[(j, i)] = w;
        v[(i, i)] += w;
        v[(j, j)] += w;
    });
    Ok(v)
}

/// `S = diag(1/v_11, …, 1/v_nn)`, the diagonal stand-in for `V⁻¹`.
pub fn s_approx_inverse(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let diag = v.diagonal();
    if diag.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
        return Err(Error::Singular("V has a non-positive diagonal entry"));
    }
    Ok(DMatrix::from_diagonal(&diag.map(|x| 1.0 / x)))
}

/// Solves `V X = B` exactly (Cholesky) or with `S` in place of `V⁻¹`.
fn solve_v(v: &DMatrix<f64>, rhs: &DMatrix<f64>, use_s: bool) -> Result<DMatrix<f64>> {
    if use_s {
        let s = s_approx_inverse(v)?;
        return Ok(s * rhs);
    }
    let chol = v.clone().cholesky().ok_or(Error::Singular("V is not positive definite"))?;
    Ok(chol.solve(rhs))
}

/// Profiled Jacobian `H = ∂Q/∂γ - ∂Q/∂β V⁻¹ ∂F/∂γ` at `params`.
pub fn h_matrix(params: &ModelParams, cov: &PairCovariates, use_s_approx: bool) -> Result<DMatrix<f64>> {
    params.check_against(cov)?;
    let blocks = jacobian_raw(&params.beta, &params.gamma, cov);
    h_from_blocks(&blocks, use_s_approx)
}

pub fn h_from_blocks(blocks: &JacobianBlocks, use_s_approx: bool) -> Result<DMatrix<f64>> {
    if blocks.q_gamma.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let x = solve_v(&blocks.v, &blocks.f_gamma, use_s_approx)?;
    Ok(&blocks.q_gamma - &blocks.q_beta * x)
}

/// Inner-stage solution `β̂_γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSolution {
    pub beta: Vec<f64>,
    pub iterations: usize,
}

/// Screens released degrees: every `d̃_i` must lie strictly inside `(0, n-1)`.
pub fn screen_degrees(d_tilde: &[f64]) -> std::result::Result<(), NonExistence> {
    let upper = d_tilde.len() as f64 - 1.0;
    for (node, &d) in d_tilde.iter().enumerate() {
        if d <= 0.0 {
            return Err(NonExistence::DegreeNotPositive { node });
        }
        if d >= upper {
            return Err(NonExistence::DegreeAtMaximum { node });
        }
    }
    Ok(())
}

/// Solves `F(β, γ) = 0` in `β` for fixed `gamma` by the fixed-point map.
///
/// Without a warm start, iteration begins at `β_i = logit(d̃_i/(n-1)) / 2`.
pub fn solve_beta_given_gamma(
    gamma: &[f64],
    cov: &PairCovariates,
    d_tilde: &[f64],
    config: &FitConfig,
    warm_start: Option<&[f64]>,
) -> Result<BetaSolution> {
    let n = cov.n();
    if d_tilde.len() != n {
        return Err(Error::DimensionMismatch { what: "d_tilde", got: d_tilde.len(), expected: n });
    }
    if gamma.len() != cov.p() {
        return Err(Error::DimensionMismatch { what: "gamma", got: gamma.len(), expected: cov.p() });
    }
    screen_degrees(d_tilde)?;

    let offsets: Vec<f64> = (0..pair_count(n)).map(|idx| dot(cov.by_index(idx), gamma)).collect();
    let log_d: Vec<f64> = d_tilde.iter().map(|d| d.ln()).collect();

    let mut beta: Vec<f64> = match warm_start {
        Some(w) if w.len() == n && w.iter().all(|b| b.is_finite()) => w.to_vec(),
        Some(w) if w.len() != n => {
            return Err(Error::DimensionMismatch { what: "warm start", got: w.len(), expected: n })
        }
        _ => d_tilde
            .iter()
            .map(|&d| 0.5 * (d / (n as f64 - 1.0 - d)).ln())
            .collect(),
    };
    let mut expected = vec![0.0; n];

    for iteration in 1..=config.max_inner_iters {
        expected.iter_mut().for_each(|e| *e = 0.0);
        let mut idx = 0;
        for i in 0..n {
            let bi = beta[i];
            for j in (i + 1)..n {
                let m = mu(bi + beta[j] + offsets[idx]);
                expected[i] += m;
                expected[j] += m;
                idx += 1;
            }
        }
        let mut step = 0.0_f64;
        let mut sup = 0.0_f64;
        for i in 0..n {
            let delta = log_d[i] - expected[i].ln();
            beta[i] += delta;
            step = step.max(delta.abs());
            sup = sup.max(beta[i].abs());
        }
        if !sup.is_finite() || sup > config.beta_divergence_bound {
            return Err(NonExistence::Diverged { iteration }.into());
        }
        if step < config.beta_tol {
            return Ok(BetaSolution { beta, iterations: iteration });
        }
    }
    Err(NonExistence::InnerIterationLimit.into())
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Two-stage solve of the estimating equations.
///
/// Returns `Err` only for invalid input (`n < 3`, dimension mismatches, bad
/// config). Non-existence of the estimate is reported in the result.
pub fn fit(released: &ReleasedStats, cov: &PairCovariates, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let n = cov.n();
    let p = cov.p();
    if n < 3 {
        return Err(Error::InvalidParameter(format!("fit needs n >= 3, got {n}")));
    }
    if released.n() != n {
        return Err(Error::DimensionMismatch { what: "d_tilde", got: released.n(), expected: n });
    }
    if released.p() != p {
        return Err(Error::DimensionMismatch { what: "y_tilde", got: released.p(), expected: p });
    }
    let d = released.d_tilde_f64();
    if let Err(reason) = screen_degrees(&d) {
        return Ok(FitResult::failed(reason));
    }

    let mut gamma = vec![0.0; p];
    let mut beta: Option<Vec<f64>> = None;
    let mut inner_total = 0;
    let mut outer = 0;

    macro_rules! inner {
        ($gamma:expr) => {
            match solve_beta_given_gamma($gamma, cov, &d, config, beta.as_deref()) {
                Ok(sol) => {
                    inner_total += sol.iterations;
                    sol.beta
                }
                Err(Error::NonExistent(reason)) => {
                    let mut res = FitResult::failed(reason);
                    res.inner_iters = inner_total;
                    res.outer_iters = outer;
                    return Ok(res);
                }
                Err(e) => return Err(e),
            }
        };
    }

    beta = Some(inner!(&gamma));
    let mut converged = p == 0;
    while !converged {
        if outer == config.max_outer_iters {
            let mut res = FitResult::failed(NonExistence::OuterIterationLimit);
            res.inner_iters = inner_total;
            res.outer_iters = outer;
            return Ok(res);
        }
        outer += 1;
        let b = beta.as_deref().expect("inner solution");
        let q = q_residual_raw(b, &gamma, cov, &released.y_tilde);
        let blocks = jacobian_raw(b, &gamma, cov);
        let step = h_from_blocks(&blocks, config.use_s_approx)
            .ok()
            .and_then(|h| h.lu().solve(&DVector::from_vec(q)));
        let Some(step) = step else {
            let mut res = FitResult::failed(NonExistence::SingularJacobian);
            res.inner_iters = inner_total;
            res.outer_iters = outer;
            return Ok(res);
        };
        for (g, s) in gamma.iter_mut().zip(step.iter()) {
            *g -= s;
        }
        if gamma.iter().any(|g| !g.is_finite()) {
            let mut res = FitResult::failed(NonExistence::Diverged { iteration: outer });
            res.inner_iters = inner_total;
            res.outer_iters = outer;
            return Ok(res);
        }
        converged = sup_norm(step.as_slice()) < config.gamma_tol;
        beta = Some(inner!(&gamma));
    }

    let beta = beta.expect("inner solution");
    let f_norm = sup_norm(&f_residual_raw(&beta, &gamma, cov, &d));
    let q_norm = sup_norm(&q_residual_raw(&beta, &gamma, cov, &released.y_tilde));
    let blocks = jacobian_raw(&beta, &gamma, cov);
    let h = h_from_blocks(&blocks, config.use_s_approx)?;
    Ok(FitResult {
        beta_hat: beta,
        gamma_hat: gamma,
        exists: true,
        failure: None,
        inner_iters: inner_total,
        outer_iters: outer,
        f_residual_norm: Some(f_norm),
        q_residual_norm: Some(q_norm),
        v: Some(blocks.v),
        h: Some(h),
    })
}
