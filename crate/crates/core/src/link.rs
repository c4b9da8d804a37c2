//! Logistic link `μ(x) = eˣ/(1+eˣ)` and its first three derivatives.
//!
//! Everything is evaluated through `t = e^{-|x|}` so nothing overflows for
//! large `|x|`.

/// Logistic function.
#[inline]
pub fn mu(x: f64) -> f64 {
    let t = (-x.abs()).exp();
    if x >= 0.0 {
        1.0 / (1.0 + t)
    } else {
        t / (1.0 + t)
    }
}

/// First derivative `μ'(x) = μ(x)(1 - μ(x))`.
#[inline]
pub fn mu_prime(x: f64) -> f64 {
    let t = (-x.abs()).exp();
    t / ((1.0 + t) * (1.0 + t))
}

/// First, second and third derivatives of the logistic function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuDerivs {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// `(μ', μ'', μ''')` at `x`.
///
/// Uses `μ'' = μ'(1 - 2μ)` and `μ''' = μ'(1 - 6μ')`.
#[inline]
pub fn mu_derivs(x: f64) -> MuDerivs {
    let t = (-x.abs()).exp();
    let d1 = t / ((1.0 + t) * (1.0 + t));
    // 1 - 2μ(x), written without cancellation
    let centered = -x.signum() * (1.0 - t) / (1.0 + t);
    MuDerivs {
        d1,
        d2: d1 * centered,
        d3: d1 * (1.0 - 6.0 * d1),
    }
}

/// `log(1 + eˣ)` without overflow.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
