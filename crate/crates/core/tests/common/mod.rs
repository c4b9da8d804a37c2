#![allow(dead_code)]

use dpbeta::model::sample_network;
use dpbeta::{ModelParams, Network, PairCovariates};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Two covariates: a ±1 match indicator and a product of uniforms.
pub fn random_covariates(n: usize, rng: &mut impl Rng) -> PairCovariates {
    let attrs: Vec<(bool, f64)> = (0..n).map(|_| (rng.random::<bool>(), rng.random_range(-1.0..1.0))).collect();
    PairCovariates::from_node_attributes(&attrs, 2, |a, b, z| {
        z[0] = if a.0 == b.0 { 1.0 } else { -1.0 };
        z[1] = a.1 * b.1;
    })
}

pub fn random_params(n: usize, spread: f64, rng: &mut impl Rng) -> ModelParams {
    let beta = (0..n).map(|_| spread * rng.random_range(-1.0..1.0)).collect();
    let gamma = vec![rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)];
    ModelParams::new(beta, gamma).unwrap()
}

pub fn random_network(n: usize, spread: f64, rng: &mut impl Rng) -> (ModelParams, Network) {
    let cov = random_covariates(n, rng);
    let params = random_params(n, spread, rng);
    let net = sample_network(&params, cov, rng).unwrap();
    (params, net)
}

/// Maximises the full log-likelihood over `(β, γ)` by damped Newton.
///
/// Deliberately shares no code with the library's estimator.
pub fn oracle_mle(net: &Network) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = net.n();
    let cov = net.covariates();
    let p = cov.p();
    let dim = n + p;
    let mut theta = DVector::<f64>::zeros(dim);

    let pairs: Vec<(usize, usize, Vec<f64>, f64)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, cov.get(i, j).to_vec(), if net.has_edge(i, j).unwrap() { 1.0 } else { 0.0 }))
        .collect();
    let eta = |t: &DVector<f64>, i: usize, j: usize, z: &[f64]| {
        t[i] + t[j] + z.iter().enumerate().map(|(k, zk)| zk * t[n + k]).sum::<f64>()
    };
    let loglik = |t: &DVector<f64>| -> f64 {
        pairs.iter().map(|(i, j, z, a)| {
            let e = eta(t, *i, *j, z);
            a * e - softplus(e)
        }).sum()
    };

    let mut ll = loglik(&theta);
    for _ in 0..200 {
        let mut grad = DVector::<f64>::zeros(dim);
        let mut info = DMatrix::<f64>::zeros(dim, dim);
        for (i, j, z, a) in &pairs {
            let m = sigmoid(eta(&theta, *i, *j, z));
            let w = m * (1.0 - m);
            let mut x = vec![(*i, 1.0), (*j, 1.0)];
            x.extend(z.iter().enumerate().map(|(k, &zk)| (n + k, zk)));
            for &(r, xr) in &x {
                grad[r] += (a - m) * xr;
                for &(c, xc) in &x {
                    info[(r, c)] += w * xr * xc;
                }
            }
        }
        if grad.amax() < 1e-11 {
            return Some((theta.rows(0, n).iter().copied().collect(), theta.rows(n, p).iter().copied().collect()));
        }
        let step = info.cholesky()?.solve(&grad);
        let mut t = 1.0;
        loop {
            let cand = &theta + &step * t;
            let cand_ll = loglik(&cand);
            if cand_ll >= ll - 1e-12 || t < 1e-8 {
                theta = cand;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
        }
        if theta.amax() > 50.0 {
            return None;
        }
    }
    None
}

/// Central difference Jacobian of `f` at `x`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + h;
        let fp = f(&xp);
        xp[c] = x[c] - h;
        let fm = f(&xp);
        xp[c] = x[c];
        for r in 0..m {
            jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// Largest `|a - b| / max(|b|, floor)` over entries.
pub fn max_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs() / y.abs().max(floor)).fold(0.0, f64::max)
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Discrete Laplace pmf `(1-λ)/(1+λ) λ^{|x|}`.
pub fn discrete_laplace_pmf(lambda: f64, x: i64) -> f64 {
    (1.0 - lambda) / (1.0 + lambda) * lambda.powi(x.unsigned_abs() as i32)
}

/// Pearson chi-square of integer draws against the discrete Laplace pmf.
/// Cells are `|x| <= K` individually plus two tails, with `K` chosen so every
/// expected count is at least 5. Returns `(statistic, degrees of freedom)`.
pub fn discrete_laplace_chi_square(draws: &[i64], lambda: f64) -> (f64, usize) {
    let total = draws.len() as f64;
    let mut k = 0i64;
    while total * discrete_laplace_pmf(lambda, k + 1) >= 5.0
        && total * discrete_laplace_pmf(lambda, k + 1) * lambda / (1.0 - lambda) >= 5.0
    {
        k += 1;
    }
    let cells = (2 * k + 3) as usize;
    let mut observed = vec![0.0; cells];
    for &x in draws {
        let c = if x < -k { 0 } else if x > k { cells - 1 } else { (x + k + 1) as usize };
        observed[c] += 1.0;
    }
    // P(X > k) = λ^{k+1} / (1 + λ)
    let tail = lambda.powi(k as i32 + 1) / (1.0 + lambda);
    let mut stat = 0.0;
    for (c, &o) in observed.iter().enumerate() {
        let prob = if c == 0 || c == cells - 1 { tail } else { discrete_laplace_pmf(lambda, c as i64 - k - 1) };
        let e = total * prob;
        stat += (o - e).powi(2) / e;
    }
    (stat, cells - 1)
}

/// Kolmogorov–Smirnov statistic of `draws` against Laplace(0, `scale`).
pub fn laplace_ks(draws: &[f64], scale: f64) -> f64 {
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    let cdf = |x: f64| if x < 0.0 { 0.5 * (x / scale).exp() } else { 1.0 - 0.5 * (-x / scale).exp() };
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at `alpha` for sample size `m`.
pub fn ks_critical(alpha: f64, m: usize) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (m as f64).sqrt()
}
