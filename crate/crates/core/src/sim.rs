//! Monte-Carlo harness: sample → release → fit → inference, repeated.
//!
//! Replication `r` draws everything from stream `r` of the design seed, so the
//! table does not depend on the worker count or on scheduling.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, NonExistence, Result};
use crate::estimator::{fit, FitConfig, FitResult};
use crate::inference::{
    beta_contrast_ci, gamma_ci, normal_quantile, BiasCorrection, GammaCiOptions, GammaVariance,
};
use crate::model::{sample_network, ModelParams};
use crate::network::{sufficient_stats, PairCovariates};
use crate::privacy::{release_with_rng, PrivacyBudget, ReleasedStats};
use crate::rng::stream_rng;

/// Stream reserved for covariates shared by all replications.
const FIXED_COVARIATE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonRule {
    /// `log n / n^{1/6}`
    LognN16,
    /// `log n / n^{1/4}`
    LognN14,
    Custom(f64),
    /// Release the exact statistics.
    NoPrivacy,
}

pub fn epsilon_of(rule: EpsilonRule, n: usize) -> Option<f64> {
    let nf = n as f64;
    match rule {
        EpsilonRule::LognN16 => Some(nf.ln() / nf.powf(1.0 / 6.0)),
        EpsilonRule::LognN14 => Some(nf.ln() / nf.powf(0.25)),
        EpsilonRule::Custom(e) => Some(e),
        EpsilonRule::NoPrivacy => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateMode {
    /// New node attributes in every replication.
    #[default]
    Redraw,
    /// One draw shared by all replications.
    Fixed,
}

/// `β*_i = (i - 1) c log n / (n - 1)` for `i = 1..n`.
pub fn make_beta_star(n: usize, c: f64) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let step = c * (n as f64).ln() / (n as f64 - 1.0);
    (0..n).map(|i| i as f64 * step).collect()
}

/// Two ±1 node attributes (`P(x₁ = 1) = 0.4`, `P(x₂ = 1) = 0.5`) and
/// `z_ij = (x_i1 x_j1, x_i2 x_j2)`.
pub fn make_sim_covariates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PairCovariates {
    let sign = |r: &mut R, p: f64| if r.random::<f64>() < p { 1.0 } else { -1.0 };
    let attrs: Vec<[f64; 2]> = (0..n).map(|_| [sign(rng, 0.4), sign(rng, 0.5)]).collect();
    PairCovariates::from_node_attributes(&attrs, 2, |a, b, z| {
        z[0] = a[0] * b[0];
        z[1] = a[1] * b[1];
    })
}

fn default_k() -> u64 {
    1
}
fn default_gamma() -> Vec<f64> {
    vec![0.5, -0.5]
}
fn default_level() -> f64 {
    0.95
}
fn default_pairs() -> Vec<(usize, usize)> {
    vec![(1, 2)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub c: f64,
    pub epsilon_rule: EpsilonRule,
    #[serde(default = "default_k")]
    pub k: u64,
    #[serde(default = "default_gamma")]
    pub gamma_star: Vec<f64>,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// 1-based node pairs for β contrasts.
    #[serde(default = "default_pairs")]
    pub pairs: Vec<(usize, usize)>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub covariates: CovariateMode,
    #[serde(default)]
    pub correction: BiasCorrection,
    #[serde(default)]
    pub fit: FitConfig,
}

impl SimDesign {
    /// Standard design (`γ* = (0.5, -0.5)`, `k = 1`, pair (1, 2)) for the given `n`, `c`, ε and R.
    pub fn new(n: usize, c: f64, epsilon_rule: EpsilonRule, replications: usize, seed: u64) -> Self {
        Self {
            n,
            c,
            epsilon_rule,
            k: 1,
            gamma_star: default_gamma(),
            replications,
            seed,
            pairs: default_pairs(),
            level: 0.95,
            covariates: CovariateMode::Redraw,
            correction: BiasCorrection::SecondOrder,
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n < 3 {
            return bad(format!("n must be at least 3, got {}", self.n));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return bad(format!("c must be finite and >= 0, got {}", self.c));
        }
        if self.gamma_star.len() != 2 {
            return bad(format!("gamma_star must have 2 entries, got {}", self.gamma_star.len()));
        }
        if self.gamma_star.iter().any(|g| !g.is_finite()) {
            return bad("gamma_star must be finite".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level must be in (0, 1), got {}", self.level));
        }
        for &(i, j) in &self.pairs {
            if i == 0 || j == 0 || i > self.n || j > self.n || i == j {
                return bad(format!("pair ({i}, {j}) is not a valid 1-based pair for n = {}", self.n));
            }
        }
        if let Some(eps) = epsilon_of(self.epsilon_rule, self.n) {
            PrivacyBudget::new(eps, self.k)?;
        }
        self.fit.validate()
    }

    pub fn epsilon(&self) -> Option<f64> {
        epsilon_of(self.epsilon_rule, self.n)
    }
}

/// What one replication produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub failure: Option<NonExistence>,
    pub pairs: Vec<ContrastOutcome>,
    pub gamma: Vec<GammaOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastOutcome {
    pub covered: bool,
    pub length: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaOutcome {
    pub estimate: f64,
    pub corrected: f64,
    pub covered: bool,
    pub covered_corrected: bool,
    pub length: f64,
}

fn release_for(design: &SimDesign, net: &crate::network::Network, rng: &mut impl Rng) -> Result<ReleasedStats> {
    let stats = sufficient_stats(net);
    match design.epsilon() {
        None => Ok(ReleasedStats::exact(&stats)),
        Some(eps) => {
            let budget = PrivacyBudget::new(eps, design.k)?;
            release_with_rng(&stats, budget, net.covariates().z_star(), rng)
        }
    }
}

fn summarise(design: &SimDesign, index: usize, beta_star: &[f64], cov: &PairCovariates, f: &FitResult) -> Result<Replication> {
    let mut pairs = Vec::with_capacity(design.pairs.len());
    for &(i, j) in &design.pairs {
        let ci = beta_contrast_ci(f, i - 1, j - 1, design.level)?;
        let truth = beta_star[i - 1] - beta_star[j - 1];
        pairs.push(ContrastOutcome {
            covered: ci.contains(truth),
            length: ci.length(),
            xi: (ci.estimate - truth) / ci.std_error,
        });
    }
    let opts = |bias_correct| GammaCiOptions {
        bias_correct,
        correction: design.correction,
        variance: GammaVariance::ProfiledInverse,
    };
    let plain = gamma_ci(f, cov, design.level, opts(false))?;
    let corrected = gamma_ci(f, cov, design.level, opts(true))?;
    let gamma = plain
        .iter()
        .zip(&corrected)
        .zip(&design.gamma_star)
        .map(|((u, c), &g)| GammaOutcome {
            estimate: u.estimate,
            corrected: c.estimate,
            covered: u.contains(g),
            covered_corrected: c.contains(g),
            length: u.length(),
        })
        .collect();
    Ok(Replication { index, failure: None, pairs, gamma })
}

/// Runs replication `index` of `design`.
pub fn run_replication(design: &SimDesign, index: usize, fixed: Option<&PairCovariates>) -> Result<Replication> {
    let mut rng = stream_rng(design.seed, index as u64);
    let cov = match fixed {
        Some(c) => c.clone(),
        None => make_sim_covariates(design.n, &mut rng),
    };
    let beta_star = make_beta_star(design.n, design.c);
    let params = ModelParams::new(beta_star.clone(), design.gamma_star.clone())?;
    let net = sample_network(&params, cov, &mut rng)?;
    let released = release_for(design, &net, &mut rng)?;
    let cov = net.covariates();
    let f = fit(&released, cov, &design.fit)?;
    if !f.exists {
        return Ok(Replication { index, failure: f.failure, pairs: Vec::new(), gamma: Vec::new() });
    }
    match summarise(design, index, &beta_star, cov, &f) {
        Ok(r) => Ok(r),
        Err(Error::Singular(_)) => Ok(Replication {
            index,
            failure: Some(NonExistence::SingularJacobian),
            pairs: Vec::new(),
            gamma: Vec::new(),
        }),
        Err(e) => Err(e),
    }
}

/// Runs every replication on a pool of `threads` workers (`0` = available parallelism).
pub fn run_replications(design: &SimDesign, threads: usize) -> Result<Vec<Replication>> {
    design.validate()?;
    let fixed = match design.covariates {
        CovariateMode::Fixed => {
            Some(make_sim_covariates(design.n, &mut stream_rng(design.seed, FIXED_COVARIATE_STREAM)))
        }
        CovariateMode::Redraw => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..design.replications)
            .into_par_iter()
            .map(|r| run_replication(design, r, fixed.as_ref()))
            .collect()
    })
}

/// Runs `design` and tabulates it.
pub fn run_design(design: &SimDesign, threads: usize) -> Result<SimTable> {
    let reps = run_replications(design, threads)?;
    Ok(SimTable::from_replications(design, &reps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    /// 1-based.
    pub i: usize,
    pub j: usize,
    pub coverage_pct: Option<f64>,
    pub mean_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub index: usize,
    pub truth: f64,
    pub coverage_pct: Option<f64>,
    pub coverage_corrected_pct: Option<f64>,
    pub mean_bias: Option<f64>,
    pub mean_bias_corrected: Option<f64>,
    pub median_estimate: Option<f64>,
    pub median_corrected: Option<f64>,
    pub mean_length: Option<f64>,
}

/// Aggregated results, conditional on existence where applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTable {
    pub n: usize,
    pub c: f64,
    pub epsilon: Option<f64>,
    pub k: u64,
    pub level: f64,
    pub seed: u64,
    pub replications: usize,
    pub existing: usize,
    pub nonexistence_pct: f64,
    /// Count per failure kind.
    pub failures: BTreeMap<String, usize>,
    pub pairs: Vec<PairRow>,
    pub gamma: Vec<GammaRow>,
    /// Sorted `ξ̂` per pair, for QQ plots.
    pub xi: Vec<Vec<f64>>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn pct(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * hits as f64 / total as f64)
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn failure_kind(f: &NonExistence) -> &'static str {
    match f {
        NonExistence::DegreeNotPositive { .. } => "degree_not_positive",
        NonExistence::DegreeAtMaximum { .. } => "degree_at_maximum",
        NonExistence::Diverged { .. } => "diverged",
        NonExistence::InnerIterationLimit => "inner_iteration_limit",
        NonExistence::OuterIterationLimit => "outer_iteration_limit",
        NonExistence::SingularJacobian => "singular_jacobian",
    }
}

impl SimTable {
    pub fn from_replications(design: &SimDesign, reps: &[Replication]) -> Self {
        let ok: Vec<&Replication> = reps.iter().filter(|r| r.failure.is_none()).collect();
        let mut failures = BTreeMap::new();
        for f in reps.iter().filter_map(|r| r.failure.as_ref()) {
            *failures.entry(failure_kind(f).to_string()).or_insert(0) += 1;
        }

        let mut pairs = Vec::new();
        let mut xi = Vec::new();
        for (slot, &(i, j)) in design.pairs.iter().enumerate() {
            let outs: Vec<&ContrastOutcome> = ok.iter().map(|r| &r.pairs[slot]).collect();
            let lengths: Vec<f64> = outs.iter().map(|o| o.length).collect();
            pairs.push(PairRow {
                i,
                j,
                coverage_pct: pct(outs.iter().filter(|o| o.covered).count(), outs.len()),
                mean_length: mean(&lengths),
            });
            let mut x: Vec<f64> = outs.iter().map(|o| o.xi).collect();
            x.sort_by(f64::total_cmp);
            xi.push(x);
        }

        let gamma = design
            .gamma_star
            .iter()
            .enumerate()
            .map(|(t, &truth)| {
                let outs: Vec<&GammaOutcome> = ok.iter().map(|r| &r.gamma[t]).collect();
                let est: Vec<f64> = outs.iter().map(|o| o.estimate).collect();
                let cor: Vec<f64> = outs.iter().map(|o| o.corrected).collect();
                let bias: Vec<f64> = est.iter().map(|e| e - truth).collect();
                let bias_c: Vec<f64> = cor.iter().map(|e| e - truth).collect();
                let lengths: Vec<f64> = outs.iter().map(|o| o.length).collect();
                GammaRow {
                    index: t + 1,
                    truth,
                    coverage_pct: pct(outs.iter().filter(|o| o.covered).count(), outs.len()),
                    coverage_corrected_pct: pct(outs.iter().filter(|o| o.covered_corrected).count(), outs.len()),
                    mean_bias: mean(&bias),
                    mean_bias_corrected: mean(&bias_c),
                    median_estimate: median(&est),
                    median_corrected: median(&cor),
                    mean_length: mean(&lengths),
                }
            })
            .collect();

        Self {
            n: design.n,
            c: design.c,
            epsilon: design.epsilon(),
            k: design.k,
            level: design.level,
            seed: design.seed,
            replications: reps.len(),
            existing: ok.len(),
            nonexistence_pct: 100.0 * (reps.len() - ok.len()) as f64 / reps.len().max(1) as f64,
            failures,
            pairs,
            gamma,
            xi,
        }
    }

    /// Two blocks: β contrasts
    /// (coverage / length / non-existence) and γ (corrected coverage,
    /// uncorrected coverage, bias ×100, length).
    pub fn to_csv(&self) -> String {
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let eps = f(self.epsilon);
        let mut out = String::from("table,n,c,epsilon,param,coverage_pct,coverage_uncorrected_pct,mean_length,bias_x100,bias_corrected_x100,nonexistence_pct\n");
        for p in &self.pairs {
            out.push_str(&format!(
                "beta,{},{},{},({};{}),{},,{},,,{}\n",
                self.n,
                self.c,
                eps,
                p.i,
                p.j,
                f(p.coverage_pct),
                f(p.mean_length),
                self.nonexistence_pct
            ));
        }
        for g in &self.gamma {
            out.push_str(&format!(
                "gamma,{},{},{},gamma{},{},{},{},{},{},{}\n",
                self.n,
                self.c,
                eps,
                g.index,
                f(g.coverage_corrected_pct),
                f(g.coverage_pct),
                f(g.mean_length),
                f(g.mean_bias.map(|b| 100.0 * b)),
                f(g.mean_bias_corrected.map(|b| 100.0 * b)),
                self.nonexistence_pct
            ));
        }
        out
    }

    /// `pair,rank,xi,normal_quantile` using plotting positions `(r - 0.5) / m`.
    pub fn qq_csv(&self) -> String {
        let mut out = String::from("pair,rank,xi,normal_quantile\n");
        for (p, xs) in self.pairs.iter().zip(&self.xi) {
            let m = xs.len() as f64;
            for (r, x) in xs.iter().enumerate() {
                let q = normal_quantile((r as f64 + 0.5) / m);
                out.push_str(&format!("({};{}),{},{},{}\n", p.i, p.j, r + 1, x, q));
            }
        }
        out
    }
}
