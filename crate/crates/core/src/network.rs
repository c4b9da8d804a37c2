//! Undirected simple graphs with pairwise covariates.
//!
//! Unordered pairs `{i, j}` with `i < j` are laid out row-major over the
//! strict upper triangle. Adjacency is a bitset over that layout and the
//! covariates a dense `N × p` block with `N = n(n-1)/2`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of unordered pairs among `n` nodes.
#[inline]
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of the unordered pair `{i, j}` (`i != j`) in the upper-triangular layout.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    debug_assert!(a != b && b < n);
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

fn check_pair(n: usize, i: usize, j: usize) -> Result<()> {
    for index in [i, j] {
        if index >= n {
            return Err(Error::NodeOutOfRange { index, n });
        }
    }
    if i == j {
        return Err(Error::SelfPair(i));
    }
    Ok(())
}

/// One covariate vector of length `p` per unordered node pair.
#[derive(Debug, Clone)]
pub struct PairCovariates {
    n: usize,
    p: usize,
    values: Vec<f64>,
    z_star: OnceLock<f64>,
}

impl PartialEq for PairCovariates {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.p == other.p && self.values == other.values
    }
}

impl PairCovariates {
    /// Wraps a flat `N × p` buffer in pair order.
    pub fn new(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        let expected = pair_count(n) * p;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "covariate buffer",
                got: values.len(),
                expected,
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite covariate {bad}")));
        }
        Ok(Self {
            n,
            p,
            values,
            z_star: OnceLock::new(),
        })
    }

    /// No covariates (`p = 0`); the plain beta-model.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            p: 0,
            values: Vec::new(),
            z_star: OnceLock::new(),
        }
    }

    /// Builds covariates by calling `f(i, j, out)` once per pair `i < j`.
    pub fn from_fn<F>(n: usize, p: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize, &mut [f64]),
    {
        let mut values = vec![0.0; pair_count(n) * p];
        if p > 0 {
            let mut chunks = values.chunks_exact_mut(p);
            for i in 0..n {
                for j in (i + 1)..n {
                    f(i, j, chunks.next().expect("pair layout"));
                }
            }
        }
        Self {
            n,
            p,
            values,
            z_star: OnceLock::new(),
        }
    }

    /// Covariates built from per-node attributes through a symmetric rule `g(x_i, x_j)`.
    pub fn from_node_attributes<T, G>(attrs: &[T], p: usize, mut g: G) -> Self
    where
        G: FnMut(&T, &T, &mut [f64]),
    {
        Self::from_fn(attrs.len(), p, |i, j, out| g(&attrs[i], &attrs[j], out))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    /// `z_ij`; symmetric in its arguments.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        self.by_index(pair_index(self.n, i, j))
    }

    /// Checked variant of [`get`](Self::get).
    pub fn try_get(&self, i: usize, j: usize) -> Result<&[f64]> {
        check_pair(self.n, i, j)?;
        Ok(self.get(i, j))
    }

    #[inline]
    pub fn by_index(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.p..(idx + 1) * self.p]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// `z* = max |z_ijk|`, computed once and cached.
    pub fn z_star(&self) -> f64 {
        *self
            .z_star
            .get_or_init(|| self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    /// Restricts to the nodes in `keep` (in that order).
    pub fn subset(&self, keep: &[usize]) -> Self {
        Self::from_fn(keep.len(), self.p, |a, b, out| {
            out.copy_from_slice(self.get(keep[a], keep[b]))
        })
    }
}

/// An undirected simple graph together with its pair covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    adjacency: Vec<u64>,
    covariates: PairCovariates,
}

impl Network {
    /// Edgeless graph over the covariates' node set.
    pub fn empty(covariates: PairCovariates) -> Self {
        let words = pair_count(covariates.n()).div_ceil(64);
        Self {
            adjacency: vec![0; words],
            covariates,
        }
    }

    /// Graph from an edge list. Duplicates collapse; self-loops are rejected.
    pub fn from_edges<I>(covariates: PairCovariates, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut net = Self::empty(covariates);
        for (i, j) in edges {
            net.add_edge(i, j)?;
        }
        Ok(net)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        check_pair(self.n(), i, j)?;
        let idx = pair_index(self.n(), i, j);
        self.adjacency[idx / 64] |= 1 << (idx % 64);
        Ok(())
    }

    #[inline]
    pub(crate) fn set_by_index(&mut self, idx: usize) {
        self.adjacency[idx / 64] |= 1 << (idx % 64);
    }

    #[inline]
    pub fn edge_by_index(&self, idx: usize) -> bool {
        self.adjacency[idx / 64] >> (idx % 64) & 1 == 1
    }

    /// `a_ij`. Out-of-range or diagonal pairs are an error.
    pub fn has_edge(&self, i: usize, j: usize) -> Result<bool> {
        check_pair(self.n(), i, j)?;
        Ok(self.edge_by_index(pair_index(self.n(), i, j)))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.covariates.n()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.covariates.p()
    }

    pub fn covariates(&self) -> &PairCovariates {
        &self.covariates
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Edges as `(i, j)` with `i < j`, in pair order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n();
        (0..n)
            .flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
            .enumerate()
            .filter(|(idx, _)| self.edge_by_index(*idx))
            .map(|(_, e)| e)
    }

    pub fn degrees(&self) -> Vec<u64> {
        let mut d = vec![0u64; self.n()];
        for (i, j) in self.edges() {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    /// Induced subgraph on `keep` (relabelled `0..keep.len()` in that order).
    pub fn subgraph(&self, keep: &[usize]) -> Network {
        let mut sub = Network::empty(self.covariates.subset(keep));
        let m = keep.len();
        for a in 0..m {
            for b in (a + 1)..m {
                if self.edge_by_index(pair_index(self.n(), keep[a], keep[b])) {
                    sub.set_by_index(pair_index(m, a, b));
                }
            }
        }
        sub
    }
}

/// Sufficient statistics `(d, y)` with `y = Σ_{i<j} a_ij z_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    pub d: Vec<u64>,
    pub y: Vec<f64>,
}

/// Degree sequence and covariate-weighted edge total of `net`.
pub fn sufficient_stats(net: &Network) -> SufficientStats {
    let n = net.n();
    let p = net.p();
    let mut d = vec![0u64; n];
    let mut y = vec![0.0; p];
    let mut idx = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if net.edge_by_index(idx) {
                d[i] += 1;
                d[j] += 1;
                for (acc, z) in y.iter_mut().zip(net.covariates.by_index(idx)) {
                    *acc += z;
                }
            }
            idx += 1;
        }
    }
    SufficientStats { d, y }
}
