//! Edge-list and node-attribute ingestion.
//!
//! Edge files hold one `u v` pair per line, separated by whitespace or a
//! comma; blank lines and `#` comments are skipped. Node ids are integers,
//! 1-based unless `zero_indexed` is set, and `n` is the largest id seen.
//! Attribute files are CSV with the node id in the first column and an
//! optional header row.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, PairCovariates};

/// How pair covariates are built from node attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateRule {
    /// `z_ijk = 1` if `x_ik == x_jk`, else `-1`. Attributes are compared as strings.
    Match,
    /// `z_ijk = x_ik · x_jk`; attributes must be numeric.
    Product,
    /// No covariates (`p = 0`).
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub edge_file: PathBuf,
    pub attr_file: Option<PathBuf>,
    pub covariate_rule: CovariateRule,
    pub drop_isolated: bool,
    pub zero_indexed: bool,
}

/// A cleaned network plus what was done to get it.
#[derive(Debug, Clone)]
pub struct LoadedNetwork {
    pub network: Network,
    /// `labels[i]` is the id, as written in the input, of node `i`.
    pub labels: Vec<u64>,
    /// Names of the attribute columns in covariate order.
    pub attribute_names: Vec<String>,
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
    pub isolated_dropped: Vec<u64>,
}

impl LoadedNetwork {
    /// `index,label` with 1-based indices into the cleaned network.
    pub fn remap_csv(&self) -> String {
        let mut out = String::from("index,label\n");
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }
}

fn read(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect()
}

fn parse_id(tok: &str, zero_indexed: bool, origin: &str, line: usize) -> Result<usize> {
    let raw: u64 = tok
        .parse()
        .map_err(|_| Error::Data(format!("{origin} line {line}: '{tok}' is not a node id")))?;
    if zero_indexed {
        Ok(raw as usize)
    } else if raw == 0 {
        Err(Error::Data(format!(
            "{origin} line {line}: node id 0 in a 1-indexed file (use --zero-indexed?)"
        )))
    } else {
        Ok(raw as usize - 1)
    }
}

/// Parsed edge list before covariates are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    /// Number of nodes, one past the largest 0-based id.
    pub n: usize,
    /// Distinct `(u, v)` with `u < v`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub self_loops: usize,
    pub duplicates: usize,
}

pub fn parse_edge_list(text: &str, zero_indexed: bool) -> Result<EdgeList> {
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    let mut self_loops = 0;
    let mut duplicates = 0;
    let mut n = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f = split_fields(line);
        if f.len() != 2 {
            return Err(Error::Data(format!(
                "edge file line {}: expected 2 node ids, found {} fields",
                lineno + 1,
                f.len()
            )));
        }
        let u = parse_id(f[0], zero_indexed, "edge file", lineno + 1)?;
        let v = parse_id(f[1], zero_indexed, "edge file", lineno + 1)?;
        n = n.max(u + 1).max(v + 1);
        if u == v {
            self_loops += 1;
            continue;
        }
        let e = (u.min(v), u.max(v));
        if seen.insert(e) {
            edges.push(e);
        } else {
            duplicates += 1;
        }
    }
    edges.sort_unstable();
    Ok(EdgeList { n, edges, self_loops, duplicates })
}

/// Attribute table: column names and one row of raw strings per node.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    pub names: Vec<String>,
    pub rows: BTreeMap<usize, Vec<String>>,
}

pub fn parse_attributes(text: &str, zero_indexed: bool) -> Result<AttributeTable> {
    let mut names: Option<Vec<String>> = None;
    let mut rows = BTreeMap::new();
    let mut width = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() < 2 {
            return Err(Error::Data(format!(
                "attribute file line {}: expected a node id and at least one attribute",
                lineno + 1
            )));
        }
        if width.is_none() && f[0].parse::<u64>().is_err() {
            names = Some(f[1..].iter().map(|s| s.to_string()).collect());
            width = Some(f.len());
            continue;
        }
        match width {
            Some(w) if w != f.len() => {
                return Err(Error::Data(format!(
                    "attribute file line {}: expected {} fields, found {}",
                    lineno + 1,
                    w,
                    f.len()
                )))
            }
            _ => width = Some(f.len()),
        }
        let id = parse_id(f[0], zero_indexed, "attribute file", lineno + 1)?;
        if rows.insert(id, f[1..].iter().map(|s| s.to_string()).collect()).is_some() {
            return Err(Error::Data(format!("attribute file line {}: node {} listed twice", lineno + 1, f[0])));
        }
    }
    let p = width.map_or(0, |w| w - 1);
    let names = names.unwrap_or_else(|| (1..=p).map(|k| format!("x{k}")).collect());
    Ok(AttributeTable { names, rows })
}

fn label_of(id: usize, zero_indexed: bool) -> u64 {
    if zero_indexed {
        id as u64
    } else {
        id as u64 + 1
    }
}

/// Builds pair covariates for nodes `keep` (0-based input ids) under `rule`.
pub fn build_covariates(
    keep: &[usize],
    table: &AttributeTable,
    rule: CovariateRule,
    zero_indexed: bool,
) -> Result<PairCovariates> {
    let n = keep.len();
    if rule == CovariateRule::None {
        return Ok(PairCovariates::empty(n));
    }
    let mut attrs = Vec::with_capacity(n);
    for &id in keep {
        let row = table
            .rows
            .get(&id)
            .ok_or_else(|| Error::Data(format!("node {} has no attributes", label_of(id, zero_indexed))))?;
        attrs.push(row);
    }
    let p = table.names.len();
    match rule {
        CovariateRule::Match => Ok(PairCovariates::from_node_attributes(&attrs, p, |a, b, z| {
            for k in 0..p {
                z[k] = if a[k] == b[k] { 1.0 } else { -1.0 };
            }
        })),
        CovariateRule::Product => {
            let mut num = Vec::with_capacity(n);
            for (&id, row) in keep.iter().zip(&attrs) {
                let parsed: std::result::Result<Vec<f64>, _> = row.iter().map(|s| s.parse::<f64>()).collect();
                match parsed {
                    Ok(v) if v.iter().all(|x| x.is_finite()) => num.push(v),
                    _ => {
                        return Err(Error::Data(format!(
                            "node {}: product rule needs finite numeric attributes",
                            label_of(id, zero_indexed)
                        )))
                    }
                }
            }
            Ok(PairCovariates::from_node_attributes(&num, p, |a, b, z| {
                for k in 0..p {
                    z[k] = a[k] * b[k];
                }
            }))
        }
        CovariateRule::None => unreachable!(),
    }
}

/// Reads, cleans and assembles a network.
pub fn load_network(spec: &DatasetSpec) -> Result<LoadedNetwork> {
    let edges = parse_edge_list(&read(&spec.edge_file)?, spec.zero_indexed)?;
    let table = match &spec.attr_file {
        Some(path) => Some(parse_attributes(&read(path)?, spec.zero_indexed)?),
        None => None,
    };
    if spec.covariate_rule != CovariateRule::None && table.is_none() {
        return Err(Error::Data("a covariate rule other than 'none' needs an attribute file".into()));
    }
    if let Some(t) = &table {
        if let Some((&id, _)) = t.rows.iter().find(|(&id, _)| id >= edges.n) {
            return Err(Error::Data(format!(
                "attribute file names node {}, which is not in the edge list",
                label_of(id, spec.zero_indexed)
            )));
        }
    }
    assemble(edges, table.as_ref(), spec)
}

fn assemble(edges: EdgeList, table: Option<&AttributeTable>, spec: &DatasetSpec) -> Result<LoadedNetwork> {
    let mut degree = vec![0usize; edges.n];
    for &(u, v) in &edges.edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    let (keep, isolated): (Vec<usize>, Vec<usize>) = if spec.drop_isolated {
        (0..edges.n).partition(|&i| degree[i] > 0)
    } else {
        ((0..edges.n).collect(), Vec::new())
    };
    let mut new_index = vec![usize::MAX; edges.n];
    for (k, &id) in keep.iter().enumerate() {
        new_index[id] = k;
    }
    let empty = AttributeTable { names: Vec::new(), rows: BTreeMap::new() };
    let table = table.unwrap_or(&empty);
    let cov = build_covariates(&keep, table, spec.covariate_rule, spec.zero_indexed)?;
    let remapped = edges.edges.iter().map(|&(u, v)| (new_index[u], new_index[v]));
    let network = Network::from_edges(cov, remapped)?;
    let attribute_names = if spec.covariate_rule == CovariateRule::None { Vec::new() } else { table.names.clone() };
    Ok(LoadedNetwork {
        network,
        labels: keep.iter().map(|&i| label_of(i, spec.zero_indexed)).collect(),
        attribute_names,
        self_loops_dropped: edges.self_loops,
        duplicate_edges: edges.duplicates,
        isolated_dropped: isolated.iter().map(|&i| label_of(i, spec.zero_indexed)).collect(),
    })
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn five_number<T: Copy + Into<f64>>(xs: &[T]) -> Option<FiveNumber> {
    if xs.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = xs.iter().map(|&x| x.into()).collect();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Some(FiveNumber { min: v[0], q1: q(0.25), median: q(0.5), q3: q(0.75), max: v[v.len() - 1] })
}

/// Descriptive statistics for a loaded network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub n: usize,
    pub p: usize,
    pub edges: usize,
    pub density: f64,
    pub degree: Option<FiveNumber>,
    pub isolated: usize,
    pub covariate_totals: Vec<f64>,
    pub attribute_names: Vec<String>,
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
    pub isolated_dropped: usize,
}

impl NetworkSummary {
    pub fn of(loaded: &LoadedNetwork) -> Self {
        let net = &loaded.network;
        let stats = crate::network::sufficient_stats(net);
        let pairs = crate::network::pair_count(net.n());
        let degrees: Vec<f64> = stats.d.iter().map(|&d| d as f64).collect();
        Self {
            n: net.n(),
            p: net.p(),
            edges: net.edge_count(),
            density: if pairs > 0 { net.edge_count() as f64 / pairs as f64 } else { 0.0 },
            degree: five_number(&degrees),
            isolated: stats.d.iter().filter(|&&d| d == 0).count(),
            covariate_totals: stats.y,
            attribute_names: loaded.attribute_names.clone(),
            self_loops_dropped: loaded.self_loops_dropped,
            duplicate_edges: loaded.duplicate_edges,
            isolated_dropped: loaded.isolated_dropped.len(),
        }
    }
}
