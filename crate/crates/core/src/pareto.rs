//! Upper-class income tails.
//!
//! Incomes at the top follow a Pareto law with density `∝ x^{−γ−1}` above a
//! threshold `xmin`. Tails are generated by preferential attachment (a node's
//! income is proportional to its degree, and new nodes link to existing ones
//! with probability proportional to degree) and fitted with the Hill
//! estimator, choosing `xmin` by minimising the Kolmogorov–Smirnov distance.
//!
//! Exponents are reported both as `gamma` (the CCDF exponent) and as
//! `density_exponent = gamma + 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{par, rng, stats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TailError {
    #[error("invalid graph size: n_nodes = {n_nodes}, m = {m} (need n_nodes > m >= 1)")]
    GraphSize { n_nodes: usize, m: usize },
    #[error("scale must be positive, got {0}")]
    Scale(f64),
    #[error("xmin must be positive, got {0}")]
    Threshold(f64),
    #[error("non-positive income {value} at index {index}")]
    NonPositive { index: usize, value: f64 },
    #[error("{n_tail} observations at or above the threshold, need at least {needed}")]
    TooFewTail { n_tail: usize, needed: usize },
    #[error("degenerate tail: all observations at or above the threshold are equal")]
    Degenerate,
    #[error("fitted gamma {gamma} is below 1")]
    GammaBelowOne { gamma: f64 },
    #[error("invalid tail parameters: gamma = {gamma}, xmin = {xmin}")]
    InvalidModel { gamma: f64, xmin: f64 },
}

/// Degree sequence of a preferential-attachment graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentGraph {
    pub degree_sequence: Vec<u64>,
    pub edges: u64,
    pub m: usize,
}

impl AttachmentGraph {
    pub fn degree_sum(&self) -> u64 {
        self.degree_sequence.iter().sum()
    }
}

/// Grows a graph from a complete seed graph on `m + 1` nodes; every new node
/// links to `m` distinct existing nodes drawn with probability proportional
/// to their current degree.
pub fn generate_preferential_attachment(
    n_nodes: usize,
    m: usize,
    seed: u64,
) -> Result<AttachmentGraph, TailError> {
    if m == 0 || n_nodes <= m || n_nodes > u32::MAX as usize {
        return Err(TailError::GraphSize { n_nodes, m });
    }
    let seed_edges = m * (m + 1) / 2;
    let total_edges = seed_edges + m * (n_nodes - m - 1);
    // Every node appears once per incident edge, so a uniform pick from this
    // list is a degree-proportional pick.
    let mut endpoints: Vec<u32> = Vec::with_capacity(2 * total_edges);
    let mut degree = vec![0u64; n_nodes];
    for i in 0..=m {
        for j in (i + 1)..=m {
            endpoints.push(i as u32);
            endpoints.push(j as u32);
        }
    }
    degree[..=m].fill(m as u64);
    let mut rng = rng::stream(seed);
    let mut targets: Vec<u32> = Vec::with_capacity(m);
    for v in (m + 1)..n_nodes {
        targets.clear();
        while targets.len() < m {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            endpoints.push(t);
            endpoints.push(v as u32);
            degree[t as usize] += 1;
        }
        degree[v] = m as u64;
    }
    Ok(AttachmentGraph {
        degree_sequence: degree,
        edges: total_edges as u64,
        m,
    })
}

/// Incomes `scale · degree`.
pub fn degrees_to_income(graph: &AttachmentGraph, scale: f64) -> Result<Vec<f64>, TailError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(TailError::Scale(scale));
    }
    Ok(graph
        .degree_sequence
        .iter()
        .map(|&d| scale * d as f64)
        .collect())
}

/// A fitted Pareto tail: density `normalization · x^{−gamma−1}` for `x ≥ xmin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub gamma: f64,
    pub density_exponent: f64,
    pub xmin: f64,
    pub normalization: f64,
    pub ks: f64,
    pub n_tail: usize,
}

impl TailModel {
    pub fn new(gamma: f64, xmin: f64) -> Result<Self, TailError> {
        if !(gamma > 0.0 && gamma.is_finite() && xmin > 0.0 && xmin.is_finite()) {
            return Err(TailError::InvalidModel { gamma, xmin });
        }
        Ok(Self {
            gamma,
            density_exponent: gamma + 1.0,
            xmin,
            normalization: gamma * xmin.powf(gamma),
            ks: 0.0,
            n_tail: 0,
        })
    }

    /// Fraction of the tail at or above `x`.
    pub fn ccdf(&self, x: f64) -> f64 {
        if x <= self.xmin {
            1.0
        } else {
            (x / self.xmin).powf(-self.gamma)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.ccdf(x)
    }

    /// Inverse-CDF draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = 1.0 - rng.random::<f64>();
        self.xmin * u.powf(-1.0 / self.gamma)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let layout = rng::chunks(n);
        par::map_slice(&layout, |&(start, len)| {
            let mut r = rng::substream(seed, (start / rng::CHUNK) as u64);
            (0..len).map(|_| self.draw(&mut r)).collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerLawConfig {
    /// Least number of observations at or above a candidate threshold.
    pub min_tail: usize,
    /// Cap on scanned thresholds; above it, candidates are thinned evenly
    /// over the sorted unique values.
    pub max_candidates: usize,
}

impl Default for PowerLawConfig {
    fn default() -> Self {
        Self {
            min_tail: 50,
            max_candidates: 1000,
        }
    }
}

fn sorted_positive(sample: &[f64]) -> Result<Vec<f64>, TailError> {
    if let Some((index, &value)) = sample
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
    {
        return Err(TailError::NonPositive { index, value });
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// Hill fit of the sorted tail `tail` (all `≥ xmin`) with its KS distance.
fn hill(tail: &[f64], xmin: f64) -> Option<(f64, f64)> {
    let sum: f64 = tail.iter().map(|&x| (x / xmin).ln()).sum();
    if sum <= 0.0 {
        return None;
    }
    let gamma = tail.len() as f64 / sum;
    let ks = stats::ks_distance_sorted(tail, |x| 1.0 - (x / xmin).powf(-gamma));
    Some((gamma, ks))
}

fn finish(gamma: f64, xmin: f64, ks: f64, n_tail: usize) -> Result<TailModel, TailError> {
    if gamma < 1.0 {
        return Err(TailError::GammaBelowOne { gamma });
    }
    let mut model = TailModel::new(gamma, xmin)?;
    model.ks = ks;
    model.n_tail = n_tail;
    Ok(model)
}

/// Hill fit at a fixed threshold; values below `xmin` are ignored.
pub fn fit_power_law_at(
    sample: &[f64],
    xmin: f64,
    min_tail: usize,
) -> Result<TailModel, TailError> {
    if !(xmin > 0.0 && xmin.is_finite()) {
        return Err(TailError::Threshold(xmin));
    }
    let mut tail: Vec<f64> = sample.iter().copied().filter(|&x| x >= xmin).collect();
    if tail.len() < min_tail.max(1) {
        return Err(TailError::TooFewTail {
            n_tail: tail.len(),
            needed: min_tail.max(1),
        });
    }
    tail.sort_by(f64::total_cmp);
    let (gamma, ks) = hill(&tail, xmin).ok_or(TailError::Degenerate)?;
    finish(gamma, xmin, ks, tail.len())
}

/// Hill fit with the threshold chosen among the sample's unique values by
/// minimum KS distance; ties go to the smaller threshold.
pub fn fit_power_law(sample: &[f64]) -> Result<TailModel, TailError> {
    fit_power_law_with(sample, &PowerLawConfig::default())
}

pub fn fit_power_law_with(sample: &[f64], config: &PowerLawConfig) -> Result<TailModel, TailError> {
    let sorted = sorted_positive(sample)?;
    let n = sorted.len();
    let min_tail = config.min_tail.max(1);
    if n < min_tail {
        return Err(TailError::TooFewTail {
            n_tail: n,
            needed: min_tail,
        });
    }
    // First index of every unique value leaving at least `min_tail` points.
    let mut starts: Vec<usize> = Vec::new();
    for i in 0..=(n - min_tail) {
        if i == 0 || sorted[i] != sorted[i - 1] {
            starts.push(i);
        }
    }
    let cap = config.max_candidates.max(1);
    if starts.len() > cap {
        let last = starts.len() - 1;
        let mut thinned: Vec<usize> = (0..cap)
            .map(|k| starts[if cap == 1 { 0 } else { k * last / (cap - 1) }])
            .collect();
        thinned.dedup();
        starts = thinned;
    }
    let fits = par::map_slice(&starts, |&i| {
        let xmin = sorted[i];
        hill(&sorted[i..], xmin).map(|(g, ks)| (i, g, ks))
    });
    let best = fits
        .into_iter()
        .flatten()
        .fold(None::<(usize, f64, f64)>, |acc, cur| match acc {
            Some(a) if a.2 <= cur.2 => Some(a),
            _ => Some(cur),
        })
        .ok_or(TailError::Degenerate)?;
    let (i, gamma, ks) = best;
    finish(gamma, sorted[i], ks, n - i)
}
