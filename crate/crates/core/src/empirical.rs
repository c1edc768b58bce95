//! Two-class fits of income samples.
//!
//! The lower class is fitted either with a truncated exponential (Boltzmann
//! body, unbinned maximum likelihood) or with a Bose-Einstein level
//! occupancy `C·(g_k − 1)/(e^{(ε_k − μ)/T} − 1)` (binned least squares on an
//! income grid). The upper class is a Pareto tail. [`fit_two_class`] scans
//! crossover candidates between the 50th and 99th percentiles and keeps the
//! one with the smallest `max(body_ks, tail_ks)`.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{read_income_column, IncomeGrid, ModelError};
use crate::pareto::{fit_power_law_at, TailError, TailModel};
use crate::{par, rng, stats};

/// Least number of observations on each side of a crossover.
pub const MIN_CLASS_SIZE: usize = 50;
/// Least number of populated bins for a Bose-Einstein body.
pub const MIN_BE_BINS: usize = 5;

const TRUNCATED_MEAN_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tail(#[from] TailError),
    #[error("empty income sample")]
    Empty,
    #[error("row {row}: income {value} is not positive")]
    NonPositive { row: usize, value: f64 },
    #[error("{n_body} observations below the cut, need at least {needed}")]
    TooFewBody { n_body: usize, needed: usize },
    #[error("degenerate body: all observations below the cut are equal")]
    Degenerate,
    #[error("body mean {mean} is at least half the cut {cut}; no truncated exponential fits")]
    MeanTooHigh { mean: f64, cut: f64 },
    #[error("{populated} populated bins below the cut, need at least {needed}")]
    TooFewBins { populated: usize, needed: usize },
    #[error("grid has no bins with more than one industry below the cut")]
    NoBoseEinsteinSupport,
    #[error("least-squares refinement did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("no crossover candidate leaves {needed} observations on both sides with valid fits")]
    NoCrossover { needed: usize },
    #[error("a Bose-Einstein body needs an income grid")]
    MissingGrid,
}

/// Positive incomes with a provenance label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomeSample {
    pub values: Vec<f64>,
    pub source_label: String,
}

impl IncomeSample {
    pub fn new(values: Vec<f64>, source_label: impl Into<String>) -> Result<Self, FitError> {
        if values.is_empty() {
            return Err(FitError::Empty);
        }
        if let Some((i, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
        {
            return Err(FitError::NonPositive { row: i + 1, value });
        }
        Ok(Self {
            values,
            source_label: source_label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|x| x * c).collect(),
            source_label: self.source_label.clone(),
        }
    }
}

/// Reads a single-column CSV with header `income`; rows are numbered from 1
/// after the header.
pub fn read_income_csv<R: Read>(reader: R, source_label: &str) -> Result<IncomeSample, FitError> {
    let rows = read_income_column(reader)?;
    if rows.is_empty() {
        return Err(FitError::Empty);
    }
    if let Some(&(row, value)) = rows.iter().find(|(_, v)| *v <= 0.0) {
        return Err(FitError::NonPositive { row, value });
    }
    Ok(IncomeSample {
        values: rows.into_iter().map(|(_, v)| v).collect(),
        source_label: source_label.to_string(),
    })
}

pub fn load_income_csv(path: impl AsRef<Path>) -> Result<IncomeSample, FitError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ModelError::Csv(format!("{}: {e}", path.display())))?;
    read_income_csv(file, &path.display().to_string())
}

/// `(x, fraction of the sample ≥ x)` over sorted unique values.
pub fn empirical_ccdf(sample: &IncomeSample) -> Vec<(f64, f64)> {
    ccdf_sorted(&sample.sorted())
}

fn ccdf_sorted(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    let mut out = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        if i == 0 || x != sorted[i - 1] {
            out.push((x, (sorted.len() - i) as f64 / n));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Boltzmann body

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannBody {
    pub temperature: f64,
    pub upper_cut: f64,
    pub n_body: usize,
    pub ks: f64,
}

impl BoltzmannBody {
    /// CDF of the exponential truncated to `(0, upper_cut)`.
    pub fn cdf(&self, x: f64) -> f64 {
        truncated_exp_cdf(x, self.temperature, self.upper_cut)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let t = self.temperature;
        if self.upper_cut.is_finite() {
            -t * (-u * -(-self.upper_cut / t).exp_m1()).ln_1p()
        } else {
            -t * (-u).ln_1p()
        }
    }
}

fn truncated_exp_cdf(x: f64, t: f64, cut: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= cut {
        return 1.0;
    }
    let num = -(-x / t).exp_m1();
    if cut.is_finite() {
        num / -(-cut / t).exp_m1()
    } else {
        num
    }
}

/// Mean of the unit-cut truncated exponential at temperature `t`,
/// `t − 1/(e^{1/t} − 1)`, increasing from 0 to 1/2.
fn unit_truncated_mean(t: f64) -> f64 {
    if t > 1e3 {
        let s = 1.0 / t;
        0.5 - s / 12.0 + s * s * s / 720.0
    } else {
        t - 1.0 / (1.0 / t).exp_m1()
    }
}

/// Solves `mean = T − cut/(e^{cut/T} − 1)` for `T`.
fn truncated_temperature(mean: f64, cut: f64) -> Result<f64, FitError> {
    if !cut.is_finite() {
        return Ok(mean);
    }
    let r = mean / cut;
    if r >= 0.5 {
        return Err(FitError::MeanTooHigh { mean, cut });
    }
    let mut lo = r;
    let mut hi = r.max(1e-300);
    while unit_truncated_mean(lo) > r {
        lo *= 0.5;
    }
    while unit_truncated_mean(hi) < r {
        hi *= 2.0;
    }
    while hi - lo > TRUNCATED_MEAN_TOL * hi {
        let mid = (lo * hi).sqrt();
        if unit_truncated_mean(mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) * cut)
}

fn check_body(body: &[f64], needed: usize) -> Result<(), FitError> {
    if body.len() < needed {
        return Err(FitError::TooFewBody {
            n_body: body.len(),
            needed,
        });
    }
    if body.first() == body.last() {
        return Err(FitError::Degenerate);
    }
    Ok(())
}

fn boltzmann_sorted(body: &[f64], cut: f64) -> Result<BoltzmannBody, FitError> {
    check_body(body, MIN_CLASS_SIZE)?;
    let mean = body.iter().sum::<f64>() / body.len() as f64;
    let temperature = truncated_temperature(mean, cut)?;
    let ks = stats::ks_distance_sorted(body, |x| truncated_exp_cdf(x, temperature, cut));
    Ok(BoltzmannBody {
        temperature,
        upper_cut: cut,
        n_body: body.len(),
        ks,
    })
}

/// Truncated-exponential maximum likelihood on the observations below
/// `upper_cut` (`f64::INFINITY` for no cut).
pub fn fit_boltzmann_body(
    sample: &IncomeSample,
    upper_cut: f64,
) -> Result<BoltzmannBody, FitError> {
    let sorted = sample.sorted();
    let end = sorted.partition_point(|&x| x < upper_cut);
    boltzmann_sorted(&sorted[..end], upper_cut)
}

// ---------------------------------------------------------------------------
// Bose-Einstein body

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoseEinsteinBody {
    pub temperature: f64,
    pub mu: f64,
    /// Least-squares amplitude `C`.
    pub scale: f64,
    pub upper_cut: f64,
    /// Bins fully below the cut that entered the fit.
    pub n_bins: usize,
    pub n_body: usize,
    pub ks: f64,
    pub sse: f64,
    /// The optimum sits on the edge of the search box.
    pub boundary: bool,
}

impl BoseEinsteinBody {
    fn shape(&self, grid: &IncomeGrid) -> Vec<f64> {
        let e1 = grid.levels()[0];
        be_shape(grid, self.n_bins, e1 - self.mu, self.temperature)
    }

    /// Bin probabilities of the fitted occupancy on the first `n_bins` bins.
    pub fn bin_probabilities(&self, grid: &IncomeGrid) -> Vec<f64> {
        let f = self.shape(grid);
        let s: f64 = f.iter().sum();
        f.iter().map(|v| v / s).collect()
    }

    /// Piecewise-linear CDF over the fitted bins.
    pub fn cdf(&self, grid: &IncomeGrid, x: f64) -> f64 {
        piecewise_cdf(grid, &self.bin_probabilities(grid), x)
    }

    pub fn draw<R: Rng + ?Sized>(&self, grid: &IncomeGrid, probs: &[f64], rng: &mut R) -> f64 {
        let w = grid.spacing();
        let lower = grid
            .edges()
            .map(|e| e.0)
            .unwrap_or(grid.levels()[0] - 0.5 * w);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = probs.len() - 1;
        for (j, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                k = j;
                break;
            }
        }
        lower + w * (k as f64 + rng.random::<f64>())
    }
}

fn be_shape(grid: &IncomeGrid, n_bins: usize, d: f64, t: f64) -> Vec<f64> {
    let e1 = grid.levels()[0];
    grid.levels()[..n_bins]
        .iter()
        .zip(grid.degeneracies())
        .map(|(&e, &g)| {
            if g <= 1 {
                0.0
            } else {
                (g - 1) as f64 / ((e - e1 + d) / t).exp_m1()
            }
        })
        .collect()
}

fn piecewise_cdf(grid: &IncomeGrid, probs: &[f64], x: f64) -> f64 {
    let w = grid.spacing();
    let lower = grid.edges().map(|e| e.0).unwrap_or(0.0);
    let pos = (x - lower) / w;
    if pos <= 0.0 {
        return 0.0;
    }
    let k = pos.floor() as usize;
    if k >= probs.len() {
        return 1.0;
    }
    probs[..k].iter().sum::<f64>() + probs[k] * (pos - k as f64)
}

/// Profiled least squares: for fixed `(d, T)` the amplitude is linear.
struct BeProblem<'a> {
    grid: &'a IncomeGrid,
    counts: Vec<f64>,
    n_bins: usize,
}

impl BeProblem<'_> {
    fn shape(&self, p: [f64; 2]) -> Vec<f64> {
        be_shape(self.grid, self.n_bins, p[0].exp(), p[1].exp())
    }

    fn amplitude(&self, f: &[f64]) -> f64 {
        let fy: f64 = f.iter().zip(&self.counts).map(|(a, b)| a * b).sum();
        let ff: f64 = f.iter().map(|a| a * a).sum();
        if ff > 0.0 && ff.is_finite() {
            fy / ff
        } else {
            0.0
        }
    }

    fn residuals(&self, p: [f64; 2]) -> Vec<f64> {
        let f = self.shape(p);
        let c = self.amplitude(&f);
        self.counts.iter().zip(&f).map(|(y, v)| y - c * v).collect()
    }

    fn sse(&self, p: [f64; 2]) -> f64 {
        let s: f64 = self.residuals(p).iter().map(|r| r * r).sum();
        if s.is_finite() {
            s
        } else {
            f64::INFINITY
        }
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Binned least-squares Bose-Einstein fit on the grid bins lying fully below
/// `upper_cut`.
pub fn fit_bose_einstein_body(
    sample: &IncomeSample,
    grid: &IncomeGrid,
    upper_cut: f64,
) -> Result<BoseEinsteinBody, FitError> {
    be_sorted(&sample.sorted(), grid, upper_cut)
}

fn be_sorted(
    sorted: &[f64],
    grid: &IncomeGrid,
    upper_cut: f64,
) -> Result<BoseEinsteinBody, FitError> {
    let (lower, _) = grid.edges().ok_or(ModelError::NonUniformGrid)?;
    let w = grid.spacing();
    let slack = 1e-12 * w;
    let n_bins = (0..grid.len())
        .take_while(|&k| lower + (k as f64 + 1.0) * w <= upper_cut + slack)
        .count();
    let top = lower + n_bins as f64 * w;
    let start = sorted.partition_point(|&x| x < lower);
    let end = sorted.partition_point(|&x| x < top.min(upper_cut));
    let body = &sorted[start..end];
    let mut counts = vec![0.0; n_bins];
    for &x in body {
        let k = (((x - lower) / w).floor() as usize).min(n_bins - 1);
        counts[k] += 1.0;
    }
    let populated = counts.iter().filter(|&&c| c > 0.0).count();
    if n_bins == 0 || populated < MIN_BE_BINS {
        return Err(FitError::TooFewBins {
            populated,
            needed: MIN_BE_BINS,
        });
    }
    if grid.degeneracies()[..n_bins].iter().all(|&g| g <= 1) {
        return Err(FitError::NoBoseEinsteinSupport);
    }
    let problem = BeProblem {
        grid,
        counts,
        n_bins,
    };

    // Search box in log space, relative to the bin width and the fitted span.
    let span = n_bins as f64 * w;
    let lo = [(1e-4 * w).ln(), (1e-2 * w).ln()];
    let hi = [(1e2 * span).ln(), (1e2 * span).ln()];
    const STEPS: usize = 41;
    let step = [
        (hi[0] - lo[0]) / (STEPS - 1) as f64,
        (hi[1] - lo[1]) / (STEPS - 1) as f64,
    ];
    let mut best = ([lo[0], lo[1]], f64::INFINITY);
    for i in 0..STEPS {
        for j in 0..STEPS {
            let p = [lo[0] + i as f64 * step[0], lo[1] + j as f64 * step[1]];
            let s = problem.sse(p);
            if s < best.1 {
                best = (p, s);
            }
        }
    }
    let mut p = best.0;

    // Coordinate descent within one grid step.
    for _ in 0..20 {
        let before = p;
        for axis in 0..2 {
            let a = (p[axis] - step[axis]).max(lo[axis]);
            let b = (p[axis] + step[axis]).min(hi[axis]);
            p[axis] = golden_min(
                |v| {
                    let mut q = p;
                    q[axis] = v;
                    problem.sse(q)
                },
                a,
                b,
            );
        }
        if (p[0] - before[0]).abs() + (p[1] - before[1]).abs() < 1e-10 {
            break;
        }
    }

    // Damped Gauss-Newton (Levenberg-Marquardt) on the profiled residuals.
    let mut lambda = 1e-3;
    let mut sse = problem.sse(p);
    let mut converged = false;
    const MAX_ITER: usize = 500;
    for _ in 0..MAX_ITER {
        let r = problem.residuals(p);
        let h = 1e-6;
        let mut jac = vec![[0.0; 2]; r.len()];
        for axis in 0..2 {
            let mut up = p;
            let mut dn = p;
            up[axis] += h;
            dn[axis] -= h;
            let (ru, rd) = (problem.residuals(up), problem.residuals(dn));
            for k in 0..r.len() {
                jac[k][axis] = (ru[k] - rd[k]) / (2.0 * h);
            }
        }
        let mut a = [[0.0; 2]; 2];
        let mut g = [0.0; 2];
        for (jk, rk) in jac.iter().zip(&r) {
            for u in 0..2 {
                g[u] += jk[u] * rk;
                for v in 0..2 {
                    a[u][v] += jk[u] * jk[v];
                }
            }
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let m = [
                [a[0][0] * (1.0 + lambda), a[0][1]],
                [a[1][0], a[1][1] * (1.0 + lambda)],
            ];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det.abs() < f64::MIN_POSITIVE || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let dx = [
                -(m[1][1] * g[0] - m[0][1] * g[1]) / det,
                -(m[0][0] * g[1] - m[1][0] * g[0]) / det,
            ];
            let cand = [
                (p[0] + dx[0]).clamp(lo[0], hi[0]),
                (p[1] + dx[1]).clamp(lo[1], hi[1]),
            ];
            let moved = (cand[0] - p[0]).abs().max((cand[1] - p[1]).abs());
            let s = problem.sse(cand);
            if s <= sse {
                p = cand;
                sse = s;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if moved < STEP_TOL {
                    converged = true;
                }
                break;
            }
            if moved < STEP_TOL {
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // No descent direction left at any damping: stationary.
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FitError::NoConvergence {
            iterations: MAX_ITER,
        });
    }

    let edge = 1e-6;
    let boundary = (0..2).any(|i| p[i] - lo[i] < edge || hi[i] - p[i] < edge);
    let (d, t) = (p[0].exp(), p[1].exp());
    let f = problem.shape(p);
    let scale = problem.amplitude(&f);
    let mut fit = BoseEinsteinBody {
        temperature: t,
        mu: grid.levels()[0] - d,
        scale,
        upper_cut,
        n_bins,
        n_body: body.len(),
        ks: 0.0,
        sse,
        boundary,
    };
    let probs = fit.bin_probabilities(grid);
    fit.ks = stats::ks_distance_sorted(body, |x| piecewise_cdf(grid, &probs, x));
    Ok(fit)
}

// ---------------------------------------------------------------------------
// Two-class fit

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BodyKind {
    Boltzmann,
    BoseEinstein,
}

impl std::str::FromStr for BodyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "boltzmann" => Ok(Self::Boltzmann),
            "bose-einstein" => Ok(Self::BoseEinstein),
            other => Err(format!("unknown body kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoClassConfig {
    pub body_kind: BodyKind,
    pub grid: Option<IncomeGrid>,
    pub min_class_size: usize,
    pub candidates: usize,
    pub low_percentile: f64,
    pub high_percentile: f64,
    /// Parametric bootstrap resamples for the KS bands; 0 disables them.
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for TwoClassConfig {
    fn default() -> Self {
        Self {
            body_kind: BodyKind::Boltzmann,
            grid: None,
            min_class_size: MIN_CLASS_SIZE,
            candidates: 199,
            low_percentile: 0.50,
            high_percentile: 0.99,
            bootstrap: 200,
            seed: 0,
        }
    }
}

/// 95th percentiles of KS distances of data simulated from the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsBands {
    pub body_ks_95: f64,
    pub tail_ks_95: f64,
    pub resamples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitFlags {
    pub weak_body: bool,
    pub weak_tail: bool,
    pub crossover_at_low_edge: bool,
    pub crossover_at_high_edge: bool,
    pub body_on_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoClassFit {
    pub body_kind: BodyKind,
    pub body_temperature: f64,
    /// Bose-Einstein bodies only.
    pub body_mu: Option<f64>,
    pub body_scale: Option<f64>,
    pub tail: TailModel,
    pub crossover: f64,
    pub crossover_percentile: f64,
    pub body_ks: f64,
    pub tail_ks: f64,
    pub body_fraction: f64,
    pub n: usize,
    pub n_body: usize,
    pub bands: Option<KsBands>,
    pub flags: FitFlags,
}

enum Body {
    Boltzmann(BoltzmannBody),
    BoseEinstein(BoseEinsteinBody),
}

impl Body {
    fn ks(&self) -> f64 {
        match self {
            Self::Boltzmann(b) => b.ks,
            Self::BoseEinstein(b) => b.ks,
        }
    }
}

fn fit_body(
    kind: BodyKind,
    grid: Option<&IncomeGrid>,
    body: &[f64],
    all: &[f64],
    cut: f64,
) -> Result<Body, FitError> {
    match kind {
        BodyKind::Boltzmann => boltzmann_sorted(body, cut).map(Body::Boltzmann),
        BodyKind::BoseEinstein => {
            let grid = grid.ok_or(FitError::MissingGrid)?;
            be_sorted(all, grid, cut).map(Body::BoseEinstein)
        }
    }
}

struct Candidate {
    index: usize,
    cut: f64,
    body: Body,
    tail: TailModel,
}

impl Candidate {
    fn score(&self) -> f64 {
        self.body.ks().max(self.tail.ks)
    }
}

fn percentile(config: &TwoClassConfig, i: usize) -> f64 {
    let k = config.candidates.max(2) - 1;
    config.low_percentile + (config.high_percentile - config.low_percentile) * i as f64 / k as f64
}

/// Crossover scan with min-max KS selection; ties go to the larger crossover.
pub fn fit_two_class(
    sample: &IncomeSample,
    config: &TwoClassConfig,
) -> Result<TwoClassFit, FitError> {
    if config.body_kind == BodyKind::BoseEinstein && config.grid.is_none() {
        return Err(FitError::MissingGrid);
    }
    let sorted = sample.sorted();
    let n = sorted.len();
    let need = config.min_class_size.max(1);
    let grid = config.grid.as_ref();
    let indices: Vec<usize> = (0..config.candidates.max(1)).collect();
    let fits = par::map_slice(&indices, |&i| {
        let cut = stats::quantile_sorted(&sorted, percentile(config, i));
        let split = sorted.partition_point(|&x| x < cut);
        if split < need || n - split < need {
            return None;
        }
        let body = fit_body(config.body_kind, grid, &sorted[..split], &sorted, cut).ok()?;
        let tail = fit_power_law_at(&sorted[split..], cut, need).ok()?;
        Some(Candidate {
            index: i,
            cut,
            body,
            tail,
        })
    });
    let best = fits
        .into_iter()
        .flatten()
        .fold(None::<Candidate>, |acc, c| match acc {
            Some(a) if a.score() < c.score() => Some(a),
            Some(a) if a.score() == c.score() && a.cut > c.cut => Some(a),
            _ => Some(c),
        })
        .ok_or(FitError::NoCrossover { needed: need })?;

    let split = sorted.partition_point(|&x| x < best.cut);
    let (body_temperature, body_mu, body_scale, body_on_boundary) = match &best.body {
        Body::Boltzmann(b) => (b.temperature, None, None, false),
        Body::BoseEinstein(b) => (b.temperature, Some(b.mu), Some(b.scale), b.boundary),
    };
    let last = config.candidates.max(1) - 1;
    let mut fit = TwoClassFit {
        body_kind: config.body_kind,
        body_temperature,
        body_mu,
        body_scale,
        tail: best.tail,
        crossover: best.cut,
        crossover_percentile: percentile(config, best.index),
        body_ks: best.body.ks(),
        tail_ks: best.tail.ks,
        body_fraction: split as f64 / n as f64,
        n,
        n_body: split,
        bands: None,
        flags: FitFlags {
            crossover_at_low_edge: best.index == 0,
            crossover_at_high_edge: best.index == last,
            body_on_boundary,
            ..FitFlags::default()
        },
    };
    if config.bootstrap > 0 {
        let bands = bootstrap_bands(&fit, &best.body, config)?;
        fit.flags.weak_body = fit.body_ks > bands.body_ks_95;
        fit.flags.weak_tail = fit.tail_ks > bands.tail_ks_95;
        fit.bands = Some(bands);
    }
    Ok(fit)
}

fn bootstrap_bands(
    fit: &TwoClassFit,
    body: &Body,
    config: &TwoClassConfig,
) -> Result<KsBands, FitError> {
    let grid = config.grid.as_ref();
    let n_tail = fit.n - fit.n_body;
    let need = config.min_class_size.max(1);
    let probs = match (body, grid) {
        (Body::BoseEinstein(b), Some(g)) => b.bin_probabilities(g),
        _ => Vec::new(),
    };
    let runs = par::map_range(config.bootstrap, |r| {
        let mut rng = rng::substream(config.seed, r as u64);
        let mut body_draws: Vec<f64> = match body {
            Body::Boltzmann(b) => (0..fit.n_body).map(|_| b.draw(&mut rng)).collect(),
            Body::BoseEinstein(b) => {
                let g = grid.expect("grid checked");
                (0..b.n_body).map(|_| b.draw(g, &probs, &mut rng)).collect()
            }
        };
        let mut tail_draws: Vec<f64> = (0..n_tail).map(|_| fit.tail.draw(&mut rng)).collect();
        body_draws.sort_by(f64::total_cmp);
        tail_draws.sort_by(f64::total_cmp);
        let bks = fit_body(
            config.body_kind,
            grid,
            &body_draws,
            &body_draws,
            fit.crossover,
        )
        .map(|b| b.ks())
        .unwrap_or(1.0);
        let tks = fit_power_law_at(&tail_draws, fit.crossover, need)
            .map(|t| t.ks)
            .unwrap_or(1.0);
        (bks, tks)
    });
    let mut b: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let mut t: Vec<f64> = runs.iter().map(|r| r.1).collect();
    b.sort_by(f64::total_cmp);
    t.sort_by(f64::total_cmp);
    Ok(KsBands {
        body_ks_95: stats::quantile_sorted(&b, 0.95),
        tail_ks_95: stats::quantile_sorted(&t, 0.95),
        resamples: config.bootstrap,
    })
}

/// Draws `n` incomes from a fitted two-class model: a `body_fraction` share
/// from the body below the crossover, the rest from the Pareto tail.
pub fn simulate(
    fit: &TwoClassFit,
    grid: Option<&IncomeGrid>,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, FitError> {
    let n_body = (fit.body_fraction * n as f64).round() as usize;
    let be = match fit.body_kind {
        BodyKind::Boltzmann => None,
        BodyKind::BoseEinstein => {
            let g = grid.ok_or(FitError::MissingGrid)?;
            let (lower, _) = g.edges().ok_or(ModelError::NonUniformGrid)?;
            let w = g.spacing();
            let n_bins = (0..g.len())
                .take_while(|&k| lower + (k as f64 + 1.0) * w <= fit.crossover + 1e-12 * w)
                .count();
            let body = BoseEinsteinBody {
                temperature: fit.body_temperature,
                mu: fit.body_mu.unwrap_or(f64::NEG_INFINITY),
                scale: fit.body_scale.unwrap_or(1.0),
                upper_cut: fit.crossover,
                n_bins,
                n_body,
                ks: 0.0,
                sse: 0.0,
                boundary: false,
            };
            let probs = body.bin_probabilities(g);
            Some((body, g, probs))
        }
    };
    let boltz = BoltzmannBody {
        temperature: fit.body_temperature,
        upper_cut: fit.crossover,
        n_body,
        ks: 0.0,
    };
    let layout = rng::chunks(n);
    let parts = par::map_slice(&layout, |&(start, len)| {
        let mut r = rng::substream(seed, (start / rng::CHUNK) as u64);
        (start..start + len)
            .map(|i| {
                if i < n_body {
                    match &be {
                        Some((b, g, p)) => b.draw(g, p, &mut r),
                        None => boltz.draw(&mut r),
                    }
                } else {
                    fit.tail.draw(&mut r)
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// One row of plot data: the empirical CCDF and the fitted two-class CCDF,
/// split into its body (below the crossover) and tail (at or above) parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub income: f64,
    pub empirical_ccdf: f64,
    pub body_ccdf: Option<f64>,
    pub tail_ccdf: Option<f64>,
}

/// Plot rows over the sample's unique values, thinned evenly to at most
/// `max_rows` (the largest value is always kept).
pub fn plot_rows(
    sample: &IncomeSample,
    fit: &TwoClassFit,
    grid: Option<&IncomeGrid>,
    max_rows: usize,
) -> Vec<PlotRow> {
    let ccdf = empirical_ccdf(sample);
    let keep: Vec<usize> = if ccdf.len() <= max_rows.max(2) {
        (0..ccdf.len()).collect()
    } else {
        let k = max_rows.max(2) - 1;
        let last = ccdf.len() - 1;
        let mut v: Vec<usize> = (0..=k).map(|i| i * last / k).collect();
        v.dedup();
        v
    };
    let bf = fit.body_fraction;
    let be_probs = match (fit.body_kind, grid) {
        (BodyKind::BoseEinstein, Some(g)) => {
            let (lower, _) = g.edges().unwrap_or((0.0, 0.0));
            let w = g.spacing();
            let n_bins = (0..g.len())
                .take_while(|&k| lower + (k as f64 + 1.0) * w <= fit.crossover + 1e-12 * w)
                .count();
            let f = be_shape(
                g,
                n_bins,
                g.levels()[0] - fit.body_mu.unwrap_or(f64::NEG_INFINITY),
                fit.body_temperature,
            );
            let s: f64 = f.iter().sum();
            Some(f.into_iter().map(|v| v / s).collect::<Vec<_>>())
        }
        _ => None,
    };
    keep.into_iter()
        .map(|i| {
            let (x, emp) = ccdf[i];
            let (body_ccdf, tail_ccdf) = if x < fit.crossover {
                let cdf = match (&be_probs, grid) {
                    (Some(p), Some(g)) => piecewise_cdf(g, p, x),
                    _ => truncated_exp_cdf(x, fit.body_temperature, fit.crossover),
                };
                (Some(bf * (1.0 - cdf) + (1.0 - bf)), None)
            } else {
                (None, Some((1.0 - bf) * fit.tail.ccdf(x)))
            };
            PlotRow {
                income: x,
                empirical_ccdf: emp,
                body_ccdf,
                tail_ccdf,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_sample(t: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed);
        (0..n)
            .map(|_| -t * (1.0 - r.random::<f64>()).ln())
            .collect()
    }

    #[test]
    fn csv_loading() {
        let s = read_income_csv("income\n1.0\n2.0\n3.0\n".as_bytes(), "t").unwrap();
        assert_eq!(s.values, vec![1.0, 2.0, 3.0]);
        let err = read_income_csv("income\n1.0\n-1.0\n".as_bytes(), "t").unwrap_err();
        assert_eq!(
            err,
            FitError::NonPositive {
                row: 2,
                value: -1.0
            }
        );
        assert!(err.to_string().contains("row 2"));
        let err = read_income_csv("wage\n1.0\n".as_bytes(), "t").unwrap_err();
        assert!(err.to_string().contains("\"income\""));
        assert!(read_income_csv("".as_bytes(), "t").is_err());
        assert_eq!(
            read_income_csv("income\n".as_bytes(), "t"),
            Err(FitError::Empty)
        );
    }

    #[test]
    fn ccdf_examples() {
        let s = IncomeSample::new(vec![3.0, 1.0, 2.0], "t").unwrap();
        let c = empirical_ccdf(&s);
        assert_eq!(c[0], (1.0, 1.0));
        assert!((c[1].1 - 2.0 / 3.0).abs() < 1e-15);
        let flat = IncomeSample::new(vec![5.0; 4], "t").unwrap();
        assert_eq!(empirical_ccdf(&flat), vec![(5.0, 1.0)]);
        let s = IncomeSample::new(exp_sample(1.0, 500, 3), "t").unwrap();
        assert!(empirical_ccdf(&s).windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn truncated_mean_equation() {
        for &(t, c) in &[(1.0f64, 3.0f64), (2.0, 1.0), (0.1, 5.0), (50.0, 1.0)] {
            let mean = t - c / (c / t).exp_m1();
            let got = truncated_temperature(mean, c).unwrap();
            assert!((got - t).abs() < 1e-8 * t, "{got} vs {t}");
        }
        assert_eq!(truncated_temperature(2.5, f64::INFINITY).unwrap(), 2.5);
        assert!(matches!(
            truncated_temperature(0.6, 1.0),
            Err(FitError::MeanTooHigh { .. })
        ));
    }

    #[test]
    fn boltzmann_on_exponential_data() {
        let n = 20_000;
        let s = IncomeSample::new(exp_sample(2.0, n, 1), "t").unwrap();
        let fit = fit_boltzmann_body(&s, 1e6).unwrap();
        let se = 2.0 / (n as f64).sqrt();
        assert!((fit.temperature - 2.0).abs() < 3.0 * se);
        let mean = s.values.iter().sum::<f64>() / n as f64;
        assert!((fit.temperature - mean).abs() < 1e-9);
    }

    #[test]
    fn boltzmann_on_uniform_data_has_large_ks() {
        let mut r = rng::stream(5);
        let s =
            IncomeSample::new((0..5000).map(|_| 1.0 - r.random::<f64>()).collect(), "t").unwrap();
        let fit = fit_boltzmann_body(&s, f64::INFINITY).unwrap();
        let ok = fit_boltzmann_body(
            &IncomeSample::new(exp_sample(0.5, 5000, 6), "t").unwrap(),
            f64::INFINITY,
        )
        .unwrap();
        assert!(fit.ks > 0.1 && ok.ks < 0.03, "{} {}", fit.ks, ok.ks);
    }

    fn be_grid() -> IncomeGrid {
        IncomeGrid::build(0.0, 20.0, 20, vec![3; 20]).unwrap()
    }

    #[test]
    fn bose_einstein_recovers_parameters() {
        let grid = be_grid();
        let truth = BoseEinsteinBody {
            temperature: 3.0,
            mu: -0.5,
            scale: 1.0,
            upper_cut: 20.0,
            n_bins: 20,
            n_body: 100_000,
            ks: 0.0,
            sse: 0.0,
            boundary: false,
        };
        let probs = truth.bin_probabilities(&grid);
        let mut r = rng::stream(10);
        let values: Vec<f64> = (0..100_000)
            .map(|_| truth.draw(&grid, &probs, &mut r))
            .collect();
        let s = IncomeSample::new(values, "t").unwrap();
        let fit = fit_bose_einstein_body(&s, &grid, 20.0).unwrap();
        assert!((fit.temperature / 3.0 - 1.0).abs() < 0.05, "{fit:?}");
        assert!((fit.mu / -0.5 - 1.0).abs() < 0.05, "{fit:?}");
        assert!(!fit.boundary);
        assert!(fit.mu < grid.levels()[0]);
    }

    #[test]
    fn bose_einstein_on_exponential_data_tends_to_boltzmann() {
        let grid = be_grid();
        let values: Vec<f64> = exp_sample(3.0, 50_000, 4)
            .into_iter()
            .filter(|&x| x < 20.0)
            .collect();
        let s = IncomeSample::new(values, "t").unwrap();
        let be = fit_bose_einstein_body(&s, &grid, 20.0).unwrap();
        let bz = fit_boltzmann_body(&s, 20.0).unwrap();
        // Far-off chemical potential with a Boltzmann-like temperature.
        assert!(
            grid.levels()[0] - be.mu > 5.0 * be.temperature || be.boundary,
            "{be:?}"
        );
        assert!((be.temperature / bz.temperature - 1.0).abs() < 0.1);
        assert!(be.ks < 2.0 * bz.ks + 0.01);
    }

    #[test]
    fn bose_einstein_refuses_few_bins() {
        let grid = be_grid();
        let s = IncomeSample::new(vec![0.5, 1.5, 2.5, 3.5, 3.6], "t").unwrap();
        assert!(matches!(
            fit_bose_einstein_body(&s, &grid, 20.0),
            Err(FitError::TooFewBins { populated: 4, .. })
        ));
    }

    fn mixture(n: usize, seed: u64) -> Vec<f64> {
        let body = BoltzmannBody {
            temperature: 1.0,
            upper_cut: 3.0,
            n_body: 0,
            ks: 0.0,
        };
        let tail = TailModel::new(2.0, 3.0).unwrap();
        let mut r = rng::stream(seed);
        (0..n)
            .map(|_| {
                if r.random::<f64>() < 0.95 {
                    body.draw(&mut r)
                } else {
                    tail.draw(&mut r)
                }
            })
            .collect()
    }

    #[test]
    fn two_class_mixture() {
        let s = IncomeSample::new(mixture(100_000, 2), "t").unwrap();
        let config = TwoClassConfig {
            bootstrap: 10,
            seed: 1,
            ..TwoClassConfig::default()
        };
        let fit = fit_two_class(&s, &config).unwrap();
        assert!((2.2..=4.0).contains(&fit.crossover), "{fit:?}");
        assert!((fit.body_temperature - 1.0).abs() < 0.1);
        assert!((fit.tail.gamma - 2.0).abs() < 0.3);
        assert_eq!(fit, fit_two_class(&s, &config).unwrap());
        let rows = plot_rows(&s, &fit, None, 500);
        assert!(rows.len() <= 500);
        assert!(rows
            .iter()
            .all(|r| r.body_ccdf.is_some() != r.tail_ccdf.is_some()));
    }

    #[test]
    fn two_class_needs_grid_for_bose_einstein() {
        let s = IncomeSample::new(mixture(1000, 1), "t").unwrap();
        let config = TwoClassConfig {
            body_kind: BodyKind::BoseEinstein,
            ..TwoClassConfig::default()
        };
        assert_eq!(fit_two_class(&s, &config), Err(FitError::MissingGrid));
    }
}
