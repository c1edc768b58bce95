//! Most probable occupancies under the count and income constraints.
//!
//! Maximizing `ln Ω − α Σ a_k − β Σ a_k ε_k` gives
//!
//! ```text
//! a_k = (g_k − I) / (exp(α + β ε_k) − I)      I = 1 perfect, I = 0 monopolistic
//! ```
//!
//! equivalently `exp((ε_k − μ)/T)` in the denominator with `μ = −α/β` and
//! `T = 1/β`. [`solve`] finds `(α, β)` by nested bisection: for a fixed `β`
//! the head count is strictly decreasing in `α`, and the total income is
//! strictly decreasing in `β`.
//!
//! In the perfect regime the multiplier must keep `μ < ε_1`. When the excited
//! levels cannot hold all `N` consumers at any admissible `μ`, `μ` is pinned
//! just below `ε_1` and the overflow sits on the lowest level as a condensate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_occupancy, EconomyParams, FeasibilityReport, IncomeGrid, OccupancyVector,
};
use crate::multiplicity::Regime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(
        "sub-critical multipliers: exp(α + β ε_k) ≤ 1 at level {level} (exponent {exponent}); \
         perfect competition needs μ below the lowest level"
    )]
    SubCritical { level: usize, exponent: f64 },
    #[error("mean income {mean} lies outside the grid range [{lower}, {upper}]")]
    InfeasibleMeanIncome { mean: f64, lower: f64, upper: f64 },
    #[error(
        "mean income {mean} exceeds the infinite-temperature mean {limit}; \
         matching it needs a negative β"
    )]
    NegativeTemperature { mean: f64, limit: f64 },
    #[error(
        "no convergence after {iterations} iterations \
         (count residual {count_residual:e}, income residual {income_residual:e})"
    )]
    NoConvergence {
        iterations: usize,
        count_residual: f64,
        income_residual: f64,
    },
    #[error("occupancy has {counts} levels but the grid has {levels}")]
    LengthMismatch { counts: usize, levels: usize },
    #[error("Boltzmann-limit check needs g_k/a_k ≥ 100; level {level} has g/a = {ratio}")]
    DenseLevel { level: usize, ratio: f64 },
    #[error("Boltzmann-limit check needs a perfect-competition, non-degenerate solution")]
    WrongRegime,
}

/// Tolerances and iteration caps for [`solve_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative tolerance on both constraint residuals.
    pub constraint_tol: f64,
    /// Relative width at which the inner bisection stops.
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Admissible `β` range, in units of `1 / mean(ε)`.
    pub beta_min: f64,
    pub beta_max: f64,
    /// Distance of the pinned `μ` below `ε_1`, in units of `Δε`.
    pub pin_offset: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            constraint_tol: 1e-8,
            inner_tol: 1e-12,
            max_outer: 200,
            max_inner: 200,
            beta_min: 1e-12,
            beta_max: 1e12,
            pin_offset: 1e-9,
        }
    }
}

/// Maximum-entropy solution.
///
/// Degenerate single-industry solutions have every consumer on one level;
/// their multipliers are infinite (`β = ∞`, `T = 0`) and serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    #[serde(with = "finite_or_null")]
    pub alpha: f64,
    #[serde(with = "finite_or_null")]
    pub beta: f64,
    #[serde(with = "finite_or_null")]
    pub mu: f64,
    #[serde(with = "finite_or_null")]
    pub temperature: f64,
    pub regime: Regime,
    pub occupancy: OccupancyVector,
    pub condensate_fraction: f64,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl EquilibriumSolution {
    pub fn feasibility(&self, params: &EconomyParams, grid: &IncomeGrid) -> FeasibilityReport {
        validate_occupancy(&self.occupancy, params, grid)
    }

    pub fn is_condensed(&self) -> bool {
        self.condensate_fraction > 0.0
    }
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Occupancies at given multipliers.
pub fn occupancy_at(
    alpha: f64,
    beta: f64,
    grid: &IncomeGrid,
    regime: Regime,
) -> Result<OccupancyVector, SolverError> {
    let mut counts = Vec::with_capacity(grid.len());
    for (level, (&e, &g)) in grid.levels().iter().zip(grid.degeneracies()).enumerate() {
        let x = alpha + beta * e;
        let a = match regime {
            Regime::Perfect => {
                if x.is_nan() || x <= 0.0 {
                    return Err(SolverError::SubCritical { level, exponent: x });
                }
                if g == 1 {
                    0.0
                } else {
                    (g - 1) as f64 / x.exp_m1()
                }
            }
            Regime::Monopolistic => g as f64 * (-x).exp(),
        };
        counts.push(a);
    }
    Ok(OccupancyVector::new(counts))
}

/// Everyone on one level, when perfect competition meets single-industry
/// levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateOccupancy {
    pub occupancy: OccupancyVector,
    /// Index `l` of the occupied level, `ε_l ≈ Π/N`.
    pub level: usize,
    /// Set when `Π/N` is farther than `Δε/2` from every level.
    pub snapped: bool,
}

/// The perfect-competition, all-`g_k = 1` case: every consumer earns
/// `μ = Π/N`, so the occupancy is `N` at the level nearest `Π/N` and zero
/// elsewhere. Ties go to the lower level. Returns `None` otherwise.
pub fn detect_single_industry(
    grid: &IncomeGrid,
    regime: Regime,
    params: &EconomyParams,
) -> Option<DegenerateOccupancy> {
    if regime != Regime::Perfect || grid.degeneracies().iter().any(|&g| g != 1) {
        return None;
    }
    let mean = params.mean_income();
    let mut level = 0;
    let mut best = f64::INFINITY;
    for (k, &e) in grid.levels().iter().enumerate() {
        let d = (e - mean).abs();
        if d < best {
            best = d;
            level = k;
        }
    }
    let snapped = best > grid.spacing() / 2.0;
    if snapped {
        log::warn!(
            "mean income {mean} is {best} away from the nearest level {}; \
             snapping all consumers to it",
            grid.levels()[level]
        );
    }
    let mut counts = vec![0.0; grid.len()];
    counts[level] = params.n_consumers as f64;
    Some(DegenerateOccupancy {
        occupancy: OccupancyVector::new(counts),
        level,
        snapped,
    })
}

/// Solves with [`SolverConfig::default`].
pub fn solve(
    params: &EconomyParams,
    grid: &IncomeGrid,
    regime: Regime,
) -> Result<EquilibriumSolution, SolverError> {
    solve_with(params, grid, regime, &SolverConfig::default())
}

/// Inner solution at a fixed `β`.
struct Inner {
    /// `α + β ε_1`.
    shift: f64,
    counts: Vec<f64>,
    condensate: f64,
}

struct Problem<'a> {
    grid: &'a IncomeGrid,
    regime: Regime,
    n: f64,
    /// `ε_k − ε_1`.
    offsets: Vec<f64>,
    cfg: &'a SolverConfig,
    pin: f64,
}

impl Problem<'_> {
    fn perfect_counts(&self, beta: f64, shift: f64, out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for ((a, &d), &g) in out
            .iter_mut()
            .zip(&self.offsets)
            .zip(self.grid.degeneracies())
        {
            *a = if g == 1 {
                0.0
            } else {
                (g - 1) as f64 / (shift + beta * d).exp_m1()
            };
            total += *a;
        }
        total
    }

    fn inner(&self, beta: f64) -> Inner {
        let g = self.grid.degeneracies();
        let mut counts = vec![0.0; g.len()];
        match self.regime {
            Regime::Monopolistic => {
                let weights: Vec<f64> = self
                    .offsets
                    .iter()
                    .zip(g)
                    .map(|(&d, &g)| g as f64 * (-beta * d).exp())
                    .collect();
                let z: f64 = weights.iter().sum();
                for (a, w) in counts.iter_mut().zip(&weights) {
                    *a = self.n * w / z;
                }
                Inner {
                    shift: (z / self.n).ln(),
                    counts,
                    condensate: 0.0,
                }
            }
            Regime::Perfect => {
                let lo_shift = beta * self.pin;
                let at_pin = self.perfect_counts(beta, lo_shift, &mut counts);
                if at_pin <= self.n {
                    let condensate = self.n - at_pin;
                    counts[0] += condensate;
                    return Inner {
                        shift: lo_shift,
                        counts,
                        condensate,
                    };
                }
                let capacity: f64 = g.iter().map(|&g| (g - 1) as f64).sum();
                let mut lo = lo_shift;
                let mut hi = (capacity / self.n).ln_1p().max(lo_shift);
                for _ in 0..self.cfg.max_inner {
                    if hi - lo <= self.cfg.inner_tol * hi {
                        break;
                    }
                    let mid = if lo > 0.0 {
                        (lo * hi).sqrt()
                    } else {
                        0.5 * (lo + hi)
                    };
                    if self.perfect_counts(beta, mid, &mut counts) > self.n {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let shift = 0.5 * (lo + hi);
                self.perfect_counts(beta, shift, &mut counts);
                Inner {
                    shift,
                    counts,
                    condensate: 0.0,
                }
            }
        }
    }

    fn income(&self, counts: &[f64]) -> f64 {
        counts
            .iter()
            .zip(self.grid.levels())
            .map(|(a, e)| a * e)
            .sum()
    }
}

/// Solves for the maximum-entropy occupancy.
pub fn solve_with(
    params: &EconomyParams,
    grid: &IncomeGrid,
    regime: Regime,
    cfg: &SolverConfig,
) -> Result<EquilibriumSolution, SolverError> {
    let levels = grid.levels();
    let lowest = levels[0];
    let highest = levels[levels.len() - 1];
    let mean = params.mean_income();
    let slack = 1e-12 * mean.abs().max(highest);
    if mean < lowest - slack || mean > highest + slack {
        return Err(SolverError::InfeasibleMeanIncome {
            mean,
            lower: lowest,
            upper: highest,
        });
    }

    if let Some(deg) = detect_single_industry(grid, regime, params) {
        let mu = levels[deg.level];
        let warning = deg
            .snapped
            .then(|| format!("mean income {mean} is off-grid; all consumers placed on level {mu}"));
        return Ok(EquilibriumSolution {
            alpha: f64::NEG_INFINITY,
            beta: f64::INFINITY,
            mu,
            temperature: 0.0,
            regime,
            occupancy: deg.occupancy,
            condensate_fraction: 0.0,
            degenerate: true,
            warning,
        });
    }

    let problem = Problem {
        grid,
        regime,
        n: params.n_consumers as f64,
        offsets: levels.iter().map(|e| e - lowest).collect(),
        cfg,
        pin: cfg.pin_offset * grid.spacing(),
    };
    let target = params.total_income;
    let residual = |inner: &Inner| problem.income(&inner.counts) / target - 1.0;

    let level_mean = levels.iter().sum::<f64>() / levels.len() as f64;
    let scale = if level_mean > 0.0 {
        level_mean
    } else {
        grid.spacing()
    };
    let (beta_floor, beta_ceil) = (cfg.beta_min / scale, cfg.beta_max / scale);
    let aim = 1e-2 * cfg.constraint_tol;

    let eval = |beta: f64| {
        let inner = problem.inner(beta);
        let r = residual(&inner);
        (inner, r)
    };

    let mut iterations = 0;
    let mut beta = 1.0 / scale;
    let (mut inner, mut r) = eval(beta);
    let mut bracketed = false;

    if r.abs() > aim {
        // Income falls as β grows: step geometrically until r changes sign.
        let (mut lo, mut hi) = (beta, beta);
        let upward = r > 0.0;
        while iterations < cfg.max_outer {
            iterations += 1;
            if upward {
                if hi >= beta_ceil {
                    break;
                }
                lo = hi;
                hi = (hi * 10.0).min(beta_ceil);
                beta = hi;
            } else {
                if lo <= beta_floor {
                    break;
                }
                hi = lo;
                lo = (lo / 10.0).max(beta_floor);
                beta = lo;
            }
            (inner, r) = eval(beta);
            if (upward && r <= 0.0) || (!upward && r >= 0.0) {
                bracketed = true;
                break;
            }
        }
        if bracketed {
            while r.abs() > aim && iterations < cfg.max_outer && hi / lo - 1.0 > 1e-15 {
                iterations += 1;
                beta = (lo * hi).sqrt();
                (inner, r) = eval(beta);
                if r > 0.0 {
                    lo = beta;
                } else {
                    hi = beta;
                }
            }
        }
    }

    let count_residual = inner.counts.iter().sum::<f64>() / problem.n - 1.0;
    let income_residual = r;
    if count_residual.abs() > cfg.constraint_tol || income_residual.abs() > cfg.constraint_tol {
        if !bracketed && r < 0.0 && beta <= beta_floor {
            let weights: Vec<f64> = match regime {
                Regime::Perfect => grid
                    .degeneracies()
                    .iter()
                    .map(|&g| (g - 1) as f64)
                    .collect(),
                Regime::Monopolistic => grid.degeneracies().iter().map(|&g| g as f64).collect(),
            };
            let limit = grid.weighted_mean(weights.into_iter()).unwrap_or(lowest);
            return Err(SolverError::NegativeTemperature { mean, limit });
        }
        return Err(SolverError::NoConvergence {
            iterations,
            count_residual,
            income_residual,
        });
    }

    let alpha = inner.shift - beta * lowest;
    Ok(EquilibriumSolution {
        alpha,
        beta,
        mu: -alpha / beta,
        temperature: 1.0 / beta,
        regime,
        occupancy: OccupancyVector::new(inner.counts),
        condensate_fraction: inner.condensate / problem.n,
        degenerate: false,
        warning: None,
    })
}

/// Largest relative gap `|a_k(I=1) − a_k(I=0)| / a_k(I=0)` between the two
/// occupancy forms at the solution's multipliers. Requires a perfect-regime
/// solution with `g_k / a_k ≥ 100` on every level.
pub fn boltzmann_limit_check(
    solution: &EquilibriumSolution,
    grid: &IncomeGrid,
) -> Result<f64, SolverError> {
    if solution.regime != Regime::Perfect || solution.degenerate {
        return Err(SolverError::WrongRegime);
    }
    if solution.occupancy.len() != grid.len() {
        return Err(SolverError::LengthMismatch {
            counts: solution.occupancy.len(),
            levels: grid.len(),
        });
    }
    for (level, (&a, &g)) in solution
        .occupancy
        .counts
        .iter()
        .zip(grid.degeneracies())
        .enumerate()
    {
        let ratio = g as f64 / a;
        if ratio < 100.0 {
            return Err(SolverError::DenseLevel { level, ratio });
        }
    }
    let bose = occupancy_at(solution.alpha, solution.beta, grid, Regime::Perfect)?;
    let boltz = occupancy_at(solution.alpha, solution.beta, grid, Regime::Monopolistic)?;
    Ok(bose
        .counts
        .iter()
        .zip(&boltz.counts)
        .map(|(b, m)| (b - m).abs() / m)
        .fold(0.0, f64::max))
}
