//! The uniform ensemble over equilibrium income allocations.
//!
//! Small economies are enumerated exhaustively: every labeled composition of
//! `q = Π/δ` income quanta among `N` consumers (distinguishable consumers, the
//! monopolistic counting) or every partition of `q` into at most `N` parts
//! (indistinguishable consumers, the perfect counting). Large ones are sampled
//! uniformly, either from the continuous simplex `{R_i ≥ 0, Σ R_i = Π}` or
//! from the labeled compositions.
//!
//! Binning the allocations onto a grid and tallying the occupancies measures
//! the microstate count of each macrostate directly: with single-industry
//! levels aligned to the quantum, a labeled tally equals `N! / Π_k a_k!`.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    bin_counts, Allocation, EconomyParams, IncomeGrid, ModelError, OccupancyVector,
};
use crate::{par, rng};

/// Largest composition count the enumeration modes accept.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("enumeration would visit {count} compositions, above the limit of {limit}")]
    Guard { count: String, limit: u64 },
    #[error("invalid ensemble spec: {0}")]
    InvalidSpec(String),
    #[error("{0} needs an enumeration mode")]
    NotEnumeration(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleMode {
    EnumerateLabeled,
    EnumerateUnlabeled,
    SampleContinuous,
    SampleDiscrete,
}

impl EnsembleMode {
    pub fn is_enumeration(self) -> bool {
        matches!(self, Self::EnumerateLabeled | Self::EnumerateUnlabeled)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub params: EconomyParams,
    pub mode: EnsembleMode,
    pub sample_count: usize,
    pub rng_seed: u64,
}

impl EnsembleSpec {
    pub fn new(
        params: EconomyParams,
        mode: EnsembleMode,
        sample_count: usize,
        rng_seed: u64,
    ) -> Result<Self, EnsembleError> {
        let spec = Self {
            params,
            mode,
            sample_count,
            rng_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn enumeration(params: EconomyParams, labeled: bool) -> Result<Self, EnsembleError> {
        let mode = if labeled {
            EnsembleMode::EnumerateLabeled
        } else {
            EnsembleMode::EnumerateUnlabeled
        };
        Self::new(params, mode, 0, 0)
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        match self.mode {
            EnsembleMode::EnumerateLabeled | EnsembleMode::EnumerateUnlabeled => {
                let q = self.params.quanta()?;
                let count = composition_count(q, self.params.n_consumers);
                if count > BigUint::from(ENUMERATION_LIMIT) {
                    return Err(EnsembleError::Guard {
                        count: count.to_string(),
                        limit: ENUMERATION_LIMIT,
                    });
                }
            }
            EnsembleMode::SampleDiscrete => {
                self.params.quanta()?;
                if self.sample_count == 0 {
                    return Err(EnsembleError::InvalidSpec(
                        "sample_count must be positive".into(),
                    ));
                }
            }
            EnsembleMode::SampleContinuous => {
                if self.sample_count == 0 {
                    return Err(EnsembleError::InvalidSpec(
                        "sample_count must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// `C(q + N − 1, N − 1)`, the number of labeled compositions.
pub fn composition_count(q: u64, n: u64) -> BigUint {
    let top = q + n - 1;
    let k = (n - 1).min(q);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= top - i;
        acc /= i + 1;
    }
    acc
}

/// Labeled compositions of `q` into `n` parts, lexicographic from
/// `(0, …, 0, q)` to `(q, 0, …, 0)`.
#[derive(Debug, Clone)]
pub struct Compositions {
    current: Vec<u64>,
    done: bool,
}

impl Compositions {
    pub fn new(q: u64, n: usize) -> Self {
        let mut current = vec![0; n];
        if let Some(last) = current.last_mut() {
            *last = q;
        }
        Self {
            current,
            done: n == 0,
        }
    }
}

impl Iterator for Compositions {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Vec<u64>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let c = &mut self.current;
        let n = c.len();
        // Rightmost i < n − 1 with a positive suffix sum after it.
        let mut suffix = c[n - 1];
        let mut i = n - 1;
        loop {
            if i == 0 {
                self.done = true;
                return Some(out);
            }
            i -= 1;
            if suffix > 0 {
                break;
            }
            suffix += c[i];
        }
        c[i] += 1;
        for v in &mut c[i + 1..] {
            *v = 0;
        }
        c[n - 1] = suffix - 1;
        Some(out)
    }
}

/// Partitions of `q` into at most `n` parts as non-increasing vectors of
/// length `n`, in reverse lexicographic order.
#[derive(Debug, Clone)]
pub struct Partitions {
    current: Vec<u64>,
    done: bool,
}

impl Partitions {
    pub fn new(q: u64, n: usize) -> Self {
        let mut current = vec![0; n];
        if let Some(first) = current.first_mut() {
            *first = q;
        }
        Self {
            current,
            done: n == 0,
        }
    }
}

impl Iterator for Partitions {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Vec<u64>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let p = &mut self.current;
        let n = p.len();
        // Decrement the rightmost part that can shrink while the remainder
        // still fits behind it.
        let mut tail = 0u64;
        let mut i = n;
        loop {
            if i == 0 {
                self.done = true;
                return Some(out);
            }
            i -= 1;
            if p[i] > 0 {
                let cap = p[i] - 1;
                let rem = tail + 1;
                let slots = (n - 1 - i) as u64;
                if cap * slots >= rem {
                    p[i] = cap;
                    let mut left = rem;
                    for v in &mut p[i + 1..] {
                        *v = left.min(cap);
                        left -= *v;
                    }
                    return Some(out);
                }
            }
            tail += p[i];
        }
    }
}

/// Quanta vectors of an enumeration spec.
pub fn enumerate_quanta(
    spec: &EnsembleSpec,
) -> Result<Box<dyn Iterator<Item = Vec<u64>> + Send>, EnsembleError> {
    spec.validate()?;
    let q = spec.params.quanta()?;
    let n = spec.params.n_consumers as usize;
    match spec.mode {
        EnsembleMode::EnumerateLabeled => Ok(Box::new(Compositions::new(q, n))),
        EnsembleMode::EnumerateUnlabeled => Ok(Box::new(Partitions::new(q, n))),
        _ => Err(EnsembleError::NotEnumeration("enumerate_allocations")),
    }
}

/// Every allocation of the ensemble exactly once.
pub fn enumerate_allocations(
    spec: &EnsembleSpec,
) -> Result<impl Iterator<Item = Allocation> + Send, EnsembleError> {
    let quantum = spec.params.quantum;
    Ok(enumerate_quanta(spec)?.map(move |qs| Allocation::from_quanta(&qs, quantum)))
}

fn draw_continuous<R: Rng>(rng: &mut R, n: usize, total: f64) -> Vec<f64> {
    let mut e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = e.iter().sum();
    for x in &mut e {
        *x *= total / s;
    }
    e
}

/// Uniform labeled composition: `N − 1` bars among `q + N − 1` positions.
fn draw_discrete<R: Rng>(rng: &mut R, n: usize, q: u64) -> Vec<u64> {
    if n == 1 {
        return vec![q];
    }
    let positions = (q as usize) + n - 1;
    let mut bars = rand::seq::index::sample(rng, positions, n - 1).into_vec();
    bars.sort_unstable();
    let mut out = Vec::with_capacity(n);
    let mut prev: isize = -1;
    for &b in &bars {
        out.push((b as isize - prev - 1) as u64);
        prev = b as isize;
    }
    out.push((positions as isize - prev - 1) as u64);
    out
}

/// Runs `f` on every chunk of draws, each chunk on its own sub-stream. `f`
/// gets a draw generator and the chunk length.
fn sample_chunks<T: Send>(
    spec: &EnsembleSpec,
    f: impl Fn(&mut dyn FnMut() -> Allocation, usize) -> T + Sync + Send,
) -> Result<Vec<T>, EnsembleError> {
    spec.validate()?;
    let n = spec.params.n_consumers as usize;
    let total = spec.params.total_income;
    let quantum = spec.params.quantum;
    let q = match spec.mode {
        EnsembleMode::SampleDiscrete => spec.params.quanta()?,
        EnsembleMode::SampleContinuous => 0,
        _ => {
            return Err(EnsembleError::InvalidSpec(
                "sampling needs a sampling mode".into(),
            ))
        }
    };
    let discrete = spec.mode == EnsembleMode::SampleDiscrete;
    let layout = rng::chunks(spec.sample_count);
    Ok(par::map_slice(&layout, |&(start, len)| {
        let mut stream = rng::substream(spec.rng_seed, (start / rng::CHUNK) as u64);
        let mut next = || {
            if discrete {
                Allocation::from_quanta(&draw_discrete(&mut stream, n, q), quantum)
            } else {
                Allocation::unchecked(draw_continuous(&mut stream, n, total))
                    .expect("exponential draws are non-negative")
            }
        };
        f(&mut next, len)
    }))
}

/// `sample_count` uniform draws; identical for identical spec and seed,
/// whatever the thread count.
pub fn sample_uniform(spec: &EnsembleSpec) -> Result<Vec<Allocation>, EnsembleError> {
    let parts = sample_chunks(spec, |next, len| {
        (0..len).map(|_| next()).collect::<Vec<_>>()
    })?;
    Ok(parts.into_iter().flatten().collect())
}

/// Occupancy tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Histogram {
    pub tallies: BTreeMap<Vec<u64>, u64>,
    pub processed: u64,
}

/// One histogram row for output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramEntry {
    pub occupancy: Vec<u64>,
    pub count: u64,
}

impl Histogram {
    fn add(&mut self, occ: Vec<u64>) {
        *self.tallies.entry(occ).or_insert(0) += 1;
        self.processed += 1;
    }

    fn merge(&mut self, other: Histogram) {
        for (k, v) in other.tallies {
            *self.tallies.entry(k).or_insert(0) += v;
        }
        self.processed += other.processed;
    }

    pub fn get(&self, occ: &[u64]) -> u64 {
        self.tallies.get(occ).copied().unwrap_or(0)
    }

    /// Rows by descending count, ties in lexicographic order of occupancy.
    pub fn entries(&self) -> Vec<HistogramEntry> {
        let mut rows: Vec<HistogramEntry> = self
            .tallies
            .iter()
            .map(|(k, &v)| HistogramEntry {
                occupancy: k.clone(),
                count: v,
            })
            .collect();
        rows.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then_with(|| a.occupancy.cmp(&b.occupancy))
        });
        rows
    }
}

/// Bins every allocation of the ensemble onto `grid` and tallies occupancies.
pub fn macrostate_histogram(
    spec: &EnsembleSpec,
    grid: &IncomeGrid,
) -> Result<Histogram, EnsembleError> {
    if spec.mode.is_enumeration() {
        let mut hist = Histogram::default();
        for alloc in enumerate_allocations(spec)? {
            hist.add(bin_counts(alloc.incomes(), grid)?);
        }
        return Ok(hist);
    }
    let parts = sample_chunks(spec, |next, len| {
        let mut hist = Histogram::default();
        for _ in 0..len {
            hist.add(bin_counts(next().incomes(), grid)?);
        }
        Ok::<_, ModelError>(hist)
    })?;
    let mut hist = Histogram::default();
    for part in parts {
        hist.merge(part?);
    }
    Ok(hist)
}

/// The occupancy (or tied occupancies, lexicographically ordered) with the
/// largest tally.
pub fn most_probable_macrostate(
    spec: &EnsembleSpec,
    grid: &IncomeGrid,
) -> Result<Vec<(OccupancyVector, u64)>, EnsembleError> {
    if !spec.mode.is_enumeration() {
        return Err(EnsembleError::NotEnumeration("most_probable_macrostate"));
    }
    let hist = macrostate_histogram(spec, grid)?;
    let best = hist.tallies.values().copied().max().unwrap_or(0);
    Ok(hist
        .tallies
        .iter()
        .filter(|(_, &v)| v == best)
        .map(|(k, &v)| (OccupancyVector::from_integers(k), v))
        .collect())
}

/// Composition count as `u64` when it fits.
pub fn composition_count_u64(q: u64, n: u64) -> Option<u64> {
    composition_count(q, n).to_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiplicity::{log_omega, Regime};

    fn params(n: u64, q: u64) -> EconomyParams {
        EconomyParams::new(n, q as f64, 1.0).unwrap()
    }

    fn unit_grid(q: u64) -> IncomeGrid {
        let levels: Vec<f64> = (0..=q).map(|k| k as f64).collect();
        IncomeGrid::new(levels, vec![1; q as usize + 1]).unwrap()
    }

    #[test]
    fn three_consumers_three_quanta() {
        let spec = EnsembleSpec::enumeration(params(3, 3), true).unwrap();
        let all: Vec<Vec<u64>> = enumerate_quanta(&spec).unwrap().collect();
        assert_eq!(all.len(), 10);
        let mut dedup = all.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 10);
        assert!(all.iter().all(|c| c.iter().sum::<u64>() == 3));
        assert_eq!(all.first().unwrap(), &vec![0, 0, 3]);
        assert_eq!(all.last().unwrap(), &vec![3, 0, 0]);
    }

    #[test]
    fn two_consumers_two_quanta_tallies() {
        let spec = EnsembleSpec::enumeration(params(2, 2), true).unwrap();
        let hist = macrostate_histogram(&spec, &unit_grid(2)).unwrap();
        assert_eq!(hist.processed, 3);
        assert_eq!(hist.get(&[1, 0, 1]), 2);
        assert_eq!(hist.get(&[0, 2, 0]), 1);
        assert_eq!(hist.tallies.len(), 2);
    }

    #[test]
    fn partitions_of_small_totals() {
        // p(q) for q = 0..10 with no bound on parts.
        let p = [1, 1, 2, 3, 5, 7, 11, 15, 22, 30, 42];
        for (q, &count) in p.iter().enumerate() {
            let parts: Vec<Vec<u64>> = Partitions::new(q as u64, q.max(1)).collect();
            assert_eq!(parts.len(), count, "q = {q}");
            assert!(parts.iter().all(|v| v.windows(2).all(|w| w[0] >= w[1])));
        }
        // Partitions of 6 into at most 2 parts: 6, 5+1, 4+2, 3+3.
        assert_eq!(Partitions::new(6, 2).count(), 4);
    }

    #[test]
    fn argmax_matches_labeled_count() {
        let spec = EnsembleSpec::enumeration(params(4, 4), true).unwrap();
        let grid = unit_grid(4);
        let top = most_probable_macrostate(&spec, &grid).unwrap();
        let hist = macrostate_histogram(&spec, &grid).unwrap();
        let mut best = f64::NEG_INFINITY;
        let mut argmax = Vec::new();
        for occ in hist.tallies.keys() {
            let lo = log_omega(
                &OccupancyVector::from_integers(occ),
                &grid,
                Regime::Monopolistic,
            )
            .unwrap();
            if lo > best + 1e-9 {
                best = lo;
                argmax = vec![occ.clone()];
            } else if (lo - best).abs() <= 1e-9 {
                argmax.push(occ.clone());
            }
        }
        let got: Vec<Vec<u64>> = top
            .iter()
            .map(|(o, _)| o.integer_counts().unwrap())
            .collect();
        assert_eq!(got, argmax);
        assert_eq!(top[0].1, best.exp().round() as u64);
    }

    #[test]
    fn sampling_is_reproducible() {
        for mode in [EnsembleMode::SampleContinuous, EnsembleMode::SampleDiscrete] {
            let spec = EnsembleSpec::new(params(5, 20), mode, 5000, 11).unwrap();
            let a = sample_uniform(&spec).unwrap();
            let b = sample_uniform(&spec).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 5000);
            for alloc in &a {
                assert!((alloc.total() - 20.0).abs() < 1e-9);
                assert!(alloc.incomes().iter().all(|&x| x >= 0.0));
            }
            let other = EnsembleSpec {
                rng_seed: 12,
                ..spec
            };
            assert_ne!(a, sample_uniform(&other).unwrap());
        }
    }

    #[test]
    fn discrete_draws_are_uniform_over_compositions() {
        let spec =
            EnsembleSpec::new(params(3, 3), EnsembleMode::SampleDiscrete, 20_000, 3).unwrap();
        let mut tally: BTreeMap<Vec<u64>, u64> = BTreeMap::new();
        for alloc in sample_uniform(&spec).unwrap() {
            let q: Vec<u64> = alloc.incomes().iter().map(|&x| x.round() as u64).collect();
            *tally.entry(q).or_insert(0) += 1;
        }
        assert_eq!(tally.len(), 10);
        let obs: Vec<u64> = tally.values().copied().collect();
        let exp = vec![2000.0; 10];
        let stat = crate::stats::chi_square_statistic(&obs, &exp);
        assert!(crate::stats::chi_square_p_value(stat, 9) > 1e-3);
    }

    #[test]
    fn guard_rejects_large_enumerations() {
        let err = EnsembleSpec::enumeration(params(30, 60), true).unwrap_err();
        assert!(matches!(err, EnsembleError::Guard { .. }));
        assert_eq!(composition_count_u64(3, 3), Some(10));
    }

    #[test]
    fn entries_sort_by_count() {
        let spec = EnsembleSpec::enumeration(params(2, 2), true).unwrap();
        let rows = macrostate_histogram(&spec, &unit_grid(2))
            .unwrap()
            .entries();
        assert_eq!(rows[0].occupancy, vec![1, 0, 1]);
        assert_eq!(rows[1].count, 1);
    }
}
