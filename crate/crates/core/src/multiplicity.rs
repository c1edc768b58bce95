//! Microstate counting for the two competition regimes.
//!
//! For occupancies `a_k` over levels with `g_k` industries:
//!
//! * perfect competition (indistinguishable consumers):
//!   `Ω = Π_k (a_k + g_k − 1)! / (a_k! (g_k − 1)!)`
//! * monopolistic competition (distinguishable consumers):
//!   `Ω = N! / Π_k a_k! · Π_k g_k^{a_k}`
//!
//! Logs are the primary representation; exact big integers are available for
//! integer occupancies, and [`oracle_count`] recounts small instances by
//! walking the microstates themselves.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{IncomeGrid, ModelError, OccupancyVector};
use crate::stats::ln_factorial;

/// Largest `N` and `Σ g_k` the enumeration oracle accepts.
pub const ORACLE_MAX: u64 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiplicityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(
        "level {level} has a single industry; the Stirling form needs ln(g − 1) and diverges \
         there, use the log-gamma evaluation instead"
    )]
    UnitDegeneracy { level: usize },
    #[error("instance too large for enumeration: N = {n}, Σg = {slots} (limit {limit} each)")]
    OracleGuard { n: u64, slots: u64, limit: u64 },
}

/// Competition regime; the indicator `I` is 1 for perfect and 0 for
/// monopolistic competition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Perfect,
    Monopolistic,
}

impl Regime {
    pub fn indicator(self) -> f64 {
        match self {
            Regime::Perfect => 1.0,
            Regime::Monopolistic => 0.0,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Perfect => "perfect",
            Regime::Monopolistic => "monopolistic",
        })
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "perfect" => Ok(Regime::Perfect),
            "monopolistic" => Ok(Regime::Monopolistic),
            other => Err(format!(
                "unknown regime {other:?} (expected perfect or monopolistic)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Multiplicity {
    pub log_omega: f64,
    pub exact_omega: Option<BigUint>,
}

/// Natural log of a big integer, accurate to double precision.
pub fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        return x.to_u64().map_or(f64::NAN, |v| (v as f64).ln());
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().expect("64 leading bits fit");
    (top as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

fn binomial(n: u64, k: u64) -> BigUint {
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

fn factorial(n: u64) -> BigUint {
    (2..=n).fold(BigUint::one(), |acc, i| acc * i)
}

/// Exact `Ω` for an integer occupancy.
pub fn omega_exact(
    occ: &OccupancyVector,
    grid: &IncomeGrid,
    regime: Regime,
) -> Result<Multiplicity, MultiplicityError> {
    occ.check_grid(grid)?;
    let counts = occ.integer_counts()?;
    let g = grid.degeneracies();
    let omega = match regime {
        Regime::Perfect => counts
            .iter()
            .zip(g)
            .fold(BigUint::one(), |acc, (&a, &g)| acc * binomial(a + g - 1, a)),
        Regime::Monopolistic => {
            let n: u64 = counts.iter().sum();
            let mut num = factorial(n);
            for (&a, &g) in counts.iter().zip(g) {
                num *= BigUint::from(g).pow(a as u32);
            }
            let den = counts
                .iter()
                .fold(BigUint::one(), |acc, &a| acc * factorial(a));
            num / den
        }
    };
    Ok(Multiplicity {
        log_omega: ln_biguint(&omega),
        exact_omega: Some(omega),
    })
}

/// `ln Ω` through `ln m! = ln Γ(m + 1)`; accepts real-valued occupancies.
pub fn log_omega(
    occ: &OccupancyVector,
    grid: &IncomeGrid,
    regime: Regime,
) -> Result<f64, MultiplicityError> {
    occ.check_grid(grid)?;
    occ.check_non_negative()?;
    Ok(log_omega_unchecked(
        &occ.counts,
        grid.degeneracies(),
        regime,
    ))
}

pub(crate) fn log_omega_unchecked(counts: &[f64], g: &[u64], regime: Regime) -> f64 {
    match regime {
        Regime::Perfect => counts
            .iter()
            .zip(g)
            .map(|(&a, &g)| {
                let g = g as f64;
                ln_factorial(a + g - 1.0) - ln_factorial(a) - ln_factorial(g - 1.0)
            })
            .sum(),
        Regime::Monopolistic => {
            let n: f64 = counts.iter().sum();
            let mut s = ln_factorial(n);
            for (&a, &g) in counts.iter().zip(g) {
                s -= ln_factorial(a);
                if a > 0.0 {
                    s += a * (g as f64).ln();
                }
            }
            s
        }
    }
}

fn x_ln_x(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Stirling-approximated `ln Ω` for perfect competition, term by term
/// `(a+g−1) ln(a+g−1) − a ln a − g ln(g−1) + 1` with `0 ln 0 = 0`.
///
/// Only meaningful for `a_k ≫ 1`. Levels with `g_k = 1` are rejected because
/// `ln(g_k − 1)` diverges.
pub fn log_omega_stirling(
    occ: &OccupancyVector,
    grid: &IncomeGrid,
) -> Result<f64, MultiplicityError> {
    occ.check_grid(grid)?;
    occ.check_non_negative()?;
    let mut s = 0.0;
    for (level, (&a, &g)) in occ.counts.iter().zip(grid.degeneracies()).enumerate() {
        if g == 1 {
            return Err(MultiplicityError::UnitDegeneracy { level });
        }
        let g = g as f64;
        s += x_ln_x(a + g - 1.0) - x_ln_x(a) - g * (g - 1.0).ln() + 1.0;
    }
    Ok(s)
}

/// Counts microstates of a small instance by enumerating them.
///
/// Perfect: every way of spreading each level's indistinguishable consumers
/// over that level's industry slots, enumerated leaf by leaf. Monopolistic:
/// every assignment of labeled consumers to a (level, slot) pair consistent
/// with the occupancy; consumers are placed one at a time and subtrees with
/// the same remaining occupancy are counted once.
pub fn oracle_count(
    occ: &OccupancyVector,
    grid: &IncomeGrid,
    regime: Regime,
) -> Result<BigUint, MultiplicityError> {
    occ.check_grid(grid)?;
    let counts = occ.integer_counts()?;
    let n: u64 = counts.iter().sum();
    let slots: u64 = grid.degeneracies().iter().sum();
    if n > ORACLE_MAX || slots > ORACLE_MAX {
        return Err(MultiplicityError::OracleGuard {
            n,
            slots,
            limit: ORACLE_MAX,
        });
    }
    let g = grid.degeneracies();
    let total = match regime {
        Regime::Perfect => {
            let mut leaves = 0u128;
            enumerate_multisets(
                &counts,
                g,
                0,
                0,
                counts.first().copied().unwrap_or(0),
                &mut leaves,
            );
            leaves
        }
        Regime::Monopolistic => {
            let mut memo = HashMap::new();
            let mut remaining = counts.clone();
            count_labeled(&mut remaining, g, &mut memo)
        }
    };
    Ok(BigUint::from(total))
}

/// Walks slots level by level; `left` consumers of level `k` remain to be put
/// into slots `slot..g_k`.
fn enumerate_multisets(
    counts: &[u64],
    g: &[u64],
    k: usize,
    slot: u64,
    left: u64,
    leaves: &mut u128,
) {
    if k == counts.len() {
        *leaves += 1;
        return;
    }
    if slot + 1 == g[k] {
        // The last slot of the level takes whatever is left.
        let next_left = counts.get(k + 1).copied().unwrap_or(0);
        enumerate_multisets(counts, g, k + 1, 0, next_left, leaves);
        return;
    }
    for take in 0..=left {
        enumerate_multisets(counts, g, k, slot + 1, left - take, leaves);
    }
}

fn count_labeled(remaining: &mut Vec<u64>, g: &[u64], memo: &mut HashMap<Vec<u64>, u128>) -> u128 {
    if remaining.iter().all(|&r| r == 0) {
        return 1;
    }
    if let Some(&c) = memo.get(remaining.as_slice()) {
        return c;
    }
    let mut total = 0u128;
    for k in 0..remaining.len() {
        if remaining[k] == 0 {
            continue;
        }
        remaining[k] -= 1;
        let sub = count_labeled(remaining, g, memo);
        remaining[k] += 1;
        for _slot in 0..g[k] {
            total += sub;
        }
    }
    memo.insert(remaining.clone(), total);
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(g: &[u64]) -> IncomeGrid {
        let levels = (0..g.len()).map(|k| k as f64 + 0.5).collect();
        IncomeGrid::new(levels, g.to_vec()).unwrap()
    }

    fn occ(a: &[u64]) -> OccupancyVector {
        OccupancyVector::from_integers(a)
    }

    /// Leaf-by-leaf enumeration of labeled assignments, no memoization.
    fn naive_labeled(a: &[u64], g: &[u64]) -> u64 {
        let n: u64 = a.iter().sum();
        let slots: Vec<usize> = g
            .iter()
            .enumerate()
            .flat_map(|(k, &gk)| std::iter::repeat_n(k, gk as usize))
            .collect();
        let mut count = 0;
        let mut choice = vec![0usize; n as usize];
        loop {
            let mut tally = vec![0u64; a.len()];
            for &c in &choice {
                tally[slots[c]] += 1;
            }
            if tally == a {
                count += 1;
            }
            let mut i = 0;
            loop {
                if i == choice.len() {
                    return count;
                }
                choice[i] += 1;
                if choice[i] < slots.len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn exact_examples() {
        let m = omega_exact(&occ(&[2]), &grid(&[3]), Regime::Perfect).unwrap();
        assert_eq!(m.exact_omega, Some(BigUint::from(6u32)));
        let m = omega_exact(&occ(&[0]), &grid(&[4]), Regime::Perfect).unwrap();
        assert_eq!(m.exact_omega, Some(BigUint::from(1u32)));
        let m = omega_exact(&occ(&[3]), &grid(&[2]), Regime::Monopolistic).unwrap();
        assert_eq!(m.exact_omega, Some(BigUint::from(8u32)));
        let m = omega_exact(&occ(&[1, 1]), &grid(&[1, 1]), Regime::Monopolistic).unwrap();
        assert_eq!(m.exact_omega, Some(BigUint::from(2u32)));
        assert!((m.log_omega - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn negative_counts_rejected() {
        let bad = OccupancyVector::new(vec![1.0, -2.0]);
        for r in [Regime::Perfect, Regime::Monopolistic] {
            assert!(omega_exact(&bad, &grid(&[1, 1]), r).is_err());
            assert!(log_omega(&bad, &grid(&[1, 1]), r).is_err());
        }
        assert!(log_omega_stirling(&bad, &grid(&[2, 2])).is_err());
    }

    #[test]
    fn log_examples() {
        let v = log_omega(&occ(&[2]), &grid(&[3]), Regime::Perfect).unwrap();
        assert!((v - 6f64.ln()).abs() < 1e-12);
        assert!((v - 1.791759).abs() < 1e-6);
        assert_eq!(
            log_omega(&occ(&[0, 0, 0]), &grid(&[2, 3, 1]), Regime::Perfect).unwrap(),
            0.0
        );
        let v = log_omega(&occ(&[1, 1]), &grid(&[1, 1]), Regime::Monopolistic).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_gamma_matches_big_integers() {
        for (a, g) in [
            (vec![5u64, 17, 0, 40], vec![3u64, 1, 7, 20]),
            (vec![300, 200, 100], vec![50, 5, 1]),
            (vec![1000], vec![500]),
        ] {
            for r in [Regime::Perfect, Regime::Monopolistic] {
                let exact = omega_exact(&occ(&a), &grid(&g), r).unwrap();
                let approx = log_omega(&occ(&a), &grid(&g), r).unwrap();
                let rel = (exact.log_omega - approx).abs() / exact.log_omega.abs();
                assert!(rel < 1e-9, "{r} {a:?} {g:?}: {rel}");
            }
        }
    }

    #[test]
    fn stirling_examples() {
        // Reference values from direct evaluation of ln Γ.
        let v = log_omega_stirling(&occ(&[1000]), &grid(&[500])).unwrap();
        let exact = log_omega(&occ(&[1000]), &grid(&[500]), Regime::Perfect).unwrap();
        assert!(((v - exact) / exact).abs() < 0.01);

        // a = 0: 1·ln 1 − 0 − 2·ln 1 + 1 = 1, while the exact value is 0.
        let v = log_omega_stirling(&occ(&[0]), &grid(&[2])).unwrap();
        assert_eq!(v, 1.0);

        // At a = 10⁶, g = 10³ the printed form is off by 1.94e-4 relative.
        let v = log_omega_stirling(&occ(&[1_000_000]), &grid(&[1000])).unwrap();
        let exact = log_omega(&occ(&[1_000_000]), &grid(&[1000]), Regime::Perfect).unwrap();
        let rel = ((v - exact) / exact).abs();
        assert!(rel < 2e-4 && rel > 1.9e-4, "{rel}");
    }

    #[test]
    fn stirling_rejects_single_industry() {
        assert_eq!(
            log_omega_stirling(&occ(&[3, 4]), &grid(&[2, 1])),
            Err(MultiplicityError::UnitDegeneracy { level: 1 })
        );
    }

    #[test]
    fn oracle_examples() {
        let c = oracle_count(&occ(&[2]), &grid(&[3]), Regime::Perfect).unwrap();
        assert_eq!(c, BigUint::from(6u32));
        let c = oracle_count(&occ(&[2, 1]), &grid(&[1, 1]), Regime::Monopolistic).unwrap();
        assert_eq!(c, BigUint::from(3u32));
        let c = oracle_count(&occ(&[1, 1]), &grid(&[1, 1]), Regime::Perfect).unwrap();
        assert_eq!(c, BigUint::from(1u32));
    }

    #[test]
    fn oracle_guard() {
        let err = oracle_count(&occ(&[13]), &grid(&[1]), Regime::Perfect).unwrap_err();
        assert!(matches!(err, MultiplicityError::OracleGuard { n: 13, .. }));
        let err = oracle_count(&occ(&[1, 1]), &grid(&[6, 7]), Regime::Monopolistic).unwrap_err();
        assert!(matches!(
            err,
            MultiplicityError::OracleGuard { slots: 13, .. }
        ));
    }

    #[test]
    fn memoized_labeled_count_matches_naive_walk() {
        for (a, g) in [
            (vec![2u64, 1], vec![2u64, 1]),
            (vec![1, 2, 1], vec![1, 2, 2]),
            (vec![3, 0, 2], vec![2, 3, 1]),
            (vec![0, 0], vec![3, 1]),
        ] {
            let oracle = oracle_count(&occ(&a), &grid(&g), Regime::Monopolistic).unwrap();
            assert_eq!(oracle, BigUint::from(naive_labeled(&a, &g)), "{a:?} {g:?}");
        }
    }

    #[test]
    fn regime_parsing() {
        assert_eq!("Perfect".parse::<Regime>().unwrap(), Regime::Perfect);
        assert_eq!(
            "monopolistic".parse::<Regime>().unwrap(),
            Regime::Monopolistic
        );
        assert!("free".parse::<Regime>().is_err());
        assert_eq!(
            serde_json::to_string(&Regime::Perfect).unwrap(),
            "\"perfect\""
        );
    }

    #[test]
    fn ln_biguint_large() {
        let x = factorial(200);
        let expected = ln_factorial(200.0);
        assert!((ln_biguint(&x) - expected).abs() / expected < 1e-14);
    }
}
