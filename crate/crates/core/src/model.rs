//! Income state space: economy parameters, discretized income levels,
//! per-consumer allocations and level occupancies.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for the allocation budget `Σ R_i = Π`.
pub const ALLOCATION_TOL: f64 = 1e-12;
/// Relative tolerance for real-valued occupancy constraints.
pub const OCCUPANCY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid economy parameters: {0}")]
    InvalidParams(String),
    #[error("total income {total} is not an integer multiple of the quantum {quantum}")]
    NotQuantized { total: f64, quantum: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid bins are not uniform; binning needs equally spaced levels")]
    NonUniformGrid,
    #[error("income {value} of consumer {index} lies outside the grid range [{lower}, {upper}]")]
    OutOfRange {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("negative occupancy {value} at level {index}")]
    NegativeCount { index: usize, value: f64 },
    #[error("occupancy {value} at level {index} is not an integer")]
    NotInteger { index: usize, value: f64 },
    #[error("occupancy has {counts} levels but the grid has {levels}")]
    LengthMismatch { counts: usize, levels: usize },
    #[error("csv: {0}")]
    Csv(String),
}

/// Number of consumers `N`, total income `Π` and the enumeration quantum `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomyParams {
    pub n_consumers: u64,
    pub total_income: f64,
    pub quantum: f64,
}

impl EconomyParams {
    pub fn new(n_consumers: u64, total_income: f64, quantum: f64) -> Result<Self, ModelError> {
        if n_consumers == 0 {
            return Err(ModelError::InvalidParams(
                "n_consumers must be at least 1".into(),
            ));
        }
        if !(total_income.is_finite() && total_income > 0.0) {
            return Err(ModelError::InvalidParams(format!(
                "total_income must be positive, got {total_income}"
            )));
        }
        if !(quantum.is_finite() && quantum > 0.0) {
            return Err(ModelError::InvalidParams(format!(
                "quantum must be positive, got {quantum}"
            )));
        }
        Ok(Self {
            n_consumers,
            total_income,
            quantum,
        })
    }

    /// Parameters for continuous use, with the quantum set to the total.
    pub fn continuous(n_consumers: u64, total_income: f64) -> Result<Self, ModelError> {
        Self::new(n_consumers, total_income, total_income)
    }

    pub fn mean_income(&self) -> f64 {
        self.total_income / self.n_consumers as f64
    }

    /// `q = Π/δ`, required to be an integer for discrete enumeration.
    pub fn quanta(&self) -> Result<u64, ModelError> {
        let r = self.total_income / self.quantum;
        let q = r.round();
        if (r - q).abs() > 1e-9 * r.max(1.0) {
            return Err(ModelError::NotQuantized {
                total: self.total_income,
                quantum: self.quantum,
            });
        }
        Ok(q as u64)
    }
}

/// Strictly increasing income levels `ε_k ≥ 0` with industry degeneracies `g_k ≥ 1`.
///
/// When the levels are equally spaced the grid also carries a bin width and
/// can bin allocations; levels sit at bin centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct IncomeGrid {
    levels: Vec<f64>,
    degeneracies: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bin_width: Option<f64>,
    #[serde(skip)]
    lower_edge: Option<f64>,
}

#[derive(Deserialize)]
struct RawGrid {
    levels: Vec<f64>,
    degeneracies: Vec<u64>,
    #[serde(default)]
    bin_width: Option<f64>,
}

impl TryFrom<RawGrid> for IncomeGrid {
    type Error = ModelError;

    fn try_from(raw: RawGrid) -> Result<Self, Self::Error> {
        let mut grid = IncomeGrid::new(raw.levels, raw.degeneracies)?;
        if let Some(w) = raw.bin_width {
            if !(w.is_finite() && w > 0.0) {
                return Err(ModelError::InvalidGrid(format!(
                    "bin_width must be positive, got {w}"
                )));
            }
            if let Some(inferred) = grid.bin_width {
                if (inferred - w).abs() > 1e-9 * w {
                    return Err(ModelError::InvalidGrid(format!(
                        "bin_width {w} disagrees with level spacing {inferred}"
                    )));
                }
            } else if grid.levels.len() > 1 {
                return Err(ModelError::NonUniformGrid);
            }
            grid.bin_width = Some(w);
            grid.lower_edge = Some(grid.levels[0] - w / 2.0);
        }
        Ok(grid)
    }
}

impl IncomeGrid {
    /// Grid from explicit levels; the bin width is inferred when the levels
    /// are equally spaced (to 1e-9 relative).
    pub fn new(levels: Vec<f64>, degeneracies: Vec<u64>) -> Result<Self, ModelError> {
        if levels.is_empty() {
            return Err(ModelError::InvalidGrid(
                "at least one level is required".into(),
            ));
        }
        if levels.len() != degeneracies.len() {
            return Err(ModelError::InvalidGrid(format!(
                "{} levels but {} degeneracies",
                levels.len(),
                degeneracies.len()
            )));
        }
        if let Some(k) = degeneracies.iter().position(|&g| g == 0) {
            return Err(ModelError::InvalidGrid(format!(
                "degeneracy at level {k} is zero"
            )));
        }
        if levels.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::InvalidGrid("levels must be finite".into()));
        }
        if levels[0] < 0.0 {
            return Err(ModelError::InvalidGrid(format!(
                "lowest level must be non-negative, got {}",
                levels[0]
            )));
        }
        if let Some(k) = levels.windows(2).position(|w| w[1] <= w[0]) {
            return Err(ModelError::InvalidGrid(format!(
                "levels must be strictly increasing (level {} ≥ level {})",
                k,
                k + 1
            )));
        }
        let bin_width = if levels.len() > 1 {
            let w = (levels[levels.len() - 1] - levels[0]) / (levels.len() - 1) as f64;
            let uniform = levels
                .windows(2)
                .all(|p| ((p[1] - p[0]) - w).abs() <= 1e-9 * w);
            uniform.then_some(w)
        } else {
            None
        };
        let lower_edge = bin_width.map(|w| levels[0] - w / 2.0);
        Ok(Self {
            levels,
            degeneracies,
            bin_width,
            lower_edge,
        })
    }

    /// `n_levels` uniform bins over `[epsilon_min, epsilon_max]`, levels at
    /// the bin centers.
    pub fn build(
        epsilon_min: f64,
        epsilon_max: f64,
        n_levels: usize,
        degeneracies: Vec<u64>,
    ) -> Result<Self, ModelError> {
        if !(epsilon_min.is_finite() && epsilon_max.is_finite()) || epsilon_min < 0.0 {
            return Err(ModelError::InvalidGrid(format!(
                "range must satisfy 0 ≤ epsilon_min, got [{epsilon_min}, {epsilon_max}]"
            )));
        }
        if epsilon_max <= epsilon_min {
            return Err(ModelError::InvalidGrid(format!(
                "epsilon_max {epsilon_max} must exceed epsilon_min {epsilon_min}"
            )));
        }
        if n_levels == 0 {
            return Err(ModelError::InvalidGrid(
                "n_levels must be at least 1".into(),
            ));
        }
        if degeneracies.len() != n_levels {
            return Err(ModelError::InvalidGrid(format!(
                "{} degeneracies for {} levels",
                degeneracies.len(),
                n_levels
            )));
        }
        let width = (epsilon_max - epsilon_min) / n_levels as f64;
        let levels = (0..n_levels)
            .map(|k| epsilon_min + (k as f64 + 0.5) * width)
            .collect();
        let mut grid = Self::new(levels, degeneracies)?;
        grid.bin_width = Some(width);
        grid.lower_edge = Some(epsilon_min);
        Ok(grid)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn degeneracies(&self) -> &[u64] {
        &self.degeneracies
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn bin_width(&self) -> Option<f64> {
        self.bin_width
    }

    /// Level spacing `Δε`: the bin width, else the smallest gap between
    /// levels, else 1 for a single unbinned level.
    pub fn spacing(&self) -> f64 {
        match self.bin_width {
            Some(w) => w,
            None if self.levels.len() == 1 => 1.0,
            None => self
                .levels
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// `[lower, upper]` edges of the binned range.
    pub fn edges(&self) -> Option<(f64, f64)> {
        let w = self.bin_width?;
        let lo = self.lower_edge.unwrap_or(self.levels[0] - w / 2.0);
        Some((lo, lo + w * self.levels.len() as f64))
    }

    /// Bin of `value`: half-open `[left, right)`, the last bin closed.
    pub fn bin_index(&self, value: f64) -> Option<usize> {
        let (lo, hi) = self.edges()?;
        let w = self.bin_width?;
        let slack = 1e-12 * w;
        if !(value >= lo - slack && value <= hi + slack) {
            return None;
        }
        let idx = ((value - lo) / w).floor();
        Some((idx.max(0.0) as usize).min(self.levels.len() - 1))
    }

    /// Mean level weighted by `weights` (used for infinite-temperature limits).
    pub(crate) fn weighted_mean(&self, weights: impl Iterator<Item = f64>) -> Option<f64> {
        let (mut s, mut w) = (0.0, 0.0);
        for (e, g) in self.levels.iter().zip(weights) {
            s += e * g;
            w += g;
        }
        (w > 0.0).then(|| s / w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("grid serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Per-consumer incomes `(R_1, …, R_N)` on the budget simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    incomes: Vec<f64>,
}

impl Allocation {
    /// Checks `R_i ≥ 0` and `Σ R_i = Π` to [`ALLOCATION_TOL`].
    pub fn new(incomes: Vec<f64>, total_income: f64) -> Result<Self, ModelError> {
        let alloc = Self::unchecked(incomes)?;
        let sum = alloc.total();
        if (sum - total_income).abs() > ALLOCATION_TOL * total_income.abs().max(f64::MIN_POSITIVE) {
            return Err(ModelError::InvalidAllocation(format!(
                "incomes sum to {sum}, expected {total_income}"
            )));
        }
        Ok(alloc)
    }

    /// Non-negative incomes without a budget check.
    pub fn unchecked(incomes: Vec<f64>) -> Result<Self, ModelError> {
        if incomes.is_empty() {
            return Err(ModelError::InvalidAllocation("no consumers".into()));
        }
        if let Some((i, v)) = incomes
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(ModelError::InvalidAllocation(format!(
                "income {v} of consumer {i} is negative or not finite"
            )));
        }
        Ok(Self { incomes })
    }

    /// Allocation of integer quanta, `R_i = quanta_i · δ`.
    pub fn from_quanta(quanta: &[u64], quantum: f64) -> Self {
        Self {
            incomes: quanta.iter().map(|&q| q as f64 * quantum).collect(),
        }
    }

    pub fn incomes(&self) -> &[f64] {
        &self.incomes
    }

    pub fn n_consumers(&self) -> usize {
        self.incomes.len()
    }

    pub fn total(&self) -> f64 {
        self.incomes.iter().sum()
    }

    /// Bins every consumer onto `grid`.
    pub fn bin(&self, grid: &IncomeGrid) -> Result<OccupancyVector, ModelError> {
        let counts = bin_counts(&self.incomes, grid)?;
        Ok(OccupancyVector::from_integers(&counts))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["income"]).map_err(csv_err)?;
        for r in &self.incomes {
            w.write_record([r.to_string()]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| ModelError::Csv(e.to_string()))
    }

    /// Reads a single-column `income` CSV; `#` lines are comments.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ModelError> {
        let rows = read_income_column(reader)?;
        Self::unchecked(rows.into_iter().map(|(_, v)| v).collect())
    }
}

/// Integer bin counts of `values` on a uniform grid.
pub(crate) fn bin_counts(values: &[f64], grid: &IncomeGrid) -> Result<Vec<u64>, ModelError> {
    let (lower, upper) = grid.edges().ok_or(ModelError::NonUniformGrid)?;
    let mut counts = vec![0u64; grid.len()];
    for (index, &value) in values.iter().enumerate() {
        let k = grid.bin_index(value).ok_or(ModelError::OutOfRange {
            index,
            value,
            lower,
            upper,
        })?;
        counts[k] += 1;
    }
    Ok(counts)
}

fn csv_err(e: csv::Error) -> ModelError {
    ModelError::Csv(e.to_string())
}

/// Parses an `income` column, returning `(row, value)` with 1-based data rows.
pub(crate) fn read_income_column<R: Read>(reader: R) -> Result<Vec<(usize, f64)>, ModelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.is_empty() || headers.get(0) == Some("") {
        return Err(ModelError::Csv(
            "empty file: expected header \"income\"".into(),
        ));
    }
    if headers.len() != 1 || &headers[0] != "income" {
        return Err(ModelError::Csv(format!(
            "expected a single column with header \"income\", found {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| ModelError::Csv(format!("row {row}: {e}")))?;
        let field = rec.get(0).unwrap_or("");
        let v: f64 = field.parse().map_err(|_| {
            ModelError::Csv(format!("row {row}: cannot parse {field:?} as a number"))
        })?;
        if !v.is_finite() {
            return Err(ModelError::Csv(format!(
                "row {row}: value {field:?} is not finite"
            )));
        }
        out.push((row, v));
    }
    Ok(out)
}

/// Occupancies `a_k`: integer-valued for exact counting, real-valued for
/// maximum-entropy solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyVector {
    pub counts: Vec<f64>,
}

impl OccupancyVector {
    pub fn new(counts: Vec<f64>) -> Self {
        Self { counts }
    }

    pub fn from_integers(counts: &[u64]) -> Self {
        Self {
            counts: counts.iter().map(|&c| c as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn check_non_negative(&self) -> Result<(), ModelError> {
        match self
            .counts
            .iter()
            .enumerate()
            .find(|(_, &c)| c.is_nan() || c < 0.0 || c.is_infinite())
        {
            Some((index, &value)) => Err(ModelError::NegativeCount { index, value }),
            None => Ok(()),
        }
    }

    pub fn is_integral(&self) -> bool {
        self.counts.iter().all(|c| c.fract() == 0.0)
    }

    /// Integer counts, rejecting negative or fractional entries.
    pub fn integer_counts(&self) -> Result<Vec<u64>, ModelError> {
        self.check_non_negative()?;
        self.counts
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                if value.fract() != 0.0 || value > u64::MAX as f64 {
                    Err(ModelError::NotInteger { index, value })
                } else {
                    Ok(value as u64)
                }
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// `Σ a_k ε_k`.
    pub fn income(&self, grid: &IncomeGrid) -> f64 {
        self.counts
            .iter()
            .zip(grid.levels())
            .map(|(a, e)| a * e)
            .sum()
    }

    pub fn check_grid(&self, grid: &IncomeGrid) -> Result<(), ModelError> {
        if self.counts.len() != grid.len() {
            return Err(ModelError::LengthMismatch {
                counts: self.counts.len(),
                levels: grid.len(),
            });
        }
        Ok(())
    }
}

/// Residuals of the two macrostate constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// `(Σ a_k − N) / N`.
    pub count_residual: f64,
    /// `(Σ a_k ε_k − Π) / Π`.
    pub income_residual: f64,
    pub count_ok: bool,
    pub income_ok: bool,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.count_ok && self.income_ok
    }
}

/// Checks `Σ a_k = N` and `Σ a_k ε_k = Π`. Integer occupancies must match
/// the count exactly; real ones to [`OCCUPANCY_TOL`].
pub fn validate_occupancy(
    occ: &OccupancyVector,
    params: &EconomyParams,
    grid: &IncomeGrid,
) -> FeasibilityReport {
    let n = params.n_consumers as f64;
    let count_residual = (occ.total() - n) / n;
    let income_residual = (occ.income(grid) - params.total_income) / params.total_income;
    let same_len = occ.len() == grid.len();
    let count_ok = same_len
        && if occ.is_integral() {
            occ.total() == n
        } else {
            count_residual.abs() <= OCCUPANCY_TOL
        };
    FeasibilityReport {
        count_residual,
        income_residual,
        count_ok,
        income_ok: same_len && income_residual.abs() <= OCCUPANCY_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> Vec<u64> {
        vec![1; n]
    }

    #[test]
    fn build_grid_examples() {
        let g = IncomeGrid::build(0.0, 3.0, 3, ones(3)).unwrap();
        assert_eq!(g.levels(), &[0.5, 1.5, 2.5]);
        assert_eq!(g.bin_width(), Some(1.0));

        let g = IncomeGrid::build(0.0, 1.0, 1, vec![5]).unwrap();
        assert_eq!(g.levels(), &[0.5]);
        assert_eq!(g.degeneracies(), &[5]);

        let g = IncomeGrid::build(0.0, 10.0, 4, vec![2; 4]).unwrap();
        assert_eq!(g.levels(), &[1.25, 3.75, 6.25, 8.75]);
    }

    #[test]
    fn build_grid_rejects_bad_input() {
        assert!(IncomeGrid::build(1.0, 1.0, 1, ones(1)).is_err());
        assert!(IncomeGrid::build(2.0, 1.0, 1, ones(1)).is_err());
        assert!(IncomeGrid::build(0.0, 1.0, 0, vec![]).is_err());
        assert!(IncomeGrid::build(0.0, 1.0, 2, ones(3)).is_err());
        assert!(IncomeGrid::build(0.0, 1.0, 2, vec![1, 0]).is_err());
        assert!(IncomeGrid::build(-1.0, 1.0, 2, ones(2)).is_err());
    }

    #[test]
    fn explicit_levels_validation() {
        assert!(IncomeGrid::new(vec![0.0, 1.0, 1.0], ones(3)).is_err());
        assert!(IncomeGrid::new(vec![-0.5, 1.0], ones(2)).is_err());
        let g = IncomeGrid::new(vec![0.0, 1.0, 2.0], ones(3)).unwrap();
        assert_eq!(g.bin_width(), Some(1.0));
        assert_eq!(g.edges(), Some((-0.5, 2.5)));
        let g = IncomeGrid::new(vec![0.0, 1.0, 3.0], ones(3)).unwrap();
        assert_eq!(g.bin_width(), None);
    }

    #[test]
    fn bin_allocation_examples() {
        let g = IncomeGrid::build(0.0, 3.0, 3, ones(3)).unwrap();
        let a = Allocation::new(vec![0.5, 1.5, 2.5], 4.5).unwrap();
        assert_eq!(a.bin(&g).unwrap().counts, vec![1.0, 1.0, 1.0]);
        let a = Allocation::new(vec![0.1, 0.2, 0.3], 0.6).unwrap();
        assert_eq!(a.bin(&g).unwrap().counts, vec![3.0, 0.0, 0.0]);

        // Boundaries belong to the right-hand bin.
        let g2 = IncomeGrid::build(0.0, 2.0, 2, ones(2)).unwrap();
        let a = Allocation::new(vec![1.0, 1.0], 2.0).unwrap();
        assert_eq!(a.bin(&g2).unwrap().counts, vec![0.0, 2.0]);

        // The top edge closes the last bin.
        let a = Allocation::new(vec![2.0, 0.0], 2.0).unwrap();
        assert_eq!(a.bin(&g2).unwrap().counts, vec![1.0, 1.0]);
    }

    #[test]
    fn out_of_range_names_consumer() {
        let g = IncomeGrid::build(0.0, 3.0, 3, ones(3)).unwrap();
        let a = Allocation::unchecked(vec![1.0, 3.5]).unwrap();
        match a.bin(&g) {
            Err(ModelError::OutOfRange { index, value, .. }) => {
                assert_eq!(index, 1);
                assert_eq!(value, 3.5);
            }
            other => panic!("unexpected {other:?}"),
        }
        let uneven = IncomeGrid::new(vec![0.0, 1.0, 3.0], ones(3)).unwrap();
        assert_eq!(a.bin(&uneven), Err(ModelError::NonUniformGrid));
    }

    #[test]
    fn allocation_budget_check() {
        assert!(Allocation::new(vec![1.0, 2.0], 3.0).is_ok());
        assert!(Allocation::new(vec![1.0, 2.0], 3.1).is_err());
        assert!(Allocation::new(vec![-1.0, 4.0], 3.0).is_err());
        assert!(Allocation::new(vec![], 0.0).is_err());
    }

    #[test]
    fn validate_occupancy_examples() {
        let g = IncomeGrid::new(vec![0.5, 1.5], ones(2)).unwrap();
        let p = EconomyParams::new(2, 1.0, 0.5).unwrap();
        let r = validate_occupancy(&OccupancyVector::new(vec![2.0, 0.0]), &p, &g);
        assert!(r.feasible());
        let r = validate_occupancy(&OccupancyVector::new(vec![1.0, 1.0]), &p, &g);
        assert!(r.count_ok && !r.income_ok);
        assert!((r.income_residual - 1.0).abs() < 1e-15);
        let p3 = EconomyParams::new(3, 1.0, 0.5).unwrap();
        let r = validate_occupancy(&OccupancyVector::new(vec![1.0, 1.0]), &p3, &g);
        assert!(!r.count_ok);
    }

    #[test]
    fn params_quanta() {
        let p = EconomyParams::new(3, 3.0, 1.0).unwrap();
        assert_eq!(p.quanta().unwrap(), 3);
        let p = EconomyParams::new(3, 0.3, 0.1).unwrap();
        assert_eq!(p.quanta().unwrap(), 3);
        let p = EconomyParams::new(3, 3.5, 1.0).unwrap();
        assert!(p.quanta().is_err());
        assert!(EconomyParams::new(0, 1.0, 1.0).is_err());
        assert!(EconomyParams::new(1, 0.0, 1.0).is_err());
        assert!(EconomyParams::new(1, 1.0, -1.0).is_err());
    }

    #[test]
    fn occupancy_integer_conversion() {
        assert_eq!(
            OccupancyVector::new(vec![2.0, 0.0])
                .integer_counts()
                .unwrap(),
            vec![2, 0]
        );
        assert!(matches!(
            OccupancyVector::new(vec![1.0, -1.0]).integer_counts(),
            Err(ModelError::NegativeCount { index: 1, .. })
        ));
        assert!(matches!(
            OccupancyVector::new(vec![1.5]).integer_counts(),
            Err(ModelError::NotInteger { index: 0, .. })
        ));
    }

    #[test]
    fn json_shapes() {
        let g = IncomeGrid::build(0.0, 3.0, 3, vec![1, 2, 3]).unwrap();
        let text = g.to_json();
        assert!(text.contains("\"levels\":[0.5,1.5,2.5]"));
        assert!(text.contains("\"degeneracies\":[1,2,3]"));
        let back = IncomeGrid::from_json(&text).unwrap();
        assert_eq!(back.levels(), g.levels());
        assert_eq!(back.bin_width(), Some(1.0));

        let bare = IncomeGrid::from_json(r#"{"levels":[0.5],"degeneracies":[4]}"#).unwrap();
        assert_eq!(bare.bin_width(), None);
        assert!(IncomeGrid::from_json(r#"{"levels":[1,0],"degeneracies":[1,1]}"#).is_err());

        let occ = OccupancyVector::from_integers(&[1, 2]);
        assert_eq!(
            serde_json::to_string(&occ).unwrap(),
            r#"{"counts":[1.0,2.0]}"#
        );
    }

    #[test]
    fn allocation_csv_round_trip() {
        let a = Allocation::new(vec![0.25, 1.5, 3.0], 4.75).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("income\n"));
        let b = Allocation::read_csv(buf.as_slice()).unwrap();
        assert_eq!(a, b);
    }
}
