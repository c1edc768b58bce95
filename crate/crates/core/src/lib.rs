//! Maximum-entropy income distributions.
//!
//! Equilibrium income allocations `(R_1, …, R_N)` with `Σ R_i = Π` form the
//! ensemble; each is taken to be equally likely. Grouping consumers by income
//! level gives macrostates whose microstate counts depend on the competition
//! regime, and the most probable macrostate under the count and income
//! constraints is a Bose-Einstein (perfect competition) or Boltzmann
//! (monopolistic competition) occupancy. Upper-class incomes follow a Pareto
//! tail generated by preferential attachment, and empirical samples are fitted
//! with a two-class body-plus-tail model.
//!
//! Modules:
//!
//! * [`model`]: grids, allocations, occupancies
//! * [`multiplicity`]: microstate counts, exact and approximate
//! * [`solver`]: constrained maximum-entropy occupancies, condensation
//! * [`ensemble`]: enumeration and uniform sampling of allocations
//! * [`pareto`]: preferential attachment and power-law tail fits
//! * [`empirical`]: two-class fits of income samples
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and sequentially otherwise; results are identical.

pub mod empirical;
pub mod ensemble;
pub mod model;
pub mod multiplicity;
pub mod par;
pub mod pareto;
pub mod rng;
pub mod solver;
pub mod stats;

pub use model::{
    validate_occupancy, Allocation, EconomyParams, FeasibilityReport, IncomeGrid, ModelError,
    OccupancyVector,
};
pub use multiplicity::{Multiplicity, MultiplicityError, Regime};
pub use solver::{EquilibriumSolution, SolverConfig, SolverError};
