//! Solvers for finite MDPs whose policies pay for the information they use.
//!
//! An agent with resource parameter `β` trades expected reward against the KL
//! divergence between its policy and a prior. [`fe_solve`] computes the optimal
//! free energy for a fixed prior; [`ba_solve`] and [`modified_ba_solve`]
//! alternate that with a prior update to find the best prior as well. The
//! [`gridworld`] module builds the two-level grid used throughout the tests.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the unsuffixed
//! aliases below fix `f64`.
//!
//! ```
//! use infolim::{build_paper_grid, fe_solve, uniform_policy, BetaParam};
//!
//! let (mdp, _) = build_paper_grid::<f64>();
//! let prior = uniform_policy(&mdp);
//! let sol = fe_solve(&mdp, &prior, BetaParam::new(1.0).unwrap(), 1e-9, 100_000).unwrap();
//! assert!(sol.f[0] < 0.0);
//! ```

pub mod blahut_arimoto;
pub mod error;
pub mod exact;
pub mod free_energy;
pub mod gridworld;
pub mod io;
mod linalg;
pub mod mdp;
pub mod report;
pub mod scalar;

pub use blahut_arimoto::{
    averaged_free_energy, ba_solve, modified_ba_solve, mutual_information, ActionMarginal, BaPrior,
    BaSolution, PenaltyTable, StateWeights, DEFAULT_PENALTY,
};
pub use error::{Error, Result};
pub use exact::{
    evaluate_policy, greedy_policy, q_from_v, simulate_rollouts, value_iteration, RolloutSummary,
    Step, Trajectory,
};
pub use free_energy::{
    fe_backup, fe_solve, fe_solve_from, free_energy_of_policy, policy_from_f, BetaParam,
    FreeEnergySolution,
};
pub use gridworld::{build_custom_grid, build_paper_grid, GridConfig, HierarchyMap};
pub use mdp::{
    kl_divergence, uniform_policy, validate_mdp, FiniteMdp, MdpBuilder, QTable, StochasticPolicy,
    ValidationReport, ValueTable, Violation,
};
pub use report::{summarize, PolicySummary, SolveReport};
pub use scalar::Scalar;

pub type Mdp = FiniteMdp<f64>;
pub type Policy = StochasticPolicy<f64>;
pub type Values = ValueTable<f64>;
pub type QValues = QTable<f64>;
pub type Weights = StateWeights<f64>;
pub type Penalty = PenaltyTable<f64>;
pub type Beta = BetaParam<f64>;

pub type Mdp32 = FiniteMdp<f32>;
pub type Policy32 = StochasticPolicy<f32>;
pub type Values32 = ValueTable<f32>;
pub type QValues32 = QTable<f32>;
