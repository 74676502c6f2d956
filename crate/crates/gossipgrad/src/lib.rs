//! Decentralized stochastic subgradient optimization over gossip networks.
//!
//! Agents hold local copies of a shared decision variable and minimize a sum
//! of per-agent nonsmooth (max-of-smooth) objectives by interleaving noisy
//! subgradient steps with doubly stochastic gossip averaging. The crate
//! provides:
//!
//! - [`network`]: graphs, Metropolis-Hastings mixing weights, and the
//!   spectral contraction factor `beta`;
//! - [`objectives`]: max-of-smooth objectives, Clarke subgradient selection,
//!   the stationarity measure, and a catalog of test problems;
//! - [`oracle`]: stochastic subgradient oracles with zero-mean,
//!   variance-bounded, realization-bounded noise;
//! - [`solver`]: the distributed solver, stepsize schedules, and a
//!   centralized reference loop;
//! - [`diagnostics`]: per-iteration traces (consensus error, update
//!   decomposition, partial-sum oscillation monitors) and their CSV form;
//! - [`harness`]: experiment configs, seeded runs, and trace comparison.

pub mod diagnostics;
pub mod harness;
pub mod network;
pub mod numerics;
pub mod objectives;
pub mod oracle;
pub mod rng;
pub mod solver;

pub use network::{build_mixing, metropolis_weights, spectral_beta, Graph, MixingMatrix, MixingScheme, NetworkError};
pub use objectives::{
    catalog::{catalog_problem, CatalogName, CatalogParams, CatalogProblem},
    stationarity_measure, AgentObjective, DistributedProblem, MaxOfSmoothObjective,
    ObjectiveError, SmoothComponent, TieRule,
};
pub use oracle::{verify_assumption2, NoiseKind, NoiseModel, NoisyOracle, OracleError, OracleSample, StochasticOracle};
pub use solver::{validate_schedule, ScheduleError, Solver, SolverError, SolverState, StepsizeSchedule, UpdateRule};
pub use diagnostics::{RunTrace, TraceRecord};
pub use harness::{run_experiment, ExperimentConfig};
