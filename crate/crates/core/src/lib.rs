//! Dispatch control for a truck-platooning station with deadlines.
//!
//! Trucks arrive at a station of capacity `L` (Bernoulli arrivals, one per
//! slot at most) and receive `T` slots of credit. Every slot the controller
//! either holds the waiting trucks or releases them as one platoon. Small
//! platoons pay a penalty, waiting trucks pay per slot and a truck that runs
//! out of credit pays an expiration penalty and leaves alone.
//!
//! The crate provides:
//! - [`state_space`]: the state set, its cardinality and indexing,
//! - [`dynamics`] and [`costs`]: the slot transition and its charges,
//! - [`dp_solver`]: value iteration, greedy policy extraction and exact
//!   policy evaluation through the stationary distribution,
//! - [`structure`]: monotonicity and reachability checks on a policy,
//! - [`policies`]: greedy, deadline and threshold heuristics plus an
//!   exhaustive threshold search,
//! - [`simulator`] and [`stats`]: coupled simulation and replication
//!   statistics.

pub mod costs;
pub mod dp_solver;
pub mod dynamics;
pub mod error;
pub mod params;
pub mod policies;
pub mod simulator;
pub mod state_space;
pub mod stats;
pub mod structure;

pub use costs::{check_cost_ordering, instantaneous_cost, platoon_cost, CostBreakdown};
pub use dp_solver::{
    exact_average_cost, q_value, value_iterate, Mdp, PolicyTable, Solution, SolveReport,
    SolverOptions, ValueTable,
};
pub use dynamics::{transition, transition_distribution, Action, Event, SlotOutcome};
pub use error::{Error, Result};
pub use params::ModelParams;
pub use policies::{optimize_delta, DeltaSearchResult, EvaluationMode, Policy};
pub use simulator::{coupled_experiment, simulate_run, ArrivalStream, ExperimentConfig, RunResult};
pub use state_space::{cardinality, enumerate_states, Slot, State, StateSpace};
pub use stats::{compare, summarize, PolicySummary};
pub use structure::{check_all, reachable_set, PropertyId, PropertyReport, ReachabilitySet};
