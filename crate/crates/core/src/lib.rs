//! Decentralised coordination on path-selection constraint problems.
//!
//! Agents each pick one path from a private domain. Paths of neighbouring
//! agents are either compatible or not, and each path carries a utility. The
//! crate provides:
//!
//! * [`problem`]: instances, assignments, the objective and feasibility checks;
//! * [`generator`]: seeded instances with planted solutions;
//! * [`enumerate`]: an exact oracle listing every solution with its rank;
//! * [`coordinate`]: the k-neighbour stochastic dynamics and the DSA baseline;
//! * [`metrics`]: run records and aggregate tables;
//! * [`bench`]: resumable experiment campaigns.

pub mod bench;
pub mod coordinate;
pub mod enumerate;
pub mod error;
pub mod generator;
pub mod metrics;
pub mod problem;
pub mod rng;

pub use coordinate::{
    agent_step, compute_k, dsa_step, greedy_init, run_coordination, PolicyConfig, RunResult, SimState, Simulation,
};
pub use enumerate::{enumerate_solutions, RankMode, Solution, SolutionSet};
pub use error::{Error, Result};
pub use generator::{generate_instance, generate_with_plants, GeneratedInstance, GenerationParams, InstanceMeta};
pub use metrics::{aggregate, AggregateReport, RunRecord};
pub use problem::{AgentId, Assignment, InteractionGraph, PathId, ProblemInstance};
