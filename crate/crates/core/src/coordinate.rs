//! Decentralised coordination dynamics.
//!
//! A run starts from a greedy assignment (every agent on a best-utility path)
//! and then repeatedly wakes one agent chosen uniformly at random. The woken
//! agent either follows the k-neighbour policy or the DSA rule. The run stops
//! as soon as every interaction edge holds a compatible pair, or when the
//! iteration budget is spent.

use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::enumerate::{RankMode, SolutionSet};
use crate::error::{Error, Result};
use crate::problem::{eta_key, round9, Assignment, ProblemInstance};
use crate::rng::{self, SimRng};

pub const DEFAULT_MAX_ITERATIONS: u64 = 100_000;
pub const DEFAULT_T_START: u64 = 1000;
pub const DEFAULT_WINDOW: u64 = 10_000;
pub const DEFAULT_ALPHA: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 0.0;

/// Agent decision rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyConfig {
    /// Consult at most `k` random neighbours.
    KFixed { k: usize },
    /// Consult every neighbour.
    KAll,
    /// Consult every neighbour until `t_start`, then shrink the sample
    /// linearly to a single neighbour over `window` iterations.
    KAdaptive { t_start: u64, window: u64 },
    /// Classical DSA with activation probability `alpha` and
    /// epsilon-greedy exploration.
    Dsa { alpha: f64, epsilon: f64 },
}

impl PolicyConfig {
    pub fn k1() -> Self {
        PolicyConfig::KFixed { k: 1 }
    }

    pub fn adaptive() -> Self {
        PolicyConfig::KAdaptive {
            t_start: DEFAULT_T_START,
            window: DEFAULT_WINDOW,
        }
    }

    pub fn dsa() -> Self {
        PolicyConfig::Dsa {
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicyConfig::KFixed { k: 0 } => {
                Err(Error::InvalidParams("k must be at least 1".into()))
            }
            PolicyConfig::KAdaptive { window: 0, .. } => {
                Err(Error::InvalidParams("adaptive window must be positive".into()))
            }
            // alpha = 0 is accepted: it freezes every agent.
            PolicyConfig::Dsa { alpha, epsilon }
                if !(0.0..=1.0).contains(&alpha) || !(0.0..1.0).contains(&epsilon) =>
            {
                Err(Error::InvalidParams(format!(
                    "dsa needs alpha in (0, 1] and epsilon in [0, 1), got alpha={alpha} epsilon={epsilon}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Short label used in record files: `k1`, `kall`, `kada`, `dsa`, with
    /// parameters appended when they differ from the defaults.
    pub fn name(&self) -> String {
        match *self {
            PolicyConfig::KFixed { k } => format!("k{k}"),
            PolicyConfig::KAll => "kall".into(),
            PolicyConfig::KAdaptive { t_start, window }
                if t_start == DEFAULT_T_START && window == DEFAULT_WINDOW =>
            {
                "kada".into()
            }
            PolicyConfig::KAdaptive { t_start, window } => format!("kada_t{t_start}_w{window}"),
            PolicyConfig::Dsa { alpha, epsilon }
                if alpha == DEFAULT_ALPHA && epsilon == DEFAULT_EPSILON =>
            {
                "dsa".into()
            }
            PolicyConfig::Dsa { alpha, epsilon } => format!("dsa_a{alpha}_e{epsilon}"),
        }
    }
}

impl fmt::Display for PolicyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Number of neighbours an agent of the given degree consults at global
/// iteration `t`.
pub fn compute_k(policy: &PolicyConfig, t: u64, degree: usize) -> usize {
    assert!(degree >= 1, "agent has no neighbours");
    match *policy {
        PolicyConfig::KFixed { k } => k.min(degree),
        PolicyConfig::KAll | PolicyConfig::Dsa { .. } => degree,
        PolicyConfig::KAdaptive { t_start, window } => {
            if t <= t_start {
                degree
            } else if t >= t_start + window {
                1
            } else {
                // ceil(degree * (window - elapsed) / window), in integers
                let remaining = (window - (t - t_start)) as u128;
                let scaled = (degree as u128 * remaining).div_ceil(window as u128);
                (scaled as usize).max(1)
            }
        }
    }
}

/// Current assignment, iteration counter and number of violated interaction
/// edges, kept in sync incrementally.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimState {
    assignment: Assignment,
    t: u64,
    violated: usize,
}

impl SimState {
    pub fn new(instance: &ProblemInstance, assignment: Assignment) -> Result<Self> {
        instance.check_assignment(&assignment)?;
        let violated = instance.violated_edges(&assignment);
        Ok(SimState {
            assignment,
            t: 0,
            violated,
        })
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn set_iteration(&mut self, t: u64) {
        self.t = t;
    }

    pub fn violated_edges(&self) -> usize {
        self.violated
    }

    pub fn is_solution(&self) -> bool {
        self.violated == 0
    }

    /// Moves `agent` to `local`, updating the violated-edge count from the
    /// agent's incident edges only.
    pub fn set_value(&mut self, instance: &ProblemInstance, agent: usize, local: usize) {
        let old = self.assignment.get(agent);
        if old == local {
            return;
        }
        for &j in instance.interaction().neighbours(agent) {
            let vj = self.assignment.get(j);
            let was_ok = instance.compatible_local(agent, old, j, vj);
            let now_ok = instance.compatible_local(agent, local, j, vj);
            match (was_ok, now_ok) {
                (true, false) => self.violated += 1,
                (false, true) => self.violated -= 1,
                _ => {}
            }
        }
        self.assignment.set(agent, local);
    }
}

/// Every agent on a path of maximal utility, ties broken uniformly.
pub fn greedy_init<R: Rng + ?Sized>(instance: &ProblemInstance, rng: &mut R) -> Assignment {
    let values = instance
        .domains()
        .iter()
        .map(|domain| {
            let best = domain.iter().map(|&u| eta_key(u)).max().expect("non-empty domain");
            let argmax: Vec<usize> = (0..domain.len()).filter(|&d| eta_key(domain[d]) == best).collect();
            if argmax.len() == 1 {
                argmax[0]
            } else {
                *argmax.choose(rng).expect("non-empty argmax")
            }
        })
        .collect();
    Assignment::new(values)
}

/// One decision of the k-neighbour policy for `agent`. Returns the agent's
/// value after the step.
///
/// The agent samples `compute_k` neighbours without replacement, scores each
/// of its paths by the number of sampled neighbours it is compatible with, and
/// keeps its value if that value is compatible with all of them. Otherwise it
/// draws among the best-scoring paths with probability proportional to
/// utility.
pub fn agent_step<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    state: &mut SimState,
    agent: usize,
    policy: &PolicyConfig,
    rng: &mut R,
) -> usize {
    debug_assert!(!matches!(policy, PolicyConfig::Dsa { .. }));
    let current = state.assignment.get(agent);
    let neighbours = instance.interaction().neighbours(agent);
    if neighbours.is_empty() {
        return current;
    }
    let k = compute_k(policy, state.t, neighbours.len());
    let sampled: Vec<usize> = if k >= neighbours.len() {
        neighbours.to_vec()
    } else {
        index::sample(rng, neighbours.len(), k)
            .into_iter()
            .map(|i| neighbours[i])
            .collect()
    };

    let score = |d: usize| {
        sampled
            .iter()
            .filter(|&&j| instance.compatible_local(agent, d, j, state.assignment.get(j)))
            .count()
    };
    if score(current) == sampled.len() {
        return current;
    }
    let scores: Vec<usize> = (0..instance.domain_size(agent)).map(score).collect();
    let best = *scores.iter().max().expect("non-empty domain");
    let argmax: Vec<usize> = (0..scores.len()).filter(|&d| scores[d] == best).collect();
    let utilities = &instance.domains()[agent];
    let chosen = if argmax.len() == 1 {
        argmax[0]
    } else {
        *argmax
            .choose_weighted(rng, |&d| utilities[d])
            .expect("utilities are positive")
    };
    state.set_value(instance, agent, chosen);
    chosen
}

/// One DSA decision for `agent`. Returns the agent's value after the step.
pub fn dsa_step<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    state: &mut SimState,
    agent: usize,
    alpha: f64,
    epsilon: f64,
    rng: &mut R,
) -> usize {
    let current = state.assignment.get(agent);
    if !rng.gen_bool(alpha) {
        return current;
    }
    let m = instance.domain_size(agent);
    if epsilon > 0.0 && rng.gen_bool(epsilon) {
        let chosen = rng.gen_range(0..m);
        state.set_value(instance, agent, chosen);
        return chosen;
    }
    let neighbours = instance.interaction().neighbours(agent);
    let utilities = &instance.domains()[agent];
    let scores: Vec<i64> = (0..m)
        .map(|d| {
            let satisfied = neighbours
                .iter()
                .filter(|&&j| instance.compatible_local(agent, d, j, state.assignment.get(j)))
                .count();
            eta_key(utilities[d] + satisfied as f64)
        })
        .collect();
    let best = *scores.iter().max().expect("non-empty domain");
    if scores[current] == best {
        return current;
    }
    let argmax: Vec<usize> = (0..m).filter(|&d| scores[d] == best).collect();
    let chosen = if argmax.len() == 1 {
        argmax[0]
    } else {
        *argmax.choose(rng).expect("non-empty argmax")
    };
    state.set_value(instance, agent, chosen);
    chosen
}

/// Outcome of one seeded run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub converged: bool,
    pub iterations: u64,
    pub final_assignment: Assignment,
    pub eta: f64,
    pub run_seed: u64,
    pub rank: Option<usize>,
    pub regret_pct: Option<f64>,
}

impl RunResult {
    /// Fills rank and regret from an enumerated solution set. Runs that did
    /// not converge are left unranked.
    pub fn rank_against(&mut self, solutions: &SolutionSet, mode: RankMode) -> Result<()> {
        if !self.converged {
            return Ok(());
        }
        self.rank = Some(solutions.rank_with(self.eta, mode)?);
        self.regret_pct = Some(round9(solutions.regret(self.eta)?));
        Ok(())
    }
}

/// A single run in progress. Exposes stepping so callers can observe the
/// trajectory.
pub struct Simulation<'a> {
    instance: &'a ProblemInstance,
    policy: PolicyConfig,
    state: SimState,
    rng: SimRng,
}

impl<'a> Simulation<'a> {
    /// Seeds the run PRNG and performs the greedy initialisation.
    pub fn new(instance: &'a ProblemInstance, policy: PolicyConfig, run_seed: u64) -> Result<Self> {
        policy.validate()?;
        let mut rng = rng::seeded(run_seed);
        let init = greedy_init(instance, &mut rng);
        Ok(Self::from_parts(instance, policy, SimState::new(instance, init)?, rng))
    }

    /// Starts from an arbitrary state with its own PRNG.
    pub fn from_parts(instance: &'a ProblemInstance, policy: PolicyConfig, state: SimState, rng: SimRng) -> Self {
        Simulation {
            instance,
            policy,
            state,
            rng,
        }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Advances the clock, wakes one uniformly chosen agent and applies the
    /// policy. Returns the woken agent.
    pub fn step(&mut self) -> usize {
        self.state.t += 1;
        let agent = self.rng.gen_range(0..self.instance.agent_count());
        match self.policy {
            PolicyConfig::Dsa { alpha, epsilon } => {
                dsa_step(self.instance, &mut self.state, agent, alpha, epsilon, &mut self.rng);
            }
            _ => {
                agent_step(self.instance, &mut self.state, agent, &self.policy, &mut self.rng);
            }
        }
        agent
    }

    /// Steps until the state is a solution or `max_iterations` is reached.
    pub fn run(mut self, max_iterations: u64) -> RunResult {
        while !self.state.is_solution() && self.state.t < max_iterations {
            self.step();
        }
        let converged = self.state.is_solution();
        let eta = round9(self.instance.objective(&self.state.assignment));
        RunResult {
            converged,
            iterations: if converged { self.state.t } else { max_iterations },
            final_assignment: self.state.assignment,
            eta,
            run_seed: 0,
            rank: None,
            regret_pct: None,
        }
    }
}

/// Runs the dynamics from a greedy start. With a solution set, converged runs
/// also get their dense rank and regret.
pub fn run_coordination(
    instance: &ProblemInstance,
    policy: &PolicyConfig,
    run_seed: u64,
    max_iterations: u64,
    solutions: Option<&SolutionSet>,
) -> Result<RunResult> {
    let mut result = Simulation::new(instance, *policy, run_seed)?.run(max_iterations);
    result.run_seed = run_seed;
    if let Some(solutions) = solutions {
        result.rank_against(solutions, RankMode::Dense)?;
    }
    Ok(result)
}
