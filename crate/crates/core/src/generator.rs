//! Planted-solution instance generator.
//!
//! Draw order from the instance PRNG is fixed: spanning tree, extra
//! interaction edges, domain sizes, planted solutions in order, then the
//! degree-0 fix-up in global path order. Changing the order changes every
//! generated instance.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Assignment, InteractionGraph, PathId, ProblemInstance};
use crate::rng;

/// Utility of each agent's preferred path (local index 0).
pub const PREFERRED_UTILITY: f64 = 1.0;
/// Utility of every other path.
pub const DISTRACTOR_UTILITY: f64 = 0.1;

/// Attempts per planted solution before giving up on drawing a new distinct one.
pub const MAX_PLANT_ATTEMPTS: usize = 1000;

pub const DEFAULT_P_INT: f64 = 0.3;
pub const DEFAULT_N_D: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub n: usize,
    pub p_int: f64,
    pub n_d: usize,
    pub n_sol: usize,
    pub seed: u64,
}

/// Generation parameters as stored in an instance file (`n` is implied by the
/// instance itself).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub p_int: f64,
    pub n_d: usize,
    pub n_sol: usize,
    pub seed: u64,
}

impl GenerationParams {
    pub fn new(n: usize, n_sol: usize, seed: u64) -> Self {
        GenerationParams {
            n,
            p_int: DEFAULT_P_INT,
            n_d: DEFAULT_N_D,
            n_sol,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParams(format!("n must be >= 2, got {}", self.n)));
        }
        if !(0.0..=1.0).contains(&self.p_int) {
            return Err(Error::InvalidParams(format!(
                "p_int must be in [0, 1], got {}",
                self.p_int
            )));
        }
        if self.n_d < 1 {
            return Err(Error::InvalidParams("n_d must be >= 1".into()));
        }
        if self.n_sol < 1 {
            return Err(Error::InvalidParams("n_sol must be >= 1".into()));
        }
        Ok(())
    }

    pub fn meta(&self) -> InstanceMeta {
        InstanceMeta {
            p_int: self.p_int,
            n_d: self.n_d,
            n_sol: self.n_sol,
            seed: self.seed,
        }
    }

    /// `inst_n{n}_s{n_sol}_seed{seed}.json`
    pub fn file_name(&self) -> String {
        format!("inst_n{}_s{}_seed{}.json", self.n, self.n_sol, self.seed)
    }
}

/// A generated instance together with the solutions planted into it.
#[derive(Clone, Debug)]
pub struct GeneratedInstance {
    pub instance: ProblemInstance,
    pub planted: Vec<Assignment>,
}

/// Random connected graph: a random spanning tree plus every other pair
/// added independently with probability `p_int`.
///
/// The tree attaches each node of a random permutation to a uniformly chosen
/// earlier node of that permutation.
pub fn generate_interaction_graph<R: Rng + ?Sized>(
    n: usize,
    p_int: f64,
    rng: &mut R,
) -> Result<InteractionGraph> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("n must be >= 2, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut in_tree = HashSet::with_capacity(n - 1);
    for i in 1..n {
        let parent = order[rng.gen_range(0..i)];
        let (a, b) = (order[i].min(parent), order[i].max(parent));
        in_tree.insert((a, b));
    }
    let mut edges: Vec<(usize, usize)> = in_tree.iter().copied().collect();
    for a in 0..n {
        for b in a + 1..n {
            if !in_tree.contains(&(a, b)) && rng.gen_bool(p_int) {
                edges.push((a, b));
            }
        }
    }
    InteractionGraph::new(n, edges)
}

/// Path utilities per agent: each agent gets `Uniform{1..=n_d}` paths, the
/// first one preferred.
pub fn generate_domains<R: Rng + ?Sized>(n: usize, n_d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    assert!(n_d >= 1, "n_d must be at least 1");
    (0..n)
        .map(|_| {
            let m = rng.gen_range(1..=n_d);
            let mut domain = vec![DISTRACTOR_UTILITY; m];
            domain[0] = PREFERRED_UTILITY;
            domain
        })
        .collect()
}

fn draw_assignment<R: Rng + ?Sized>(instance: &ProblemInstance, rng: &mut R) -> Assignment {
    Assignment::new(
        (0..instance.agent_count())
            .map(|i| rng.gen_range(0..instance.domain_size(i)))
            .collect(),
    )
}

/// Inserts the compat edge for every interaction edge under `s`. Returns the
/// number of edges that were new.
fn plant_assignment(instance: &mut ProblemInstance, s: &Assignment) -> usize {
    let edges = instance.interaction().edges().to_vec();
    edges
        .into_iter()
        .filter(|&(i, j)| {
            instance
                .insert_compat(s.path(i), s.path(j))
                .expect("planted pairs join neighbouring agents")
        })
        .count()
}

/// Draws one path per agent uniformly and makes that assignment a solution.
pub fn plant_solution<R: Rng + ?Sized>(instance: &mut ProblemInstance, rng: &mut R) -> Assignment {
    let s = draw_assignment(instance, rng);
    plant_assignment(instance, &s);
    s
}

/// Generates an instance; a pure function of `params`.
pub fn generate_instance(params: &GenerationParams) -> Result<ProblemInstance> {
    generate_with_plants(params).map(|g| g.instance)
}

/// Like [`generate_instance`], also returning the planted solutions.
pub fn generate_with_plants(params: &GenerationParams) -> Result<GeneratedInstance> {
    params.validate()?;
    let mut rng = rng::seeded(params.seed);
    let graph = generate_interaction_graph(params.n, params.p_int, &mut rng)?;
    let domains = generate_domains(params.n, params.n_d, &mut rng);
    let mut instance =
        ProblemInstance::build_unchecked(graph, domains, [], Some(params.meta()))?;

    let mut planted: Vec<Assignment> = Vec::with_capacity(params.n_sol);
    let mut seen = HashSet::with_capacity(params.n_sol);
    for _ in 0..params.n_sol {
        let fresh = (0..MAX_PLANT_ATTEMPTS)
            .map(|_| draw_assignment(&instance, &mut rng))
            .find(|s| !seen.contains(s));
        let Some(s) = fresh else {
            return Err(Error::DistinctSolutionExhaustion {
                wanted: params.n_sol,
                found: planted.len(),
                attempts: MAX_PLANT_ATTEMPTS,
            });
        };
        plant_assignment(&mut instance, &s);
        seen.insert(s.clone());
        planted.push(s);
    }

    fix_isolated_paths(&mut instance, &mut rng);
    instance.check_path_degrees()?;
    Ok(GeneratedInstance { instance, planted })
}

/// Gives every path without a compat edge one edge to a random path of a
/// random interaction neighbour. Paths are visited in agent then local order.
fn fix_isolated_paths<R: Rng + ?Sized>(instance: &mut ProblemInstance, rng: &mut R) {
    for agent in 0..instance.agent_count() {
        for local in 0..instance.domain_size(agent) {
            let p = PathId::new(agent, local);
            if instance.path_degree(p) > 0 {
                continue;
            }
            let neighbours = instance.interaction().neighbours(agent);
            let other = neighbours[rng.gen_range(0..neighbours.len())];
            let q = PathId::new(other, rng.gen_range(0..instance.domain_size(other)));
            instance
                .insert_compat(p, q)
                .expect("fix-up pairs join neighbouring agents");
        }
    }
}
