//! Independent reference computations shared by the integration tests. None
//! of these go through the enumeration or incremental bookkeeping code paths.

#![allow(dead_code)]

use dcop_coord::{Assignment, PathId, ProblemInstance};

/// Compatibility looked up directly in the instance's edge set.
pub fn edge_set_compatible(instance: &ProblemInstance, a: PathId, b: PathId) -> bool {
    let key = if a <= b { (a, b) } else { (b, a) };
    instance.compat_edges().contains(&key)
}

/// Objective by a naive double loop over all agent pairs.
pub fn naive_objective(instance: &ProblemInstance, s: &Assignment) -> f64 {
    let n = instance.agent_count();
    let mut total = 0.0;
    for i in 0..n {
        total += instance.domains()[i][s.get(i)];
    }
    for i in 0..n {
        for j in i + 1..n {
            if instance.interaction().are_neighbours(i, j)
                && edge_set_compatible(instance, s.path(i), s.path(j))
            {
                total += 1.0;
            }
        }
    }
    total
}

pub fn naive_is_solution(instance: &ProblemInstance, s: &Assignment) -> bool {
    instance
        .interaction()
        .edges()
        .iter()
        .all(|&(i, j)| edge_set_compatible(instance, s.path(i), s.path(j)))
}

/// Every complete assignment, in lexicographic order.
pub fn cartesian_product(instance: &ProblemInstance) -> Vec<Assignment> {
    let sizes: Vec<usize> = (0..instance.agent_count()).map(|i| instance.domain_size(i)).collect();
    let mut out = Vec::new();
    let mut current = vec![0usize; sizes.len()];
    loop {
        out.push(Assignment::new(current.clone()));
        let mut i = sizes.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            current[i] += 1;
            if current[i] < sizes[i] {
                break;
            }
            current[i] = 0;
        }
    }
}

/// Brute-force solution list: the Cartesian product filtered by feasibility,
/// paired with the naive objective.
pub fn product_filter(instance: &ProblemInstance) -> Vec<(Assignment, f64)> {
    cartesian_product(instance)
        .into_iter()
        .filter(|s| naive_is_solution(instance, s))
        .map(|s| {
            let eta = naive_objective(instance, &s);
            (s, eta)
        })
        .collect()
}

pub fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}
