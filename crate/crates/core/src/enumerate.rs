//! Exact enumeration of every feasible complete assignment, with dense or
//! ordinal ranking of objective values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{eta_key, round9, Assignment, ProblemInstance};

pub const DEFAULT_SOLUTION_LIMIT: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub values: Assignment,
    pub eta: f64,
}

/// How ties in the objective map to ranking positions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMode {
    /// Position of the value among distinct objective values.
    #[default]
    Dense,
    /// One plus the number of solutions scoring strictly higher.
    Ordinal,
}

/// All feasible assignments of an instance, sorted by objective value
/// (descending) and then lexicographically by values.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionSet {
    solutions: Vec<Solution>,
    distinct_values: Vec<f64>,
    // Number of solutions scoring at least distinct_values[r].
    cumulative: Vec<usize>,
}

impl SolutionSet {
    fn from_solutions(mut solutions: Vec<Solution>) -> Self {
        for s in &mut solutions {
            s.eta = round9(s.eta);
        }
        solutions.sort_by(|a, b| {
            eta_key(b.eta)
                .cmp(&eta_key(a.eta))
                .then_with(|| a.values.cmp(&b.values))
        });
        let mut distinct_values: Vec<f64> = Vec::new();
        let mut cumulative = Vec::new();
        for (i, s) in solutions.iter().enumerate() {
            if distinct_values.last().map(|&v| eta_key(v)) != Some(eta_key(s.eta)) {
                if i > 0 {
                    cumulative.push(i);
                }
                distinct_values.push(s.eta);
            }
        }
        if !solutions.is_empty() {
            cumulative.push(solutions.len());
        }
        SolutionSet {
            solutions,
            distinct_values,
            cumulative,
        }
    }

    pub fn solutions(&self) -> &[Solution] {
        &self.solutions
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    /// Distinct objective values, strictly decreasing.
    pub fn distinct_values(&self) -> &[f64] {
        &self.distinct_values
    }

    /// The best objective value; `None` when the instance has no solution.
    pub fn optimal_value(&self) -> Option<f64> {
        self.distinct_values.first().copied()
    }

    pub fn contains(&self, s: &Assignment) -> bool {
        self.solutions.iter().any(|sol| &sol.values == s)
    }

    fn value_index(&self, eta: f64) -> Result<usize> {
        let key = eta_key(eta);
        self.distinct_values
            .binary_search_by(|v| key.cmp(&eta_key(*v)))
            .map_err(|_| Error::NotASolutionValue(eta))
    }

    /// Dense rank of `eta`: 1 for the optimal value, r for the r-th largest
    /// distinct value.
    pub fn rank_of(&self, eta: f64) -> Result<usize> {
        self.rank_with(eta, RankMode::Dense)
    }

    pub fn rank_with(&self, eta: f64, mode: RankMode) -> Result<usize> {
        let idx = self.value_index(eta)?;
        Ok(match mode {
            RankMode::Dense => idx + 1,
            RankMode::Ordinal => match idx {
                0 => 1,
                _ => self.cumulative[idx - 1] + 1,
            },
        })
    }

    /// Percentage gap between `eta` and the optimal value.
    pub fn regret(&self, eta: f64) -> Result<f64> {
        let idx = self.value_index(eta)?;
        let optimal = self.distinct_values[0];
        Ok(100.0 * (optimal - self.distinct_values[idx]) / optimal)
    }

    pub fn to_file(&self) -> SolutionsFile {
        SolutionsFile {
            count: self.solutions.len(),
            optimal_value: self.optimal_value(),
            distinct_values: self.distinct_values.clone(),
            solutions: self.solutions.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("solution serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SolutionsFile = serde_json::from_str(text)?;
        let set = Self::from_solutions(file.solutions);
        if set.len() != file.count {
            return Err(Error::InvalidInstance(format!(
                "solution file lists {} solutions but declares {}",
                set.len(),
                file.count
            )));
        }
        Ok(set)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// On-disk layout of an enumerated solution set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionsFile {
    pub count: usize,
    pub optimal_value: Option<f64>,
    pub distinct_values: Vec<f64>,
    pub solutions: Vec<Solution>,
}

const ALIVE: usize = usize::MAX;

/// Enumerates every solution by depth-first backtracking with forward
/// checking. Agents are assigned in index order and paths tried in local
/// order; after each choice the domains of later neighbours are filtered to
/// the paths compatible with it.
///
/// Fails with [`Error::LimitExceeded`] as soon as more than `limit` solutions
/// are found.
pub fn enumerate_solutions(instance: &ProblemInstance, limit: Option<usize>) -> Result<SolutionSet> {
    let limit = limit.unwrap_or(DEFAULT_SOLUTION_LIMIT);
    let n = instance.agent_count();
    let graph = instance.interaction();
    // pruned_by[agent][path] = depth whose choice removed it, or ALIVE
    let mut pruned_by: Vec<Vec<usize>> = (0..n).map(|i| vec![ALIVE; instance.domain_size(i)]).collect();
    let mut current = vec![0usize; n];
    let mut found: Vec<Solution> = Vec::new();

    // Explicit stack of the next path to try at each depth.
    let mut next = vec![0usize; n];
    let mut depth = 0usize;
    loop {
        // undo pruning done by the previous choice at this depth
        if next[depth] > 0 {
            unprune(&mut pruned_by, graph.neighbours(depth), depth);
        }
        let candidate = (next[depth]..instance.domain_size(depth)).find(|&p| pruned_by[depth][p] == ALIVE);
        match candidate {
            None => {
                next[depth] = 0;
                if depth == 0 {
                    break;
                }
                depth -= 1;
                continue;
            }
            Some(p) => {
                next[depth] = p + 1;
                current[depth] = p;
                let wiped = prune(instance, &mut pruned_by, depth, p);
                if wiped {
                    continue;
                }
                if depth + 1 == n {
                    if found.len() == limit {
                        return Err(Error::LimitExceeded { limit });
                    }
                    let values = Assignment::new(current.clone());
                    let eta = instance.objective(&values);
                    found.push(Solution { values, eta });
                    continue;
                }
                depth += 1;
            }
        }
    }
    Ok(SolutionSet::from_solutions(found))
}

/// Removes paths of later neighbours incompatible with `agent` holding
/// `local`. Returns true if some neighbour is left without a path.
fn prune(instance: &ProblemInstance, pruned_by: &mut [Vec<usize>], agent: usize, local: usize) -> bool {
    let mut wiped = false;
    for &j in instance.interaction().neighbours(agent) {
        if j < agent {
            continue;
        }
        let mut alive = 0;
        for q in 0..pruned_by[j].len() {
            if pruned_by[j][q] != ALIVE {
                continue;
            }
            if instance.compatible_local(agent, local, j, q) {
                alive += 1;
            } else {
                pruned_by[j][q] = agent;
            }
        }
        if alive == 0 {
            wiped = true;
        }
    }
    wiped
}

fn unprune(pruned_by: &mut [Vec<usize>], neighbours: &[usize], agent: usize) {
    for &j in neighbours {
        if j > agent {
            for mark in &mut pruned_by[j] {
                if *mark == agent {
                    *mark = ALIVE;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{InteractionGraph, PathId};

    fn set_from_etas(etas: &[f64]) -> SolutionSet {
        SolutionSet::from_solutions(
            etas.iter()
                .enumerate()
                .map(|(i, &eta)| Solution {
                    values: Assignment::new(vec![i]),
                    eta,
                })
                .collect(),
        )
    }

    #[test]
    fn two_agents_one_compatible_pair() {
        // Isolated paths are rejected by the validating constructor, so this
        // one is built unchecked.
        let g = InteractionGraph::new(2, [(0, 1)]).unwrap();
        let inst = ProblemInstance::build_unchecked(
            g,
            vec![vec![1.0, 0.1], vec![1.0, 0.1]],
            [(PathId::new(0, 1), PathId::new(1, 0))],
            None,
        )
        .unwrap();
        let set = enumerate_solutions(&inst, None).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.solutions()[0].values.values(), &[1, 0]);
        assert_eq!(set.optimal_value(), Some(2.1));
    }

    #[test]
    fn solutions_sorted_by_value_then_values() {
        let g = InteractionGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        let inst = ProblemInstance::new(
            g,
            vec![vec![1.0, 0.1], vec![1.0, 0.1], vec![1.0]],
            [
                (PathId::new(0, 1), PathId::new(1, 0)),
                (PathId::new(0, 0), PathId::new(1, 1)),
                (PathId::new(0, 0), PathId::new(1, 0)),
                (PathId::new(1, 1), PathId::new(2, 0)),
                (PathId::new(1, 0), PathId::new(2, 0)),
            ],
            None,
        )
        .unwrap();
        let set = enumerate_solutions(&inst, None).unwrap();
        let listed: Vec<_> = set.solutions().iter().map(|s| (s.values.values().to_vec(), s.eta)).collect();
        assert_eq!(
            listed,
            vec![(vec![0, 0, 0], 5.0), (vec![0, 1, 0], 4.1), (vec![1, 0, 0], 4.1)]
        );
        assert_eq!(set.distinct_values(), &[5.0, 4.1]);
    }

    #[test]
    fn limit_is_enforced() {
        let g = InteractionGraph::new(2, [(0, 1)]).unwrap();
        let inst = ProblemInstance::new(
            g,
            vec![vec![1.0, 0.1], vec![1.0, 0.1]],
            [
                (PathId::new(0, 0), PathId::new(1, 0)),
                (PathId::new(0, 0), PathId::new(1, 1)),
                (PathId::new(0, 1), PathId::new(1, 0)),
                (PathId::new(0, 1), PathId::new(1, 1)),
            ],
            None,
        )
        .unwrap();
        assert!(enumerate_solutions(&inst, Some(4)).is_ok());
        assert!(matches!(
            enumerate_solutions(&inst, Some(3)),
            Err(Error::LimitExceeded { limit: 3 })
        ));
    }

    #[test]
    fn dense_rank_and_regret() {
        let set = set_from_etas(&[5.5, 4.6, 3.7, 4.6]);
        assert_eq!(set.distinct_values(), &[5.5, 4.6, 3.7]);
        assert_eq!(set.rank_of(5.5).unwrap(), 1);
        assert_eq!(set.rank_of(4.6).unwrap(), 2);
        assert_eq!(set.rank_of(3.7).unwrap(), 3);
        assert_eq!(set.rank_with(3.7, RankMode::Ordinal).unwrap(), 4);
        assert_eq!(set.rank_with(4.6, RankMode::Ordinal).unwrap(), 2);
        assert_eq!(set.regret(5.5).unwrap(), 0.0);
        assert!(matches!(set.rank_of(5.0), Err(Error::NotASolutionValue(_))));
        assert!(set.regret(1.0).is_err());
    }

    #[test]
    fn tied_optimum_is_rank_one() {
        let set = set_from_etas(&[7.0, 7.0, 6.1]);
        assert_eq!(set.rank_of(7.0).unwrap(), 1);
        assert_eq!(set.rank_with(7.0, RankMode::Ordinal).unwrap(), 1);
        assert_eq!(set.rank_with(6.1, RankMode::Ordinal).unwrap(), 3);
    }

    #[test]
    fn regret_arithmetic() {
        let set = set_from_etas(&[10.0, 9.0]);
        assert!((set.regret(9.0).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rank_tolerates_float_noise() {
        let set = set_from_etas(&[1.0 + 0.1 + 0.1 + 0.1]);
        assert_eq!(set.rank_of(1.3).unwrap(), 1);
    }

    #[test]
    fn empty_set() {
        let set = set_from_etas(&[]);
        assert_eq!(set.optimal_value(), None);
        assert!(set.rank_of(1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let set = set_from_etas(&[5.5, 4.6, 4.6]);
        let back = SolutionSet::from_json(&set.to_json()).unwrap();
        assert_eq!(back, set);
    }
}
