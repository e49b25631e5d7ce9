//! Problem instances: agents, the interaction graph, per-agent path domains and
//! the compatibility edges between paths of neighbouring agents.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::InstanceMeta;

/// Dense agent index in `0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub usize);

impl AgentId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// A path (domain value) identified by its owning agent and its position in
/// that agent's domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathId {
    pub owner: AgentId,
    pub local: usize,
}

impl PathId {
    pub fn new(owner: usize, local: usize) -> Self {
        PathId {
            owner: AgentId(owner),
            local,
        }
    }
}

impl fmt::Display for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.owner.0, self.local)
    }
}

/// Orders an unordered pair so the smaller endpoint comes first.
pub(crate) fn ordered<T: Ord>(a: T, b: T) -> (T, T) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Key used for comparing objective values: the value rounded to 9 decimals,
/// expressed as an integer count of 1e-9 units.
pub fn eta_key(value: f64) -> i64 {
    (value * 1e9).round() as i64
}

/// Rounds a value to 9 decimal places.
pub fn round9(value: f64) -> f64 {
    eta_key(value) as f64 / 1e9
}

/// Undirected, connected graph over agents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbours: Vec<Vec<usize>>,
}

impl InteractionGraph {
    /// Builds the graph from an edge list. Endpoints are normalised and
    /// duplicates collapsed; self-loops, out-of-range endpoints and
    /// disconnected graphs are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInstance(format!(
                "at least 2 agents are required, got {n}"
            )));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidInstance(format!("self-loop on agent {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidInstance(format!(
                    "edge ({a},{b}) out of range for {n} agents"
                )));
            }
            set.insert(ordered(a, b));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbours = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbours[a].push(b);
            neighbours[b].push(a);
        }
        for list in &mut neighbours {
            list.sort_unstable();
        }
        let graph = InteractionGraph {
            n,
            edges,
            neighbours,
        };
        if !graph.is_connected() {
            return Err(Error::InvalidInstance(
                "interaction graph is not connected".into(),
            ));
        }
        Ok(graph)
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    /// Edges with the smaller endpoint first, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Sorted neighbour list of `agent`.
    pub fn neighbours(&self, agent: usize) -> &[usize] {
        &self.neighbours[agent]
    }

    pub fn degree(&self, agent: usize) -> usize {
        self.neighbours[agent].len()
    }

    pub fn are_neighbours(&self, a: usize, b: usize) -> bool {
        self.neighbours[a].binary_search(&b).is_ok()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &self.neighbours[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.n
    }
}

/// One chosen path per agent. `values[i]` is the local index of agent `i`'s
/// path, so every value is owned by its agent by construction.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment {
    values: Vec<usize>,
}

impl Assignment {
    pub fn new(values: Vec<usize>) -> Self {
        Assignment { values }
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, agent: usize) -> usize {
        self.values[agent]
    }

    pub fn set(&mut self, agent: usize, local: usize) {
        self.values[agent] = local;
    }

    pub fn path(&self, agent: usize) -> PathId {
        PathId::new(agent, self.values[agent])
    }
}

/// An immutable problem instance.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    interaction: InteractionGraph,
    domains: Vec<Vec<f64>>,
    compat_edges: BTreeSet<(PathId, PathId)>,
    meta: Option<InstanceMeta>,
    // Global path index of each agent's first path.
    offsets: Vec<usize>,
    // Sorted compatible partners of each path, by global path index.
    adjacency: Vec<Vec<usize>>,
}

impl ProblemInstance {
    /// Validates and indexes an instance.
    ///
    /// Every agent needs at least one path, utilities must lie in `(0, 1]`,
    /// every compat edge must join paths of two neighbouring agents, and every
    /// path must take part in at least one compat edge.
    pub fn new(
        interaction: InteractionGraph,
        domains: Vec<Vec<f64>>,
        compat_edges: impl IntoIterator<Item = (PathId, PathId)>,
        meta: Option<InstanceMeta>,
    ) -> Result<Self> {
        let instance = Self::build_unchecked(interaction, domains, compat_edges, meta)?;
        instance.check_path_degrees()?;
        Ok(instance)
    }

    /// Same as [`ProblemInstance::new`] but without the path-degree check;
    /// used while an instance is still being generated.
    pub(crate) fn build_unchecked(
        interaction: InteractionGraph,
        domains: Vec<Vec<f64>>,
        compat_edges: impl IntoIterator<Item = (PathId, PathId)>,
        meta: Option<InstanceMeta>,
    ) -> Result<Self> {
        let n = interaction.agent_count();
        if domains.len() != n {
            return Err(Error::InvalidInstance(format!(
                "{} domains for {n} agents",
                domains.len()
            )));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut total = 0;
        for (agent, domain) in domains.iter().enumerate() {
            if domain.is_empty() {
                return Err(Error::InvalidInstance(format!("agent {agent} has no paths")));
            }
            if let Some(u) = domain.iter().find(|u| !(**u > 0.0 && **u <= 1.0)) {
                return Err(Error::InvalidInstance(format!(
                    "agent {agent} has utility {u} outside (0, 1]"
                )));
            }
            offsets.push(total);
            total += domain.len();
        }
        offsets.push(total);
        let mut instance = ProblemInstance {
            interaction,
            domains,
            compat_edges: BTreeSet::new(),
            meta,
            offsets,
            adjacency: vec![Vec::new(); total],
        };
        for (a, b) in compat_edges {
            instance.insert_compat(a, b)?;
        }
        Ok(instance)
    }

    /// Adds a compat edge; returns whether it was new.
    pub(crate) fn insert_compat(&mut self, a: PathId, b: PathId) -> Result<bool> {
        for p in [a, b] {
            if p.owner.0 >= self.agent_count() || p.local >= self.domains[p.owner.0].len() {
                return Err(Error::InvalidInstance(format!("unknown path {p}")));
            }
        }
        if a.owner == b.owner {
            return Err(Error::InvalidInstance(format!(
                "compat edge {a}-{b} joins paths of the same agent"
            )));
        }
        if !self.interaction.are_neighbours(a.owner.0, b.owner.0) {
            return Err(Error::InvalidInstance(format!(
                "compat edge {a}-{b} joins non-neighbouring agents"
            )));
        }
        let pair = ordered(a, b);
        if !self.compat_edges.insert(pair) {
            return Ok(false);
        }
        let (ga, gb) = (self.global(a), self.global(b));
        for (from, to) in [(ga, gb), (gb, ga)] {
            let list = &mut self.adjacency[from];
            let pos = list.binary_search(&to).unwrap_err();
            list.insert(pos, to);
        }
        Ok(true)
    }

    pub(crate) fn check_path_degrees(&self) -> Result<()> {
        for agent in 0..self.agent_count() {
            for local in 0..self.domains[agent].len() {
                let p = PathId::new(agent, local);
                if self.path_degree(p) == 0 {
                    return Err(Error::InvalidInstance(format!(
                        "path {p} is not compatible with any other path"
                    )));
                }
            }
        }
        Ok(())
    }

    fn global(&self, p: PathId) -> usize {
        self.offsets[p.owner.0] + p.local
    }

    pub fn agent_count(&self) -> usize {
        self.interaction.agent_count()
    }

    pub fn interaction(&self) -> &InteractionGraph {
        &self.interaction
    }

    pub fn domains(&self) -> &[Vec<f64>] {
        &self.domains
    }

    pub fn domain_size(&self, agent: usize) -> usize {
        self.domains[agent].len()
    }

    pub fn total_paths(&self) -> usize {
        self.offsets[self.agent_count()]
    }

    pub fn utility(&self, p: PathId) -> f64 {
        self.domains[p.owner.0][p.local]
    }

    pub fn compat_edges(&self) -> &BTreeSet<(PathId, PathId)> {
        &self.compat_edges
    }

    pub fn meta(&self) -> Option<&InstanceMeta> {
        self.meta.as_ref()
    }

    /// Number of compat edges touching `p`.
    pub fn path_degree(&self, p: PathId) -> usize {
        self.adjacency[self.global(p)].len()
    }

    /// Whether two paths of distinct agents are compatible.
    ///
    /// Panics if both paths belong to the same agent.
    pub fn compatible(&self, a: PathId, b: PathId) -> bool {
        assert_ne!(
            a.owner, b.owner,
            "compatibility is only defined between paths of distinct agents"
        );
        self.compatible_local(a.owner.0, a.local, b.owner.0, b.local)
    }

    /// Hot-path variant of [`ProblemInstance::compatible`] on raw indices.
    #[inline]
    pub fn compatible_local(&self, agent_a: usize, local_a: usize, agent_b: usize, local_b: usize) -> bool {
        let ga = self.offsets[agent_a] + local_a;
        let gb = self.offsets[agent_b] + local_b;
        self.adjacency[ga].binary_search(&gb).is_ok()
    }

    /// Whether every interaction edge holds a compatible pair.
    pub fn is_solution(&self, s: &Assignment) -> bool {
        self.violated_edges(s) == 0
    }

    /// Number of interaction edges whose current pair is incompatible.
    pub fn violated_edges(&self, s: &Assignment) -> usize {
        self.interaction
            .edges()
            .iter()
            .filter(|&&(i, j)| !self.compatible_local(i, s.get(i), j, s.get(j)))
            .count()
    }

    /// Sum of the chosen path utilities plus the number of satisfied
    /// interaction edges.
    pub fn objective(&self, s: &Assignment) -> f64 {
        let unary: f64 = (0..self.agent_count())
            .map(|i| self.domains[i][s.get(i)])
            .sum();
        let satisfied = self.interaction.edge_count() - self.violated_edges(s);
        unary + satisfied as f64
    }

    /// Checks that `s` has one in-range value per agent.
    pub fn check_assignment(&self, s: &Assignment) -> Result<()> {
        if s.len() != self.agent_count() {
            return Err(Error::InvalidAssignment(format!(
                "{} values for {} agents",
                s.len(),
                self.agent_count()
            )));
        }
        for (agent, &local) in s.values().iter().enumerate() {
            if local >= self.domains[agent].len() {
                return Err(Error::InvalidAssignment(format!(
                    "agent {agent} has no path {local}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            n: self.agent_count(),
            interaction_edges: self.interaction.edges().iter().map(|&(a, b)| [a, b]).collect(),
            domains: self
                .domains
                .iter()
                .map(|d| d.iter().map(|&utility| PathEntry { utility }).collect())
                .collect(),
            compat_edges: self
                .compat_edges
                .iter()
                .map(|(a, b)| [[a.owner.0, a.local], [b.owner.0, b.local]])
                .collect(),
            meta: self.meta.clone(),
        }
    }

    /// Canonical JSON: edges smaller-endpoint-first, arrays sorted.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// On-disk instance layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub interaction_edges: Vec<[usize; 2]>,
    pub domains: Vec<Vec<PathEntry>>,
    pub compat_edges: Vec<[[usize; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<InstanceMeta>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub utility: f64,
}

impl TryFrom<InstanceFile> for ProblemInstance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        let graph = InteractionGraph::new(file.n, file.interaction_edges.iter().map(|e| (e[0], e[1])))?;
        let domains = file
            .domains
            .into_iter()
            .map(|d| d.into_iter().map(|p| p.utility).collect())
            .collect();
        let edges = file
            .compat_edges
            .iter()
            .map(|[a, b]| (PathId::new(a[0], a[1]), PathId::new(b[0], b[1])));
        ProblemInstance::new(graph, domains, edges, file.meta)
    }
}
