//! Directed graphs, layered resilient partitions, and adversary placements.
//!
//! Vertices are dense integer ids `0..n`. Edge `(j, i)` means agent `i`
//! senses or receives from agent `j`; adjacency is stored as per-vertex
//! in-neighbor lists, kept sorted by source id so downstream tie-breaks are
//! deterministic.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Result, SimError};

/// Immutable directed graph over vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    in_neighbors: Vec<Vec<usize>>,
}

impl Digraph {
    /// Builds a digraph from per-vertex in-neighbor lists.
    ///
    /// Rejects self-loops, duplicate entries, and out-of-range ids. Lists are
    /// sorted by source id on construction.
    pub fn new(n: usize, in_neighbors: Vec<Vec<usize>>) -> Result<Self> {
        if in_neighbors.len() != n {
            return Err(SimError::Structural(format!(
                "expected {n} in-neighbor lists, got {}",
                in_neighbors.len()
            )));
        }
        let mut lists = in_neighbors;
        for (i, list) in lists.iter_mut().enumerate() {
            list.sort_unstable();
            for w in list.windows(2) {
                if w[0] == w[1] {
                    return Err(SimError::Structural(format!(
                        "duplicate in-neighbor {} for vertex {i}",
                        w[0]
                    )));
                }
            }
            for &j in list.iter() {
                if j >= n {
                    return Err(SimError::Structural(format!(
                        "in-neighbor {j} of vertex {i} is out of range (n = {n})"
                    )));
                }
                if j == i {
                    return Err(SimError::Structural(format!("self-loop at vertex {i}")));
                }
            }
        }
        Ok(Self { n, in_neighbors: lists })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// In-neighbors of `i`, sorted by source id.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_neighbors[i]
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_neighbors[i].len()
    }

    /// Out-neighbors of `j` (vertices that sense `j`), sorted ascending.
    pub fn out_neighbors(&self, j: usize) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| self.in_neighbors[i].binary_search(&j).is_ok())
            .collect()
    }
}

/// Layered partition `S_0, ..., S_m` with redundancy parameter `r`.
///
/// Construction does not validate the resilience clauses; see
/// [`validate_rdag`]. This mirrors the model in which the partition is
/// declared a priori and then audited.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RdagPartition {
    levels: Vec<Vec<usize>>,
    r: usize,
}

impl RdagPartition {
    pub fn new(levels: Vec<Vec<usize>>, r: usize) -> Self {
        let mut levels = levels;
        for level in levels.iter_mut() {
            level.sort_unstable();
        }
        Self { levels, r }
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Level index of each vertex, or an error if the levels do not partition
    /// `0..n` exactly.
    pub fn level_of(&self, n: usize) -> Result<Vec<usize>> {
        let mut level_of = vec![usize::MAX; n];
        for (j, level) in self.levels.iter().enumerate() {
            for &v in level {
                if v >= n {
                    return Err(SimError::Structural(format!(
                        "partition vertex {v} out of range (n = {n})"
                    )));
                }
                if level_of[v] != usize::MAX {
                    return Err(SimError::Structural(format!(
                        "vertex {v} appears in levels {} and {j}",
                        level_of[v]
                    )));
                }
                level_of[v] = j;
            }
        }
        if let Some(v) = level_of.iter().position(|&l| l == usize::MAX) {
            return Err(SimError::Structural(format!(
                "vertex {v} is missing from the partition"
            )));
        }
        Ok(level_of)
    }
}

/// Adversary set together with its locality bound `F`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryPlacement {
    adversaries: Vec<usize>,
    f: usize,
}

impl AdversaryPlacement {
    pub fn new(mut adversaries: Vec<usize>, f: usize) -> Self {
        adversaries.sort_unstable();
        adversaries.dedup();
        Self { adversaries, f }
    }

    pub fn adversaries(&self) -> &[usize] {
        &self.adversaries
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn is_adversary(&self, v: usize) -> bool {
        self.adversaries.binary_search(&v).is_ok()
    }
}

/// One failed validation clause, naming the offending vertex or level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "clause", rename_all = "snake_case")]
pub enum Violation {
    /// RDAG clause 1: `|S_j| >= r`.
    LevelTooSmall { level: usize, size: usize, r: usize },
    /// RDAG clause 2: in-neighbors of a level-j vertex must lie in earlier levels.
    ForwardEdge {
        vertex: usize,
        neighbor: usize,
        vertex_level: usize,
        neighbor_level: usize,
    },
    /// F-locality: a non-adversarial vertex with more than `F` adversarial in-neighbors.
    FLocalExceeded { vertex: usize, count: usize, f: usize },
    /// Controller hypothesis: in-degree below the required redundancy.
    InDegreeTooSmall { vertex: usize, degree: usize, required: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LevelTooSmall { level, size, r } => {
                write!(out, "level S_{level} has {size} vertices, below r = {r}")
            }
            Violation::ForwardEdge { vertex, neighbor, vertex_level, neighbor_level } => write!(
                out,
                "vertex {vertex} (level {vertex_level}) has in-neighbor {neighbor} \
                 in level {neighbor_level}, not strictly earlier"
            ),
            Violation::FLocalExceeded { vertex, count, f } => write!(
                out,
                "vertex {vertex} has {count} adversarial in-neighbors, above F = {f}"
            ),
            Violation::InDegreeTooSmall { vertex, degree, required } => write!(
                out,
                "vertex {vertex} has in-degree {degree}, below required {required}"
            ),
        }
    }
}

/// Outcome of a validation pass: `ok` iff `violations` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self { ok: violations.is_empty(), violations }
    }
}

/// Checks both RDAG clauses for `partition` against `graph`.
///
/// A malformed partition (overlapping levels, missing or out-of-range
/// vertices) is a structural error, distinct from a well-formed partition
/// that merely violates the resilience clauses.
pub fn validate_rdag(graph: &Digraph, partition: &RdagPartition) -> Result<ValidationReport> {
    let level_of = partition.level_of(graph.n())?;
    let mut violations = Vec::new();
    for (j, level) in partition.levels().iter().enumerate() {
        if level.len() < partition.r() {
            violations.push(Violation::LevelTooSmall {
                level: j,
                size: level.len(),
                r: partition.r(),
            });
        }
    }
    for v in 0..graph.n() {
        let lv = level_of[v];
        for &u in graph.in_neighbors(v) {
            // Level-0 vertices have no preceding levels, so any in-edge violates clause 2.
            if lv == 0 || level_of[u] >= lv {
                violations.push(Violation::ForwardEdge {
                    vertex: v,
                    neighbor: u,
                    vertex_level: lv,
                    neighbor_level: level_of[u],
                });
            }
        }
    }
    Ok(ValidationReport::from_violations(violations))
}

/// Checks that `placement` is an F-local set: every non-adversarial vertex
/// has at most `F` adversarial in-neighbors.
pub fn validate_f_local(graph: &Digraph, placement: &AdversaryPlacement) -> Result<ValidationReport> {
    if let Some(&v) = placement.adversaries().iter().find(|&&v| v >= graph.n()) {
        return Err(SimError::Structural(format!(
            "adversary id {v} out of range (n = {})",
            graph.n()
        )));
    }
    let mut violations = Vec::new();
    for v in 0..graph.n() {
        if placement.is_adversary(v) {
            continue;
        }
        let count = graph
            .in_neighbors(v)
            .iter()
            .filter(|&&u| placement.is_adversary(u))
            .count();
        if count > placement.f() {
            violations.push(Violation::FLocalExceeded { vertex: v, count, f: placement.f() });
        }
    }
    Ok(ValidationReport::from_violations(violations))
}

/// Audits the controller hypothesis `|V_i| >= required` over `subset`.
///
/// Kept separate from [`validate_rdag`] because the partition definition only
/// constrains level sizes; the in-degree requirement comes from the
/// convergence theorems.
pub fn validate_in_degree(graph: &Digraph, subset: &[usize], required: usize) -> Result<ValidationReport> {
    let mut violations = Vec::new();
    for &v in subset {
        if v >= graph.n() {
            return Err(SimError::Structural(format!(
                "vertex id {v} out of range (n = {})",
                graph.n()
            )));
        }
        if graph.in_degree(v) < required {
            violations.push(Violation::InDegreeTooSmall {
                vertex: v,
                degree: graph.in_degree(v),
                required,
            });
        }
    }
    Ok(ValidationReport::from_violations(violations))
}

/// How layer `j >= 1` vertices pick their in-neighbors in
/// [`build_layered_rdag`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InDegreeRule {
    /// Every vertex is wired to the entire immediately preceding level
    /// (the worst-case topology of the reference experiment).
    FullPreviousLevel,
    /// Every vertex samples `k` distinct in-neighbors from the union of all
    /// preceding levels, seeded for reproducibility.
    SampleFromPredecessors { k: usize, seed: u64 },
}

/// Constructs a layered graph with vertices numbered consecutively level by
/// level, together with its partition (`r` = smallest level size).
///
/// The returned pair always passes [`validate_rdag`].
pub fn build_layered_rdag(
    level_sizes: &[usize],
    rule: &InDegreeRule,
) -> Result<(Digraph, RdagPartition)> {
    if level_sizes.is_empty() {
        return Err(SimError::Config("level_sizes must be nonempty".into()));
    }
    if level_sizes.contains(&0) {
        return Err(SimError::Config("level sizes must be positive".into()));
    }
    let n: usize = level_sizes.iter().sum();
    let mut levels = Vec::with_capacity(level_sizes.len());
    let mut next = 0usize;
    for &size in level_sizes {
        levels.push((next..next + size).collect::<Vec<_>>());
        next += size;
    }

    let mut in_neighbors = vec![Vec::new(); n];
    match rule {
        InDegreeRule::FullPreviousLevel => {
            for j in 1..levels.len() {
                for &v in &levels[j] {
                    in_neighbors[v] = levels[j - 1].clone();
                }
            }
        }
        InDegreeRule::SampleFromPredecessors { k, seed } => {
            let mut rng = ChaCha12Rng::seed_from_u64(*seed);
            let mut pool: Vec<usize> = Vec::new();
            for j in 1..levels.len() {
                pool.extend_from_slice(&levels[j - 1]);
                if *k > pool.len() {
                    return Err(SimError::Config(format!(
                        "sample-k rule: k = {k} exceeds predecessor pool of {} for level {j}",
                        pool.len()
                    )));
                }
                for &v in &levels[j] {
                    let mut chosen = pool.clone();
                    chosen.shuffle(&mut rng);
                    chosen.truncate(*k);
                    in_neighbors[v] = chosen;
                }
            }
        }
    }

    let r = *level_sizes.iter().min().expect("nonempty");
    let graph = Digraph::new(n, in_neighbors)?;
    Ok((graph, RdagPartition::new(levels, r)))
}

/// k-circulant digraph: vertex `i` has in-neighbors `(i+1) mod n .. (i+k) mod n`.
pub fn build_k_circulant(n: usize, k: usize) -> Result<Digraph> {
    if k == 0 || k >= n {
        return Err(SimError::Config(format!(
            "k-circulant requires 1 <= k < n (got n = {n}, k = {k})"
        )));
    }
    let in_neighbors = (0..n)
        .map(|i| (1..=k).map(|d| (i + d) % n).collect())
        .collect();
    Digraph::new(n, in_neighbors)
}

/// Minimum in-degree over `subset`. Errors on an empty subset.
pub fn min_in_degree(graph: &Digraph, subset: &[usize]) -> Result<usize> {
    if subset.is_empty() {
        return Err(SimError::Config("min_in_degree over empty subset".into()));
    }
    let mut min = usize::MAX;
    for &v in subset {
        if v >= graph.n() {
            return Err(SimError::Structural(format!(
                "vertex id {v} out of range (n = {})",
                graph.n()
            )));
        }
        min = min.min(graph.in_degree(v));
    }
    Ok(min)
}

/// On-disk JSON schema for a graph plus its partition and adversary placement.
///
/// Field order is fixed so that save -> load -> save is byte-stable.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub in_neighbors: Vec<Vec<usize>>,
    pub levels: Vec<Vec<usize>>,
    pub r: usize,
    pub adversaries: Vec<usize>,
    #[serde(rename = "F")]
    pub f: usize,
}

impl GraphFile {
    pub fn from_parts(
        graph: &Digraph,
        partition: &RdagPartition,
        placement: &AdversaryPlacement,
    ) -> Self {
        Self {
            n: graph.n(),
            in_neighbors: (0..graph.n()).map(|i| graph.in_neighbors(i).to_vec()).collect(),
            levels: partition.levels().to_vec(),
            r: partition.r(),
            adversaries: placement.adversaries().to_vec(),
            f: placement.f(),
        }
    }

    pub fn into_parts(self) -> Result<(Digraph, RdagPartition, AdversaryPlacement)> {
        let graph = Digraph::new(self.n, self.in_neighbors)?;
        let partition = RdagPartition::new(self.levels, self.r);
        let placement = AdversaryPlacement::new(self.adversaries, self.f);
        Ok((graph, partition, placement))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SimError::Parse(format!("graph file: {e}")))
    }

    /// Canonical serialization (fixed key order, two-space indentation).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph file serialization cannot fail")
    }
}
