//! Undirected networks, topological distances between vertices, and the
//! neighborhood relation that constrains geometric message passing.

use std::collections::VecDeque;
use std::fmt;

use rayon::prelude::*;

use crate::error::{invalid, Result};

/// Rows below this size are processed sequentially.
const PAR_MIN_N: usize = 256;

/// Slack used when comparing a real-valued distance against its threshold.
const TAU_EPS: f64 = 1e-12;

/// Undirected, unweighted simple graph over vertices `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    // sorted, deduplicated neighbor lists
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge iterator. Duplicate and reversed-duplicate
    /// edges are collapsed; self-loops and out-of-range endpoints are rejected.
    pub fn new<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(invalid("graph must have at least one vertex"));
        }
        let mut adj = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(invalid(format!("edge ({u}, {v}) out of range for n={n}")));
            }
            if u == v {
                return Err(invalid(format!("self-loop on vertex {u}")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { n, adj })
    }

    /// Graph with `n` vertices and no edges.
    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, std::iter::empty())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sorted neighbors of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adj[u].binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.n {
            return Err(invalid(format!("vertex {v} out of range for n={}", self.n)));
        }
        Ok(())
    }

    /// Binary vector marking the vertices adjacent to `v`.
    pub fn adjacency_profile(&self, v: usize) -> Result<AdjacencyProfile> {
        self.check_vertex(v)?;
        let mut bits = vec![false; self.n];
        for &u in &self.adj[v] {
            bits[u] = true;
        }
        Ok(AdjacencyProfile { bits })
    }

    fn common_neighbors(&self, u: usize, v: usize) -> usize {
        let (a, b) = (&self.adj[u], &self.adj[v]);
        let (mut i, mut j, mut c) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    c += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        c
    }

    /// Jaccard distance between the adjacency profiles of `u` and `v`.
    ///
    /// Zero for `u == v`; one when the vertices are distinct and both are
    /// isolated (the ratio is undefined there).
    pub fn jaccard_distance(&self, u: usize, v: usize) -> Result<f64> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if u == v {
            return Ok(0.0);
        }
        let common = self.common_neighbors(u, v);
        Ok(jaccard_from_counts(common, self.degree(u), self.degree(v)))
    }

    /// Cosine distance between the adjacency profiles of `u` and `v`.
    ///
    /// Zero for `u == v`; one when the vertices are distinct and either is
    /// isolated.
    pub fn cosine_distance(&self, u: usize, v: usize) -> Result<f64> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if u == v {
            return Ok(0.0);
        }
        let common = self.common_neighbors(u, v);
        Ok(cosine_from_counts(common, self.degree(u), self.degree(v)))
    }

    /// Hop distances from `source`, stopping after `max_depth` layers.
    fn bfs_from(&self, source: usize, max_depth: Option<u32>, dist: &mut [Option<u32>]) {
        dist.iter_mut().for_each(|d| *d = None);
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            if max_depth.is_some_and(|m| du >= m) {
                continue;
            }
            for &w in &self.adj[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
    }

    /// All-pairs hop counts by one breadth-first traversal per source.
    pub fn shortest_path_hops(&self) -> HopMatrix {
        let n = self.n;
        let mut hops = vec![None; n * n];
        let fill = |(src, row): (usize, &mut [Option<u32>])| self.bfs_from(src, None, row);
        if n >= PAR_MIN_N {
            hops.par_chunks_mut(n).enumerate().for_each(fill);
        } else {
            hops.chunks_mut(n).enumerate().for_each(fill);
        }
        HopMatrix { n, hops }
    }

    /// Reachability in the `nu`-th power of the graph: `(i, j)` is set iff a
    /// walk of length between 1 and `nu` joins them. The diagonal is set only
    /// for vertices that lie on a closed walk of length `<= nu`.
    pub fn power_reach(&self, nu: usize) -> Result<BoolMatrix> {
        if nu == 0 {
            return Err(invalid("graph power must be at least 1"));
        }
        let n = self.n;
        let depth = u32::try_from(nu).unwrap_or(u32::MAX);
        let mut cells = vec![false; n * n];
        let fill = |(src, row): (usize, &mut [bool])| {
            let mut dist = vec![None; n];
            self.bfs_from(src, Some(depth), &mut dist);
            for (j, d) in dist.iter().enumerate() {
                row[j] = match d {
                    Some(0) => false,
                    Some(_) => true,
                    None => false,
                };
            }
            // A closed walk i -> w -> i of length 2 exists whenever i has a neighbor.
            row[src] = nu >= 2 && !self.adj[src].is_empty();
        };
        if n >= PAR_MIN_N {
            cells.par_chunks_mut(n).enumerate().for_each(fill);
        } else {
            cells.chunks_mut(n).enumerate().for_each(fill);
        }
        Ok(BoolMatrix { n, cells })
    }

    /// Relabels vertex `v` as `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(invalid(format!(
                "permutation length {} does not match n={}",
                perm.len(),
                self.n
            )));
        }
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || std::mem::replace(&mut seen[p], true) {
                return Err(invalid("permutation is not a bijection"));
            }
        }
        Graph::new(self.n, self.edges().map(|(u, v)| (perm[u], perm[v])))
    }
}

fn jaccard_from_counts(common: usize, du: usize, dv: usize) -> f64 {
    let union = du + dv - common;
    if union == 0 {
        return 1.0;
    }
    (union - common) as f64 / union as f64
}

fn cosine_from_counts(common: usize, du: usize, dv: usize) -> f64 {
    if du == 0 || dv == 0 {
        return 1.0;
    }
    let d = 1.0 - common as f64 / ((du * dv) as f64).sqrt();
    d.clamp(0.0, 1.0)
}

/// Length-`n` indicator of the vertices adjacent to some vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyProfile {
    pub bits: Vec<bool>,
}

impl AdjacencyProfile {
    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Dense matrix of hop counts; `None` marks disconnected pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HopMatrix {
    n: usize,
    hops: Vec<Option<u32>>,
}

impl HopMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Option<u32> {
        self.hops[i * self.n + j]
    }
}

/// Dense square boolean matrix.
#[derive(Clone, PartialEq, Eq)]
pub struct BoolMatrix {
    n: usize,
    cells: Vec<bool>,
}

impl BoolMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.cells[i * self.n..(i + 1) * self.n]
    }
}

impl fmt::Debug for BoolMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BoolMatrix({})", self.n)?;
        for i in 0..self.n {
            let line: String = self.row(i).iter().map(|&b| if b { '1' } else { '.' }).collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

/// Topological distance used to define vertex neighborhoods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopoDistance {
    ShortestPath,
    Jaccard,
    Cosine,
}

impl TopoDistance {
    /// Thresholds scanned when no explicit grid is given.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            TopoDistance::ShortestPath => vec![1.0, 2.0, 3.0, 4.0, 5.0],
            TopoDistance::Jaccard | TopoDistance::Cosine => vec![0.5, 0.6, 0.7, 0.8, 0.9],
        }
    }

    pub fn validate_tau(self, tau: f64) -> Result<()> {
        match self {
            TopoDistance::ShortestPath => {
                if !(tau >= 0.0 && tau.fract() == 0.0 && tau.is_finite()) {
                    return Err(invalid(format!(
                        "shortest-path threshold must be a nonnegative integer, got {tau}"
                    )));
                }
            }
            TopoDistance::Jaccard | TopoDistance::Cosine => {
                if !(0.0..=1.0).contains(&tau) {
                    return Err(invalid(format!("threshold must lie in [0, 1], got {tau}")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for TopoDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopoDistance::ShortestPath => "shortest-path",
            TopoDistance::Jaccard => "jaccard",
            TopoDistance::Cosine => "cosine",
        })
    }
}

impl std::str::FromStr for TopoDistance {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shortest-path" | "shortest_path" => Ok(TopoDistance::ShortestPath),
            "jaccard" => Ok(TopoDistance::Jaccard),
            "cosine" => Ok(TopoDistance::Cosine),
            other => Err(invalid(format!("unknown topological distance '{other}'"))),
        }
    }
}

/// Symmetric, reflexive relation `member(i, k)`: vertex `k` lies within the
/// threshold of vertex `i`.
#[derive(Clone, PartialEq)]
pub struct NeighborhoodMask {
    n: usize,
    member: Vec<bool>,
    tau: f64,
}

impl NeighborhoodMask {
    /// Builds the neighborhood of every vertex under `kind` at threshold `tau`.
    pub fn build(g: &Graph, kind: TopoDistance, tau: f64) -> Result<Self> {
        kind.validate_tau(tau)?;
        let n = g.n();
        let mut member = match kind {
            TopoDistance::ShortestPath => {
                if tau == 0.0 {
                    vec![false; n * n]
                } else {
                    g.power_reach(tau as usize)?.cells
                }
            }
            TopoDistance::Jaccard | TopoDistance::Cosine => {
                if tau >= 1.0 {
                    vec![true; n * n]
                } else {
                    profile_mask(g, kind, tau)
                }
            }
        };
        for i in 0..n {
            member[i * n + i] = true;
        }
        Ok(Self { n, member, tau })
    }

    /// Every vertex is a neighbor of every other one.
    pub fn full(n: usize) -> Self {
        Self {
            n,
            member: vec![true; n * n],
            tau: f64::INFINITY,
        }
    }

    /// Mask from an explicit predicate. The result is symmetrized and the
    /// diagonal forced on.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut member = vec![false; n * n];
        for i in 0..n {
            for k in i..n {
                let m = i == k || f(i, k);
                member[i * n + k] = m;
                member[k * n + i] = m;
            }
        }
        Self {
            n,
            member,
            tau: f64::NAN,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    pub fn contains(&self, i: usize, k: usize) -> bool {
        self.member[i * self.n + k]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[bool] {
        &self.member[i * self.n..(i + 1) * self.n]
    }

    pub fn is_full(&self) -> bool {
        self.member.iter().all(|&m| m)
    }

    /// Number of `(i, k)` pairs in the relation, diagonal included.
    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }
}

impl fmt::Debug for NeighborhoodMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NeighborhoodMask")
            .field("n", &self.n)
            .field("tau", &self.tau)
            .field("pairs", &self.count())
            .finish()
    }
}

/// Profile-based masks for thresholds below 1. A distance below 1 needs at
/// least one shared neighbor, so only vertices two hops apart are examined.
fn profile_mask(g: &Graph, kind: TopoDistance, tau: f64) -> Vec<bool> {
    let n = g.n();
    let mut member = vec![false; n * n];
    let fill = |(i, row): (usize, &mut [bool])| {
        let mut common = vec![0usize; n];
        let mut touched = Vec::new();
        for &w in g.neighbors(i) {
            for &k in g.neighbors(w) {
                if k != i {
                    if common[k] == 0 {
                        touched.push(k);
                    }
                    common[k] += 1;
                }
            }
        }
        for &k in &touched {
            let d = match kind {
                TopoDistance::Jaccard => jaccard_from_counts(common[k], g.degree(i), g.degree(k)),
                _ => cosine_from_counts(common[k], g.degree(i), g.degree(k)),
            };
            row[k] = d <= tau + TAU_EPS;
        }
    };
    if n >= PAR_MIN_N {
        member.par_chunks_mut(n).enumerate().for_each(fill);
    } else {
        member.chunks_mut(n).enumerate().for_each(fill);
    }
    member
}
