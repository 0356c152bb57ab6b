//! Follow-graph analytics: density, shortest paths, eccentricity, and the
//! transitivity of the undirected projection.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("metric needs at least 2 nodes, graph has {0}")]
    TooFewNodes(usize),
    #[error("self-loop on {0}")]
    SelfLoop(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Directed follow graph; an edge `i -> j` means i follows j. Nodes are
/// indexed in label order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SocialDigraph {
    labels: Vec<String>,
    out: Vec<BTreeSet<usize>>,
}

impl SocialDigraph {
    /// Graph on `n` nodes labelled `0..n` (zero padded so label order is
    /// index order).
    pub fn with_nodes(n: usize) -> Self {
        let width = n.saturating_sub(1).to_string().len();
        Self {
            labels: (0..n).map(|i| format!("{i:0width$}")).collect(),
            out: vec![BTreeSet::new(); n],
        }
    }

    pub fn from_index_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Self::with_nodes(n);
        for &(i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    /// Builds a graph over `nodes` plus every edge endpoint.
    pub fn from_labeled<S: AsRef<str>>(
        nodes: impl IntoIterator<Item = S>,
        edges: impl IntoIterator<Item = (S, S)>,
    ) -> Result<Self, GraphError> {
        let edges: Vec<(String, String)> = edges
            .into_iter()
            .map(|(a, b)| (a.as_ref().to_owned(), b.as_ref().to_owned()))
            .collect();
        let mut labels: BTreeSet<String> = nodes.into_iter().map(|s| s.as_ref().to_owned()).collect();
        for (a, b) in &edges {
            labels.insert(a.clone());
            labels.insert(b.clone());
        }
        let labels: Vec<String> = labels.into_iter().collect();
        let index: BTreeMap<&str, usize> =
            labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let pairs: Vec<(usize, usize)> = edges
            .iter()
            .map(|(a, b)| (index[a.as_str()], index[b.as_str()]))
            .collect();
        let mut g = Self {
            out: vec![BTreeSet::new(); labels.len()],
            labels,
        };
        for (i, j) in pairs {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    /// Parses `follower followee` lines. A line with one token declares an
    /// isolated node; `#` starts a comment.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens.as_slice() {
                [] => {}
                [node] => nodes.push(*node),
                [a, b] => edges.push((*a, *b)),
                _ => {
                    return Err(GraphError::Parse {
                        line: i + 1,
                        message: format!("expected `follower followee`, got {line:?}"),
                    })
                }
            }
        }
        Self::from_labeled(nodes, edges)
    }

    /// Adds `i -> j`; returns whether it was new.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool, GraphError> {
        if i == j {
            return Err(GraphError::SelfLoop(self.labels[i].clone()));
        }
        Ok(self.out[i].insert(j))
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(BTreeSet::len).sum()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.out[i].contains(&j)
    }

    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[i].iter().copied()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, succ)| succ.iter().map(move |&j| (i, j)))
    }

    pub fn to_dot(&self) -> String {
        let mut dot = String::from("digraph follows {\n");
        for label in &self.labels {
            let _ = writeln!(dot, "  \"{label}\";");
        }
        for (i, j) in self.edges() {
            let _ = writeln!(dot, "  \"{}\" -> \"{}\";", self.labels[i], self.labels[j]);
        }
        dot.push_str("}\n");
        dot
    }

    pub fn to_edge_list(&self) -> String {
        let mut text = String::new();
        for (i, succ) in self.out.iter().enumerate() {
            if succ.is_empty() {
                let _ = writeln!(text, "{}", self.labels[i]);
            }
        }
        for (i, j) in self.edges() {
            let _ = writeln!(text, "{} {}", self.labels[i], self.labels[j]);
        }
        text
    }
}

/// |E| / (n(n-1)).
pub fn density(g: &SocialDigraph) -> Result<f64, GraphError> {
    let n = g.node_count();
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    Ok(g.edge_count() as f64 / (n * (n - 1)) as f64)
}

/// Hop distances from `source` along directed edges; `None` if unreachable.
pub fn bfs_distances(g: &SocialDigraph, source: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; g.node_count()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let next = dist[u].expect("queued nodes are reached") + 1;
        for v in g.successors(u) {
            if dist[v].is_none() {
                dist[v] = Some(next);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// All-pairs distances, one BFS per source.
pub fn distance_matrix(g: &SocialDigraph, execution: Execution) -> Vec<Vec<Option<u32>>> {
    let sources: Vec<usize> = (0..g.node_count()).collect();
    execution.map(&sources, |&s| bfs_distances(g, s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    /// Mean l(i,j) over ordered pairs i != j with j reachable from i.
    pub avg_shortest_path: Option<f64>,
    /// Mean over unordered pairs of min(l(i,j), l(j,i)), pairs where
    /// neither direction is reachable left out.
    pub avg_shortest_path_unordered_min: Option<f64>,
    pub diameter: Option<u32>,
    /// Per node, max finite l(i,j); `None` when i reaches no other node.
    pub eccentricity: Vec<Option<u32>>,
    pub radius: Option<u32>,
    pub center: Vec<usize>,
    pub reachable_pairs: usize,
    pub unreachable_pairs: usize,
}

pub fn shortest_path_stats(g: &SocialDigraph, execution: Execution) -> Result<PathStats, GraphError> {
    let n = g.node_count();
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    Ok(path_stats_from_matrix(&distance_matrix(g, execution)))
}

pub fn path_stats_from_matrix(dist: &[Vec<Option<u32>>]) -> PathStats {
    let n = dist.len();
    let mut sum = 0u64;
    let mut reachable = 0usize;
    let mut eccentricity = vec![None; n];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            if let Some(d) = dist[i][j] {
                sum += u64::from(d);
                reachable += 1;
                eccentricity[i] = Some(eccentricity[i].map_or(d, |e: u32| e.max(d)));
            }
        }
    }
    let mut min_sum = 0u64;
    let mut min_pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let best = match (dist[i][j], dist[j][i]) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            if let Some(d) = best {
                min_sum += u64::from(d);
                min_pairs += 1;
            }
        }
    }
    let defined = eccentricity.iter().flatten().copied();
    let radius = defined.clone().min();
    let diameter = defined.max();
    let center = (0..n)
        .filter(|&i| radius.is_some() && eccentricity[i] == radius)
        .collect();
    PathStats {
        avg_shortest_path: (reachable > 0).then(|| sum as f64 / reachable as f64),
        avg_shortest_path_unordered_min: (min_pairs > 0).then(|| min_sum as f64 / min_pairs as f64),
        diameter,
        eccentricity,
        radius,
        center,
        reachable_pairs: reachable,
        unreachable_pairs: n * n.saturating_sub(1) - reachable,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UndirectedGraph {
    adj: Vec<BTreeSet<usize>>,
}

impl UndirectedGraph {
    pub fn with_nodes(n: usize) -> Self {
        Self {
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        self.adj[j].insert(i);
        self.adj[i].insert(j)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].contains(&j)
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[i].iter().copied()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }
}

/// Edge {i,j} iff i follows j or j follows i.
pub fn to_undirected(g: &SocialDigraph) -> UndirectedGraph {
    let mut u = UndirectedGraph::with_nodes(g.node_count());
    for (i, j) in g.edges() {
        u.add_edge(i, j);
    }
    u
}

/// 3 × triangles / connected triples, 0 when there are no triples.
pub fn transitivity(g: &UndirectedGraph) -> f64 {
    let mut closed = 0u64;
    let mut triples = 0u64;
    for v in 0..g.node_count() {
        let neighbors: Vec<usize> = g.neighbors(v).collect();
        let k = neighbors.len() as u64;
        triples += k * k.saturating_sub(1) / 2;
        for (x, &a) in neighbors.iter().enumerate() {
            closed += neighbors[x + 1..].iter().filter(|&&b| g.has_edge(a, b)).count() as u64;
        }
    }
    // Every triangle is closed once at each of its three corners.
    if triples == 0 {
        0.0
    } else {
        closed as f64 / triples as f64
    }
}

/// Everything the analytics report, keyed by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub undirected_edges: usize,
    pub density: f64,
    pub avg_shortest_path: Option<f64>,
    pub avg_shortest_path_unordered_min: Option<f64>,
    pub diameter: Option<u32>,
    pub eccentricity: BTreeMap<String, Option<u32>>,
    pub radius: Option<u32>,
    pub center: Vec<String>,
    pub transitivity: f64,
    pub reachable_pairs: usize,
    pub unreachable_pairs: usize,
}

pub fn graph_stats(g: &SocialDigraph, execution: Execution) -> Result<GraphStats, GraphError> {
    let density = density(g)?;
    let paths = shortest_path_stats(g, execution)?;
    let undirected = to_undirected(g);
    let label = |i: usize| g.labels()[i].clone();
    Ok(GraphStats {
        nodes: g.node_count(),
        edges: g.edge_count(),
        undirected_edges: undirected.edge_count(),
        density,
        avg_shortest_path: paths.avg_shortest_path,
        avg_shortest_path_unordered_min: paths.avg_shortest_path_unordered_min,
        diameter: paths.diameter,
        eccentricity: paths
            .eccentricity
            .iter()
            .enumerate()
            .map(|(i, e)| (label(i), *e))
            .collect(),
        radius: paths.radius,
        center: paths.center.iter().map(|&i| label(i)).collect(),
        transitivity: transitivity(&undirected),
        reachable_pairs: paths.reachable_pairs,
        unreachable_pairs: paths.unreachable_pairs,
    })
}
