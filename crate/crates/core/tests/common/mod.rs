#![allow(dead_code)]

//! Brute-force reference implementations shared by the integration tests.
//! They work on a plain adjacency matrix and share no code with the library.

use rand::Rng;

pub const INF: u32 = u32::MAX;

pub type Adjacency = Vec<Vec<bool>>;

pub fn adjacency(n: usize, edges: &[(usize, usize)]) -> Adjacency {
    let mut adj = vec![vec![false; n]; n];
    for &(i, j) in edges {
        adj[i][j] = true;
    }
    adj
}

pub fn edges_of(adj: &Adjacency) -> Vec<(usize, usize)> {
    let n = adj.len();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| adj[i][j])
        .collect()
}

/// The `mask`-th digraph on `n` nodes: bit k set means the k-th ordered
/// pair (row-major, diagonal skipped) is an edge.
pub fn digraph_from_mask(n: usize, mask: u64) -> Adjacency {
    let mut adj = vec![vec![false; n]; n];
    let mut bit = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                adj[i][j] = mask >> bit & 1 == 1;
                bit += 1;
            }
        }
    }
    adj
}

pub fn random_digraph(rng: &mut impl Rng, n: usize) -> Adjacency {
    let p: f64 = rng.gen_range(0.0..=1.0);
    let mut adj = vec![vec![false; n]; n];
    for (i, row) in adj.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = i != j && rng.gen_bool(p);
        }
    }
    adj
}

pub fn floyd_warshall(adj: &Adjacency) -> Vec<Vec<u32>> {
    let n = adj.len();
    let mut d = vec![vec![INF; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if adj[i][j] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] != INF && d[k][j] != INF && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleStats {
    pub density: f64,
    pub avg: Option<f64>,
    pub avg_unordered_min: Option<f64>,
    pub diameter: Option<u32>,
    pub eccentricity: Vec<Option<u32>>,
    pub radius: Option<u32>,
    pub center: Vec<usize>,
    pub unreachable: usize,
    pub transitivity: f64,
}

pub fn oracle_stats(adj: &Adjacency) -> OracleStats {
    let n = adj.len();
    let d = floyd_warshall(adj);
    let edges = edges_of(adj).len();

    let mut sum = 0u64;
    let mut count = 0usize;
    let mut unreachable = 0;
    let mut eccentricity = Vec::new();
    for i in 0..n {
        let mut ecc: Option<u32> = None;
        for j in 0..n {
            if i == j {
                continue;
            }
            if d[i][j] == INF {
                unreachable += 1;
            } else {
                sum += d[i][j] as u64;
                count += 1;
                ecc = Some(ecc.map_or(d[i][j], |e| e.max(d[i][j])));
            }
        }
        eccentricity.push(ecc);
    }
    let mut min_sum = 0u64;
    let mut min_count = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let m = d[i][j].min(d[j][i]);
            if m != INF {
                min_sum += m as u64;
                min_count += 1;
            }
        }
    }
    let finite: Vec<u32> = eccentricity.iter().flatten().copied().collect();
    let radius = finite.iter().min().copied();
    let diameter = finite.iter().max().copied();
    let center = (0..n)
        .filter(|&i| radius.is_some() && eccentricity[i] == radius)
        .collect();

    OracleStats {
        density: edges as f64 / (n * (n - 1)) as f64,
        avg: (count > 0).then(|| sum as f64 / count as f64),
        avg_unordered_min: (min_count > 0).then(|| min_sum as f64 / min_count as f64),
        diameter,
        eccentricity,
        radius,
        center,
        unreachable,
        transitivity: oracle_transitivity(adj),
    }
}

/// Enumerates every unordered triple of the undirected projection.
pub fn oracle_transitivity(adj: &Adjacency) -> f64 {
    let n = adj.len();
    let und = |i: usize, j: usize| adj[i][j] || adj[j][i];
    let mut triangles = 0u64;
    let mut triads = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let sides = [und(i, j), und(j, k), und(i, k)];
                match sides.iter().filter(|s| **s).count() {
                    3 => {
                        triangles += 1;
                        triads += 3;
                    }
                    2 => triads += 1,
                    _ => {}
                }
            }
        }
    }
    if triads == 0 {
        0.0
    } else {
        (3 * triangles) as f64 / triads as f64
    }
}

/// Complete digraph on 10 nodes minus 32 edges: 58 edges, density 0.644.
pub fn fixture_58_edges() -> Vec<(usize, usize)> {
    let mut removed = Vec::new();
    for offset in 1..=3 {
        for i in 0..10 {
            removed.push((i, (i + offset) % 10));
        }
    }
    removed.push((0, 4));
    removed.push((1, 5));
    complete_minus(10, &removed)
}

/// 10 nodes, 63 edges, and every one of the other 27 ordered pairs exactly
/// two hops apart. Nodes 6 and 7 follow everyone, so the radius is 1.
pub fn fixture_70_30() -> Vec<(usize, usize)> {
    let others = [0, 1, 2, 3, 4, 5, 8, 9];
    let mut removed = Vec::new();
    for offset in 1..=3 {
        for x in 0..8 {
            removed.push((others[x], others[(x + offset) % 8]));
        }
    }
    for x in 0..3 {
        removed.push((others[x], others[(x + 4) % 8]));
    }
    complete_minus(10, &removed)
}

/// 58 edges that also give the unordered-min average 58/45 ≈ 1.29,
/// directed diameter 2, and centers 6 and 7 at radius 1.
pub fn fixture_joint() -> Vec<(usize, usize)> {
    let others = [0, 1, 2, 3, 4, 5, 8, 9];
    let mut edges = Vec::new();
    for c in [6, 7] {
        edges.extend((0..10).filter(|&j| j != c).map(|j| (c, j)));
    }
    for &o in &others {
        edges.push((o, 6));
    }
    edges.push((0, 7));
    edges.push((1, 7));
    // 15 mutual pairs among the others: an 8-cycle plus 7 chords.
    let mut pairs: Vec<(usize, usize)> = (0..8).map(|x| (others[x], others[(x + 1) % 8])).collect();
    pairs.extend((0..7).map(|x| (others[x], others[(x + 2) % 8])));
    for (a, b) in pairs {
        edges.push((a, b));
        edges.push((b, a));
    }
    edges
}

fn complete_minus(n: usize, removed: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && !removed.contains(&(i, j)) {
                edges.push((i, j));
            }
        }
    }
    edges
}
