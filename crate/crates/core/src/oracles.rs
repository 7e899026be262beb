//! Centralized brute-force references used for verification and as default
//! providers behind pluggable interfaces: Bellman-Ford, Dinic max-flow,
//! brute girth, Stoer-Wagner min cut (with a 1-respecting tree), exhaustive
//! directed bisections, and the deterministic planar test-graph generator.

use crate::planar::{
    DocEdge, DocVertex, Edge, EmbeddedPlanarGraph, GraphDocument, PlanarError, RotationSystem, INF,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub algorithm: String,
    pub input_digest: String,
    pub output: String,
    pub elapsed_ms: u128,
}

/// FNV-1a over a canonical byte serialization; stable across runs.
pub fn fnv_digest(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Explicit directed multigraph used for dual-side reference computations.
#[derive(Debug, Clone, Default)]
pub struct MultiDigraph {
    pub n: usize,
    /// (tail, head, weight); parallel arcs and self-loops allowed.
    pub arcs: Vec<(usize, usize, i64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeCycleFound;

/// Distances from `source`, or an error if a negative cycle exists anywhere
/// in the graph (detected from a virtual super-source).
pub fn bellman_ford(g: &MultiDigraph, source: usize) -> Result<Vec<i64>, NegativeCycleFound> {
    if has_negative_cycle(g) {
        return Err(NegativeCycleFound);
    }
    let mut dist = vec![INF; g.n];
    dist[source] = 0;
    for _ in 0..g.n {
        let mut changed = false;
        for &(u, v, w) in &g.arcs {
            if dist[u] < INF && dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(dist)
}

pub fn has_negative_cycle(g: &MultiDigraph) -> bool {
    // Super-source start: every node at 0 detects cycles in any component.
    let mut dist = vec![0i64; g.n];
    for _ in 0..g.n {
        let mut changed = false;
        for &(u, v, w) in &g.arcs {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                changed = true;
            }
        }
        if !changed {
            return false;
        }
    }
    // One more relaxation pass: any improvement means a negative cycle.
    g.arcs.iter().any(|&(u, v, w)| dist[u] + w < dist[v])
}

/// Dijkstra over a multigraph with non-negative weights. Returns distances
/// and the incoming arc index on a shortest path tree.
pub fn dijkstra_multi(g: &MultiDigraph, source: usize) -> (Vec<i64>, Vec<Option<usize>>) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); g.n];
    for (i, &(u, _, w)) in g.arcs.iter().enumerate() {
        debug_assert!(w >= 0);
        adj[u].push(i);
    }
    let mut dist = vec![INF; g.n];
    let mut parent = vec![None; g.n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0;
    heap.push(std::cmp::Reverse((0i64, source)));
    while let Some(std::cmp::Reverse((d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &i in &adj[u] {
            let (_, v, w) = g.arcs[i];
            if d + w < dist[v] {
                dist[v] = d + w;
                parent[v] = Some(i);
                heap.push(std::cmp::Reverse((dist[v], v)));
            }
        }
    }
    (dist, parent)
}

/// Dinic max-flow. Arcs are directed with integral capacities; the returned
/// assignment is per input arc.
pub fn max_flow_reference(
    n: usize,
    arcs: &[(usize, usize, i64)],
    s: usize,
    t: usize,
) -> (i64, Vec<i64>) {
    assert_ne!(s, t);
    let m = arcs.len();
    // Residual arcs: forward at 2i, backward at 2i+1.
    let mut head = Vec::with_capacity(2 * m);
    let mut cap = Vec::with_capacity(2 * m);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v, c) in arcs {
        adj[u].push(head.len());
        head.push(v);
        cap.push(c.max(0));
        adj[v].push(head.len());
        head.push(u);
        cap.push(0);
    }
    let mut flow_total = 0i64;
    loop {
        // BFS levels.
        let mut level = vec![u32::MAX; n];
        level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &ei in &adj[u] {
                let v = head[ei];
                if cap[ei] > 0 && level[v] == u32::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if level[t] == u32::MAX {
            break;
        }
        let mut it = vec![0usize; n];
        // DFS blocking flow.
        fn dfs(
            u: usize,
            t: usize,
            pushed: i64,
            adj: &[Vec<usize>],
            head: &[usize],
            cap: &mut [i64],
            level: &[u32],
            it: &mut [usize],
        ) -> i64 {
            if u == t {
                return pushed;
            }
            while it[u] < adj[u].len() {
                let ei = adj[u][it[u]];
                let v = head[ei];
                if cap[ei] > 0 && level[v] == level[u] + 1 {
                    let d = dfs(v, t, pushed.min(cap[ei]), adj, head, cap, level, it);
                    if d > 0 {
                        cap[ei] -= d;
                        cap[ei ^ 1] += d;
                        return d;
                    }
                }
                it[u] += 1;
            }
            0
        }
        loop {
            let pushed = dfs(s, t, i64::MAX, &adj, &head, &mut cap, &level, &mut it);
            if pushed == 0 {
                break;
            }
            flow_total += pushed;
        }
    }
    let assignment: Vec<i64> = (0..m).map(|i| cap[2 * i + 1]).collect();
    (flow_total, assignment)
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
#[error("graph contains no cycle")]
pub struct Acyclic;

/// Weighted girth by brute force: min over edges e=(u,v) of
/// dist_{G-e}(u, v) + w(e). Returns (weight, cycle edge indices).
pub fn brute_girth(g: &EmbeddedPlanarGraph) -> Result<(i64, Vec<usize>), Acyclic> {
    let rs: &RotationSystem = g;
    let mut best: Option<(i64, Vec<usize>)> = None;
    for e in 0..rs.edge_count() {
        let (u, v, w) = (rs.edges[e].tail, rs.edges[e].head, rs.edges[e].weight);
        // Undirected distances avoiding edge e.
        let mut md = MultiDigraph { n: rs.vertex_count(), arcs: Vec::new() };
        let mut arc_edge = Vec::new();
        for (i, rec) in rs.edges.iter().enumerate() {
            if i == e {
                continue;
            }
            md.arcs.push((rec.tail, rec.head, rec.weight));
            arc_edge.push(i);
            md.arcs.push((rec.head, rec.tail, rec.weight));
            arc_edge.push(i);
        }
        let (dist, parent) = dijkstra_multi(&md, u);
        if dist[v] >= INF {
            continue;
        }
        let total = dist[v] + w;
        let better = match &best {
            None => true,
            Some((bw, _)) => total < *bw,
        };
        if better {
            let mut cycle = vec![e];
            let mut cur = v;
            while cur != u {
                let ai = parent[cur].unwrap();
                cycle.push(arc_edge[ai]);
                cur = md.arcs[ai].0;
            }
            cycle.sort_unstable();
            best = Some((total, cycle));
        }
    }
    best.ok_or(Acyclic)
}

/// Simple weighted undirected graph for the min-cut provider interface.
#[derive(Debug, Clone)]
pub struct SimpleWeightedGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, i64)>,
}

/// Exact global min cut with the pieces the mark-cut-edges procedure needs:
/// the cut value, one side, a spanning tree the cut 1-respects, and the
/// crossing tree edge.
#[derive(Debug, Clone)]
pub struct MinCutWitness {
    pub value: i64,
    pub side: Vec<bool>,
    /// Edge indices of a spanning tree of the whole graph.
    pub tree_edges: Vec<usize>,
    /// The unique tree edge crossing the cut.
    pub crossing_edge: usize,
}

/// Stoer-Wagner minimum cut (contraction-based) on a connected graph with
/// non-negative weights, plus the 1-respecting spanning tree witness.
pub fn min_cut_reference(g: &SimpleWeightedGraph) -> MinCutWitness {
    assert!(g.n >= 2, "min cut needs at least two nodes");
    let n = g.n;
    let mut w = vec![vec![0i64; n]; n];
    for &(u, v, wt) in &g.edges {
        if u != v {
            w[u][v] += wt;
            w[v][u] += wt;
        }
    }
    let mut members: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut best: Option<(i64, Vec<usize>)> = None;
    while active.len() > 1 {
        // Maximum adjacency order; ties by smaller node index.
        let mut in_a = vec![false; n];
        let mut weight_to_a = vec![0i64; n];
        let mut order = Vec::with_capacity(active.len());
        for _ in 0..active.len() {
            let mut pick = None;
            for &v in &active {
                if in_a[v] {
                    continue;
                }
                let better = match pick {
                    None => true,
                    Some(p) => {
                        weight_to_a[v] > weight_to_a[p]
                            || (weight_to_a[v] == weight_to_a[p] && v < p)
                    }
                };
                if better {
                    pick = Some(v);
                }
            }
            let v = pick.unwrap();
            in_a[v] = true;
            order.push(v);
            for &u in &active {
                if !in_a[u] {
                    weight_to_a[u] += w[v][u];
                }
            }
        }
        let t = *order.last().unwrap();
        let s = order[order.len() - 2];
        let cut_of_phase = weight_to_a[t];
        let candidate = members[t].clone();
        let better = match &best {
            None => true,
            Some((bv, _)) => cut_of_phase < *bv,
        };
        if better {
            best = Some((cut_of_phase, candidate));
        }
        // Merge t into s.
        let moved = std::mem::take(&mut members[t]);
        members[s].extend(moved);
        for &u in &active {
            if u != s && u != t {
                w[s][u] += w[t][u];
                w[u][s] = w[s][u];
            }
        }
        active.retain(|&u| u != t);
    }
    let (value, side_nodes) = best.unwrap();
    let mut side = vec![false; n];
    for v in side_nodes {
        side[v] = true;
    }
    // Refine to a connected side: a component of the chosen side cuts no more.
    let side = refine_side(g, &side);
    let value_check: i64 = g
        .edges
        .iter()
        .filter(|&&(u, v, _)| side[u] != side[v])
        .map(|&(_, _, wt)| wt)
        .sum();
    debug_assert_eq!(value_check, value, "refined side changed the cut value");
    // Spanning tree of each side plus the smallest crossing edge.
    let mut tree_edges = Vec::new();
    let mut dsu = Dsu::new(n);
    for (i, &(u, v, _)) in g.edges.iter().enumerate() {
        if side[u] == side[v] && dsu.union(u, v) {
            tree_edges.push(i);
        }
    }
    let crossing_edge = g
        .edges
        .iter()
        .enumerate()
        .filter(|&(_, &(u, v, _))| side[u] != side[v])
        .map(|(i, _)| i)
        .next()
        .expect("cut must have a crossing edge");
    tree_edges.push(crossing_edge);
    MinCutWitness { value, side, tree_edges, crossing_edge }
}

fn refine_side(g: &SimpleWeightedGraph, side: &[bool]) -> Vec<bool> {
    let n = g.n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v, _) in &g.edges {
        if side[u] && side[v] {
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    let start = (0..n).find(|&v| side[v]).unwrap();
    let mut comp = vec![false; n];
    let mut stack = vec![start];
    comp[start] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !comp[u] {
                comp[u] = true;
                stack.push(u);
            }
        }
    }
    if (0..n).all(|v| comp[v] == side[v]) {
        side.to_vec()
    } else {
        comp
    }
}

pub struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    pub fn new(n: usize) -> Dsu {
        Dsu { parent: (0..n).collect() }
    }
    pub fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let r = self.find(self.parent[x]);
            self.parent[x] = r;
        }
        self.parent[x]
    }
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Directed global minimum cut reference. Exhaustive over all bisections for
/// n <= 12 (returns the side too); otherwise a fixed-root st-pair sweep via
/// Dinic (value only).
pub fn brute_directed_global_cut(
    n: usize,
    arcs: &[(usize, usize, i64)],
) -> (i64, Option<Vec<bool>>) {
    assert!(n >= 2);
    if n <= 12 {
        let mut best: Option<(i64, u32)> = None;
        for mask in 1u32..(1 << n) - 1 {
            let value: i64 = arcs
                .iter()
                .filter(|&&(u, v, _)| mask & (1 << u) != 0 && mask & (1 << v) == 0)
                .map(|&(_, _, w)| w)
                .sum();
            if best.map_or(true, |(bv, _)| value < bv) {
                best = Some((value, mask));
            }
        }
        let (value, mask) = best.unwrap();
        let side = (0..n).map(|v| mask & (1 << v) != 0).collect();
        (value, Some(side))
    } else {
        let r = 0usize;
        let mut best = i64::MAX;
        for t in 1..n {
            let (a, _) = max_flow_reference(n, arcs, r, t);
            let (b, _) = max_flow_reference(n, arcs, t, r);
            best = best.min(a).min(b);
        }
        (best, None)
    }
}

/// Deterministic planar test-graph generator. `kind` is "grid" or
/// "random-triangulation"; weights and capacities are drawn independently
/// and uniformly from the inclusive range.
pub fn gen_planar(
    kind: &str,
    n: usize,
    weight_range: (i64, i64),
    seed: u64,
) -> Result<EmbeddedPlanarGraph, PlanarError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut g = match kind {
        "grid" => gen_grid(n)?,
        "random-triangulation" | "tri" => gen_triangulation(n, &mut rng)?,
        other => {
            return Err(PlanarError::MalformedDocument(format!(
                "unknown generator kind {other}"
            )))
        }
    };
    randomize_weights(&mut g, weight_range, &mut rng)
}

/// Same topology, each edge independently flipped with probability 1/2,
/// marked directed. Weight range applies as in [`gen_planar`].
pub fn gen_planar_directed(
    kind: &str,
    n: usize,
    weight_range: (i64, i64),
    seed: u64,
) -> Result<EmbeddedPlanarGraph, PlanarError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut g = match kind {
        "grid" => gen_grid(n)?,
        "random-triangulation" | "tri" => gen_triangulation(n, &mut rng)?,
        other => {
            return Err(PlanarError::MalformedDocument(format!(
                "unknown generator kind {other}"
            )))
        }
    };
    let mut rs = g.rotation_system().clone();
    rs.directed = true;
    for e in rs.edges.iter_mut() {
        if rng.gen_bool(0.5) {
            std::mem::swap(&mut e.tail, &mut e.head);
        }
    }
    g = EmbeddedPlanarGraph::from_rotation_system(rs)?;
    randomize_weights(&mut g, weight_range, &mut rng)
}

fn randomize_weights(
    g: &mut EmbeddedPlanarGraph,
    (lo, hi): (i64, i64),
    rng: &mut ChaCha20Rng,
) -> Result<EmbeddedPlanarGraph, PlanarError> {
    let mut rs = g.rotation_system().clone();
    for e in rs.edges.iter_mut() {
        e.weight = rng.gen_range(lo..=hi);
        e.capacity = rng.gen_range(lo..=hi).abs();
    }
    EmbeddedPlanarGraph::from_rotation_system(rs)
}

fn gen_grid(n: usize) -> Result<EmbeddedPlanarGraph, PlanarError> {
    assert!(n >= 2);
    let rows = (n as f64).sqrt().floor() as usize;
    let cols = n.div_ceil(rows);
    let cell = |r: usize, c: usize| r * cols + c;
    let exists = |r: usize, c: usize| r < rows && c < cols && cell(r, c) < n;
    // Edge ids: rightward edges first (row-major), then downward edges.
    let mut edges = Vec::new();
    let mut edge_at = std::collections::BTreeMap::new();
    for r in 0..rows {
        for c in 0..cols {
            if exists(r, c) && exists(r, c + 1) {
                edge_at.insert((cell(r, c), cell(r, c + 1)), edges.len());
                edges.push(DocEdge {
                    id: edges.len() as u64,
                    tail: cell(r, c) as u64,
                    head: cell(r, c + 1) as u64,
                    weight: 1,
                    capacity: 1,
                });
            }
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            if exists(r, c) && exists(r + 1, c) {
                edge_at.insert((cell(r, c), cell(r + 1, c)), edges.len());
                edges.push(DocEdge {
                    id: edges.len() as u64,
                    tail: cell(r, c) as u64,
                    head: cell(r + 1, c) as u64,
                    weight: 1,
                    capacity: 1,
                });
            }
        }
    }
    let mut vertices = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if !exists(r, c) {
                continue;
            }
            // Clockwise: up, right, down, left.
            let mut rotation = Vec::new();
            if r > 0 && exists(r - 1, c) {
                rotation.push(edge_at[&(cell(r - 1, c), cell(r, c))] as u64);
            }
            if exists(r, c + 1) {
                rotation.push(edge_at[&(cell(r, c), cell(r, c + 1))] as u64);
            }
            if exists(r + 1, c) {
                rotation.push(edge_at[&(cell(r, c), cell(r + 1, c))] as u64);
            }
            if c > 0 && exists(r, c - 1) {
                rotation.push(edge_at[&(cell(r, c - 1), cell(r, c))] as u64);
            }
            vertices.push(DocVertex { id: cell(r, c) as u64, rotation });
        }
    }
    crate::planar::build_from_document(&GraphDocument { directed: false, vertices, edges })
}

fn gen_triangulation(n: usize, rng: &mut ChaCha20Rng) -> Result<EmbeddedPlanarGraph, PlanarError> {
    assert!(n >= 3);
    // Start from a triangle and repeatedly split a random face into three.
    let mut rs = RotationSystem {
        directed: false,
        vertex_ids: vec![0, 1, 2],
        rotations: vec![vec![0, 2], vec![1, 0], vec![2, 1]],
        edges: vec![
            Edge { id: 0, tail: 0, head: 1, weight: 1, capacity: 1 },
            Edge { id: 1, tail: 1, head: 2, weight: 1, capacity: 1 },
            Edge { id: 2, tail: 2, head: 0, weight: 1, capacity: 1 },
        ],
    };
    while rs.vertex_count() < n {
        let fs = crate::planar::trace_faces(&rs);
        let f = rng.gen_range(0..fs.face_count());
        let cycle = &fs.faces[f];
        debug_assert_eq!(cycle.len(), 3);
        let (d1, d2, d3) = (cycle[0], cycle[1], cycle[2]);
        let a = rs.dart_tail(d1);
        let b = rs.dart_tail(d2);
        let c = rs.dart_tail(d3);
        let w = rs.vertex_count();
        let (ea, eb, ec) = (rs.edge_count(), rs.edge_count() + 1, rs.edge_count() + 2);
        rs.edges.push(Edge { id: ea as u64, tail: w, head: a, weight: 1, capacity: 1 });
        rs.edges.push(Edge { id: eb as u64, tail: w, head: b, weight: 1, capacity: 1 });
        rs.edges.push(Edge { id: ec as u64, tail: w, head: c, weight: 1, capacity: 1 });
        rs.vertex_ids.push(w as u64);
        // New vertex sees its three spokes clockwise.
        rs.rotations.push(vec![ea, eb, ec]);
        // At a corner, the face sits after the outgoing face edge; the
        // spoke goes right there.
        insert_after(&mut rs.rotations[a], d1.edge(), ea);
        insert_after(&mut rs.rotations[b], d2.edge(), eb);
        insert_after(&mut rs.rotations[c], d3.edge(), ec);
    }
    EmbeddedPlanarGraph::from_rotation_system(rs)
}

fn insert_after(rot: &mut Vec<usize>, anchor: usize, new_edge: usize) {
    let pos = rot.iter().position(|&e| e == anchor).unwrap();
    rot.insert(pos + 1, new_edge);
}
