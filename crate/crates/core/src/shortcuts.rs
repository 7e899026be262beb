//! Tree-restricted low-congestion shortcuts and part-wise aggregation.
//!
//! Shortcuts are built on a global BFS tree: the augmenting subgraph of a
//! part is the union of tree paths from its members to the part's apex (the
//! LCA closure over the tree). Congestion and dilation are measured, not
//! assumed. Part-wise aggregation then runs converge + broadcast on every
//! part concurrently, with all traffic metered against the per-edge
//! bandwidth, so the reported round count reflects actual contention.

use crate::planar::RotationSystem;
use crate::sim::{bits_for, AggOp, BfsTree, RoundLedger};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShortcutError {
    #[error("part {part} does not induce a connected subgraph")]
    InvalidPartition { part: usize },
}

/// Disjoint vertex sets, each inducing a connected subgraph.
#[derive(Debug, Clone)]
pub struct Partition {
    pub parts: Vec<Vec<usize>>,
}

impl Partition {
    pub fn part_of(&self, n: usize) -> Vec<Option<usize>> {
        let mut owner = vec![None; n];
        for (i, part) in self.parts.iter().enumerate() {
            for &v in part {
                owner[v] = Some(i);
            }
        }
        owner
    }
}

#[derive(Debug, Clone)]
pub struct ShortcutSet {
    /// Per part: augmenting tree-edge indices (paths to the apex).
    pub subgraphs: Vec<Vec<usize>>,
    /// Per part: apex vertex (LCA closure of the part on the BFS tree).
    pub apex: Vec<usize>,
    /// Measured congestion: max number of parts using any single edge.
    pub congestion: usize,
    /// Measured dilation: max diameter of G[S_i] union H_i.
    pub dilation: u32,
}

fn tree_lca(tree: &BfsTree, mut a: usize, mut b: usize) -> usize {
    while tree.depth[a] > tree.depth[b] {
        a = tree.parent[a].unwrap();
    }
    while tree.depth[b] > tree.depth[a] {
        b = tree.parent[b].unwrap();
    }
    while a != b {
        a = tree.parent[a].unwrap();
        b = tree.parent[b].unwrap();
    }
    a
}

fn check_connected(rs: &RotationSystem, part: &[usize]) -> bool {
    if part.is_empty() {
        return false;
    }
    let inside: std::collections::BTreeSet<usize> = part.iter().copied().collect();
    let mut seen = std::collections::BTreeSet::new();
    let mut stack = vec![part[0]];
    seen.insert(part[0]);
    while let Some(v) = stack.pop() {
        for (_, u) in rs.incident(v) {
            if inside.contains(&u) && seen.insert(u) {
                stack.push(u);
            }
        }
    }
    seen.len() == part.len()
}

pub fn build_shortcuts(
    rs: &RotationSystem,
    tree: &BfsTree,
    partition: &Partition,
) -> Result<ShortcutSet, ShortcutError> {
    let mut subgraphs = Vec::with_capacity(partition.parts.len());
    let mut apexes = Vec::with_capacity(partition.parts.len());
    let mut usage: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, part) in partition.parts.iter().enumerate() {
        if !check_connected(rs, part) {
            return Err(ShortcutError::InvalidPartition { part: i });
        }
        let mut apex = part[0];
        for &v in &part[1..] {
            apex = tree_lca(tree, apex, v);
        }
        let inside: std::collections::BTreeSet<usize> = part.iter().copied().collect();
        let mut extra = std::collections::BTreeSet::new();
        for &v in part {
            let mut cur = v;
            while cur != apex {
                let pe = tree.parent_edge[cur].unwrap();
                let p = tree.parent[cur].unwrap();
                if !(inside.contains(&cur) && inside.contains(&p)) {
                    extra.insert(pe);
                }
                cur = p;
            }
        }
        for &e in &extra {
            *usage.entry(e).or_insert(0) += 1;
        }
        subgraphs.push(extra.into_iter().collect::<Vec<usize>>());
        apexes.push(apex);
    }
    let congestion = usage.values().copied().max().unwrap_or(0);
    let mut dilation = 0u32;
    for (i, part) in partition.parts.iter().enumerate() {
        dilation = dilation.max(part_diameter(rs, part, &subgraphs[i]));
    }
    Ok(ShortcutSet { subgraphs, apex: apexes, congestion, dilation })
}

/// Diameter of G[S_i] union H_i, measured by BFS from every member vertex.
fn part_diameter(rs: &RotationSystem, part: &[usize], extra_edges: &[usize]) -> u32 {
    let (verts, adj) = part_subgraph(rs, part, extra_edges);
    let index: BTreeMap<usize, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut best = 0u32;
    for (start, _) in verts.iter().enumerate() {
        let mut dist = vec![u32::MAX; verts.len()];
        dist[start] = 0;
        let mut q = VecDeque::from([start]);
        while let Some(x) = q.pop_front() {
            for &(_, y) in &adj[x] {
                let yi = index[&y];
                if dist[yi] == u32::MAX {
                    dist[yi] = dist[x] + 1;
                    q.push_back(yi);
                }
            }
        }
        best = best.max(dist.iter().copied().filter(|&d| d != u32::MAX).max().unwrap_or(0));
    }
    best
}

/// Vertex set and adjacency of G[S_i] union H_i. Adjacency lists are
/// (edge, other endpoint), sorted.
fn part_subgraph(
    rs: &RotationSystem,
    part: &[usize],
    extra_edges: &[usize],
) -> (Vec<usize>, Vec<Vec<(usize, usize)>>) {
    let inside: std::collections::BTreeSet<usize> = part.iter().copied().collect();
    let mut verts: std::collections::BTreeSet<usize> = inside.clone();
    let mut edges: std::collections::BTreeSet<usize> = extra_edges.iter().copied().collect();
    for e in 0..rs.edge_count() {
        let rec = &rs.edges[e];
        if inside.contains(&rec.tail) && inside.contains(&rec.head) {
            edges.insert(e);
        }
    }
    for &e in &edges {
        verts.insert(rs.edges[e].tail);
        verts.insert(rs.edges[e].head);
    }
    let verts: Vec<usize> = verts.into_iter().collect();
    let index: BTreeMap<usize, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut adj = vec![Vec::new(); verts.len()];
    for &e in &edges {
        let rec = &rs.edges[e];
        adj[index[&rec.tail]].push((e, rec.head));
        adj[index[&rec.head]].push((e, rec.tail));
    }
    for l in &mut adj {
        l.sort_unstable();
    }
    (verts, adj)
}

/// Outcome of a part-wise aggregation: the per-part value plus the measured
/// rounds it took with all parts running concurrently.
#[derive(Debug, Clone)]
pub struct PaResult {
    pub per_part: Vec<u64>,
    pub rounds: u64,
}

/// Solves the PA problem: every vertex of part i ends up knowing the
/// aggregate of the part's inputs. Simulated with converge + broadcast over
/// each part's shortcut tree, all parts concurrent, bandwidth-limited.
pub fn part_wise_aggregate(
    rs: &RotationSystem,
    ledger: &mut RoundLedger,
    _tree: &BfsTree,
    partition: &Partition,
    shortcuts: &ShortcutSet,
    inputs: &[u64],
    op: AggOp,
    bandwidth: u32,
) -> Result<PaResult, ShortcutError> {
    let msg_bits = bits_for(rs.vertex_count()) + 64;
    // Build per-part aggregation trees rooted at the apex.
    struct PartTree {
        verts: Vec<usize>,
        parent: Vec<Option<(usize, usize)>>, // (parent local idx, edge)
        children: Vec<Vec<usize>>,
        member: Vec<bool>,
    }
    let owner = partition.part_of(rs.vertex_count());
    let mut ptrees = Vec::with_capacity(partition.parts.len());
    for (i, part) in partition.parts.iter().enumerate() {
        let (verts, adj) = part_subgraph(rs, part, &shortcuts.subgraphs[i]);
        let index: BTreeMap<usize, usize> =
            verts.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let root = index[&shortcuts.apex[i]];
        let mut parent = vec![None; verts.len()];
        let mut seen = vec![false; verts.len()];
        seen[root] = true;
        let mut q = VecDeque::from([root]);
        while let Some(x) = q.pop_front() {
            for &(e, y) in &adj[x] {
                let yi = index[&y];
                if !seen[yi] {
                    seen[yi] = true;
                    parent[yi] = Some((x, e));
                    q.push_back(yi);
                }
            }
        }
        let mut children = vec![Vec::new(); verts.len()];
        for v in 0..verts.len() {
            if let Some((p, _)) = parent[v] {
                children[p].push(v);
            }
        }
        let member: Vec<bool> = verts.iter().map(|&v| owner[v] == Some(i)).collect();
        let _ = i;
        ptrees.push(PartTree { verts, parent, children, member });
    }

    // Message queues per (edge, destination vertex). Each message carries one
    // part's partial or final value; big messages trickle across rounds.
    #[derive(Debug)]
    struct Pending {
        part: usize,
        down: bool,
        value: u64,
        remaining: u32,
        to_local: usize,
    }
    let mut queues: BTreeMap<(usize, usize), VecDeque<Pending>> = BTreeMap::new();
    let mut pending_children: Vec<Vec<usize>> = ptrees
        .iter()
        .map(|pt| pt.children.iter().map(|c| c.len()).collect())
        .collect();
    let mut partial: Vec<Vec<u64>> = ptrees
        .iter()
        .map(|pt| {
            pt.verts
                .iter()
                .zip(&pt.member)
                .map(|(&v, &m)| if m { inputs[v] } else { op.identity() })
                .collect()
        })
        .collect();
    let mut result: Vec<Option<u64>> = vec![None; ptrees.len()];
    let mut knows: Vec<Vec<bool>> = ptrees.iter().map(|pt| vec![false; pt.verts.len()]).collect();

    fn enqueue_up(
        queues: &mut BTreeMap<(usize, usize), VecDeque<Pending>>,
        pt: &PartTree,
        msg_bits: u32,
        i: usize,
        v: usize,
        value: u64,
    ) {
        let (p, e) = pt.parent[v].unwrap();
        let to_vertex = pt.verts[p];
        queues.entry((e, to_vertex)).or_default().push_back(Pending {
            part: i,
            down: false,
            value,
            remaining: msg_bits,
            to_local: p,
        });
    }
    fn enqueue_down(
        queues: &mut BTreeMap<(usize, usize), VecDeque<Pending>>,
        pt: &PartTree,
        msg_bits: u32,
        i: usize,
        v: usize,
        value: u64,
    ) {
        for &c in &pt.children[v] {
            let (_, e) = pt.parent[c].unwrap();
            let to_vertex = pt.verts[c];
            queues.entry((e, to_vertex)).or_default().push_back(Pending {
                part: i,
                down: true,
                value,
                remaining: msg_bits,
                to_local: c,
            });
        }
    }

    // Seed: leaves report; a childless apex is already done.
    for (i, pt) in ptrees.iter().enumerate() {
        for v in 0..pt.verts.len() {
            if pt.children[v].is_empty() {
                if pt.parent[v].is_none() {
                    result[i] = Some(partial[i][v]);
                    knows[i][v] = true;
                } else {
                    enqueue_up(&mut queues, pt, msg_bits, i, v, partial[i][v]);
                }
            }
        }
    }

    let mut rounds = 0u64;
    while queues.values().any(|q| !q.is_empty()) {
        rounds += 1;
        let mut delivered: Vec<Pending> = Vec::new();
        for ((_e, _to_vertex), q) in queues.iter_mut() {
            let mut budget = bandwidth;
            let mut used = 0u32;
            while budget > 0 {
                match q.front_mut() {
                    None => break,
                    Some(head) => {
                        let step = head.remaining.min(budget);
                        head.remaining -= step;
                        budget -= step;
                        used += step;
                        if head.remaining == 0 {
                            delivered.push(q.pop_front().unwrap());
                        }
                    }
                }
            }
            ledger.observe_edge_bits(used);
        }
        queues.retain(|_, q| !q.is_empty());
        for msg in delivered {
            let i = msg.part;
            let v = msg.to_local;
            if msg.down {
                if !knows[i][v] {
                    knows[i][v] = true;
                    enqueue_down(&mut queues, &ptrees[i], msg_bits, i, v, msg.value);
                }
            } else {
                partial[i][v] = op.apply(partial[i][v], msg.value);
                pending_children[i][v] -= 1;
                if pending_children[i][v] == 0 {
                    if ptrees[i].parent[v].is_some() {
                        enqueue_up(&mut queues, &ptrees[i], msg_bits, i, v, partial[i][v]);
                    } else {
                        result[i] = Some(partial[i][v]);
                        knows[i][v] = true;
                        let value = result[i].unwrap();
                        enqueue_down(&mut queues, &ptrees[i], msg_bits, i, v, value);
                    }
                }
            }
        }
    }
    debug_assert!(knows.iter().all(|k| k.iter().all(|&b| b)));
    ledger.charge("part_wise_aggregate", rounds);
    Ok(PaResult {
        per_part: result.into_iter().map(|r| r.unwrap()).collect(),
        rounds,
    })
}

/// Random partition into connected parts: multi-source BFS from k seeds,
/// each vertex joining the nearest seed (ties to the smaller seed index).
pub fn random_connected_partition(
    rs: &RotationSystem,
    k: usize,
    rng: &mut impl rand::Rng,
) -> Partition {
    let n = rs.vertex_count();
    let k = k.clamp(1, n);
    let mut seeds: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        seeds.swap(i, j);
    }
    seeds.truncate(k);
    seeds.sort_unstable();
    let mut owner = vec![usize::MAX; n];
    let mut q = VecDeque::new();
    for (i, &s) in seeds.iter().enumerate() {
        owner[s] = i;
        q.push_back(s);
    }
    while let Some(v) = q.pop_front() {
        for (_, u) in rs.incident(v) {
            if owner[u] == usize::MAX {
                owner[u] = owner[v];
                q.push_back(u);
            }
        }
    }
    let mut parts = vec![Vec::new(); k];
    for v in 0..n {
        parts[owner[v]].push(v);
    }
    parts.retain(|p| !p.is_empty());
    Partition { parts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::gen_planar;
    use crate::sim::{bfs_tree, default_bandwidth};
    use rand::{Rng, SeedableRng};

    #[test]
    fn whole_graph_part_has_no_shortcuts() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let t = bfs_tree(&g, &mut ledger, 0).unwrap();
        let p = Partition { parts: vec![(0..9).collect()] };
        let s = build_shortcuts(&g, &t, &p).unwrap();
        assert!(s.subgraphs[0].is_empty());
        assert_eq!(s.congestion, 0);
    }

    #[test]
    fn singleton_parts_have_no_shortcuts() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let t = bfs_tree(&g, &mut ledger, 0).unwrap();
        let p = Partition { parts: (0..9).map(|v| vec![v]).collect() };
        let s = build_shortcuts(&g, &t, &p).unwrap();
        assert!(s.subgraphs.iter().all(|h| h.is_empty()));
        assert_eq!(s.dilation, 0);
        assert_eq!(s.congestion, 0);
    }

    #[test]
    fn disconnected_part_is_rejected() {
        let g = gen_planar("grid", 6, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let t = bfs_tree(&g, &mut ledger, 0).unwrap();
        let p = Partition { parts: vec![vec![0, 5], vec![1, 2, 3, 4]] };
        match build_shortcuts(&g, &t, &p) {
            Err(ShortcutError::InvalidPartition { part: 0 }) => {}
            other => panic!("expected invalid partition, got {other:?}"),
        }
    }

    #[test]
    fn pa_sum_counts_part_sizes() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let t = bfs_tree(&g, &mut ledger, 0).unwrap();
        let p = Partition { parts: vec![vec![0, 1, 2], vec![3, 4, 5, 6, 7, 8]] };
        let s = build_shortcuts(&g, &t, &p).unwrap();
        let bw = default_bandwidth(9, 8);
        let r = part_wise_aggregate(&g, &mut ledger, &t, &p, &s, &[1; 9], AggOp::Sum, bw).unwrap();
        assert_eq!(r.per_part, vec![3, 6]);
    }

    #[test]
    fn pa_min_finds_part_leader() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let t = bfs_tree(&g, &mut ledger, 0).unwrap();
        let p = Partition { parts: vec![vec![4, 5, 7, 8], vec![0, 1, 2, 3, 6]] };
        let s = build_shortcuts(&g, &t, &p).unwrap();
        let ids: Vec<u64> = (0..9u64).map(|v| v + 10).collect();
        let bw = default_bandwidth(9, 8);
        let r = part_wise_aggregate(&g, &mut ledger, &t, &p, &s, &ids, AggOp::Min, bw).unwrap();
        assert_eq!(r.per_part, vec![14, 10]);
    }

    #[test]
    fn pa_matches_direct_aggregation_on_random_instances() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(99);
        let ops = [AggOp::Min, AggOp::Max, AggOp::Sum, AggOp::Or, AggOp::And];
        for trial in 0..100 {
            let n = 12 + (trial % 5) * 20;
            let kind = if trial % 2 == 0 { "grid" } else { "random-triangulation" };
            let g = gen_planar(kind, n, (1, 9), trial as u64).unwrap();
            let mut ledger = RoundLedger::new();
            let t = bfs_tree(&g, &mut ledger, 0).unwrap();
            let p = random_connected_partition(&g, 1 + trial % 7, &mut rng);
            let s = build_shortcuts(&g, &t, &p).unwrap();
            let inputs: Vec<u64> = (0..n).map(|_| rng.gen_range(0..1000u64)).collect();
            let op = ops[trial % ops.len()];
            let bw = default_bandwidth(n, 8);
            let r = part_wise_aggregate(&g, &mut ledger, &t, &p, &s, &inputs, op, bw).unwrap();
            for (i, part) in p.parts.iter().enumerate() {
                let direct = part
                    .iter()
                    .map(|&v| inputs[v])
                    .fold(op.identity(), |a, b| op.apply(a, b));
                assert_eq!(r.per_part[i], direct, "trial {trial} part {i}");
            }
            // Empirical bound mirroring the PA lemma.
            let d = t.max_depth as u64;
            let bound =
                32 * (d + s.congestion as u64 + s.dilation as u64 + 1) * (bits_for(n) as u64);
            assert!(
                r.rounds <= bound,
                "trial {trial}: rounds {} exceeds bound {bound}",
                r.rounds
            );
        }
    }
}
