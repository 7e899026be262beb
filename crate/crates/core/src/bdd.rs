//! Bounded-diameter decomposition with dual bags.
//!
//! The tree is computed by a coordinator (the cited distributed construction
//! is a black box) and the distributed-knowledge phases are charged to the
//! ledger per level. What the rest of the system relies on is the property
//! set, which is assert-checked on every build: balanced fundamental-cycle
//! separators on a per-bag BFS tree, per-level dart uniqueness, the few
//! face-parts bound, dual separators F_X, and the exact reassembly of every
//! non-leaf dual bag from its children.

use crate::planar::{Dart, EmbeddedPlanarGraph, Edge, FaceStructure, RotationSystem};
use crate::sim::RoundLedger;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BddError {
    #[error("decomposition property violated: {0}")]
    PropertyViolation(String),
}

#[derive(Debug, Clone)]
pub struct BddConfig {
    /// Bags with at most this many edges become leaves. The default scales
    /// with the diameter and log of the graph so that desk-scale inputs
    /// still exercise the recursion.
    pub leaf_edge_threshold: Option<usize>,
    /// Per-level round charge constant for the construction phases.
    pub charge_constant: u64,
}

impl Default for BddConfig {
    fn default() -> Self {
        BddConfig { leaf_edge_threshold: None, charge_constant: 8 }
    }
}

/// Hierarchical face/face-part identifier: the id of a part extends the id
/// of the face (or part) it was split from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FacePartId(pub Vec<u64>);

impl FacePartId {
    pub fn root(face_id: u64) -> FacePartId {
        FacePartId(vec![face_id])
    }
    pub fn child(&self, bag_id: u64) -> FacePartId {
        let mut v = self.0.clone();
        v.push(bag_id);
        FacePartId(v)
    }
    pub fn contains(&self, ancestor: &FacePartId) -> bool {
        self.0.len() >= ancestor.0.len() && self.0[..ancestor.0.len()] == ancestor.0[..]
    }
    pub fn bits(&self) -> usize {
        self.0.len() * 64
    }
}

/// A node of a dual bag: a face of G or a face-part, with its dart set.
#[derive(Debug, Clone)]
pub struct FacePartNode {
    pub id: FacePartId,
    /// Face of G (trace index) this node belongs to.
    pub face: usize,
    pub darts: Vec<Dart>,
    pub is_part: bool,
    pub critical: bool,
}

/// Separator of a non-leaf bag: a simple cycle made of two BFS-tree paths
/// and a closing edge, possibly virtual.
#[derive(Debug, Clone)]
pub struct SeparatorInfo {
    /// Cycle vertices in order along the tree path from one endpoint of the
    /// closing edge to the other.
    pub cycle_vertices: Vec<usize>,
    /// Real edges of the cycle, in path order (excludes a virtual closer).
    pub cycle_edges: Vec<usize>,
    /// Closing edge endpoints (first and last of `cycle_vertices`).
    pub closing: (usize, usize),
    /// Real closing edge, if the separator closes over an edge of G.
    pub closing_edge: Option<usize>,
    /// When virtual: the node (face/face-part) the edge is embedded into.
    pub critical_node: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Bag {
    pub id: u64,
    pub level: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Primal edge indices, sorted.
    pub edges: Vec<usize>,
    /// Member darts, sorted by index.
    pub darts: Vec<Dart>,
    pub separator: Option<SeparatorInfo>,
}

impl Bag {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Dual bag: one node per face/face-part of the bag, one dual edge per
/// primal edge with both darts in the bag.
#[derive(Debug, Clone)]
pub struct DualBag {
    pub nodes: Vec<FacePartNode>,
    /// (primal edge, tail node, head node): tail = node of the reverse dart.
    pub arcs: Vec<(usize, usize, usize)>,
    /// Local node indices of the dual separator (empty for leaves).
    pub f_x: Vec<usize>,
}

#[derive(Debug)]
pub struct BddTree {
    pub bags: Vec<Bag>,
    pub dual_bags: Vec<DualBag>,
    /// Per bag, per local node: (child bag index, child local node) parts.
    pub node_children: Vec<Vec<Vec<(usize, usize)>>>,
    /// Bags by level.
    pub levels: Vec<Vec<usize>>,
    /// Hop diameter of the input graph.
    pub diameter: u32,
    pub leaf_threshold: usize,
    /// S_X dual arcs per bag: indices into the bag's `arcs` whose primal
    /// edge lies on the bag's separator cycle.
    pub sx_arcs: Vec<Vec<usize>>,
}

impl BddTree {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn node_of_dart(&self, bag: usize, d: Dart) -> Option<usize> {
        self.dual_bags[bag]
            .nodes
            .iter()
            .position(|n| n.darts.binary_search(&d).is_ok())
    }
}

fn hop_diameter(rs: &RotationSystem) -> u32 {
    let n = rs.vertex_count();
    let mut best = 0u32;
    for s in 0..n {
        let mut dist = vec![u32::MAX; n];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for (_, u) in rs.incident(v) {
                if dist[u] == u32::MAX {
                    dist[u] = dist[v] + 1;
                    q.push_back(u);
                }
            }
        }
        best = best.max(dist.into_iter().filter(|&d| d != u32::MAX).max().unwrap_or(0));
    }
    best
}

/// Restriction of the embedding to a set of edges; vertices keep their
/// indices, rotations keep their cyclic order.
fn restricted_rs(g: &RotationSystem, edges: &BTreeSet<usize>) -> RotationSystem {
    RotationSystem {
        directed: g.directed,
        vertex_ids: g.vertex_ids.clone(),
        rotations: g
            .rotations
            .iter()
            .map(|rot| rot.iter().copied().filter(|e| edges.contains(e)).collect())
            .collect(),
        edges: g.edges.clone(),
    }
}

// A restricted rotation system still indexes all of G's edges; tracing must
// only walk darts of present edges. This helper traces faces of the bag.
fn trace_restricted(rs: &RotationSystem, edges: &BTreeSet<usize>) -> (Vec<Vec<Dart>>, BTreeMap<u32, usize>) {
    let mut dart_face: BTreeMap<u32, usize> = BTreeMap::new();
    let mut faces = Vec::new();
    let successor = |d: Dart| -> Dart {
        let v = rs.dart_head(d);
        let rot = &rs.rotations[v];
        let pos = rot.iter().position(|&e| e == d.edge()).expect("edge in rotation");
        let prev = rot[(pos + rot.len() - 1) % rot.len()];
        rs.dart_leaving(prev, v)
    };
    for &e in edges {
        for d0 in [Dart::forward(e), Dart::reverse(e)] {
            if dart_face.contains_key(&d0.0) {
                continue;
            }
            let fid = faces.len();
            let mut cycle = Vec::new();
            let mut d = d0;
            loop {
                dart_face.insert(d.0, fid);
                cycle.push(d);
                d = successor(d);
                if d == d0 {
                    break;
                }
            }
            faces.push(cycle);
        }
    }
    (faces, dart_face)
}

struct BuildBag {
    edges: BTreeSet<usize>,
    darts: BTreeSet<Dart>,
    /// Nodes inherited from the parent (or the root faces).
    nodes: Vec<FacePartNode>,
    level: usize,
    parent: Option<usize>,
}

/// A candidate separator cycle.
struct Candidate {
    path: Vec<usize>,          // vertices from a to b along the tree
    path_edges: Vec<usize>,    // tree edges along the path
    closing_edge: Option<usize>,
    /// For virtual closers: (node index, corner at a, corner at b), where a
    /// corner is (vertex, preceding dart, following dart).
    virtual_info: Option<(usize, (usize, Dart, Dart), (usize, Dart, Dart))>,
    balance: usize,
    cycle_len: usize,
    ordinal: usize,
}

pub fn build_bdd(
    g: &EmbeddedPlanarGraph,
    fs: &FaceStructure,
    face_ids: &[u64],
    config: &BddConfig,
    ledger: &mut RoundLedger,
) -> Result<BddTree, BddError> {
    let rs: &RotationSystem = g;
    let n = rs.vertex_count();
    let diameter = hop_diameter(rs);
    let logn = crate::sim::bits_for(n + 1) as usize;
    let threshold = config
        .leaf_edge_threshold
        .unwrap_or_else(|| (2 * diameter as usize + 4 * logn).max(12));

    // Root nodes: whole faces of G.
    let root_nodes: Vec<FacePartNode> = fs
        .faces
        .iter()
        .enumerate()
        .map(|(f, darts)| {
            let mut ds = darts.clone();
            ds.sort_unstable();
            FacePartNode {
                id: FacePartId::root(face_ids[f]),
                face: f,
                darts: ds,
                is_part: false,
                critical: false,
            }
        })
        .collect();
    let root = BuildBag {
        edges: (0..rs.edge_count()).collect(),
        darts: (0..rs.dart_count()).map(|i| Dart(i as u32)).collect(),
        nodes: root_nodes,
        level: 0,
        parent: None,
    };

    let mut bags: Vec<Bag> = Vec::new();
    let mut dual_bags: Vec<DualBag> = Vec::new();
    let mut node_children: Vec<Vec<Vec<(usize, usize)>>> = Vec::new();
    let mut queue = VecDeque::from([root]);
    while let Some(bb) = queue.pop_front() {
        let idx = bags.len();
        let id = idx as u64;
        if let Some(p) = bb.parent {
            bags[p].children.push(idx);
        }
        let is_leaf = bb.edges.len() <= threshold;
        let mut separator = None;
        let mut children_built: Vec<BuildBag> = Vec::new();
        if !is_leaf {
            let (sep, kids) = split_bag(rs, fs, &bb, id)?;
            separator = Some(sep);
            children_built = kids;
        }
        // Dual bag of this bag.
        let arcs = dual_arcs(&bb);
        dual_bags.push(DualBag { nodes: bb.nodes.clone(), arcs, f_x: Vec::new() });
        node_children.push(vec![Vec::new(); bb.nodes.len()]);
        bags.push(Bag {
            id,
            level: bb.level,
            parent: bb.parent,
            children: Vec::new(),
            edges: bb.edges.iter().copied().collect(),
            darts: bb.darts.iter().copied().collect(),
            separator,
        });
        for kid in children_built {
            queue.push_back(kid);
        }
    }

    // Parent-node -> child-node correspondence (by dart containment).
    for b in 0..bags.len() {
        let children = bags[b].children.clone();
        for (ni, node) in dual_bags[b].nodes.iter().enumerate() {
            for &c in &children {
                for (cni, cnode) in dual_bags[c].nodes.iter().enumerate() {
                    if cnode.face == node.face
                        && cnode.darts.iter().all(|d| node.darts.binary_search(d).is_ok())
                        && cnode.id.contains(&node.id)
                    {
                        node_children[b][ni].push((c, cni));
                    }
                }
            }
        }
    }

    // F_X per non-leaf bag: nodes incident to S_X dual arcs, plus nodes
    // split between children. Cross-checked against the direct definition.
    let mut sx_arcs_all = vec![Vec::new(); bags.len()];
    for b in 0..bags.len() {
        if bags[b].is_leaf() {
            continue;
        }
        let sep = bags[b].separator.as_ref().unwrap();
        let mut cyc: BTreeSet<usize> = sep.cycle_edges.iter().copied().collect();
        if let Some(ce) = sep.closing_edge {
            cyc.insert(ce);
        }
        let mut f_x = BTreeSet::new();
        let mut sx_arcs = Vec::new();
        for (ai, &(e, t, h)) in dual_bags[b].arcs.iter().enumerate() {
            if cyc.contains(&e) {
                sx_arcs.push(ai);
                f_x.insert(t);
                f_x.insert(h);
            }
        }
        for (ni, _) in dual_bags[b].nodes.iter().enumerate() {
            if node_children[b][ni].len() > 1 {
                f_x.insert(ni);
            }
        }
        dual_bags[b].f_x = f_x.into_iter().collect();
        sx_arcs_all[b] = sx_arcs;
    }

    let mut levels: Vec<Vec<usize>> = Vec::new();
    for (i, bag) in bags.iter().enumerate() {
        if levels.len() <= bag.level {
            levels.resize(bag.level + 1, Vec::new());
        }
        levels[bag.level].push(i);
    }
    let tree = BddTree {
        bags,
        dual_bags,
        node_children,
        levels,
        diameter,
        leaf_threshold: threshold,
        sx_arcs: sx_arcs_all,
    };
    check_properties(g, fs, &tree)?;
    let per_level = config.charge_constant * (diameter as u64 + 1) * logn as u64;
    ledger.charge("bdd_build", per_level * tree.depth() as u64);
    ledger.charge("bdd_face_ids", per_level * tree.depth() as u64);
    Ok(tree)
}

fn dual_arcs(bb: &BuildBag) -> Vec<(usize, usize, usize)> {
    let node_of = |d: Dart| -> Option<usize> {
        bb.nodes
            .iter()
            .position(|n| n.darts.binary_search(&d).is_ok())
    };
    let mut arcs = Vec::new();
    for &e in &bb.edges {
        let fwd = Dart::forward(e);
        if bb.darts.contains(&fwd) && bb.darts.contains(&fwd.rev()) {
            let head = node_of(fwd).expect("dart has a node");
            let tail = node_of(fwd.rev()).expect("dart has a node");
            arcs.push((e, tail, head));
        }
    }
    arcs
}

/// Splits a non-leaf bag: picks a balanced fundamental-cycle separator and
/// builds the interior child plus face-grouped exterior children.
fn split_bag(
    rs: &RotationSystem,
    fs: &FaceStructure,
    bb: &BuildBag,
    bag_id: u64,
) -> Result<(SeparatorInfo, Vec<BuildBag>), BddError> {
    let bag_rs = restricted_rs(rs, &bb.edges);
    // Vertices of the bag.
    let verts: BTreeSet<usize> = bb
        .edges
        .iter()
        .flat_map(|&e| [rs.edges[e].tail, rs.edges[e].head])
        .collect();
    // BFS tree of the bag from its minimum-id vertex.
    let root = *verts
        .iter()
        .min_by_key(|&&v| rs.vertex_ids[v])
        .expect("bag nonempty");
    let mut parent: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut depth: BTreeMap<usize, u32> = BTreeMap::new();
    depth.insert(root, 0);
    let mut q = VecDeque::from([root]);
    let mut tree_edges = BTreeSet::new();
    while let Some(v) = q.pop_front() {
        for &e in &bag_rs.rotations[v] {
            let u = if rs.edges[e].tail == v { rs.edges[e].head } else { rs.edges[e].tail };
            if !depth.contains_key(&u) {
                depth.insert(u, depth[&v] + 1);
                parent.insert(u, (v, e));
                tree_edges.insert(e);
                q.push_back(u);
            }
        }
    }
    if depth.len() != verts.len() {
        return Err(BddError::PropertyViolation(format!(
            "bag {bag_id} is disconnected"
        )));
    }
    let tree_path = |a: usize, b: usize| -> (Vec<usize>, Vec<usize>) {
        let (mut x, mut y) = (a, b);
        let (mut px, mut py) = (vec![a], vec![b]);
        let (mut ex, mut ey) = (Vec::new(), Vec::new());
        while depth[&x] > depth[&y] {
            let (p, e) = parent[&x];
            px.push(p);
            ex.push(e);
            x = p;
        }
        while depth[&y] > depth[&x] {
            let (p, e) = parent[&y];
            py.push(p);
            ey.push(e);
            y = p;
        }
        while x != y {
            let (p, e) = parent[&x];
            px.push(p);
            ex.push(e);
            x = p;
            let (p, e) = parent[&y];
            py.push(p);
            ey.push(e);
            y = p;
        }
        // px ends at the LCA; py too. Join: a..lca..b.
        py.pop();
        py.reverse();
        ey.reverse();
        px.extend(py);
        ex.extend(ey);
        (px, ex)
    };

    // Candidate list: real non-tree edges, then virtual diagonals between
    // corners of the same face/face-part node.
    struct RawCand {
        a: usize,
        b: usize,
        closing_edge: Option<usize>,
        virtual_info: Option<(usize, (usize, Dart, Dart), (usize, Dart, Dart))>,
    }
    let mut raw: Vec<RawCand> = Vec::new();
    for &e in &bb.edges {
        if !tree_edges.contains(&e) {
            let (a, b) = (rs.edges[e].tail, rs.edges[e].head);
            raw.push(RawCand { a, b, closing_edge: Some(e), virtual_info: None });
        }
    }
    // Corners of each node: junctions between consecutive member darts of
    // the same face fragment.
    for (ni, node) in bb.nodes.iter().enumerate() {
        let mut corners: Vec<(usize, Dart, Dart)> = Vec::new();
        let member: BTreeSet<Dart> = node.darts.iter().copied().collect();
        // Corner pairs follow the original face order.
        let face_cycle = face_cycle_of(fs, node.face);
        let l = face_cycle.len();
        for i in 0..l {
            let d = face_cycle[i];
            let d2 = face_cycle[(i + 1) % l];
            if member.contains(&d) && member.contains(&d2) {
                corners.push((rs.dart_head(d), d, d2));
            }
        }
        if corners.len() < 2 {
            continue;
        }
        let stride = (corners.len() / 12).max(1);
        let picks: Vec<&(usize, Dart, Dart)> = corners.iter().step_by(stride).collect();
        for i in 0..picks.len() {
            for j in (i + 1)..picks.len() {
                let (va, vb) = (picks[i].0, picks[j].0);
                if va == vb {
                    continue;
                }
                raw.push(RawCand {
                    a: va,
                    b: vb,
                    closing_edge: None,
                    virtual_info: Some((ni, *picks[i], *picks[j])),
                });
            }
        }
    }

    let mut best: Option<Candidate> = None;
    for (ord, cand) in raw.iter().enumerate() {
        let (path, path_edges) = tree_path(cand.a, cand.b);
        if let Some(ce) = cand.closing_edge {
            if path_edges.contains(&ce) {
                continue;
            }
        }
        if path.len() < 2 {
            continue;
        }
        // Simple cycle: path must not repeat vertices (it cannot, being a
        // tree path).
        let eval = evaluate_candidate(rs, &bag_rs, bb, &path, &path_edges, cand.closing_edge, &cand.virtual_info);
        let Some((balance, interior_edges, exterior_edges)) = eval else { continue };
        if interior_edges == 0 || exterior_edges == 0 {
            continue;
        }
        let c = Candidate {
            path: path.clone(),
            path_edges: path_edges.clone(),
            closing_edge: cand.closing_edge,
            virtual_info: cand.virtual_info,
            balance,
            cycle_len: path.len(),
            ordinal: ord,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                (c.balance, std::cmp::Reverse(c.cycle_len), std::cmp::Reverse(c.ordinal))
                    > (b.balance, std::cmp::Reverse(b.cycle_len), std::cmp::Reverse(b.ordinal))
            }
        };
        if better {
            best = Some(c);
        }
    }
    let cand = best.ok_or_else(|| {
        BddError::PropertyViolation(format!("bag {bag_id}: no usable separator candidate"))
    })?;

    build_children(rs, &bag_rs, bb, bag_id, cand)
}

fn face_cycle_of(fs: &FaceStructure, face: usize) -> Vec<Dart> {
    fs.faces[face].clone()
}

/// Builds the cycle-augmented rotation system, 2-colors its faces by the
/// cycle, and returns (min side vertex count, interior edges, exterior
/// edges), or None for degenerate candidates.
#[allow(clippy::type_complexity)]
fn cycle_sides(
    rs: &RotationSystem,
    bag_rs: &RotationSystem,
    bb: &BuildBag,
    path_edges: &[usize],
    closing_edge: Option<usize>,
    virtual_info: &Option<(usize, (usize, Dart, Dart), (usize, Dart, Dart))>,
) -> Option<(RotationSystem, BTreeSet<usize>, Vec<Vec<Dart>>, BTreeMap<u32, usize>, Vec<bool>, usize)> {
    // Build X' = bag plus the closing edge (inserted when virtual).
    let mut xr = bag_rs.clone();
    let mut edge_set: BTreeSet<usize> = bb.edges.clone();
    let virtual_edge_idx = if closing_edge.is_none() {
        let (ni, (va, da, da2), (vb, db, db2)) = virtual_info.as_ref().unwrap();
        let _ = ni;
        let e_idx = xr.edges.len();
        xr.edges.push(Edge {
            id: u64::MAX,
            tail: *va,
            head: *vb,
            weight: 0,
            capacity: 0,
        });
        // Insert at the corner: between edge(d_next) and edge(d_prev) in the
        // rotation, i.e., at the position of edge(d_prev).
        for (v, d_in, d_out) in [(*va, *da, *da2), (*vb, *db, *db2)] {
            let rot = &mut xr.rotations[v];
            let _ = d_out;
            let pos = rot.iter().position(|&e| e == d_in.edge())?;
            rot.insert(pos, e_idx);
        }
        edge_set.insert(e_idx);
        Some(e_idx)
    } else {
        None
    };
    let (faces, dart_face) = trace_restricted(&xr, &edge_set);
    // Cycle edge set (including the closer).
    let mut cyc: BTreeSet<usize> = path_edges.iter().copied().collect();
    if let Some(ce) = closing_edge {
        cyc.insert(ce);
    }
    if let Some(ve) = virtual_edge_idx {
        cyc.insert(ve);
    }
    // 2-color faces: dual BFS not crossing cycle edges.
    let mut color = vec![usize::MAX; faces.len()];
    let mut comp_count = 0;
    for f0 in 0..faces.len() {
        if color[f0] != usize::MAX {
            continue;
        }
        if comp_count >= 2 {
            return None; // cycle is not simple / graph came apart oddly
        }
        color[f0] = comp_count;
        let mut stack = vec![f0];
        while let Some(f) = stack.pop() {
            for &d in &faces[f] {
                if cyc.contains(&d.edge()) {
                    continue;
                }
                let g = dart_face[&d.rev().0];
                if color[g] == usize::MAX {
                    color[g] = color[f];
                    stack.push(g);
                }
            }
        }
        comp_count += 1;
    }
    if comp_count != 2 {
        return None;
    }
    let side_b: Vec<bool> = color.iter().map(|&c| c == 1).collect();
    let ve = virtual_edge_idx.unwrap_or(usize::MAX);
    Some((xr, edge_set, faces, dart_face, side_b, ve))
}

fn evaluate_candidate(
    rs: &RotationSystem,
    bag_rs: &RotationSystem,
    bb: &BuildBag,
    path: &[usize],
    path_edges: &[usize],
    closing_edge: Option<usize>,
    virtual_info: &Option<(usize, (usize, Dart, Dart), (usize, Dart, Dart))>,
) -> Option<(usize, usize, usize)> {
    let (_xr, _es, faces, dart_face, side_b, ve) =
        cycle_sides(rs, bag_rs, bb, path_edges, closing_edge, virtual_info)?;
    let _ = faces;
    let on_cycle: BTreeSet<usize> = path.iter().copied().collect();
    let mut cyc: BTreeSet<usize> = path_edges.iter().copied().collect();
    if let Some(ce) = closing_edge {
        cyc.insert(ce);
    }
    let mut side_verts = [BTreeSet::new(), BTreeSet::new()];
    let mut side_edges = [0usize, 0usize];
    for &e in bb.edges.iter() {
        if cyc.contains(&e) {
            continue;
        }
        // A non-cycle edge: both darts on the same side.
        let d = Dart::forward(e);
        let f = *dart_face.get(&d.0)?;
        let s = side_b[f] as usize;
        side_edges[s] += 1;
        for v in [rs.edges[e].tail, rs.edges[e].head] {
            if !on_cycle.contains(&v) {
                side_verts[s].insert(v);
            }
        }
    }
    let _ = ve;
    let balance = side_verts[0].len().min(side_verts[1].len());
    Some((balance, side_edges[0], side_edges[1]))
}

fn build_children(
    rs: &RotationSystem,
    bag_rs: &RotationSystem,
    bb: &BuildBag,
    bag_id: u64,
    cand: Candidate,
) -> Result<(SeparatorInfo, Vec<BuildBag>), BddError> {
    let (xr, edge_set, faces, dart_face, side_b, ve) = cycle_sides(
        rs,
        bag_rs,
        bb,
        &cand.path_edges,
        cand.closing_edge,
        &cand.virtual_info,
    )
    .ok_or_else(|| BddError::PropertyViolation(format!("bag {bag_id}: degenerate separator")))?;
    let _ = edge_set;
    let mut cyc: BTreeSet<usize> = cand.path_edges.iter().copied().collect();
    if let Some(ce) = cand.closing_edge {
        cyc.insert(ce);
    }
    // Pick the interior label: the side with fewer member darts.
    let mut darts_per_side = [0usize; 2];
    for &d in &bb.darts {
        if cyc.contains(&d.edge()) {
            continue;
        }
        if let Some(&f) = dart_face.get(&d.0) {
            darts_per_side[side_b[f] as usize] += 1;
        }
    }
    let interior_side = if darts_per_side[0] <= darts_per_side[1] { 0usize } else { 1 };

    // Side of each member dart (cycle-edge darts included, via their face).
    let dart_side = |d: Dart| -> usize {
        let mut f = dart_face.get(&d.0).copied();
        if f.is_none() && ve != usize::MAX {
            f = dart_face.get(&d.0).copied();
        }
        let f = f.expect("member dart traced");
        side_b[f] as usize
    };

    // Exterior grouping: union components of exterior edges with cycle edge
    // slots through shared exterior faces.
    let ext = 1 - interior_side;
    // Exterior non-cycle edges and their components (by shared vertices).
    let ext_edges: Vec<usize> = bb
        .edges
        .iter()
        .copied()
        .filter(|&e| {
            !cyc.contains(&e) && {
                let d = Dart::forward(e);
                side_b[dart_face[&d.0]] as usize == ext
            }
        })
        .collect();
    let mut comp_of: BTreeMap<usize, usize> = BTreeMap::new();
    {
        let mut vert_comp: BTreeMap<usize, usize> = BTreeMap::new();
        let mut dsu = crate::oracles::Dsu::new(ext_edges.len());
        for (i, &e) in ext_edges.iter().enumerate() {
            for v in [rs.edges[e].tail, rs.edges[e].head] {
                if cand.path.contains(&v) {
                    continue; // cycle vertices do not merge components
                }
                match vert_comp.get(&v) {
                    Some(&j) => {
                        dsu.union(i, j);
                    }
                    None => {
                        vert_comp.insert(v, i);
                    }
                }
            }
        }
        for (i, &e) in ext_edges.iter().enumerate() {
            comp_of.insert(e, dsu.find(i));
        }
    }
    // Group keys: component representatives and cycle slots, unioned via
    // exterior faces of the augmented bag.
    #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
    enum Member {
        Comp(usize),
        Slot(usize), // cycle edge index
    }
    let mut members: BTreeSet<Member> = BTreeSet::new();
    for &e in &ext_edges {
        members.insert(Member::Comp(comp_of[&e]));
    }
    for &e in cyc.iter() {
        if e >= rs.edge_count() {
            continue; // virtual closer has no slot
        }
        // The slot participates if the exterior dart of e is a member dart.
        for d in [Dart::forward(e), Dart::reverse(e)] {
            if bb.darts.contains(&d) && dart_side(d) == ext {
                members.insert(Member::Slot(e));
            }
        }
    }
    let member_list: Vec<Member> = members.iter().copied().collect();
    let member_idx: BTreeMap<Member, usize> =
        member_list.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let mut gdsu = crate::oracles::Dsu::new(member_list.len());
    for (f, fdarts) in faces.iter().enumerate() {
        if side_b[f] as usize != ext {
            continue;
        }
        let mut group_members = Vec::new();
        for &d in fdarts {
            if d.edge() >= rs.edge_count() {
                continue; // virtual edge dart
            }
            if !bb.darts.contains(&d) {
                continue; // hole dart
            }
            let e = d.edge();
            let m = if cyc.contains(&e) { Member::Slot(e) } else { Member::Comp(comp_of[&e]) };
            if let Some(&i) = member_idx.get(&m) {
                group_members.push(i);
            }
        }
        for w in group_members.windows(2) {
            gdsu.union(w[0], w[1]);
        }
    }
    let mut groups: BTreeMap<usize, (BTreeSet<usize>, BTreeSet<usize>)> = BTreeMap::new(); // root -> (edges, slots)
    for (i, &m) in member_list.iter().enumerate() {
        let r = gdsu.find(i);
        let entry = groups.entry(r).or_default();
        match m {
            Member::Comp(c) => {
                for &e in &ext_edges {
                    if comp_of[&e] == c {
                        entry.0.insert(e);
                    }
                }
            }
            Member::Slot(e) => {
                entry.1.insert(e);
            }
        }
    }

    // Interior child: interior edges + all real cycle edges.
    let mut interior_edges: BTreeSet<usize> = bb
        .edges
        .iter()
        .copied()
        .filter(|&e| {
            !cyc.contains(&e) && {
                let d = Dart::forward(e);
                side_b[dart_face[&d.0]] as usize == interior_side
            }
        })
        .collect();
    for &e in cyc.iter() {
        if e < rs.edge_count() {
            interior_edges.insert(e);
        }
    }

    // Child dart sets.
    let child_darts = |edges: &BTreeSet<usize>, side: usize| -> BTreeSet<Dart> {
        let mut ds = BTreeSet::new();
        for &e in edges {
            for d in [Dart::forward(e), Dart::reverse(e)] {
                if !bb.darts.contains(&d) {
                    continue;
                }
                if cyc.contains(&e) {
                    if dart_side(d) == side {
                        ds.insert(d);
                    }
                } else {
                    ds.insert(d);
                }
            }
        }
        ds
    };
    let critical_node = cand.virtual_info.as_ref().map(|(ni, _, _)| *ni);

    // Assemble children: interior first, then exterior groups in key order.
    struct ProtoChild {
        edges: BTreeSet<usize>,
        darts: BTreeSet<Dart>,
    }
    let mut protos = vec![ProtoChild {
        darts: child_darts(&interior_edges, interior_side),
        edges: interior_edges,
    }];
    for (_, (cedges, slots)) in groups {
        let mut edges = cedges;
        edges.extend(slots.iter().copied());
        protos.push(ProtoChild { darts: child_darts(&edges, ext), edges });
    }

    // Nodes of each child: split parent nodes by dart membership; a node
    // split across children becomes parts with extended ids.
    let mut kids = Vec::new();
    for (ci, proto) in protos.iter().enumerate() {
        let child_bag_id = bag_id * 64 + 1 + ci as u64; // provisional; real ids assigned on pop
        let _ = child_bag_id;
        kids.push(BuildBag {
            edges: proto.edges.clone(),
            darts: proto.darts.clone(),
            nodes: Vec::new(),
            level: bb.level + 1,
            parent: None, // fixed by caller
        });
    }
    for (ni, node) in bb.nodes.iter().enumerate() {
        let mut per_child: Vec<Vec<Dart>> = vec![Vec::new(); kids.len()];
        for &d in &node.darts {
            for (ci, proto) in protos.iter().enumerate() {
                if proto.darts.contains(&d) {
                    per_child[ci].push(d);
                    break;
                }
            }
        }
        let nonempty: Vec<usize> = (0..kids.len()).filter(|&c| !per_child[c].is_empty()).collect();
        let split = nonempty.len() > 1;
        for &c in &nonempty {
            let mut darts = std::mem::take(&mut per_child[c]);
            darts.sort_unstable();
            let id = if split {
                node.id.child(c as u64)
            } else {
                node.id.clone()
            };
            kids[c].nodes.push(FacePartNode {
                id,
                face: node.face,
                darts,
                is_part: node.is_part || split,
                critical: false,
            });
        }
        let _ = ni;
    }
    let _ = xr;

    let closing = (cand.path[0], *cand.path.last().unwrap());
    let sep = SeparatorInfo {
        cycle_vertices: cand.path,
        cycle_edges: cand.path_edges,
        closing,
        closing_edge: cand.closing_edge,
        critical_node,
    };
    Ok((sep, kids))
}

/// Assert-checks the full property set; used at build time and available to
/// the acceptance suite.
pub fn check_properties(
    g: &EmbeddedPlanarGraph,
    fs: &FaceStructure,
    tree: &BddTree,
) -> Result<(), BddError> {
    let rs: &RotationSystem = g;
    let n = rs.vertex_count();
    let logn = crate::sim::bits_for(n + 1) as usize;
    let budget = 8 * (tree.diameter as usize + 1) * logn;
    let fail = |msg: String| Err(BddError::PropertyViolation(msg));
    // 1. Depth.
    if tree.depth() > 3 * logn + 1 {
        return fail(format!("depth {} exceeds 3 log n + 1", tree.depth()));
    }
    // 2. Root is G.
    if tree.bags[0].edges.len() != rs.edge_count() {
        return fail("root bag is not the whole graph".into());
    }
    // 3. Leaf size.
    for bag in &tree.bags {
        if bag.is_leaf() && bag.edges.len() > tree.leaf_threshold {
            return fail(format!("leaf bag {} has {} edges", bag.id, bag.edges.len()));
        }
    }
    for (b, bag) in tree.bags.iter().enumerate() {
        if bag.is_leaf() {
            continue;
        }
        let sep = bag.separator.as_ref().unwrap();
        // 4. Separator size.
        if sep.cycle_vertices.len() > budget {
            return fail(format!("bag {} separator too long", bag.id));
        }
        // S_X = vertices in more than one child bag.
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in &bag.children {
            let verts: BTreeSet<usize> = tree.bags[c]
                .edges
                .iter()
                .flat_map(|&e| [rs.edges[e].tail, rs.edges[e].head])
                .collect();
            for v in verts {
                *seen.entry(v).or_insert(0) += 1;
            }
        }
        let shared: BTreeSet<usize> =
            seen.iter().filter(|&(_, &c)| c > 1).map(|(&v, _)| v).collect();
        let cycle_set: BTreeSet<usize> = sep.cycle_vertices.iter().copied().collect();
        if !shared.is_subset(&cycle_set) {
            return fail(format!("bag {} shares vertices off its separator", bag.id));
        }
        // 6. Union of children.
        let mut union: BTreeSet<usize> = BTreeSet::new();
        for &c in &bag.children {
            union.extend(tree.bags[c].edges.iter().copied());
        }
        let bag_set: BTreeSet<usize> = bag.edges.iter().copied().collect();
        if union != bag_set {
            return fail(format!("bag {} is not the union of its children", bag.id));
        }
        let _ = b;
    }
    // 5. Bag diameters.
    for bag in &tree.bags {
        let d = bag_diameter(rs, &bag.edges);
        if d as usize > budget {
            return fail(format!("bag {} diameter {} exceeds budget {}", bag.id, d, budget));
        }
    }
    // 7. Each edge in at most two bags per level; dart in exactly one.
    for level in &tree.levels {
        let mut edge_count: BTreeMap<usize, usize> = BTreeMap::new();
        let mut dart_count: BTreeMap<u32, usize> = BTreeMap::new();
        for &b in level {
            for &e in &tree.bags[b].edges {
                *edge_count.entry(e).or_insert(0) += 1;
            }
            for &d in &tree.bags[b].darts {
                *dart_count.entry(d.0).or_insert(0) += 1;
            }
        }
        if edge_count.values().any(|&c| c > 2) {
            return fail("edge in more than two bags of one level".into());
        }
        if dart_count.values().any(|&c| c > 1) {
            return fail("dart in more than one bag of one level".into());
        }
    }
    // Dart membership forms a root chain; single-dart edges on holes come
    // from ancestor separators.
    for d in 0..rs.dart_count() {
        let d = Dart(d as u32);
        let mut holder: Option<usize> = None;
        for (b, bag) in tree.bags.iter().enumerate() {
            if bag.darts.binary_search(&d).is_ok() {
                match holder {
                    None => {
                        if bag.parent.is_some() {
                            // Must be reachable from the root chain.
                        }
                        holder = Some(b)
                    }
                    Some(h) => {
                        if tree.bags[b].parent != Some(h) && tree.bags[h].parent != Some(b) {
                            // chain check is per level; handled above
                        }
                        holder = Some(b);
                    }
                }
            }
        }
    }
    for (b, bag) in tree.bags.iter().enumerate() {
        for &e in &bag.edges {
            let fwd = bag.darts.binary_search(&Dart::forward(e)).is_ok();
            let rev = bag.darts.binary_search(&Dart::reverse(e)).is_ok();
            if !fwd && !rev {
                return fail(format!("bag {} holds edge {} without darts", bag.id, e));
            }
            if !(fwd && rev) {
                // The missing dart must lie on some ancestor separator.
                let mut anc = bag.parent;
                let mut found = false;
                while let Some(a) = anc {
                    if let Some(sep) = &tree.bags[a].separator {
                        if sep.cycle_edges.contains(&e) || sep.closing_edge == Some(e) {
                            found = true;
                            break;
                        }
                    }
                    anc = tree.bags[a].parent;
                }
                if !found {
                    return fail(format!(
                        "bag {} edge {} misses a dart without an ancestor separator",
                        bag.id, e
                    ));
                }
            }
        }
        // 13. Registry totality: every dart belongs to exactly one node.
        let mut counted = 0usize;
        for node in &tree.dual_bags[b].nodes {
            counted += node.darts.len();
            for d in &node.darts {
                if bag.darts.binary_search(d).is_err() {
                    return fail(format!("bag {} node holds foreign dart", bag.id));
                }
            }
        }
        if counted != bag.darts.len() {
            return fail(format!("bag {} registry does not partition darts", bag.id));
        }
    }
    // 9. Face-parts per bag.
    for (b, db) in tree.dual_bags.iter().enumerate() {
        let parts = db.nodes.iter().filter(|n| n.is_part).count();
        if parts > 3 * logn {
            return fail(format!("bag {} has {} face-parts", tree.bags[b].id, parts));
        }
    }
    // 10. Leaf dual bag size.
    for (b, bag) in tree.bags.iter().enumerate() {
        if bag.is_leaf() {
            let db = &tree.dual_bags[b];
            if db.nodes.len() + db.arcs.len() > budget {
                return fail(format!("leaf dual bag {} too large", bag.id));
            }
        }
    }
    // 11. F_X definitions agree, size bound, and separation.
    for (b, bag) in tree.bags.iter().enumerate() {
        if bag.is_leaf() {
            continue;
        }
        let db = &tree.dual_bags[b];
        if db.f_x.len() > budget {
            return fail(format!("bag {} F_X too large", bag.id));
        }
        // Direct definition: nodes whose incident dual arcs are not all
        // within a single child bag.
        let child_of_edge = |e: usize| -> Vec<usize> {
            bag.children
                .iter()
                .copied()
                .filter(|&c| tree.bags[c].edges.binary_search(&e).is_ok())
                .collect()
        };
        let mut direct = BTreeSet::new();
        for (ni, _) in db.nodes.iter().enumerate() {
            let mut inside_one: BTreeSet<usize> = BTreeSet::new();
            let mut all_inside = true;
            for &(e, t, h) in &db.arcs {
                if t != ni && h != ni {
                    continue;
                }
                // The arc is inside a child iff both darts of e are in it.
                let holders: Vec<usize> = child_of_edge(e)
                    .into_iter()
                    .filter(|&c| {
                        tree.bags[c].darts.binary_search(&Dart::forward(e)).is_ok()
                            && tree.bags[c].darts.binary_search(&Dart::reverse(e)).is_ok()
                    })
                    .collect();
                if holders.len() == 1 {
                    inside_one.insert(holders[0]);
                } else {
                    all_inside = false;
                }
            }
            if !all_inside || inside_one.len() > 1 {
                direct.insert(ni);
            }
        }
        let computed: BTreeSet<usize> = db.f_x.iter().copied().collect();
        if direct != computed {
            return fail(format!(
                "bag {}: F_X definitions disagree ({:?} vs {:?})",
                bag.id, direct, computed
            ));
        }
        // Removing F_X separates child node sets.
        let mut owner: BTreeMap<usize, usize> = BTreeMap::new(); // node -> child
        for (ni, _) in db.nodes.iter().enumerate() {
            if computed.contains(&ni) {
                continue;
            }
            let kids = &tree.node_children[b][ni];
            if kids.len() != 1 {
                return fail(format!("bag {}: non-separator node split", bag.id));
            }
            owner.insert(ni, kids[0].0);
        }
        for &(e, t, h) in &db.arcs {
            let _ = e;
            if let (Some(&ct), Some(&ch)) = (owner.get(&t), owner.get(&h)) {
                if ct != ch {
                    return fail(format!(
                        "bag {}: arc crosses children without touching F_X",
                        bag.id
                    ));
                }
            }
        }
        // 12. Reassembly: children plus S_X arcs plus part cliques, with the
        // cliques contracted, is isomorphic to the dual bag.
        check_assembly(tree, b)?;
    }
    let _ = fs;
    Ok(())
}

fn bag_diameter(rs: &RotationSystem, edges: &[usize]) -> u32 {
    let verts: BTreeSet<usize> = edges
        .iter()
        .flat_map(|&e| [rs.edges[e].tail, rs.edges[e].head])
        .collect();
    let vlist: Vec<usize> = verts.iter().copied().collect();
    let vidx: BTreeMap<usize, usize> = vlist.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut adj = vec![Vec::new(); vlist.len()];
    for &e in edges {
        let (a, b) = (vidx[&rs.edges[e].tail], vidx[&rs.edges[e].head]);
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut best = 0;
    for s in 0..vlist.len() {
        let mut dist = vec![u32::MAX; vlist.len()];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &u in &adj[v] {
                if dist[u] == u32::MAX {
                    dist[u] = dist[v] + 1;
                    q.push_back(u);
                }
            }
        }
        best = best.max(dist.into_iter().filter(|&d| d != u32::MAX).max().unwrap_or(0));
    }
    best
}

/// Exact reassembly check for one non-leaf bag (Property 12): the union of
/// child dual bags plus the S_X dual arcs, with all node-parts of the same
/// separator node identified, must equal the bag's dual graph.
fn check_assembly(tree: &BddTree, b: usize) -> Result<(), BddError> {
    let bag = &tree.bags[b];
    let db = &tree.dual_bags[b];
    // Map child nodes to the parent node they came from.
    let mut lift: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (ni, kids) in tree.node_children[b].iter().enumerate() {
        for &(c, cn) in kids {
            lift.insert((c, cn), ni);
        }
    }
    // M's arcs: child arcs lifted, plus the bag's S_X arcs.
    let mut m_arcs: Vec<(usize, usize, usize)> = Vec::new();
    for &c in &bag.children {
        for &(e, t, h) in &tree.dual_bags[c].arcs {
            let lt = *lift.get(&(c, t)).ok_or_else(|| {
                BddError::PropertyViolation(format!("bag {}: unlifted child node", bag.id))
            })?;
            let lh = *lift[&(c, h)].to_owned().to_le_bytes().first().map(|_| &lift[&(c, h)]).unwrap();
            m_arcs.push((e, lt, lh));
        }
    }
    for &ai in &tree.sx_arcs[b] {
        m_arcs.push(db.arcs[ai]);
    }
    let mut expected: Vec<(usize, usize, usize)> = db.arcs.clone();
    m_arcs.sort_unstable();
    expected.sort_unstable();
    if m_arcs != expected {
        return Err(BddError::PropertyViolation(format!(
            "bag {}: reassembled dual differs ({} vs {} arcs)",
            bag.id,
            m_arcs.len(),
            expected.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual_agg::build_dual_context;
    use crate::oracles::{gen_planar, gen_planar_directed};
    use crate::planar::trace_faces;

    fn build(g: &EmbeddedPlanarGraph) -> BddTree {
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(g, &mut ledger);
        let fs = trace_faces(g);
        build_bdd(g, &fs, &ctx.face_ids.id_of_face, &BddConfig::default(), &mut ledger).unwrap()
    }

    #[test]
    fn small_graph_is_single_leaf() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let tree = build(&g);
        assert_eq!(tree.bags.len(), 1);
        assert!(tree.bags[0].is_leaf());
        // Root dual bag is exactly the dual graph.
        assert_eq!(tree.dual_bags[0].nodes.len(), 5);
        assert_eq!(tree.dual_bags[0].arcs.len(), 12);
    }

    #[test]
    fn eight_by_eight_grid_recurses() {
        let g = gen_planar("grid", 64, (1, 1), 0).unwrap();
        let tree = build(&g);
        assert!(tree.depth() >= 2, "8x8 grid should split, got depth {}", tree.depth());
        for bag in &tree.bags {
            if !bag.is_leaf() {
                let union: BTreeSet<usize> = bag
                    .children
                    .iter()
                    .flat_map(|&c| tree.bags[c].edges.iter().copied())
                    .collect();
                assert_eq!(union, bag.edges.iter().copied().collect());
            }
        }
    }

    #[test]
    fn real_closing_edge_splits_no_face() {
        // On triangulations, separators often close over real edges; in that
        // case no new face-parts may appear among the children.
        for seed in 0..6u64 {
            let g = gen_planar("random-triangulation", 60, (1, 9), seed).unwrap();
            let tree = build(&g);
            for (b, bag) in tree.bags.iter().enumerate() {
                let Some(sep) = &bag.separator else { continue };
                if sep.closing_edge.is_some() {
                    for (ni, kids) in tree.node_children[b].iter().enumerate() {
                        assert!(
                            kids.len() <= 1,
                            "bag {b} node {ni} split under a real closing edge"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn virtual_closing_edge_splits_only_the_critical_face() {
        let mut found_split = false;
        for seed in 0..8u64 {
            let g = gen_planar_directed("grid", 100, (1, 9), seed).unwrap();
            let tree = build(&g);
            for (b, bag) in tree.bags.iter().enumerate() {
                let Some(sep) = &bag.separator else { continue };
                if sep.closing_edge.is_none() {
                    let split: Vec<usize> = tree.node_children[b]
                        .iter()
                        .enumerate()
                        .filter(|(_, kids)| kids.len() > 1)
                        .map(|(ni, _)| ni)
                        .collect();
                    assert!(split.len() <= 1, "bag {b} split {} faces", split.len());
                    if split.len() == 1 {
                        found_split = true;
                        assert_eq!(Some(split[0]), sep.critical_node);
                    }
                }
            }
        }
        assert!(found_split, "corpus never exercised a virtual-edge split");
    }

    #[test]
    fn properties_hold_on_corpus() {
        for (kind, n, seed) in [
            ("grid", 64, 0u64),
            ("grid", 100, 1),
            ("grid", 144, 2),
            ("random-triangulation", 80, 3),
            ("random-triangulation", 120, 4),
        ] {
            let g = gen_planar(kind, n, (1, 100), seed).unwrap();
            let tree = build(&g);
            assert!(tree.depth() >= 1);
        }
    }
}
