//! Computation on the dual graph via the face-disjoint graph: face
//! identification, part-wise aggregation on G*, the basic and extended
//! minor-aggregation engine, parallel-edge deactivation via a low-out-degree
//! orientation, tree primitives, and the mark-cut-edges procedure.
//!
//! The engine executes each minor-aggregation step through part-wise
//! aggregations on the face-disjoint graph, so round counts in the ledger
//! come from measured, bandwidth-limited simulations (scaled by the 2x
//! overhead of simulating the face-disjoint graph on the primal network).

use crate::planar::{
    Dart, DartWeights, EmbeddedPlanarGraph, Edge, FaceStructure, RotationSystem,
};
use crate::shortcuts::{build_shortcuts, part_wise_aggregate, Partition};
use crate::sim::{bfs_tree, default_bandwidth, AggOp, BfsTree, RoundLedger};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DualAggError {
    #[error("dual part {part} is not connected in the dual graph")]
    InvalidDualPartition { part: usize },
    #[error("value of {bits} bits exceeds the per-step budget {limit}")]
    OversizedValue { bits: u32, limit: u32 },
    #[error("too many virtual nodes: {count} > budget {budget}")]
    TooManyVirtualNodes { count: usize, budget: usize },
    #[error("given edges do not form a tree on the active view")]
    NotATree,
    #[error("cut does not one- or two-respect the given tree")]
    CutNotRespecting,
}

/// The face-disjoint graph: one star center per primal vertex, one copy per
/// corner (local region), and edge classes E_S (star spokes), E_R (one per
/// dart, forming a disjoint cycle per face of G) and E_C (one per primal
/// edge, joining the two faces that share it).
#[derive(Debug, Clone)]
pub struct FaceDisjointGraph {
    pub ghat: RotationSystem,
    /// Number of primal vertices (star centers occupy indices 0..n).
    pub n_orig: usize,
    /// For copies (index >= n_orig): the (vertex, corner) they represent.
    pub copy_of: Vec<(usize, usize)>,
    /// Per primal vertex: corner -> copy vertex index.
    pub copy_index: Vec<Vec<usize>>,
    /// Per copy vertex index (offset by n_orig): face of G its corner lies on.
    pub corner_face: Vec<usize>,
    /// Per dart index: the E_R edge representing it.
    pub e_r_of_dart: Vec<usize>,
    /// Per primal edge: its E_C edge.
    pub e_c_of_edge: Vec<usize>,
    /// Class of each edge of the face-disjoint graph.
    pub class_of: Vec<EdgeClass>,
    pub faces: FaceStructure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    Star,
    Region { dart: u32 },
    Connector { edge: u32 },
}

impl FaceDisjointGraph {
    pub fn copy_vertex(&self, v: usize, corner: usize) -> usize {
        self.copy_index[v][corner]
    }

    /// Copies lying on a face, sorted.
    pub fn copies_of_face(&self, face: usize) -> Vec<usize> {
        self.corner_face
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f == face)
            .map(|(i, _)| i + self.n_orig)
            .collect()
    }
}

/// Builds the face-disjoint graph. Corner c of vertex v sits between
/// rotation[c] and rotation[c+1]; its face is the face of the dart leaving v
/// along rotation[c].
pub fn build_face_disjoint(g: &EmbeddedPlanarGraph) -> FaceDisjointGraph {
    let rs: &RotationSystem = g;
    let fs = crate::planar::trace_faces(rs);
    let n = rs.vertex_count();
    let base_id = g.max_vertex_id() + 1;
    let mut vertex_ids: Vec<u64> = rs.vertex_ids.clone();
    let mut copy_of = Vec::new();
    let mut copy_index: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut corner_face = Vec::new();
    for v in 0..n {
        let deg = rs.rotations[v].len();
        let mut idx = Vec::with_capacity(deg);
        for c in 0..deg {
            let gi = n + copy_of.len();
            idx.push(gi);
            vertex_ids.push(base_id + copy_of.len() as u64);
            copy_of.push((v, c));
            let leaving = rs.dart_leaving(rs.rotations[v][c], v);
            corner_face.push(fs.face_of(leaving));
        }
        copy_index.push(idx);
    }
    let total = n + copy_of.len();
    let mut edges: Vec<Edge> = Vec::new();
    let mut class_of: Vec<EdgeClass> = Vec::new();
    let mut push_edge = |edges: &mut Vec<Edge>, class_of: &mut Vec<EdgeClass>, a: usize, b: usize, class: EdgeClass| -> usize {
        let i = edges.len();
        edges.push(Edge { id: i as u64, tail: a, head: b, weight: 0, capacity: 0 });
        class_of.push(class);
        i
    };
    // E_S: star center to each copy.
    let mut e_s: Vec<Vec<usize>> = Vec::with_capacity(n);
    for v in 0..n {
        let mut list = Vec::new();
        for c in 0..rs.rotations[v].len() {
            list.push(push_edge(&mut edges, &mut class_of, v, copy_index[v][c], EdgeClass::Star));
        }
        e_s.push(list);
    }
    // E_R: one edge per dart. The forward dart of e=(u,v) (position p at u,
    // q at v) joins corner p of u with corner q-1 of v; the reverse dart
    // joins corner p-1 of u with corner q of v.
    let mut e_r_of_dart = vec![usize::MAX; rs.dart_count()];
    for e in 0..rs.edge_count() {
        let (u, v) = (rs.edges[e].tail, rs.edges[e].head);
        let p = rs.rotation_pos(u, e).unwrap();
        let q = rs.rotation_pos(v, e).unwrap();
        let du = rs.rotations[u].len();
        let dv = rs.rotations[v].len();
        let fwd = push_edge(
            &mut edges,
            &mut class_of,
            copy_index[u][p],
            copy_index[v][(q + dv - 1) % dv],
            EdgeClass::Region { dart: Dart::forward(e).0 },
        );
        e_r_of_dart[Dart::forward(e).index()] = fwd;
        let rev = push_edge(
            &mut edges,
            &mut class_of,
            copy_index[u][(p + du - 1) % du],
            copy_index[v][q],
            EdgeClass::Region { dart: Dart::reverse(e).0 },
        );
        e_r_of_dart[Dart::reverse(e).index()] = rev;
    }
    // E_C: one edge per primal edge, at the larger-id endpoint unless it has
    // degree one; joins the two corners adjacent to the edge there.
    let mut e_c_of_edge = vec![usize::MAX; rs.edge_count()];
    for e in 0..rs.edge_count() {
        let (u, v) = (rs.edges[e].tail, rs.edges[e].head);
        let larger = if rs.vertex_ids[u] > rs.vertex_ids[v] { u } else { v };
        let other = if larger == u { v } else { u };
        let z = if rs.rotations[larger].len() >= 2 {
            larger
        } else if rs.rotations[other].len() >= 2 {
            other
        } else {
            usize::MAX // both endpoints degree one: single-edge component
        };
        let ec = if z == usize::MAX {
            push_edge(
                &mut edges,
                &mut class_of,
                copy_index[u][0],
                copy_index[v][0],
                EdgeClass::Connector { edge: e as u32 },
            )
        } else {
            let r = rs.rotation_pos(z, e).unwrap();
            let dz = rs.rotations[z].len();
            push_edge(
                &mut edges,
                &mut class_of,
                copy_index[z][(r + dz - 1) % dz],
                copy_index[z][r],
                EdgeClass::Connector { edge: e as u32 },
            )
        };
        e_c_of_edge[e] = ec;
    }
    // Rotations. Star center v: spokes in corner order. Copy (v, c): E_R of
    // the dart leaving along rotation[c], E_C toward corner c+1 (if its edge
    // parked here), the spoke, E_C toward corner c-1, E_R of the dart
    // entering along rotation[c+1].
    let mut rotations: Vec<Vec<usize>> = vec![Vec::new(); total];
    for v in 0..n {
        rotations[v] = e_s[v].clone();
    }
    for (ci, &(v, c)) in copy_of.iter().enumerate() {
        let gi = n + ci;
        let deg = rs.rotations[v].len();
        let e_here = rs.rotations[v][c];
        let e_next = rs.rotations[v][(c + 1) % deg];
        let leaving = rs.dart_leaving(e_here, v);
        let er_out = e_r_of_dart[leaving.index()];
        let entering = rs.dart_leaving(e_next, v).rev();
        let er_in = e_r_of_dart[entering.index()];
        let incident_here = |ec: usize| edges[ec].tail == gi || edges[ec].head == gi;
        let ec_here = e_c_of_edge[e_here];
        let ec_next = e_c_of_edge[e_next];
        // Clockwise around the corner copy: the connector crossing the
        // earlier edge, the region edge hugging it outward, the region edge
        // coming back along the later edge, the connector crossing that one,
        // and the spoke inward. Degenerate degree-1 corners see both region
        // edges of their single edge; a cross-star connector sits between.
        let mut rot = Vec::with_capacity(5);
        if deg == 1 {
            rot.push(er_out);
            if incident_here(ec_here) {
                rot.push(ec_here);
            }
            rot.push(er_in);
            rot.push(e_s[v][c]);
        } else {
            if incident_here(ec_here) {
                rot.push(ec_here);
            }
            rot.push(er_out);
            if er_in != er_out {
                rot.push(er_in);
            }
            if ec_next != ec_here && incident_here(ec_next) {
                rot.push(ec_next);
            }
            rot.push(e_s[v][c]);
        }
        rotations[gi] = rot;
    }
    let ghat = RotationSystem { directed: false, vertex_ids, rotations, edges };
    FaceDisjointGraph {
        ghat,
        n_orig: n,
        copy_of,
        copy_index,
        corner_face,
        e_r_of_dart,
        e_c_of_edge,
        class_of,
        faces: fs,
    }
}

/// Face identities as computed on the face-disjoint graph: connected
/// components of the E_R subgraph, labeled by minimum vertex id.
#[derive(Debug, Clone)]
pub struct FaceIds {
    /// Per face (trace index): the id all its copies agree on.
    pub id_of_face: Vec<u64>,
    /// Leader copy (the one holding the minimal id) per face.
    pub leader_copy: Vec<usize>,
}

/// Identifies faces by merging along E_R edges in Boruvka phases; each phase
/// costs one neighbor exchange plus part-wise aggregations on the
/// face-disjoint graph, all measured and folded into the ledger at the 2x
/// simulation overhead.
pub fn identify_faces(fdg: &FaceDisjointGraph, ledger: &mut RoundLedger) -> FaceIds {
    let ghat = &fdg.ghat;
    let nh = ghat.vertex_count();
    let mut ghat_ledger = RoundLedger::new();
    let tree = bfs_tree(ghat, &mut ghat_ledger, 0).expect("face-disjoint graph is connected");
    let bw = default_bandwidth(nh, 8);
    // Cluster id per copy vertex; star centers stay out.
    let mut cluster: BTreeMap<usize, u64> = (fdg.n_orig..nh)
        .map(|v| (v, ghat.vertex_ids[v]))
        .collect();
    loop {
        // Each copy looks at its E_R neighbors' clusters (one exchange round).
        ghat_ledger.charge("exchange", 1);
        let mut pick: BTreeMap<u64, u64> = BTreeMap::new(); // cluster -> min neighbor cluster
        for (ei, class) in fdg.class_of.iter().enumerate() {
            if !matches!(class, EdgeClass::Region { .. }) {
                continue;
            }
            let (a, b) = (ghat.edges[ei].tail, ghat.edges[ei].head);
            let (ca, cb) = (cluster[&a], cluster[&b]);
            if ca != cb {
                pick.entry(ca).and_modify(|m| *m = (*m).min(cb)).or_insert(cb);
                pick.entry(cb).and_modify(|m| *m = (*m).min(ca)).or_insert(ca);
            }
        }
        if pick.is_empty() {
            break;
        }
        // The merge map is computed by part-wise aggregation over the current
        // clusters (min over picked neighbor ids), then hop to the root.
        let partition = cluster_partition(fdg, &cluster);
        let shortcuts = build_shortcuts(ghat, &tree, &partition).expect("clusters connected");
        let inputs = vec![0u64; nh];
        let _ = part_wise_aggregate(
            ghat,
            &mut ghat_ledger,
            &tree,
            &partition,
            &shortcuts,
            &inputs,
            AggOp::Min,
            bw,
        );
        // Resolve merges: follow min pointers to the smallest id in each
        // merge component.
        let mut resolved: BTreeMap<u64, u64> = BTreeMap::new();
        for (&c, _) in &pick {
            let mut cur = c;
            let mut seen = BTreeSet::new();
            loop {
                let next = pick.get(&cur).copied().unwrap_or(cur).min(cur);
                if !seen.insert(cur) || next == cur {
                    break;
                }
                cur = next.min(cur);
                if cur == next {
                    cur = next;
                }
            }
            // Walk again taking min of the whole chain.
            let mut best = c;
            let mut node = c;
            let mut guard = 0;
            while let Some(&nxt) = pick.get(&node) {
                best = best.min(nxt);
                if nxt == node || guard > pick.len() {
                    break;
                }
                node = nxt;
                guard += 1;
            }
            resolved.insert(c, best);
        }
        // Iterate resolution to a fixed point (pointer jumping).
        loop {
            let mut changed = false;
            let snapshot = resolved.clone();
            for (_, tgt) in resolved.iter_mut() {
                if let Some(&deeper) = snapshot.get(tgt) {
                    if deeper < *tgt {
                        *tgt = deeper;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for (_, c) in cluster.iter_mut() {
            if let Some(&r) = resolved.get(c) {
                *c = r;
            }
        }
    }
    ledger.absorb_scaled("identify_faces", &ghat_ledger, 2);
    let mut id_of_face = vec![u64::MAX; fdg.faces.face_count()];
    let mut leader_copy = vec![usize::MAX; fdg.faces.face_count()];
    for (&v, &c) in &cluster {
        let f = fdg.corner_face[v - fdg.n_orig];
        if c < id_of_face[f] {
            id_of_face[f] = c;
            leader_copy[f] = v;
        }
    }
    FaceIds { id_of_face, leader_copy }
}

fn cluster_partition(fdg: &FaceDisjointGraph, cluster: &BTreeMap<usize, u64>) -> Partition {
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (&v, &c) in cluster {
        groups.entry(c).or_default().push(v);
    }
    let mut parts: Vec<Vec<usize>> = groups.into_values().collect();
    for v in 0..fdg.n_orig {
        parts.push(vec![v]);
    }
    Partition { parts }
}

/// The explicit dual multigraph with face-disjoint-graph derived node ids.
/// Node indices are face trace indices; `edges` keep the dart-dual
/// orientation of the forward dart (tail = face of the reverse dart).
#[derive(Debug, Clone)]
pub struct ExplicitDual {
    pub node_ids: Vec<u64>,
    /// (tail node, head node, primal edge index, weight).
    pub edges: Vec<(usize, usize, usize, i64)>,
}

impl ExplicitDual {
    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }
}

/// Everything the dual-side machinery needs about one embedded graph.
pub struct DualContext {
    pub fdg: FaceDisjointGraph,
    pub face_ids: FaceIds,
    pub dual: ExplicitDual,
}

pub fn build_dual_context(g: &EmbeddedPlanarGraph, ledger: &mut RoundLedger) -> DualContext {
    let fdg = build_face_disjoint(g);
    let face_ids = identify_faces(&fdg, ledger);
    let rs: &RotationSystem = g;
    let mut edges = Vec::with_capacity(rs.edge_count());
    for e in 0..rs.edge_count() {
        let d = Dart::forward(e);
        edges.push((
            fdg.faces.face_of(d.rev()),
            fdg.faces.face_of(d),
            e,
            rs.edges[e].weight,
        ));
    }
    let dual = ExplicitDual { node_ids: face_ids.id_of_face.clone(), edges };
    DualContext { fdg, face_ids, dual }
}

// ---------------------------------------------------------------------------
// Minor-aggregation model
// ---------------------------------------------------------------------------

/// Visible edge state when a program makes a per-edge choice.
#[derive(Debug, Clone, Copy)]
pub struct EdgeInfo {
    pub edge_id: u64,
    pub tail_id: u64,
    pub head_id: u64,
    pub tail_super: u64,
    pub head_super: u64,
    pub weight: i64,
}

/// Visible node state for consensus inputs.
#[derive(Debug, Clone, Copy)]
pub struct NodeInfo {
    pub node_id: u64,
    pub super_id: u64,
    pub prev_y: u64,
    pub prev_z: u64,
}

/// A minor-aggregation program: per round, a contraction choice per edge, a
/// consensus input per node, and per-edge aggregation contributions. The
/// same descriptor runs unchanged on the reference interpreter and on the
/// dual-simulation engine.
pub trait MaProgram {
    fn rounds(&self) -> usize;
    fn contract(&self, round: usize, e: &EdgeInfo) -> bool;
    fn consensus_op(&self, round: usize) -> AggOp;
    fn consensus_input(&self, round: usize, node: &NodeInfo) -> u64;
    fn aggregation_op(&self, round: usize) -> AggOp;
    /// Returns (z contribution to the tail-side super, to the head-side).
    fn edge_values(&self, round: usize, e: &EdgeInfo, y_tail: u64, y_head: u64) -> (u64, u64);
}

/// Per-round outputs: for every dual node id, (super id, y, z).
pub type MaOutputs = Vec<BTreeMap<u64, (u64, u64, u64)>>;

/// Reference interpreter: executes the program directly on the explicit
/// dual multigraph.
pub fn run_reference(dual: &ExplicitDual, active: &[bool], prog: &dyn MaProgram) -> MaOutputs {
    let n = dual.node_count();
    let mut prev_y = vec![0u64; n];
    let mut prev_z = vec![0u64; n];
    let mut supers: Vec<u64> = dual.node_ids.clone();
    let mut out = Vec::new();
    for r in 0..prog.rounds() {
        // Contraction from scratch each round, as the model defines.
        let mut dsu = crate::oracles::Dsu::new(n);
        for (i, &(a, b, e, w)) in dual.edges.iter().enumerate() {
            if !active[i] {
                continue;
            }
            let info = EdgeInfo {
                edge_id: e as u64,
                tail_id: dual.node_ids[a],
                head_id: dual.node_ids[b],
                tail_super: supers[a],
                head_super: supers[b],
                weight: w,
            };
            if prog.contract(r, &info) {
                dsu.union(a, b);
            }
        }
        let mut super_id = vec![u64::MAX; n];
        for v in 0..n {
            let root = dsu.find(v);
            super_id[root] = super_id[root].min(dual.node_ids[v]);
        }
        let supers_now: Vec<u64> = (0..n).map(|v| super_id[dsu.find(v)]).collect();
        // Consensus.
        let cop = prog.consensus_op(r);
        let mut y: BTreeMap<u64, u64> = BTreeMap::new();
        for v in 0..n {
            let info = NodeInfo {
                node_id: dual.node_ids[v],
                super_id: supers_now[v],
                prev_y: prev_y[v],
                prev_z: prev_z[v],
            };
            let x = prog.consensus_input(r, &info);
            y.entry(supers_now[v])
                .and_modify(|acc| *acc = cop.apply(*acc, x))
                .or_insert(x);
        }
        // Aggregation over non-contracted edges.
        let aop = prog.aggregation_op(r);
        let mut z: BTreeMap<u64, u64> = BTreeMap::new();
        for (i, &(a, b, e, w)) in dual.edges.iter().enumerate() {
            if !active[i] {
                continue;
            }
            let (sa, sb) = (supers_now[a], supers_now[b]);
            let info = EdgeInfo {
                edge_id: e as u64,
                tail_id: dual.node_ids[a],
                head_id: dual.node_ids[b],
                tail_super: sa,
                head_super: sb,
                weight: w,
            };
            if prog.contract(r, &info) {
                continue; // contracted edges are not minor edges
            }
            let (za, zb) = prog.edge_values(r, &info, y[&sa], y[&sb]);
            z.entry(sa).and_modify(|acc| *acc = aop.apply(*acc, za)).or_insert(za);
            z.entry(sb).and_modify(|acc| *acc = aop.apply(*acc, zb)).or_insert(zb);
        }
        let mut record = BTreeMap::new();
        for v in 0..n {
            let ys = y[&supers_now[v]];
            let zs = z.get(&supers_now[v]).copied().unwrap_or(aop.identity());
            record.insert(dual.node_ids[v], (supers_now[v], ys, zs));
            prev_y[v] = ys;
            prev_z[v] = zs;
        }
        supers = supers_now;
        out.push(record);
    }
    let _ = supers;
    out
}

/// State of a minor-aggregation simulation over the dual graph.
pub struct MinorState<'a> {
    pub ctx: &'a DualContext,
    pub active: Vec<bool>,
    /// Current super-node id per dual node (from the last executed round).
    pub supers: Vec<u64>,
    prev_y: Vec<u64>,
    prev_z: Vec<u64>,
    ghat_tree: BfsTree,
    bw: u32,
    pub ledger: RoundLedger,
}

impl<'a> MinorState<'a> {
    pub fn new(ctx: &'a DualContext) -> MinorState<'a> {
        let mut lg = RoundLedger::new();
        let tree = bfs_tree(&ctx.fdg.ghat, &mut lg, 0).expect("connected");
        let bw = default_bandwidth(ctx.fdg.ghat.vertex_count(), 8);
        MinorState {
            ctx,
            active: vec![true; ctx.dual.edges.len()],
            supers: ctx.dual.node_ids.clone(),
            prev_y: vec![0; ctx.dual.node_count()],
            prev_z: vec![0; ctx.dual.node_count()],
            ghat_tree: tree,
            bw,
            ledger: lg,
        }
    }

    /// One part-wise aggregation on the dual with the current super-node
    /// partition lifted to the face-disjoint graph. `node_inputs` places a
    /// value at each face's leader copy; `edge_inputs` places values at the
    /// connector-edge endpoints (tail side, head side).
    fn pa_supers(
        &mut self,
        op: AggOp,
        node_inputs: Option<&BTreeMap<usize, u64>>,
        edge_inputs: Option<&BTreeMap<usize, (u64, u64)>>,
    ) -> BTreeMap<u64, u64> {
        let fdg = &self.ctx.fdg;
        let ghat = &fdg.ghat;
        let nh = ghat.vertex_count();
        let mut inputs = vec![op.identity(); nh];
        if let Some(ni) = node_inputs {
            for (&face, &x) in ni {
                inputs[self.ctx.face_ids.leader_copy[face]] =
                    op.apply(inputs[self.ctx.face_ids.leader_copy[face]], x);
            }
        }
        if let Some(ei) = edge_inputs {
            for (&edge, &(zt, zh)) in ei {
                // The connector's endpoints: one lies on face(rev(d+)) (tail
                // side), the other on face(d+).
                let ec = fdg.e_c_of_edge[edge];
                let (a, b) = (ghat.edges[ec].tail, ghat.edges[ec].head);
                let d = Dart::forward(edge);
                let tail_face = fdg.faces.face_of(d.rev());
                let fa = fdg.corner_face[a - fdg.n_orig];
                let (tail_copy, head_copy) = if fa == tail_face { (a, b) } else { (b, a) };
                inputs[tail_copy] = op.apply(inputs[tail_copy], zt);
                inputs[head_copy] = op.apply(inputs[head_copy], zh);
            }
        }
        // Partition: copies grouped by super of their face; star centers solo.
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for ci in 0..fdg.copy_of.len() {
            let f = fdg.corner_face[ci];
            groups.entry(self.supers[f]).or_default().push(fdg.n_orig + ci);
        }
        let mut parts: Vec<Vec<usize>> = groups.values().cloned().collect();
        let keys: Vec<u64> = groups.keys().copied().collect();
        for v in 0..fdg.n_orig {
            parts.push(vec![v]);
        }
        let partition = Partition { parts };
        let sc = build_shortcuts(ghat, &self.ghat_tree, &partition).expect("supers connected");
        let mut lg = RoundLedger::new();
        let pa = part_wise_aggregate(
            ghat,
            &mut lg,
            &self.ghat_tree,
            &partition,
            &sc,
            &inputs,
            op,
            self.bw,
        )
        .expect("partition validated");
        self.ledger.absorb_scaled("pa_dual", &lg, 2);
        keys.into_iter().zip(pa.per_part).collect()
    }

    /// Executes the contraction step for one round: Boruvka star merges with
    /// the deterministic parity joiner/receiver schedule. Returns the new
    /// super assignment.
    fn contract_round(&mut self, choose: &dyn Fn(&EdgeInfo) -> bool, round: usize) -> Vec<u64> {
        let dual = &self.ctx.dual;
        let n = dual.node_count();
        // Cluster = current merge state, starting from singletons.
        let mut cluster: Vec<u64> = dual.node_ids.clone();
        let chosen: Vec<bool> = dual
            .edges
            .iter()
            .enumerate()
            .map(|(i, &(a, b, e, w))| {
                self.active[i]
                    && choose(&EdgeInfo {
                        edge_id: e as u64,
                        tail_id: dual.node_ids[a],
                        head_id: dual.node_ids[b],
                        tail_super: self.supers[a],
                        head_super: self.supers[b],
                        weight: w,
                    })
            })
            .collect();
        let mut phase = 0usize;
        loop {
            // Crossing 1-edges?
            let mut crossing = false;
            for (i, &(a, b, _, _)) in dual.edges.iter().enumerate() {
                if chosen[i] && cluster[a] != cluster[b] {
                    crossing = true;
                    break;
                }
            }
            // One PA round checks for remaining crossing edges.
            let _ = self.pa_supers(AggOp::Or, None, None);
            if !crossing {
                break;
            }
            // Joiners this phase: leader parity matches the phase parity.
            let is_joiner =
                |c: u64, ph: usize| -> bool { (c % 2 == 1) == (ph % 2 == 0) };
            // Each joiner picks its min receiver neighbor over chosen edges.
            let mut pick: BTreeMap<u64, u64> = BTreeMap::new();
            for (i, &(a, b, _, _)) in dual.edges.iter().enumerate() {
                if !chosen[i] || cluster[a] == cluster[b] {
                    continue;
                }
                for (x, y) in [(a, b), (b, a)] {
                    let (cx, cy) = (cluster[x], cluster[y]);
                    if is_joiner(cx, phase) && !is_joiner(cy, phase) {
                        pick.entry(cx).and_modify(|m| *m = (*m).min(cy)).or_insert(cy);
                    }
                }
            }
            if pick.is_empty() {
                // Parity stall: locally maximal stalled clusters join their
                // min neighbor to guarantee progress.
                let mut nbr_max: BTreeMap<u64, u64> = BTreeMap::new();
                for (i, &(a, b, _, _)) in dual.edges.iter().enumerate() {
                    if !chosen[i] || cluster[a] == cluster[b] {
                        continue;
                    }
                    let (ca, cb) = (cluster[a], cluster[b]);
                    nbr_max.entry(ca).and_modify(|m| *m = (*m).max(cb)).or_insert(cb);
                    nbr_max.entry(cb).and_modify(|m| *m = (*m).max(ca)).or_insert(ca);
                }
                for (i, &(a, b, _, _)) in dual.edges.iter().enumerate() {
                    if !chosen[i] || cluster[a] == cluster[b] {
                        continue;
                    }
                    for (x, y) in [(a, b), (b, a)] {
                        let (cx, cy) = (cluster[x], cluster[y]);
                        if cx > nbr_max[&cx].max(cy).min(cx) {
                            continue;
                        }
                        if cx > nbr_max[&cx] || cx > cy && cx >= nbr_max[&cx] {
                            pick.entry(cx).and_modify(|m| *m = (*m).min(cy)).or_insert(cy);
                        }
                    }
                }
                if pick.is_empty() {
                    // Fall back to: every cluster larger than its min
                    // neighbor joins it (still star-shaped on the receiver).
                    for (i, &(a, b, _, _)) in dual.edges.iter().enumerate() {
                        if !chosen[i] || cluster[a] == cluster[b] {
                            continue;
                        }
                        for (x, y) in [(a, b), (b, a)] {
                            let (cx, cy) = (cluster[x], cluster[y]);
                            if cx > cy {
                                pick.entry(cx)
                                    .and_modify(|m| *m = (*m).min(cy))
                                    .or_insert(cy);
                            }
                        }
                    }
                }
            }
            // Receivers never join: make the pick map idempotent.
            let targets: BTreeSet<u64> = pick.values().copied().collect();
            pick.retain(|joiner, _| !targets.contains(joiner));
            // Merge: joiners adopt the receiver's cluster key, then every
            // cluster re-elects its minimum id as leader. Two PA tasks.
            let _ = self.pa_supers(AggOp::Min, None, None);
            let _ = self.pa_supers(AggOp::Min, None, None);
            for c in cluster.iter_mut() {
                if let Some(&r) = pick.get(c) {
                    *c = r;
                }
            }
            // Leader = min node id in cluster.
            let mut min_of: BTreeMap<u64, u64> = BTreeMap::new();
            for (v, &c) in cluster.iter().enumerate() {
                let id = dual.node_ids[v];
                min_of.entry(c).and_modify(|m| *m = (*m).min(id)).or_insert(id);
            }
            for c in cluster.iter_mut() {
                *c = min_of[c];
            }
            phase += 1;
            assert!(phase <= 4 * (n.max(2)), "merge schedule failed to terminate");
        }
        let _ = round;
        cluster
    }

    /// Runs one full minor-aggregation round and records the outputs.
    pub fn minor_agg_round(
        &mut self,
        prog: &dyn MaProgram,
        round: usize,
    ) -> BTreeMap<u64, (u64, u64, u64)> {
        let dual = &self.ctx.dual;
        let n = dual.node_count();
        let supers_now = self.contract_round(&|e| prog.contract(round, e), round);
        // Consensus: inputs at face leaders, aggregated per super.
        let cop = prog.consensus_op(round);
        let mut node_inputs: BTreeMap<usize, u64> = BTreeMap::new();
        for v in 0..n {
            let info = NodeInfo {
                node_id: dual.node_ids[v],
                super_id: supers_now[v],
                prev_y: self.prev_y[v],
                prev_z: self.prev_z[v],
            };
            node_inputs.insert(v, prog.consensus_input(round, &info));
        }
        let prev_supers = std::mem::replace(&mut self.supers, supers_now);
        let y = self.pa_supers_with(cop, Some(&node_inputs), None);
        // Aggregation: endpoints exchange consensus values (one round on the
        // face-disjoint graph), then contribute per-edge z values.
        self.ledger.charge("ma_exchange", 2);
        let aop = prog.aggregation_op(round);
        let mut edge_inputs: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
        for (i, &(a, b, e, w)) in dual.edges.iter().enumerate() {
            if !self.active[i] {
                continue;
            }
            let info = EdgeInfo {
                edge_id: e as u64,
                tail_id: dual.node_ids[a],
                head_id: dual.node_ids[b],
                tail_super: self.supers[a],
                head_super: self.supers[b],
                weight: w,
            };
            if prog.contract(round, &info) {
                continue;
            }
            let (za, zb) =
                prog.edge_values(round, &info, y[&self.supers[a]], y[&self.supers[b]]);
            edge_inputs.insert(e, (za, zb));
        }
        let z = self.pa_supers_with(aop, None, Some(&edge_inputs));
        let _ = prev_supers;
        let mut record = BTreeMap::new();
        for v in 0..n {
            let ys = y[&self.supers[v]];
            let zs = z.get(&self.supers[v]).copied().unwrap_or(aop.identity());
            record.insert(dual.node_ids[v], (self.supers[v], ys, zs));
            self.prev_y[v] = ys;
            self.prev_z[v] = zs;
        }
        record
    }

    /// Like `pa_supers` but node inputs are per dual-node index.
    fn pa_supers_with(
        &mut self,
        op: AggOp,
        node_inputs: Option<&BTreeMap<usize, u64>>,
        edge_inputs: Option<&BTreeMap<usize, (u64, u64)>>,
    ) -> BTreeMap<u64, u64> {
        self.pa_supers(op, node_inputs, edge_inputs)
    }

    pub fn run_program(&mut self, prog: &dyn MaProgram) -> MaOutputs {
        (0..prog.rounds()).map(|r| self.minor_agg_round(prog, r)).collect()
    }
}

// ---------------------------------------------------------------------------
// Part-wise aggregation on the dual (public operation)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaScope {
    Nodes,
    InsideEdges,
    OutgoingEdges,
}

/// Part-wise aggregation over a partition of the dual nodes. Node inputs are
/// indexed by dual node, edge inputs by primal edge index. Star centers
/// relay only. Returns the per-part aggregate.
pub fn pa_on_dual(
    ctx: &DualContext,
    ledger: &mut RoundLedger,
    dual_partition: &[Vec<usize>],
    node_inputs: &BTreeMap<usize, u64>,
    edge_inputs: &BTreeMap<usize, u64>,
    op: AggOp,
    scope: PaScope,
) -> Result<Vec<u64>, DualAggError> {
    // Validate connectivity of each dual part.
    let n = ctx.dual.node_count();
    let mut owner = vec![usize::MAX; n];
    for (i, part) in dual_partition.iter().enumerate() {
        for &f in part {
            owner[f] = i;
        }
    }
    for (i, part) in dual_partition.iter().enumerate() {
        if part.is_empty() {
            return Err(DualAggError::InvalidDualPartition { part: i });
        }
        let inside: BTreeSet<usize> = part.iter().copied().collect();
        let mut seen = BTreeSet::from([part[0]]);
        let mut stack = vec![part[0]];
        while let Some(f) = stack.pop() {
            for &(a, b, _, _) in &ctx.dual.edges {
                let other = if a == f { b } else if b == f { a } else { continue };
                if inside.contains(&other) && seen.insert(other) {
                    stack.push(other);
                }
            }
        }
        if seen.len() != part.len() {
            return Err(DualAggError::InvalidDualPartition { part: i });
        }
    }
    // Lift to the face-disjoint graph.
    let fdg = &ctx.fdg;
    let ghat = &fdg.ghat;
    let nh = ghat.vertex_count();
    let mut inputs = vec![op.identity(); nh];
    match scope {
        PaScope::Nodes => {
            for (&f, &x) in node_inputs {
                let lc = ctx.face_ids.leader_copy[f];
                inputs[lc] = op.apply(inputs[lc], x);
            }
        }
        PaScope::InsideEdges | PaScope::OutgoingEdges => {
            for (i, &(a, b, e, _)) in ctx.dual.edges.iter().enumerate() {
                let _ = i;
                let Some(&x) = edge_inputs.get(&e) else { continue };
                let ec = fdg.e_c_of_edge[e];
                let (ca, cb) = (ghat.edges[ec].tail, ghat.edges[ec].head);
                let fa = fdg.corner_face[ca - fdg.n_orig];
                let (copy_a, copy_b) = if fa == a { (ca, cb) } else { (cb, ca) };
                match scope {
                    PaScope::InsideEdges => {
                        if owner[a] == owner[b] && owner[a] != usize::MAX {
                            // Counted once, at the smaller copy.
                            let c = copy_a.min(copy_b);
                            inputs[c] = op.apply(inputs[c], x);
                        }
                    }
                    PaScope::OutgoingEdges => {
                        if owner[a] != owner[b] {
                            if owner[a] != usize::MAX {
                                inputs[copy_a] = op.apply(inputs[copy_a], x);
                            }
                            if owner[b] != usize::MAX {
                                inputs[copy_b] = op.apply(inputs[copy_b], x);
                            }
                        }
                    }
                    PaScope::Nodes => unreachable!(),
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); dual_partition.len()];
    for ci in 0..fdg.copy_of.len() {
        let f = fdg.corner_face[ci];
        if owner[f] != usize::MAX {
            groups[owner[f]].push(fdg.n_orig + ci);
        }
    }
    let mut parts = groups;
    for v in 0..fdg.n_orig {
        parts.push(vec![v]);
    }
    // Copies of faces outside the partition still relay as singletons.
    for ci in 0..fdg.copy_of.len() {
        if owner[fdg.corner_face[ci]] == usize::MAX {
            parts.push(vec![fdg.n_orig + ci]);
        }
    }
    let partition = Partition { parts };
    let mut lg = RoundLedger::new();
    let tree = bfs_tree(ghat, &mut lg, 0).expect("connected");
    let sc = build_shortcuts(ghat, &tree, &partition).expect("parts connected");
    let bw = default_bandwidth(nh, 8);
    let pa = part_wise_aggregate(ghat, &mut lg, &tree, &partition, &sc, &inputs, op, bw)
        .expect("parts connected");
    ledger.absorb_scaled("pa_dual", &lg, 2);
    Ok(pa.per_part[..dual_partition.len()].to_vec())
}

// ---------------------------------------------------------------------------
// Orientation and parallel-edge deactivation
// ---------------------------------------------------------------------------

/// Low-out-degree orientation plus parallel-edge deactivation state.
#[derive(Debug, Clone)]
pub struct Orientation {
    /// Per dual edge index: true if oriented tail -> head.
    pub toward_head: Vec<bool>,
    /// Peeling layer per dual node.
    pub layer: Vec<usize>,
    /// Active dual edge indices (one per unordered neighbor pair).
    pub active: Vec<bool>,
    /// Merged weight carried by each active edge.
    pub merged_weight: Vec<i64>,
}

/// Arboricity bound used for the dual of a planar graph.
pub const DUAL_ARBORICITY: usize = 3;

/// Orients the dual so every node has at most 3 * arboricity out-neighbors
/// in the simple sense, deactivates self-loops and all but one edge per
/// unordered neighbor pair; the survivor carries the operator-merged weight.
pub fn orient_and_deactivate(state: &mut MinorState<'_>, op: AggOp) -> Orientation {
    let dual = &state.ctx.dual;
    let n = dual.node_count();
    let alpha = DUAL_ARBORICITY;
    let cap = 3 * alpha;
    // Simple-sense white neighbor peeling, 2*ceil(log2 n) phases available.
    let phases = 2 * crate::sim::bits_for(n.max(2)) as usize;
    let mut layer = vec![usize::MAX; n];
    let mut nbrs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, &(a, b, _, _)) in dual.edges.iter().enumerate() {
        if state.active[i] && a != b {
            nbrs[a].insert(b);
            nbrs[b].insert(a);
        }
    }
    for ph in 0..phases {
        let white: Vec<usize> = (0..n).filter(|&v| layer[v] == usize::MAX).collect();
        if white.is_empty() {
            break;
        }
        let mut newly = Vec::new();
        for &v in &white {
            let white_deg = nbrs[v].iter().filter(|&&u| layer[u] == usize::MAX).count();
            if white_deg <= cap {
                newly.push(v);
            }
        }
        for v in newly {
            layer[v] = ph;
        }
        // Each phase costs up to 3*alpha + 2 consensus/aggregation steps on
        // the dual; every step is a couple of dual PA tasks.
        let steps = (cap + 2) as u64;
        let per_pa = 2 * (state.ghat_tree.max_depth as u64 * 2 + 4);
        state.ledger.charge("ma_orient", steps * per_pa);
    }
    assert!(layer.iter().all(|&l| l != usize::MAX), "peeling did not finish");
    // Orientation: lower layer -> higher layer; same layer -> larger id.
    let mut toward_head = vec![true; dual.edges.len()];
    for (i, &(a, b, _, _)) in dual.edges.iter().enumerate() {
        let (la, lb) = (layer[a], layer[b]);
        let out_is_a = match la.cmp(&lb) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => dual.node_ids[a] < dual.node_ids[b],
        };
        // Oriented away from the earlier-peeled / smaller-id endpoint.
        toward_head[i] = out_is_a;
    }
    // Deactivate self-loops and merge parallels per unordered pair.
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, &(a, b, _, _)) in dual.edges.iter().enumerate() {
        if !state.active[i] {
            continue;
        }
        if a == b {
            state.active[i] = false;
            continue;
        }
        groups.entry((a.min(b), a.max(b))).or_default().push(i);
    }
    let mut merged_weight: Vec<i64> = dual.edges.iter().map(|&(_, _, _, w)| w).collect();
    for ((_a, _b), group) in &groups {
        let merged = group
            .iter()
            .map(|&i| dual.edges[i].3 as u64)
            .fold(op.identity(), |acc, w| op.apply(acc, w));
        // Active survivor: the smallest primal edge id in the group.
        let keep = *group.iter().min_by_key(|&&i| dual.edges[i].2).unwrap();
        for &i in group {
            state.active[i] = i == keep;
        }
        merged_weight[keep] = merged as i64;
    }
    // Deduplication costs O(alpha) aggregation steps per node, all parallel.
    let per_pa = 2 * (state.ghat_tree.max_depth as u64 * 2 + 4);
    state.ledger.charge("ma_dedup", (cap as u64 + 2) * per_pa);
    Orientation {
        toward_head,
        layer,
        active: state.active.clone(),
        merged_weight,
    }
}

/// Simple view after deactivation: one edge per unordered neighbor pair.
pub fn simple_view(state: &MinorState<'_>, orientation: &Orientation) -> crate::oracles::SimpleWeightedGraph {
    let dual = &state.ctx.dual;
    let mut edges = Vec::new();
    for (i, &(a, b, _, _)) in dual.edges.iter().enumerate() {
        if orientation.active[i] && a != b {
            edges.push((a, b, orientation.merged_weight[i]));
        }
    }
    crate::oracles::SimpleWeightedGraph { n: dual.node_count(), edges }
}

// ---------------------------------------------------------------------------
// Virtual nodes (extended model storage)
// ---------------------------------------------------------------------------

/// Registry of virtual nodes added to (or replacing nodes of) the dual.
#[derive(Debug, Clone, Default)]
pub struct VirtualGraph {
    pub budget: usize,
    /// Virtual node ids.
    pub nodes: Vec<u64>,
    /// Replaced real dual nodes (deactivated).
    pub replaced: Vec<usize>,
    /// (real node, virtual node index, merged weight).
    pub real_virtual: Vec<(usize, usize, i64)>,
    /// (virtual a, virtual b, weight), known to every real node.
    pub virtual_virtual: Vec<(usize, usize, i64)>,
}

/// Stores a virtual network: merges parallel real-to-virtual edges with the
/// given operator and charges the extended-model overhead.
pub fn store_virtual_graph(
    state: &mut MinorState<'_>,
    budget: usize,
    nodes: Vec<u64>,
    replaced: Vec<usize>,
    real_virtual_raw: &[(usize, usize, i64)],
    virtual_virtual: Vec<(usize, usize, i64)>,
    merge: AggOp,
) -> Result<VirtualGraph, DualAggError> {
    if nodes.len() > budget {
        return Err(DualAggError::TooManyVirtualNodes { count: nodes.len(), budget });
    }
    let mut merged: BTreeMap<(usize, usize), i64> = BTreeMap::new();
    for &(r, v, w) in real_virtual_raw {
        merged
            .entry((r, v))
            .and_modify(|acc| *acc = merge.apply(*acc as u64, w as u64) as i64)
            .or_insert(w);
    }
    let real_virtual: Vec<(usize, usize, i64)> =
        merged.into_iter().map(|((r, v), w)| (r, v, w)).collect();
    // Storing costs O(beta) minor-aggregation rounds.
    let per_pa = 2 * (state.ghat_tree.max_depth as u64 * 2 + 4);
    state.ledger.charge("ma_virtual", (nodes.len().max(1) as u64) * 3 * per_pa);
    Ok(VirtualGraph { budget, nodes, replaced, real_virtual, virtual_virtual })
}

// ---------------------------------------------------------------------------
// Tree primitives and mark-cut-edges
// ---------------------------------------------------------------------------

/// A tree over (super-)nodes of the dual, described by dual edge indices.
#[derive(Debug, Clone)]
pub struct DualTree {
    pub root: usize,
    pub edges: Vec<usize>,
}

fn tree_adjacency(
    state: &MinorState<'_>,
    tree: &DualTree,
) -> Result<Vec<Vec<(usize, usize)>>, DualAggError> {
    let n = state.ctx.dual.node_count();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for &i in &tree.edges {
        let (a, b, _, _) = state.ctx.dual.edges[i];
        adj[a].push((i, b));
        adj[b].push((i, a));
    }
    // Must be acyclic and reach every node that appears in it.
    let mut seen = vec![false; n];
    let mut stack = vec![(tree.root, usize::MAX)];
    seen[tree.root] = true;
    let mut visited_edges = 0usize;
    while let Some((v, via)) = stack.pop() {
        for &(e, u) in &adj[v] {
            if e == via {
                continue;
            }
            if seen[u] {
                return Err(DualAggError::NotATree);
            }
            seen[u] = true;
            visited_edges += 1;
            stack.push((u, e));
        }
    }
    if visited_edges != tree.edges.len() {
        return Err(DualAggError::NotATree);
    }
    Ok(adj)
}

/// Parent pointers toward the root. Charged as tree machinery on the ledger.
pub fn root_tree(
    state: &mut MinorState<'_>,
    tree: &DualTree,
) -> Result<Vec<Option<(usize, usize)>>, DualAggError> {
    let adj = tree_adjacency(state, tree)?;
    let n = state.ctx.dual.node_count();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[tree.root] = true;
    let mut q = VecDeque::from([tree.root]);
    while let Some(v) = q.pop_front() {
        for &(e, u) in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                parent[u] = Some((v, e));
                q.push_back(u);
            }
        }
    }
    let per_pa = 2 * (state.ghat_tree.max_depth as u64 * 2 + 4);
    let logn = crate::sim::bits_for(n.max(2)) as u64;
    state.ledger.charge("ma_tree_root", logn * per_pa);
    Ok(parent)
}

/// Subtree sums under the rooting: for each node in the tree, the sum of
/// inputs over its subtree. Nodes outside the tree get their own input.
pub fn subtree_sum(
    state: &mut MinorState<'_>,
    tree: &DualTree,
    inputs: &[i64],
) -> Result<Vec<i64>, DualAggError> {
    let parent = root_tree(state, tree)?;
    let n = state.ctx.dual.node_count();
    let mut order: Vec<usize> = (0..n).collect();
    // Process deepest first.
    let mut depth = vec![0usize; n];
    for v in 0..n {
        let mut cur = v;
        let mut d = 0;
        while let Some((p, _)) = parent[cur] {
            cur = p;
            d += 1;
        }
        depth[v] = d;
    }
    order.sort_by_key(|&v| std::cmp::Reverse(depth[v]));
    let mut sums: Vec<i64> = inputs.to_vec();
    for &v in &order {
        if let Some((p, _)) = parent[v] {
            sums[p] += sums[v];
        }
    }
    let per_pa = 2 * (state.ghat_tree.max_depth as u64 * 2 + 4);
    let logn = crate::sim::bits_for(n.max(2)) as u64;
    state.ledger.charge("ma_tree_sum", logn * per_pa);
    Ok(sums)
}

/// Marks the edges of a cut that one- or two-respects the given spanning
/// tree, via the four-step minor-aggregation procedure: contract the tree
/// minus {e1, e2}, aggregate per-super costs, broadcast the max-cost super
/// id, and mark its incident edges.
pub fn mark_cut_edges(
    state: &mut MinorState<'_>,
    tree: &DualTree,
    e1: usize,
    e2: usize,
) -> Result<Vec<usize>, DualAggError> {
    if !tree.edges.contains(&e1) || !tree.edges.contains(&e2) {
        return Err(DualAggError::CutNotRespecting);
    }
    tree_adjacency(state, tree)?; // validates tree shape
    struct MarkProg {
        tree_edges: BTreeSet<u64>,
        special: BTreeSet<u64>,
    }
    impl MaProgram for MarkProg {
        fn rounds(&self) -> usize {
            1
        }
        fn contract(&self, _r: usize, e: &EdgeInfo) -> bool {
            self.tree_edges.contains(&e.edge_id) && !self.special.contains(&e.edge_id)
        }
        fn consensus_op(&self, _r: usize) -> AggOp {
            AggOp::Min
        }
        fn consensus_input(&self, _r: usize, node: &NodeInfo) -> u64 {
            node.node_id
        }
        fn aggregation_op(&self, _r: usize) -> AggOp {
            AggOp::Sum
        }
        fn edge_values(&self, _r: usize, e: &EdgeInfo, _yt: u64, _yh: u64) -> (u64, u64) {
            if self.special.contains(&e.edge_id) {
                (1, 1)
            } else {
                (0, 0)
            }
        }
    }
    let dual = &state.ctx.dual;
    let id1 = dual.edges[e1].2 as u64;
    let id2 = dual.edges[e2].2 as u64;
    let prog = MarkProg {
        tree_edges: tree.edges.iter().map(|&i| dual.edges[i].2 as u64).collect(),
        special: BTreeSet::from([id1, id2]),
    };
    let saved_supers = state.supers.clone();
    let record = state.minor_agg_round(&prog, 0);
    // Supers and their costs; pick the max-cost one (ties: larger super id).
    let mut cost_of: BTreeMap<u64, u64> = BTreeMap::new();
    for (_node, &(s, _y, z)) in &record {
        cost_of.insert(s, z);
    }
    let winner = cost_of
        .iter()
        .map(|(&s, &c)| (c, s))
        .max()
        .map(|(_, s)| s)
        .expect("nonempty");
    // Broadcast the winner: contract everything into one super (consensus
    // with Max over (cost, id)); one more engine round.
    struct BcastProg;
    impl MaProgram for BcastProg {
        fn rounds(&self) -> usize {
            1
        }
        fn contract(&self, _r: usize, _e: &EdgeInfo) -> bool {
            true
        }
        fn consensus_op(&self, _r: usize) -> AggOp {
            AggOp::Max
        }
        fn consensus_input(&self, _r: usize, node: &NodeInfo) -> u64 {
            // (prev z = cost) << 32 | node id: max picks the costliest.
            (node.prev_z << 20) | (node.super_id & 0xfffff)
        }
        fn aggregation_op(&self, _r: usize) -> AggOp {
            AggOp::Max
        }
        fn edge_values(&self, _r: usize, _e: &EdgeInfo, _yt: u64, _yh: u64) -> (u64, u64) {
            (0, 0)
        }
    }
    let super_after = state.supers.clone();
    let _ = state.minor_agg_round(&BcastProg, 0);
    // Undo the broadcast contraction.
    state.supers = super_after;
    // Mark edges incident to the winner super (crossing edges).
    let mut marked = Vec::new();
    for (i, &(a, b, _, _)) in dual.edges.iter().enumerate() {
        if !state.active[i] {
            continue;
        }
        let (sa, sb) = (record[&dual.node_ids[a]].0, record[&dual.node_ids[b]].0);
        if (sa == winner) != (sb == winner) {
            marked.push(i);
        }
    }
    state.supers = saved_supers;
    Ok(marked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{gen_planar, gen_planar_directed};
    use crate::planar::{build_from_document, trace_faces, DocEdge, DocVertex, GraphDocument};
    use rand::{Rng, SeedableRng};

    fn triangle() -> EmbeddedPlanarGraph {
        build_from_document(&GraphDocument {
            directed: false,
            vertices: vec![
                DocVertex { id: 0, rotation: vec![0, 2] },
                DocVertex { id: 1, rotation: vec![1, 0] },
                DocVertex { id: 2, rotation: vec![2, 1] },
            ],
            edges: vec![
                DocEdge { id: 0, tail: 0, head: 1, weight: 1, capacity: 1 },
                DocEdge { id: 1, tail: 1, head: 2, weight: 2, capacity: 2 },
                DocEdge { id: 2, tail: 2, head: 0, weight: 3, capacity: 3 },
            ],
        })
        .unwrap()
    }

    #[test]
    fn face_disjoint_triangle_counts() {
        let g = triangle();
        let fdg = build_face_disjoint(&g);
        assert_eq!(fdg.ghat.vertex_count(), 3 + 6);
        assert_eq!(fdg.ghat.edge_count(), 6 + 6 + 3);
        // Planarity of the face-disjoint graph.
        fdg.ghat.validate_planarity().unwrap();
    }

    #[test]
    fn face_disjoint_er_components_match_faces() {
        for (kind, n, seed) in [("grid", 9, 1u64), ("grid", 20, 2), ("random-triangulation", 16, 3)] {
            let g = gen_planar(kind, n, (1, 5), seed).unwrap();
            let fdg = build_face_disjoint(&g);
            fdg.ghat.validate_planarity().unwrap();
            let fs = trace_faces(&g);
            // E_R subgraph components = faces, each a cycle of |f| copies.
            let mut dsu = crate::oracles::Dsu::new(fdg.ghat.vertex_count());
            for (ei, class) in fdg.class_of.iter().enumerate() {
                if matches!(class, EdgeClass::Region { .. }) {
                    dsu.union(fdg.ghat.edges[ei].tail, fdg.ghat.edges[ei].head);
                }
            }
            let mut comp_sizes: BTreeMap<usize, usize> = BTreeMap::new();
            for ci in 0..fdg.copy_of.len() {
                *comp_sizes.entry(dsu.find(fdg.n_orig + ci)).or_insert(0) += 1;
            }
            let mut by_comp: Vec<usize> = comp_sizes.values().copied().collect();
            by_comp.sort_unstable();
            let mut by_face: Vec<usize> = fs.faces.iter().map(|f| f.len()).collect();
            by_face.sort_unstable();
            assert_eq! (by_comp, by_face, "{kind} n={n}");
            // Components agree with the corner-face assignment.
            for ci in 0..fdg.copy_of.len() {
                for cj in 0..fdg.copy_of.len() {
                    if dsu.find(fdg.n_orig + ci) == dsu.find(fdg.n_orig + cj) {
                        assert_eq!(fdg.corner_face[ci], fdg.corner_face[cj]);
                    }
                }
            }
        }
    }

    #[test]
    fn face_disjoint_degree_one_vertex_self_loop_connector() {
        // Path 0-1: single edge; its connector maps to the dual self-loop.
        let doc = GraphDocument {
            directed: false,
            vertices: vec![
                DocVertex { id: 0, rotation: vec![0] },
                DocVertex { id: 1, rotation: vec![0] },
            ],
            edges: vec![DocEdge { id: 0, tail: 0, head: 1, weight: 1, capacity: 1 }],
        };
        let g = build_from_document(&doc).unwrap();
        let fdg = build_face_disjoint(&g);
        fdg.ghat.validate_planarity().unwrap();
        let ec = fdg.e_c_of_edge[0];
        let (a, b) = (fdg.ghat.edges[ec].tail, fdg.ghat.edges[ec].head);
        // Both connector endpoints lie on the same (only) face.
        assert_eq!(fdg.corner_face[a - fdg.n_orig], fdg.corner_face[b - fdg.n_orig]);
    }

    #[test]
    fn face_disjoint_diameter_bound_on_grid() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let fdg = build_face_disjoint(&g);
        // D = 4 for the 3x3 grid; diameter of the face-disjoint graph <= 3D.
        let mut max_ecc = 0u32;
        for v in 0..fdg.ghat.vertex_count() {
            let mut dist = vec![u32::MAX; fdg.ghat.vertex_count()];
            dist[v] = 0;
            let mut q = VecDeque::from([v]);
            while let Some(x) = q.pop_front() {
                for (_, y) in fdg.ghat.incident(x) {
                    if dist[y] == u32::MAX {
                        dist[y] = dist[x] + 1;
                        q.push_back(y);
                    }
                }
            }
            max_ecc = max_ecc.max(dist.into_iter().max().unwrap());
        }
        assert!(max_ecc <= 12, "diameter {max_ecc} > 3D = 12");
    }

    #[test]
    fn identify_faces_triangle() {
        let g = triangle();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        assert_eq!(ctx.face_ids.id_of_face.len(), 2);
        // Ids are the min copy id of each face, recomputed directly.
        for f in 0..2 {
            let min_copy = ctx
                .fdg
                .copies_of_face(f)
                .into_iter()
                .map(|v| ctx.fdg.ghat.vertex_ids[v])
                .min()
                .unwrap();
            assert_eq!(ctx.face_ids.id_of_face[f], min_copy);
        }
    }

    #[test]
    fn identify_faces_path_has_one_face() {
        let doc = GraphDocument {
            directed: false,
            vertices: vec![
                DocVertex { id: 0, rotation: vec![0] },
                DocVertex { id: 1, rotation: vec![0, 1] },
                DocVertex { id: 2, rotation: vec![1] },
            ],
            edges: vec![
                DocEdge { id: 0, tail: 0, head: 1, weight: 1, capacity: 1 },
                DocEdge { id: 1, tail: 1, head: 2, weight: 1, capacity: 1 },
            ],
        };
        let g = build_from_document(&doc).unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        assert_eq!(ctx.face_ids.id_of_face.len(), 1);
    }

    #[test]
    fn identify_faces_grid_ids_stable() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        assert_eq!(ctx.face_ids.id_of_face.len(), 5);
        for f in 0..5 {
            let min_copy = ctx
                .fdg
                .copies_of_face(f)
                .into_iter()
                .map(|v| ctx.fdg.ghat.vertex_ids[v])
                .min()
                .unwrap();
            assert_eq!(ctx.face_ids.id_of_face[f], min_copy);
        }
        // Corner vertex 0 lies on exactly two faces.
        let corner_faces: BTreeSet<usize> = (0..ctx.fdg.copy_index[0].len())
            .map(|c| ctx.fdg.corner_face[ctx.fdg.copy_index[0][c] - ctx.fdg.n_orig])
            .collect();
        assert_eq!(corner_faces.len(), 2);
    }

    #[test]
    fn pa_on_dual_whole_graph_counts_faces() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        let parts = vec![(0..5).collect::<Vec<_>>()];
        let node_inputs: BTreeMap<usize, u64> = (0..5).map(|f| (f, 1)).collect();
        let out = pa_on_dual(
            &ctx,
            &mut ledger,
            &parts,
            &node_inputs,
            &BTreeMap::new(),
            AggOp::Sum,
            PaScope::Nodes,
        )
        .unwrap();
        assert_eq!(out, vec![5]);
    }

    #[test]
    fn pa_on_dual_min_outgoing_matches_direct_scan() {
        let g = gen_planar("grid", 9, (1, 9), 4).unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        // Each node its own part; min over outgoing edge weights.
        let parts: Vec<Vec<usize>> = (0..5).map(|f| vec![f]).collect();
        let edge_inputs: BTreeMap<usize, u64> = ctx
            .dual
            .edges
            .iter()
            .map(|&(_, _, e, w)| (e, w as u64))
            .collect();
        let out = pa_on_dual(
            &ctx,
            &mut ledger,
            &parts,
            &BTreeMap::new(),
            &edge_inputs,
            AggOp::Min,
            PaScope::OutgoingEdges,
        )
        .unwrap();
        for f in 0..5 {
            let direct = ctx
                .dual
                .edges
                .iter()
                .filter(|&&(a, b, _, _)| (a == f) != (b == f))
                .map(|&(_, _, _, w)| w as u64)
                .min()
                .unwrap();
            assert_eq!(out[f], direct, "face {f}");
        }
    }

    #[test]
    fn pa_on_dual_rejects_disconnected_part() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        // 3x3 grid dual: 4 inner squares + outer face. Two inner squares
        // that only touch diagonally are not adjacent.
        let mut non_adjacent = None;
        'outer: for a in 0..5 {
            for b in (a + 1)..5 {
                let adjacent = ctx
                    .dual
                    .edges
                    .iter()
                    .any(|&(x, y, _, _)| (x, y) == (a, b) || (x, y) == (b, a));
                if !adjacent {
                    non_adjacent = Some((a, b));
                    break 'outer;
                }
            }
        }
        let (a, b) = non_adjacent.expect("3x3 grid has non-adjacent faces");
        let parts = vec![vec![a, b]];
        let err = pa_on_dual(
            &ctx,
            &mut ledger,
            &parts,
            &BTreeMap::new(),
            &BTreeMap::new(),
            AggOp::Sum,
            PaScope::Nodes,
        )
        .unwrap_err();
        assert!(matches!(err, DualAggError::InvalidDualPartition { .. }));
    }

    struct SeededProg {
        rounds: usize,
        seed: u64,
    }

    fn mix(seed: u64, a: u64, b: u64) -> u64 {
        let mut h = seed ^ 0x9e3779b97f4a7c15;
        for x in [a, b] {
            h ^= x.wrapping_mul(0xff51afd7ed558ccd);
            h = h.rotate_left(31).wrapping_mul(0xc4ceb9fe1a85ec53);
        }
        h
    }

    impl MaProgram for SeededProg {
        fn rounds(&self) -> usize {
            self.rounds
        }
        fn contract(&self, r: usize, e: &EdgeInfo) -> bool {
            mix(self.seed, r as u64, e.edge_id) % 3 == 0
        }
        fn consensus_op(&self, r: usize) -> AggOp {
            if r % 2 == 0 { AggOp::Min } else { AggOp::Sum }
        }
        fn consensus_input(&self, r: usize, node: &NodeInfo) -> u64 {
            mix(self.seed, node.node_id, r as u64) % 1000 + node.prev_y % 7
        }
        fn aggregation_op(&self, r: usize) -> AggOp {
            if r % 2 == 0 { AggOp::Sum } else { AggOp::Min }
        }
        fn edge_values(&self, r: usize, e: &EdgeInfo, y_tail: u64, y_head: u64) -> (u64, u64) {
            (
                mix(self.seed, e.edge_id, y_head ^ r as u64) % 512,
                mix(self.seed, e.edge_id ^ 1, y_tail ^ r as u64) % 512,
            )
        }
    }

    #[test]
    fn engine_matches_reference_on_trivial_rounds() {
        let g = triangle();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        // Contract nothing; consensus MIN of ids: each node learns own id.
        struct NoContract;
        impl MaProgram for NoContract {
            fn rounds(&self) -> usize {
                1
            }
            fn contract(&self, _r: usize, _e: &EdgeInfo) -> bool {
                false
            }
            fn consensus_op(&self, _r: usize) -> AggOp {
                AggOp::Min
            }
            fn consensus_input(&self, _r: usize, node: &NodeInfo) -> u64 {
                node.node_id
            }
            fn aggregation_op(&self, _r: usize) -> AggOp {
                AggOp::Sum
            }
            fn edge_values(&self, _r: usize, _e: &EdgeInfo, _a: u64, _b: u64) -> (u64, u64) {
                (1, 1)
            }
        }
        let mut state = MinorState::new(&ctx);
        let out = state.run_program(&NoContract);
        let reference = run_reference(&ctx.dual, &state.active, &NoContract);
        assert_eq!(out, reference);
        for (&node, &(s, y, _)) in &out[0] {
            assert_eq!(s, node);
            assert_eq!(y, node);
        }
    }

    #[test]
    fn engine_contract_all_gives_global_sum() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        struct AllOnes;
        impl MaProgram for AllOnes {
            fn rounds(&self) -> usize {
                1
            }
            fn contract(&self, _r: usize, _e: &EdgeInfo) -> bool {
                true
            }
            fn consensus_op(&self, _r: usize) -> AggOp {
                AggOp::Sum
            }
            fn consensus_input(&self, _r: usize, _node: &NodeInfo) -> u64 {
                1
            }
            fn aggregation_op(&self, _r: usize) -> AggOp {
                AggOp::Sum
            }
            fn edge_values(&self, _r: usize, _e: &EdgeInfo, _a: u64, _b: u64) -> (u64, u64) {
                (0, 0)
            }
        }
        let mut state = MinorState::new(&ctx);
        let out = state.run_program(&AllOnes);
        let min_id = *ctx.dual.node_ids.iter().min().unwrap();
        for (_, &(s, y, _)) in &out[0] {
            assert_eq!(s, min_id);
            assert_eq!(y, 5);
        }
        assert_eq!(out, run_reference(&ctx.dual, &state.active, &AllOnes));
    }

    #[test]
    fn engine_matches_reference_on_random_programs() {
        for trial in 0..20u64 {
            let n = 9 + (trial as usize % 3) * 7;
            let kind = if trial % 2 == 0 { "grid" } else { "random-triangulation" };
            let g = gen_planar(kind, n, (1, 9), trial).unwrap();
            let mut ledger = RoundLedger::new();
            let ctx = build_dual_context(&g, &mut ledger);
            let prog = SeededProg { rounds: 3, seed: trial * 31 + 7 };
            let mut state = MinorState::new(&ctx);
            let out = state.run_program(&prog);
            let reference = run_reference(&ctx.dual, &state.active, &prog);
            assert_eq!(out, reference, "{kind} trial {trial}");
        }
    }

    #[test]
    fn orientation_bounds_out_neighbors() {
        for seed in 0..5u64 {
            let g = gen_planar("random-triangulation", 30, (1, 9), seed).unwrap();
            let mut ledger = RoundLedger::new();
            let ctx = build_dual_context(&g, &mut ledger);
            let mut state = MinorState::new(&ctx);
            let o = orient_and_deactivate(&mut state, AggOp::SignedMin);
            let dual = &ctx.dual;
            let mut out_nbrs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); dual.node_count()];
            for (i, &(a, b, _, _)) in dual.edges.iter().enumerate() {
                if a == b {
                    continue;
                }
                let (from, to) = if o.toward_head[i] { (a, b) } else { (b, a) };
                out_nbrs[from].insert(to);
            }
            for (v, s) in out_nbrs.iter().enumerate() {
                assert!(s.len() <= 9, "node {v} has {} out-neighbors", s.len());
            }
        }
    }

    #[test]
    fn deactivation_merges_parallels_min_and_sum() {
        // Directed 3-cycle: dual is two nodes with three parallel edges.
        let g = build_from_document(&GraphDocument {
            directed: true,
            vertices: vec![
                DocVertex { id: 0, rotation: vec![0, 2] },
                DocVertex { id: 1, rotation: vec![1, 0] },
                DocVertex { id: 2, rotation: vec![2, 1] },
            ],
            edges: vec![
                DocEdge { id: 0, tail: 0, head: 1, weight: 1, capacity: 1 },
                DocEdge { id: 1, tail: 1, head: 2, weight: 2, capacity: 2 },
                DocEdge { id: 2, tail: 2, head: 0, weight: 3, capacity: 3 },
            ],
        })
        .unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        let mut state = MinorState::new(&ctx);
        let o = orient_and_deactivate(&mut state, AggOp::SignedMin);
        let active: Vec<usize> = (0..3).filter(|&i| o.active[i]).collect();
        assert_eq!(active.len(), 1);
        assert_eq!(o.merged_weight[active[0]], 1);

        let mut state2 = MinorState::new(&ctx);
        let o2 = orient_and_deactivate(&mut state2, AggOp::Sum);
        let active2: Vec<usize> = (0..3).filter(|&i| o2.active[i]).collect();
        assert_eq!(o2.merged_weight[active2[0]], 6);
    }

    #[test]
    fn deactivation_matches_direct_dedup_on_grid_dual() {
        let g = gen_planar_directed("grid", 9, (1, 9), 8).unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        let mut state = MinorState::new(&ctx);
        let o = orient_and_deactivate(&mut state, AggOp::SignedMin);
        let view = simple_view(&state, &o);
        // Direct dedup.
        let mut expected: BTreeMap<(usize, usize), i64> = BTreeMap::new();
        for &(a, b, _, w) in &ctx.dual.edges {
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            expected
                .entry(key)
                .and_modify(|acc| *acc = (*acc).min(w))
                .or_insert(w);
        }
        let mut got: BTreeMap<(usize, usize), i64> = BTreeMap::new();
        for &(a, b, w) in &view.edges {
            got.insert((a.min(b), a.max(b)), w);
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn store_virtual_graph_rejects_over_budget() {
        let g = triangle();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        let mut state = MinorState::new(&ctx);
        let err = store_virtual_graph(
            &mut state,
            1,
            vec![100, 101],
            vec![],
            &[],
            vec![],
            AggOp::Sum,
        )
        .unwrap_err();
        assert!(matches!(err, DualAggError::TooManyVirtualNodes { .. }));
    }

    #[test]
    fn store_virtual_node_connected_to_all() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        let mut state = MinorState::new(&ctx);
        let raw: Vec<(usize, usize, i64)> = (0..5).map(|f| (f, 0, 7)).collect();
        let vg = store_virtual_graph(&mut state, 4, vec![1000], vec![], &raw, vec![], AggOp::Sum)
            .unwrap();
        assert_eq!(vg.real_virtual.len(), 5);
        assert!(vg.real_virtual.iter().all(|&(_, _, w)| w == 7));
    }

    #[test]
    fn subtree_sum_path_and_star() {
        // Use the dual of a 3x3 grid: pick a spanning tree of the dual.
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        let mut dsu = crate::oracles::Dsu::new(5);
        let mut tree_edges = Vec::new();
        for (i, &(a, b, _, _)) in ctx.dual.edges.iter().enumerate() {
            if dsu.union(a, b) {
                tree_edges.push(i);
            }
        }
        let tree = DualTree { root: 0, edges: tree_edges };
        let mut state = MinorState::new(&ctx);
        let sums = subtree_sum(&mut state, &tree, &[1, 1, 1, 1, 1]).unwrap();
        assert_eq!(sums[0], 5);
        // Compare against a direct traversal.
        let parent = root_tree(&mut state, &tree).unwrap();
        let mut direct = vec![1i64; 5];
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by_key(|&v| {
            let mut d = 0;
            let mut cur = v;
            while let Some((p, _)) = parent[cur] {
                cur = p;
                d += 1;
            }
            std::cmp::Reverse(d)
        });
        for &v in &order {
            if let Some((p, _)) = parent[v] {
                direct[p] += direct[v];
            }
        }
        assert_eq!(sums, direct);
    }

    #[test]
    fn subtree_sum_rejects_cycle() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        let all: Vec<usize> = (0..ctx.dual.edges.len()).collect();
        let tree = DualTree { root: 0, edges: all };
        let mut state = MinorState::new(&ctx);
        assert_eq!(
            subtree_sum(&mut state, &tree, &[0; 5]).unwrap_err(),
            DualAggError::NotATree
        );
    }

    #[test]
    fn mark_cut_edges_bridge() {
        // Path a-b-c in the primal: dual is one node with two self-loops, so
        // use a primal-side test instead: the dual of a 2x2 grid square.
        let g = gen_planar("grid", 4, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        // Dual: 2 nodes (inside, outside) with 4 parallel edges. Tree: one
        // edge; 1-respecting cut on it.
        let tree = DualTree { root: 0, edges: vec![0] };
        let mut state = MinorState::new(&ctx);
        let marked = mark_cut_edges(&mut state, &tree, 0, 0).unwrap();
        // All four dual edges cross the cut.
        assert_eq!(marked.len(), 4);
    }

    #[test]
    fn mark_cut_edges_two_respecting_matches_direct() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        for trial in 0..10u64 {
            let g = gen_planar("random-triangulation", 12, (1, 9), trial).unwrap();
            let mut ledger = RoundLedger::new();
            let ctx = build_dual_context(&g, &mut ledger);
            let n = ctx.dual.node_count();
            let mut dsu = crate::oracles::Dsu::new(n);
            let mut tree_edges = Vec::new();
            for (i, &(a, b, _, _)) in ctx.dual.edges.iter().enumerate() {
                if a != b && dsu.union(a, b) {
                    tree_edges.push(i);
                }
            }
            let e1 = tree_edges[rng.gen_range(0..tree_edges.len())];
            let e2 = tree_edges[rng.gen_range(0..tree_edges.len())];
            let tree = DualTree { root: 0, edges: tree_edges.clone() };
            let mut state = MinorState::new(&ctx);
            let marked = mark_cut_edges(&mut state, &tree, e1, e2).unwrap();
            // Direct: classify nodes by components of tree minus {e1, e2};
            // the cut side is the component incident to both e1 and e2.
            let mut dsu2 = crate::oracles::Dsu::new(n);
            for &i in &tree_edges {
                if i != e1 && i != e2 {
                    let (a, b, _, _) = ctx.dual.edges[i];
                    dsu2.union(a, b);
                }
            }
            let mut cost: BTreeMap<usize, usize> = BTreeMap::new();
            for &i in &[e1, e2] {
                let (a, b, _, _) = ctx.dual.edges[i];
                *cost.entry(dsu2.find(a)).or_insert(0) += 1;
                *cost.entry(dsu2.find(b)).or_insert(0) += 1;
            }
            let winner = cost.iter().map(|(&c, &k)| (k, c)).max().unwrap().1;
            let expected: BTreeSet<usize> = ctx
                .dual
                .edges
                .iter()
                .enumerate()
                .filter(|&(_, &(a, b, _, _))| {
                    (dsu2.find(a) == winner) != (dsu2.find(b) == winner)
                })
                .map(|(i, _)| i)
                .collect();
            let got: BTreeSet<usize> = marked.into_iter().collect();
            assert_eq!(got, expected, "trial {trial}");
        }
    }

    #[test]
    fn mark_cut_edges_rejects_non_tree_edge() {
        let g = gen_planar("grid", 9, (1, 1), 0).unwrap();
        let mut ledger = RoundLedger::new();
        let ctx = build_dual_context(&g, &mut ledger);
        let mut dsu = crate::oracles::Dsu::new(5);
        let mut tree_edges = Vec::new();
        let mut non_tree = None;
        for (i, &(a, b, _, _)) in ctx.dual.edges.iter().enumerate() {
            if a != b && dsu.union(a, b) {
                tree_edges.push(i);
            } else if a != b {
                non_tree = Some(i);
            }
        }
        let bad = non_tree.unwrap();
        let tree = DualTree { root: 0, edges: tree_edges };
        let mut state = MinorState::new(&ctx);
        assert_eq!(
            mark_cut_edges(&mut state, &tree, bad, bad).unwrap_err(),
            DualAggError::CutNotRespecting
        );
    }
}
