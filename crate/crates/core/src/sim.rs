//! Deterministic synchronous round simulator with bandwidth accounting.
//!
//! A round delivers everything sent in the previous round; a handler may put
//! at most B bits on each incident edge direction per round. Algorithms that
//! need to move larger payloads chunk them so a b-bit message occupies
//! ceil(b/B) rounds on its edge.

use crate::planar::RotationSystem;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("bandwidth exceeded on edge {edge}: sent {bits} bits, limit {limit}")]
    BandwidthExceeded { edge: usize, bits: u32, limit: u32 },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("broadcast item of {bits} bits exceeds bandwidth {limit}")]
    ItemTooLarge { bits: u32, limit: u32 },
}

/// Per-algorithm accounting of simulated rounds and per-edge bit loads.
#[derive(Debug, Clone, Default)]
pub struct RoundLedger {
    pub rounds: u64,
    /// Max bits sent over any single edge direction in any round.
    pub max_edge_bits: u32,
    pub phases: Vec<(String, u64)>,
}

impl RoundLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a phase of `rounds` simulated (or formula-charged) rounds.
    pub fn charge(&mut self, phase: &str, rounds: u64) {
        self.rounds += rounds;
        self.phases.push((phase.to_string(), rounds));
    }

    pub fn observe_edge_bits(&mut self, bits: u32) {
        self.max_edge_bits = self.max_edge_bits.max(bits);
    }

    /// Folds a ledger measured on a derived network (e.g. the face-disjoint
    /// graph) into this one, scaling rounds by the simulation overhead.
    pub fn absorb_scaled(&mut self, phase: &str, other: &RoundLedger, scale: u64) {
        self.charge(phase, other.rounds * scale);
        self.max_edge_bits = self.max_edge_bits.max(other.max_edge_bits);
    }

    pub fn phase_rounds(&self, prefix: &str) -> u64 {
        self.phases
            .iter()
            .filter(|(name, _)| name.starts_with(prefix))
            .map(|(_, r)| r)
            .sum()
    }

    /// Structured text report, one line per phase plus totals.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (name, rounds) in &self.phases {
            out.push_str(&format!("phase {name}: {rounds}\n"));
        }
        out.push_str(&format!(
            "total_rounds {}\nmax_edge_bits {}\n",
            self.rounds, self.max_edge_bits
        ));
        out
    }
}

/// A message is a bit count plus payload words. The bit count is what the
/// bandwidth accounting charges; payloads are word-aligned for convenience.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Message {
    pub bits: u32,
    pub words: Vec<u64>,
}

impl Message {
    pub fn of_words(words: Vec<u64>, bits: u32) -> Message {
        Message { bits, words }
    }
}

pub fn bits_for(n: usize) -> u32 {
    (usize::BITS - n.max(1).leading_zeros()).max(1)
}

/// Synchronous network over the undirected support of a rotation system.
pub struct SimNetwork<'a, S> {
    pub rs: &'a RotationSystem,
    pub bandwidth: u32,
    pub states: Vec<S>,
    inboxes: Vec<Vec<(usize, Message)>>,
    pub ledger: RoundLedger,
}

/// Default bandwidth: c * ceil(log2 n) bits per edge direction per round.
pub fn default_bandwidth(n: usize, c: u32) -> u32 {
    c.max(1) * bits_for(n)
}

impl<'a, S> SimNetwork<'a, S> {
    pub fn new(rs: &'a RotationSystem, bandwidth: u32, init: impl Fn(usize) -> S) -> Self {
        let n = rs.vertex_count();
        SimNetwork {
            rs,
            bandwidth,
            states: (0..n).map(init).collect(),
            inboxes: vec![Vec::new(); n],
            ledger: RoundLedger::new(),
        }
    }

    /// Runs one synchronous round. The handler sees the vertex's inbox
    /// (messages sent to it last round, as (edge index, message)) and returns
    /// its sends. Sends over the per-edge-direction budget are an error.
    pub fn run_round(
        &mut self,
        mut handler: impl FnMut(usize, &mut S, &[(usize, Message)]) -> Vec<(usize, Message)>,
    ) -> Result<(), SimError> {
        let n = self.rs.vertex_count();
        let mut outgoing: Vec<Vec<(usize, Message)>> = vec![Vec::new(); n];
        for v in 0..n {
            let inbox = std::mem::take(&mut self.inboxes[v]);
            let sends = handler(v, &mut self.states[v], &inbox);
            outgoing[v] = sends;
        }
        // Bandwidth check per (vertex, edge) direction.
        for v in 0..n {
            let mut per_edge: std::collections::BTreeMap<usize, u32> = Default::default();
            for (e, m) in &outgoing[v] {
                *per_edge.entry(*e).or_insert(0) += m.bits;
            }
            for (&e, &bits) in &per_edge {
                if bits > self.bandwidth {
                    return Err(SimError::BandwidthExceeded {
                        edge: e,
                        bits,
                        limit: self.bandwidth,
                    });
                }
                self.ledger.observe_edge_bits(bits);
            }
        }
        for v in 0..n {
            for (e, m) in std::mem::take(&mut outgoing[v]) {
                let rec = &self.rs.edges[e];
                let other = if rec.tail == v { rec.head } else { rec.tail };
                self.inboxes[other].push((e, m));
            }
        }
        for inbox in &mut self.inboxes {
            inbox.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
        }
        self.ledger.rounds += 1;
        Ok(())
    }
}

/// BFS spanning tree of the undirected support, built by simulated flooding.
#[derive(Debug, Clone)]
pub struct BfsTree {
    pub root: usize,
    /// Parent edge per vertex (None at the root).
    pub parent_edge: Vec<Option<usize>>,
    pub parent: Vec<Option<usize>>,
    pub depth: Vec<u32>,
    pub max_depth: u32,
    pub children: Vec<Vec<usize>>,
    /// Vertices in BFS order.
    pub order: Vec<usize>,
}

impl BfsTree {
    pub fn is_tree_edge(&self, e: usize) -> bool {
        self.parent_edge.iter().any(|&pe| pe == Some(e))
    }
}

/// Floods a wave from the root; each vertex adopts the first wave it hears,
/// breaking ties by (sender id, edge id). Rounds charged: depth + 1.
pub fn bfs_tree(
    rs: &RotationSystem,
    ledger: &mut RoundLedger,
    root: usize,
) -> Result<BfsTree, SimError> {
    #[derive(Clone)]
    struct St {
        depth: Option<u32>,
        parent: Option<(usize, usize)>, // (vertex, edge)
        announced: bool,
    }
    let n = rs.vertex_count();
    let bw = default_bandwidth(n, 8);
    let mut net = SimNetwork::new(rs, bw, |_| St {
        depth: None,
        parent: None,
        announced: false,
    });
    net.states[root].depth = Some(0);
    let id_bits = bits_for(n);
    loop {
        let vertex_ids = &rs.vertex_ids;
        let mut sent_any = false;
        net.run_round(|v, st, inbox| {
            if st.depth.is_none() {
                // Adopt the best wave, if any arrived.
                let mut best: Option<(u64, usize, u32)> = None; // (sender id, edge, depth)
                for (e, m) in inbox {
                    let sender_depth = m.words[0] as u32;
                    let rec = &rs.edges[*e];
                    let sender = if rec.tail == v { rec.head } else { rec.tail };
                    let key = (vertex_ids[sender], *e, sender_depth);
                    if best.map_or(true, |(bid, be, _)| (key.0, key.1) < (bid, be)) {
                        best = Some(key);
                    }
                }
                if let Some((_sid, e, d)) = best {
                    let sender = {
                        let rec = &rs.edges[e];
                        if rec.tail == v {
                            rec.head
                        } else {
                            rec.tail
                        }
                    };
                    st.depth = Some(d + 1);
                    st.parent = Some((sender, e));
                }
            }
            if st.depth.is_some() && !st.announced {
                st.announced = true;
                sent_any = true;
                let d = st.depth.unwrap() as u64;
                return rs.rotations[v]
                    .iter()
                    .map(|&e| (e, Message::of_words(vec![d], id_bits)))
                    .collect();
            }
            Vec::new()
        })?;
        if !sent_any {
            break;
        }
    }
    if net.states.iter().any(|s| s.depth.is_none()) {
        return Err(SimError::Disconnected);
    }
    let parent: Vec<Option<usize>> = net.states.iter().map(|s| s.parent.map(|p| p.0)).collect();
    let parent_edge: Vec<Option<usize>> =
        net.states.iter().map(|s| s.parent.map(|p| p.1)).collect();
    let depth: Vec<u32> = net.states.iter().map(|s| s.depth.unwrap()).collect();
    let max_depth = depth.iter().copied().max().unwrap_or(0);
    let mut children = vec![Vec::new(); n];
    for v in 0..n {
        if let Some(p) = parent[v] {
            children[p].push(v);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (depth[v], rs.vertex_ids[v]));
    ledger.charge("bfs_tree", net.ledger.rounds);
    ledger.max_edge_bits = ledger.max_edge_bits.max(net.ledger.max_edge_bits);
    Ok(BfsTree {
        root,
        parent_edge,
        parent,
        depth,
        max_depth,
        children,
        order,
    })
}

/// Floods k distinct items over the tree with duplicate suppression: a vertex
/// forwards a given item at most once. All vertices end up holding the
/// de-duplicated item set. Items must fit in one round's budget each.
pub fn pipelined_broadcast(
    rs: &RotationSystem,
    ledger: &mut RoundLedger,
    tree: &BfsTree,
    items: &[(usize, Message)],
    bandwidth: u32,
) -> Result<(u64, Vec<Vec<Message>>), SimError> {
    for (_, m) in items {
        if m.bits > bandwidth {
            return Err(SimError::ItemTooLarge {
                bits: m.bits,
                limit: bandwidth,
            });
        }
    }
    let n = rs.vertex_count();
    // Tree adjacency.
    let mut nbrs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n]; // (vertex, edge)
    for v in 0..n {
        if let (Some(p), Some(pe)) = (tree.parent[v], tree.parent_edge[v]) {
            nbrs[v].push((p, pe));
            nbrs[p].push((v, pe));
        }
    }
    for l in &mut nbrs {
        l.sort();
    }
    let mut held: Vec<Vec<Message>> = vec![Vec::new(); n];
    let mut queues: Vec<Vec<std::collections::VecDeque<Message>>> = (0..n)
        .map(|v| vec![Default::default(); nbrs[v].len()])
        .collect();
    let mut rounds = 0u64;
    // Seed items at their holders.
    for (v, m) in items {
        if !held[*v].contains(m) {
            held[*v].push(m.clone());
            for qi in 0..nbrs[*v].len() {
                queues[*v][qi].push_back(m.clone());
            }
        }
    }
    loop {
        let mut deliveries: Vec<(usize, Message)> = Vec::new();
        let mut any = false;
        for v in 0..n {
            for (qi, &(u, _e)) in nbrs[v].iter().enumerate() {
                let mut budget = bandwidth;
                while let Some(front) = queues[v][qi].front() {
                    if front.bits > budget {
                        break;
                    }
                    budget -= front.bits;
                    ledger.observe_edge_bits(bandwidth - budget);
                    let m = queues[v][qi].pop_front().unwrap();
                    deliveries.push((u, m));
                    any = true;
                }
            }
        }
        if !any {
            break;
        }
        rounds += 1;
        deliveries.sort();
        for (v, m) in deliveries {
            if !held[v].contains(&m) {
                held[v].push(m.clone());
                for (qi, _) in nbrs[v].iter().enumerate() {
                    queues[v][qi].push_back(m.clone());
                }
            }
        }
    }
    ledger.charge("pipelined_broadcast", rounds);
    for set in &mut held {
        set.sort();
    }
    Ok((rounds, held))
}

/// Associative-commutative aggregation operators over fixed-width words.
#[derive(Clone, Copy, Debug)]
pub enum AggOp {
    Min,
    Max,
    Sum,
    Or,
    And,
    SignedMin,
    SignedMax,
    /// User-supplied operator with its identity element.
    Custom(fn(u64, u64) -> u64, u64),
}

impl AggOp {
    pub fn identity(self) -> u64 {
        match self {
            AggOp::Min => u64::MAX,
            AggOp::Max => 0,
            AggOp::Sum => 0,
            AggOp::Or => 0,
            AggOp::And => u64::MAX,
            AggOp::SignedMin => i64::MAX as u64,
            AggOp::SignedMax => i64::MIN as u64,
            AggOp::Custom(_, id) => id,
        }
    }

    pub fn apply(self, a: u64, b: u64) -> u64 {
        match self {
            AggOp::Min => a.min(b),
            AggOp::Max => a.max(b),
            AggOp::Sum => a.wrapping_add(b),
            AggOp::Or => a | b,
            AggOp::And => a & b,
            AggOp::SignedMin => ((a as i64).min(b as i64)) as u64,
            AggOp::SignedMax => ((a as i64).max(b as i64)) as u64,
            AggOp::Custom(f, _) => f(a, b),
        }
    }
}

/// Converge-cast: the root learns the aggregate of all per-vertex inputs.
/// A vertex reports upward once all children have reported.
pub fn converge_cast(
    rs: &RotationSystem,
    ledger: &mut RoundLedger,
    tree: &BfsTree,
    op: AggOp,
    inputs: &[u64],
) -> (u64, u64) {
    let n = rs.vertex_count();
    let mut pending_children: Vec<usize> = (0..n).map(|v| tree.children[v].len()).collect();
    let mut partial: Vec<u64> = inputs.to_vec();
    let mut reported = vec![false; n];
    let mut rounds = 0u64;
    loop {
        let ready: Vec<usize> = (0..n)
            .filter(|&v| !reported[v] && pending_children[v] == 0 && v != tree.root)
            .collect();
        if ready.is_empty() {
            break;
        }
        rounds += 1;
        ledger.observe_edge_bits(64);
        for v in ready {
            reported[v] = true;
            let p = tree.parent[v].unwrap();
            partial[p] = op.apply(partial[p], partial[v]);
            pending_children[p] -= 1;
        }
    }
    rounds += 1; // root finalizes
    ledger.charge("converge_cast", rounds);
    (partial[tree.root], rounds)
}
