//! Workbench for distributed planar-graph algorithms that run on the dual
//! graph: rotation-system embeddings, a round-accounting CONGEST simulator,
//! part-wise and minor aggregation on the dual via the face-disjoint graph,
//! a bounded-diameter decomposition with dual bags, dual distance labels,
//! and the flow/cut/girth algorithms built on top of them. Every algorithm
//! has a centralized brute-force oracle next to it for verification.

pub mod bdd;
pub mod dual_agg;
pub mod flow;
pub mod global_cut;
pub mod labeling;
pub mod oracles;
pub mod planar;
pub mod shortcuts;
pub mod sim;

pub use planar::{
    build_dual, trace_faces, Dart, DualGraph, EmbeddedPlanarGraph, FaceStructure, PlanarError,
    RotationSystem,
};
pub use sim::{RoundLedger, SimError, SimNetwork};
