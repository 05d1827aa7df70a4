//! Gauges, regions, finite lattice graphs, C-cores and the wedge summation
//! criteria. All logarithms are natural.

pub mod core;
pub mod criteria;
pub mod gauge;
pub mod graph;
pub mod region;

pub use self::core::{c_core, c_core_mask, check_subwedge_in_core, core_predicate, SubwedgeContainment};
pub use criteria::{
    classify_convergence, classify_gauge, hm_partial_sum, lyons_partial_sum, partial_sums,
    Classification, Convergence, Criterion, TailBound, TailBounds, TailOracle,
};
pub use gauge::{regularize_gauge, shifted_half_gauge, GaugeFunction, GaugeKind};
pub use graph::{l1_distance, linf_distance, EdgeId, LatticeGraph, VertexId, UNREACHED};
pub use region::{RegionSpec, Shape};
