//! Percolation on lattice wedges: transience criteria for gauge functions,
//! C-cores, gaps and bridges in percolation clusters, flow energies,
//! effective resistance and block renormalization, plus a reproducible
//! experiment driver.

pub mod bridging_transport;
pub mod chemical_distance;
pub mod cluster_analysis;
pub mod error;
pub mod experiments;
pub mod flows_energy;
pub mod lattice_geometry;
pub mod percolation;
pub mod renormalization;
pub mod resistance_solver;
pub mod stats;

pub use error::{Error, Result};
