//! Critical cable-graph percolation on finite boxes of Z^d.
//!
//! Sign clusters of the Gaussian free field on the cable graph, the
//! random-walk loop soup at intensity 1/2, intrinsic-metric statistics,
//! effective resistance and random walks on the resulting clusters, plus
//! deterministic lattice-sum checks and the Monte Carlo experiment suite.

pub mod cluster;
pub mod error;
pub mod estimators;
pub mod field;
pub mod lattice;
pub mod loopsoup;
pub mod oracle;
pub mod resistance;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use lattice::BoxGeometry;
