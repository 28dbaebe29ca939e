//! LOD numerical homogenization for spatial network models.

pub mod audit;
pub mod error;
pub mod interp;
pub mod lod;
pub mod mesh;
pub mod netgen;
pub mod network;
pub mod operators;
pub mod problem;
pub mod solvers;
pub mod sparse;
pub mod study;

pub use error::{Error, Result};
pub use network::SpatialNetwork;
