//! Simulation and numeric verification of a percolating Poisson hard-sphere
//! construction in high dimension.
//!
//! The crate grows clusters of tangent spheres on a decorated hexagonal
//! lattice, layer by layer, on top of a lazily sampled Poisson process, and
//! checks the closed-form bounds that guarantee the growth succeeds.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod bounds;
pub mod construction;
pub mod geometry;
pub mod hexlattice;
pub mod percolation2d;
pub mod rng;
pub mod sampler;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{Closure, Point, Region, VolumeEstimate, DELTA, EPS, MU};
pub use hexlattice::{StarLattice, StarVertex, VertexKind};
pub use sampler::{PoissonPoint, RegionRegistry};
