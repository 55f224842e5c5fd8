//! Least-squares discretization (LSQD) of elliptic boundary value problems.
//!
//! Each point of a cloud carries a local polynomial expansion. PDE,
//! continuity and boundary equations written at neighboring points are stacked
//! into one overdetermined sparse system whose stabilized normal equations are
//! solved with preconditioned conjugate gradients.
//!
//! The usual flow is [`grid`] → [`neighborhood`] → [`assembly`] → [`solver`] →
//! [`analysis`], which [`pipeline::run_case`] strings together.

pub mod analysis;
pub mod assembly;
pub mod basis;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod neighborhood;
pub mod pipeline;
pub mod problems;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
pub use geometry::{BoundingBox, DomainKind, LevelSetDomain, Point};
