//! Inclusion process on the complete graph, its Dirichlet-process limit and
//! the Fleming-Viot dual machinery used to bound the distance between them.
//!
//! Every quantity that can be computed exactly (stationary laws, moments,
//! partition laws, Stein solutions and their derivatives) has an exact
//! route; Monte Carlo routes exist for sizes beyond enumeration.

pub mod bounds;
pub mod dirichlet;
pub mod dual;
pub mod error;
pub mod harness;
pub mod inclusion;
pub mod measures;
pub mod partitions;
pub mod rate_index;
pub mod rng;

pub use error::{Error, Result};
