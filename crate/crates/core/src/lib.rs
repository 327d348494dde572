//! Harmonic analysis of functions on finite product probability spaces.
//!
//! The crate computes Fourier (multilinear) and Efron–Stein decompositions,
//! noise stability under coordinatewise correlated couplings, maximal
//! correlation between correlated spaces, and the decay of noise stability
//! through hierarchical compositions of non-linear functions. A site
//! percolation module provides the crossing-event indicator on the
//! triangular lattice with Monte Carlo and exact spectral tools.
//!
//! Tables are indexed in mixed-radix order with coordinate 0 as the fastest
//! varying digit. On binary supports this makes a table index coincide with
//! the bitmask of coordinates taking their larger support value, which is
//! also the bitmask convention used for Fourier coefficients.

pub mod boolean;
pub mod descriptor;
pub mod efron_stein;
mod error;
pub mod fourier;
pub mod hierarchy;
pub mod maxcorr;
pub mod percolation;
pub mod product_space;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use fourier::{FourierExpansion, FunctionTable};
pub use product_space::{CorrelatedPair, FiniteDistribution, ProductDomain, ProductSpace};

/// Tolerance for identities that hold exactly on dyadic inputs.
pub const EXACT_TOL: f64 = 1e-9;

/// Tolerance for identities checked on user-supplied floating point tables.
pub const USER_TOL: f64 = 1e-6;
