//! Perturbed-lattice trap models: point-process sampling, emptiness
//! probabilities, Dirichlet–Schrödinger eigenvalues on punched domains,
//! Feynman–Kac survival, density of states and the density-box classifier.

pub mod coarsegrain;
pub mod dos;
pub mod emptiness;
pub mod error;
pub mod geometry;
pub mod lattice;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod spectral;
pub mod survival;

pub use error::{Result, TrapError};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
