//! Simulation and analysis of networks of coupled rigid bodies and heavy tops.
//!
//! Each node carries a body whose state lives in the dual of so(3) (rigid
//! body) or of se(3) (heavy top). Nodes interact either through their
//! momenta or through their positions, with interaction sums normalised by
//! node degree. The crate provides conservative and dissipative vector
//! fields, deterministic and stochastic integrators, relative equilibria with
//! their linear and energy-Casimir stability, Gibbs-ensemble estimators,
//! mean-field solvers and reproducible temperature sweeps.

pub mod equilibria;
pub mod error;
pub mod exec;
pub mod graph;
pub mod integrate;
pub mod lie;
pub mod model;
pub mod statmech;
pub mod sweep;

pub use error::{Error, Result};
pub use graph::{Network, Tensor, TensorSpec};
pub use lie::AlgebraVector;
pub use model::{CasimirLevels, Coupling, LatticeState};
