//! Reduced-order modeling of parametrized, time-dependent nonlinear PDEs.
//!
//! The offline stage solves a Backward-Euler finite element model over a
//! parameter sample ([`fom`]), compresses the trajectories with proper
//! orthogonal decomposition ([`pod`]) and builds first-order empirical
//! interpolation systems for every nonlinear integrand ([`foeim`]). The
//! resulting parameter-independent operators ([`rom::RomOperators`]) drive
//! an online Galerkin-Newton solver whose cost does not depend on the size
//! of the finite element space.

pub mod error;
pub mod experiment;
pub mod fem;
pub mod foeim;
pub mod fom;
pub mod linalg;
pub mod nonlinear;
pub mod pod;
pub mod problem;
pub mod quadrature;
pub mod rom;
pub mod snapshots;
pub mod store;

pub use error::{Error, Result};
pub use fem::{BcKind, FeSpace, Mesh};
pub use nonlinear::Nonlinearity;
pub use problem::{ProblemDef, TimeGrid};
