//! Reduced-order models: offline assembly of parameter-independent
//! operators, the hyperreduced Galerkin-Newton solver, the full-quadrature
//! Galerkin-Newton reference and error measures against the full model.

mod compare;
mod newton;
mod offline;
mod online;
mod reference;

pub use compare::{compare_errors, ErrorSeries};
pub use offline::{offline_assemble, InitialProjector, InterpolatedTerm, NonlinearSystems, RomOperators};
pub use online::{online_residual, online_solve, online_step};
pub use reference::GalerkinReference;

/// One reduced implicit step.
#[derive(Debug, Clone)]
pub struct RomStep {
    pub alpha: nalgebra::DVector<f64>,
    /// Number of linear solves performed.
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}
