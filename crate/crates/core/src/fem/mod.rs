//! Structured meshes, tensor-product Lagrange spaces and finite element
//! assembly.

mod assembly;
mod mesh;
mod space;

pub use assembly::{
    assemble_linear, assemble_nonlinear, load_vector, project_l2, sample_at_quadrature,
    trace_at_points, BasisTrace, LinearOperators, NonlinearAssembly,
};
pub use mesh::Mesh;
pub use space::{build_space, BcKind, FeSpace};
