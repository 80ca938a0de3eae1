//! Grids, nodal hat bases, projectors and inner-product (Gram) matrices.

mod gram;
mod grid;
mod projector;

pub use gram::{assemble_gram, discrete_inner, discrete_norm, GramMatrix};
pub use grid::{build_tensor_grid, Grid};
pub use projector::{
    build_projector, interpolation_error_l2, projection_order_estimate, BoundaryCondition,
    InterpolatedField, Projector,
};
