//! P1 finite elements for `-u_t + div(A∇u) = div f` on interface-fitted meshes.

mod assemble;
mod model;
mod recover;
mod sparse;

pub use assemble::{
    assemble_system, element_gradients, energy_norm, error_norms, lumped_mass, solve_elliptic,
    solve_elliptic_on, solve_parabolic, solve_parabolic_on, weak_residual, ErrorNorms, FieldSolution,
    LinearSystemSPD, SolveParams, SolverMeta, TimeGrid, QUAD3, QUAD6,
};
pub use model::{
    CoefficientModel, FieldJet, ForcingModel, Manufactured, Mat2, PiecewiseCoefficients, Poly2,
    PolynomialForcing, RegionCoefficient, TimeProfile,
};
pub use recover::{interface_flux_jump, default_recovery_radius, recover_derivatives, EdgeFlux, FluxJumpReport, Recovered};
pub use sparse::{pcg, CgReport, Csr};

use crate::mesh::MeshError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("coefficient fails the declared ellipticity on element {element} at {point:?}")]
    EllipticityViolation { element: usize, point: [f64; 2] },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("conjugate gradients did not converge: {iterations} iterations, relative residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite on the free block")]
    NotPositiveDefinite,
    #[error("too few region-{region} nodes near {point:?} for a quadratic fit")]
    InsufficientStencil { point: [f64; 2], region: usize },
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[cfg(test)]
mod tests;
