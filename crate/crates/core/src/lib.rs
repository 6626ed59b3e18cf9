//! Numerical laboratory for the regional fractional Laplacian with
//! Neumann-type (regional) interactions.
//!
//! The crate discretizes the halved Gagliardo form on interval and rectangle
//! meshes with P1 elements, computes minimal-energy extremals of the quotient
//! `(½[u]²_{s} + ‖u‖²_2) / ‖u‖²_q` on contracted domains `ε·Ω`, linearizes the
//! rescaled Euler–Lagrange equation around them, and scans `ε` for the loss of
//! uniqueness, comparing it with the Poincaré-based lower bound.

// `!(x > 0.0)` also rejects NaN, which `x <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod assembly;
mod descent;
pub mod error;
pub mod extremal;
pub mod function;
pub mod linearization;
pub mod mesh;
pub mod params;
pub mod poincare;
pub mod quadrature;
pub mod scan;

pub use assembly::{
    assemble_gagliardo, assemble_mass, lq_gradient, lq_norm, EnergyForms, QuadratureOptions,
};
pub use error::{Error, Result};
pub use extremal::{
    distance_to_constant, minimize_rayleigh, multistart_extremals, rayleigh_quotient, residual_map,
    scaled_quotient, weak_residual, ExtremalResult, Multistart, Preconditioner, SolverOptions,
};
pub use function::DiscreteFunction;
pub use linearization::{
    assemble_jacobian, tangent_basis, tangent_smallest_eig, TangentBasis, TangentSpectrum,
};
pub use mesh::{build_interval_mesh, build_rect_mesh, scale_mesh, Mesh};
pub use params::FractionalParams;
pub use poincare::{
    epsilon0_bound_value, epsilon0_lower_bound, poincare_constant, EpsilonBound, PoincareResult,
};
pub use scan::{
    eps_sweep, estimate_eps0, geometric_grid, write_csv, DetectionMode, Eps0Estimate, ScanRecord,
    SweepConfig,
};
