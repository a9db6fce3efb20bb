//! Shared numerical kernels: dense matrices, matrix exponential, deterministic
//! ODE integration, eigenvalue/singular-value extraction, seeded random streams.

mod expm;
mod grid;
mod matrix;
mod ode;
mod rng;

pub use expm::mat_exp;
pub use grid::{MatrixPath, TimeGrid, VectorPath};
pub use matrix::{is_finite_matrix, min_eig, min_singular_value, symmetrize, symmetry_defect};
pub use ode::integrate_backward_ode;
pub use rng::{RandomStreams, StreamPurpose};

/// Dense real matrix used for all coefficient algebra.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
