//! Small numerical kernel shared by the rest of the crate: dense matrices,
//! fixed-step RK4 with event localization, and a Jacobi eigensolver.

mod eigen;
mod matrix;
mod ode;

use thiserror::Error;

pub use eigen::{spectral_norm, sym_eigenvalues};
pub use matrix::{norm, Matrix, SymMatrix};
pub use ode::{
    integrate_fixed, locate_event, refine_crossing, rk4_step, FnField, Rk4, VectorField, DEFAULT_STEP, MAX_BISECTIONS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("non-finite derivative at t = {t}")]
    NonFinite { t: f64 },
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("invalid integration request: {0}")]
    InvalidRequest(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}
