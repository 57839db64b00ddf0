//! Simulation and certification of networked control systems whose
//! transmissions are time-regularized, deadband event-triggered and scheduled
//! by try-once-discard or round-robin protocols (classic and modified).
//!
//! The numerical core is generic over the [`Scalar`] type. The aliases at the
//! crate root fix it to `f64`, which is what the file formats and the
//! benchmark harness use.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod certify;
pub mod error;
pub mod hybrid_sim;
pub mod io;
pub mod mati;
pub mod numerics;
pub mod protocols;
mod scalar;

pub use error::Error;
pub use scalar::{lit, Scalar};

pub use protocols::{NodePartition, Protocol, ProtocolKind};

/// Dense row-major matrix over `f64`.
pub type Matrix = numerics::Matrix<f64>;
/// Symmetric matrix over `f64`.
pub type SymMatrix = numerics::SymMatrix<f64>;
/// Closed-loop linear model over `f64`.
pub type LinearNcsModel = certify::LinearNcsModel<f64>;
/// Lyapunov certificate over `f64`.
pub type Certificate = certify::Certificate<f64>;
/// MATI parameter triple over `f64`.
pub type MatiParams = mati::MatiParams<f64>;
/// Inter-transmission parameter policy over `f64`.
pub type LambdaPolicy = mati::LambdaPolicy<f64>;
/// Hybrid state over `f64`.
pub type HybridState = hybrid_sim::HybridState<f64>;
/// Trigger configuration over `f64`.
pub type TriggerConfig = hybrid_sim::TriggerConfig<f64>;
/// Recorded hybrid arc over `f64`.
pub type Trajectory = hybrid_sim::Trajectory<f64>;
