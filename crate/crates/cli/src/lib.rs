//! Front end for `ncs-core`: model ingestion, seeded deadband sweeps over the
//! batch-reactor benchmark, the dwell-bound table, and CSV/SVG output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod plot;
pub mod sweep;
pub mod table;

use ncs_core::hybrid_sim::simulate;
use ncs_core::io::ModelSpec;
use ncs_core::{Certificate, LambdaPolicy, Protocol, ProtocolKind, Trajectory, TriggerConfig};

pub use config::{parse_deadbands, ExperimentConfig, LambdaChoice};
pub use error::CliError;
pub use sweep::{run_sweep, SweepRow, SweepSummary};
pub use table::{table1, Table1Row};

/// Fully recorded run from the seeded initial condition.
#[allow(clippy::too_many_arguments)]
pub fn simulate_seed(
    spec: &ModelSpec,
    cert: &Certificate,
    kind: ProtocolKind,
    d: f64,
    seed: u64,
    horizon: f64,
    step: f64,
    policy: LambdaPolicy,
) -> Result<Trajectory, CliError> {
    let mut cfg = TriggerConfig::new(d, Protocol::new(kind, spec.model.partition.clone()), horizon);
    cfg.step = step;
    cfg.lambda_policy = policy;
    let (x0, e0) = sweep::initial_condition(seed, spec.model.n_x(), spec.model.n_e());
    simulate(&spec.model, cert, &cfg, &x0, &e0).map_err(|source| CliError::Run { protocol: kind, d, seed, source })
}
