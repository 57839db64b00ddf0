//! Hybrid model of the networked loop with state `ξ = (x, e, τ, κ)`.
//!
//! Flow: `ẋ = f(x, e)`, `ė = g(x, e)`, `τ̇ = 1`, `κ̇ = 0`.
//! Jump: `x⁺ = x`, `e⁺ = h(κ, e)`, `τ⁺ = 0`, `κ⁺ = κ + 1`.
//!
//! After each jump the loop flows unconditionally for a dwell time `Tⱼ`, then
//! keeps flowing while every node error satisfies `|eᵢ| ≤ d/ℓ` and jumps at the
//! first instant it does not. Holding devices are zero-order holds.

mod export;
mod monitor;
mod simulate;

use thiserror::Error;

use crate::certify::LinearNcsModel;
use crate::mati::{LambdaPolicy, MatiError};
use crate::numerics::{integrate_fixed, FnField, NumericsError};
use crate::protocols::{NodePartition, Protocol, ProtocolError};
use crate::scalar::{lit, Scalar};

pub use export::{write_jump_log_csv, write_trajectory_csv, JUMP_LOG_HEADER};
pub use monitor::{monitor_u, MonitorReport, FLOW_TOLERANCE_FACTOR, JUMP_TOLERANCE};
pub use simulate::simulate;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid trigger configuration: {0}")]
    InvalidConfig(String),
    #[error("inconsistent inputs: {0}")]
    Mismatch(String),
    #[error("fewer than two jumps ({0}); average interval undefined")]
    TooFewJumps(usize),
    #[error("jump budget of {0} exhausted")]
    TooManyJumps(usize),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Mati(#[from] MatiError),
    #[error(transparent)]
    Numerics(NumericsError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<NumericsError> for SimError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::NonFinite { t } => SimError::NonFinite { t },
            other => SimError::Numerics(other),
        }
    }
}

/// `ξ = (x, e, τ, κ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState<T> {
    pub x: Vec<T>,
    pub e: Vec<T>,
    pub tau: T,
    pub kappa: u64,
}

impl<T: Scalar> HybridState<T> {
    pub fn new(x: Vec<T>, e: Vec<T>) -> Self {
        Self { x, e, tau: T::zero(), kappa: 0 }
    }
}

/// Transmission-policy and integration settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerConfig<T> {
    pub deadband: T,
    pub protocol: Protocol,
    pub lambda_policy: LambdaPolicy<T>,
    /// `Tⱼ = mati_scale · 𝒯(γ, L, λⱼ)`, in `(0, 1]`.
    pub mati_scale: T,
    pub horizon: T,
    pub step: T,
    /// `κ(0, 0)`. Counters are 1-based: round robin first transmits at `κ = 1`.
    pub initial_counter: u64,
    /// Keep every flow sample (needed by [`monitor_u`] and the CSV export).
    pub record_samples: bool,
    /// Abort once this many jumps have happened.
    pub max_jumps: usize,
}

impl<T: Scalar> TriggerConfig<T> {
    pub fn new(deadband: T, protocol: Protocol, horizon: T) -> Self {
        Self {
            deadband,
            protocol,
            lambda_policy: LambdaPolicy::state_dependent(),
            mati_scale: T::one(),
            horizon,
            step: lit(crate::numerics::DEFAULT_STEP),
            initial_counter: 1,
            record_samples: true,
            max_jumps: 5_000_000,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.deadband >= T::zero()) {
            return bad("deadband must be nonnegative");
        }
        if !(self.horizon > T::zero() && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if !(self.step > T::zero()) {
            return bad("step must be positive");
        }
        if !(self.mati_scale > T::zero() && self.mati_scale <= T::one()) {
            return bad("mati scale must lie in (0, 1]");
        }
        self.lambda_policy.validate()?;
        Ok(())
    }
}

/// `max_k |e_k| − d/ℓ`; the error is in the deadband iff this is `≤ 0`.
pub fn deadband_guard<T: Scalar>(e: &[T], d: T, partition: &NodePartition) -> T {
    let threshold = d / T::from_usize(partition.nodes()).unwrap();
    partition.node_norms(e).into_iter().fold(T::neg_infinity(), T::max) - threshold
}

/// Every node block satisfies `|e_k| ≤ d/ℓ`.
pub fn in_deadband<T: Scalar>(e: &[T], d: T, partition: &NodePartition) -> bool {
    deadband_guard(e, d, partition) <= T::zero()
}

/// Flows `state` for `dt` seconds with RK4 steps no longer than `step`.
pub fn flow_step<T: Scalar>(
    model: &LinearNcsModel<T>,
    state: &HybridState<T>,
    dt: T,
    step: T,
) -> Result<HybridState<T>, SimError> {
    let (nx, ne) = (model.n_x(), model.n_e());
    if state.x.len() != nx || state.e.len() != ne {
        return Err(SimError::Mismatch(format!(
            "state has dims ({}, {}), model expects ({nx}, {ne})",
            state.x.len(),
            state.e.len()
        )));
    }
    if !(dt > T::zero()) {
        return Err(SimError::InvalidConfig("dt must be positive".into()));
    }
    let field = FnField::new(nx + ne, |_t: T, y: &[T], dy: &mut [T]| {
        let (dx, de) = dy.split_at_mut(nx);
        model.flow(&y[..nx], &y[nx..], dx, de);
    });
    let y0: Vec<T> = state.x.iter().chain(&state.e).copied().collect();
    let y = integrate_fixed(&field, T::zero(), &y0, dt, step)?;
    Ok(HybridState { x: y[..nx].to_vec(), e: y[nx..].to_vec(), tau: state.tau + dt, kappa: state.kappa })
}

/// `G(ξ) = (x, h(κ, e), 0, κ + 1)`.
pub fn jump<T: Scalar>(state: &HybridState<T>, protocol: &Protocol) -> Result<HybridState<T>, SimError> {
    Ok(HybridState {
        x: state.x.clone(),
        e: protocol.jump(state.kappa, &state.e)?,
        tau: T::zero(),
        kappa: state.kappa + 1,
    })
}

/// One flow sample of the recorded arc.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample<T> {
    pub t: T,
    pub j: usize,
    pub state: HybridState<T>,
}

/// Lyapunov values at a flow sample: `V(x)`, `W(κ, e)`, `φⱼ(τ)` and
/// `U = V + max(γφW², 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorSample<T> {
    pub t: T,
    pub j: usize,
    pub v: T,
    pub w: T,
    pub phi: T,
    pub u: T,
}

/// One jump: `j` is the jump count after it.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord<T> {
    pub t: T,
    pub j: usize,
    pub kappa_before: u64,
    pub tau_before: T,
    pub e_before: Vec<T>,
    pub e_after: Vec<T>,
    /// `λⱼ` generated from the pre-jump `W`, active on the next interval.
    pub lambda: T,
    /// `Tⱼ` active on the next interval.
    pub dwell: T,
    pub w_before: T,
    pub w_after: T,
}

/// A flow interval `[t_j, t_{j+1}]` and its dwell parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalRecord<T> {
    pub j: usize,
    pub t_start: T,
    pub lambda: T,
    pub dwell: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySummary<T> {
    pub jump_count: usize,
    /// Smallest gap between consecutive jumps, if there were at least two.
    pub min_interjump: Option<T>,
    pub min_dwell: T,
    pub final_x_norm: T,
    /// `max |x(t, j)|` over `t ≥ 0.8 · horizon`.
    pub tail_max_x_norm: T,
    /// Extremes of `λⱼ` over every interval, including `λ₀` from `e0`.
    pub lambda_min: T,
    pub lambda_max: T,
    /// Largest `λⱼ` generated at a jump; `None` without jumps.
    pub jump_lambda_max: Option<T>,
}

/// Recorded hybrid arc.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub samples: Vec<FlowSample<T>>,
    pub monitor: Vec<MonitorSample<T>>,
    pub jumps: Vec<JumpRecord<T>>,
    pub intervals: Vec<IntervalRecord<T>>,
    pub summary: TrajectorySummary<T>,
    pub deadband: T,
    pub horizon: T,
    pub step: T,
    pub gamma: T,
    pub l: T,
}

impl<T: Scalar> Trajectory<T> {
    /// Smallest of the first jump time and the gaps between jumps; the
    /// horizon when nothing jumped.
    pub fn epsilon(&self) -> T {
        match self.jumps.first() {
            None => self.horizon,
            Some(first) => self.jumps.windows(2).map(|w| w[1].t - w[0].t).fold(first.t, T::min),
        }
    }

    /// Checks that every gap between jumps is at least the dwell time active
    /// during it, up to `slack`.
    pub fn respects_dwell(&self, slack: T) -> bool {
        let mut start = T::zero();
        for (k, jump) in self.jumps.iter().enumerate() {
            if jump.t - start < self.intervals[k].dwell - slack {
                return false;
            }
            start = jump.t;
        }
        true
    }
}

/// Mean of successive jump-time differences.
pub fn average_transmission_interval<T: Scalar>(trajectory: &Trajectory<T>) -> Result<T, SimError> {
    average_interval(&trajectory.jumps.iter().map(|j| j.t).collect::<Vec<_>>())
}

/// Mean gap between jumps that changed `e`, i.e. that carried data. Idle
/// round-robin slots are left out.
pub fn average_data_interval<T: Scalar>(trajectory: &Trajectory<T>) -> Result<T, SimError> {
    let times: Vec<T> = trajectory.jumps.iter().filter(|j| j.e_after != j.e_before).map(|j| j.t).collect();
    average_interval(&times)
}

pub(crate) fn average_interval<T: Scalar>(times: &[T]) -> Result<T, SimError> {
    if times.len() < 2 {
        return Err(SimError::TooFewJumps(times.len()));
    }
    let span = times[times.len() - 1] - times[0];
    Ok(span / T::from_usize(times.len() - 1).unwrap())
}
