use crate::certify::Certificate;
use crate::mati::phi_field;
use crate::numerics::integrate_fixed;
use crate::protocols::Protocol;
use crate::scalar::{lit, Scalar};

use super::{SimError, Trajectory};

/// Flow check tolerance is `FLOW_TOLERANCE_FACTOR · (1 + max U)`.
pub const FLOW_TOLERANCE_FACTOR: f64 = 1e-3;
/// Absolute slack on the jump inequality.
pub const JUMP_TOLERANCE: f64 = 1e-9;

/// Result of replaying the Lyapunov inequalities along a recorded arc.
///
/// Margins are `observed − allowed`; a check passes when its margin is at
/// most its tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorReport<T> {
    /// Largest `ΔU/Δt − (−η·Ū + d̂)` over flow pairs.
    pub flow_margin: T,
    pub flow_tolerance: T,
    pub flow_pairs: usize,
    /// Pairs skipped because the round-robin schedule changed between them.
    pub flow_pairs_skipped: usize,
    /// Largest `U⁺ − max(1, λⱼ₊₁/λⱼ)·U`.
    pub jump_margin: T,
    pub jumps_checked: usize,
    /// Largest `U − ((λ_max/λ_min)·U₀·e^{−η(t/2 + εj/2)} + d̃)`.
    pub concat_margin: T,
    /// `d̂ = (γ² − η)·ᾱ_e(d)²`.
    pub d_hat: T,
    /// `d̃ = λ_max·d̂ / (λ_min·η·(1 − e^{−ηε}))`.
    pub d_tilde: T,
    /// `ε`, the smallest of the first jump time and the gaps between jumps.
    pub eps: T,
    /// Largest difference between recorded `U` and `U` rebuilt from the state.
    pub reconstruction_error: T,
}

impl<T: Scalar> MonitorReport<T> {
    pub fn flow_ok(&self) -> bool {
        self.flow_margin <= self.flow_tolerance
    }

    pub fn jump_ok(&self) -> bool {
        self.jump_margin <= lit(JUMP_TOLERANCE)
    }

    pub fn concat_ok(&self) -> bool {
        self.concat_margin <= lit::<T>(JUMP_TOLERANCE) * (T::one() + self.d_tilde)
    }

    pub fn passed(&self) -> bool {
        self.flow_ok() && self.jump_ok() && self.concat_ok()
    }
}

/// Recomputes `U = V + max(γφW², 0)` along `trajectory` and checks the flow
/// decrease, the jump inequality and the concatenated decay bound.
///
/// `φ` is rebuilt independently from the interval records: integrated from
/// `1/λⱼ` over the dwell phase, then held.
pub fn monitor_u<T: Scalar>(
    trajectory: &Trajectory<T>,
    cert: &Certificate<T>,
    protocol: &Protocol,
) -> Result<MonitorReport<T>, SimError> {
    let samples = &trajectory.samples;
    if samples.is_empty() || trajectory.monitor.len() != samples.len() {
        return Err(SimError::Mismatch("trajectory has no recorded samples".into()));
    }
    if cert.p.order() != samples[0].state.x.len() {
        return Err(SimError::Mismatch(format!(
            "certificate has order {}, trajectory has n_x = {}",
            cert.p.order(),
            samples[0].state.x.len()
        )));
    }
    if cert.gamma != trajectory.gamma || cert.l != trajectory.l {
        return Err(SimError::Mismatch("certificate gains differ from the simulated ones".into()));
    }
    if protocol.partition.total() != samples[0].state.e.len() {
        return Err(SimError::Mismatch("protocol partition does not match e".into()));
    }
    let intervals = &trajectory.intervals;
    let (gamma, eta) = (cert.gamma, cert.eta);

    // Rebuild U.
    let field = phi_field(gamma, cert.l);
    let mut u = Vec::with_capacity(samples.len());
    let mut schedules = Vec::with_capacity(samples.len());
    let mut phi = T::zero();
    let mut tau_phi = T::zero();
    let mut current = usize::MAX;
    let mut reconstruction_error = T::zero();
    for (s, m) in samples.iter().zip(&trajectory.monitor) {
        let iv = intervals.get(s.j).ok_or_else(|| SimError::Mismatch(format!("no interval record for j = {}", s.j)))?;
        if s.j != current {
            current = s.j;
            phi = T::one() / iv.lambda;
            tau_phi = T::zero();
        }
        let target = s.state.tau.min(iv.dwell);
        if target > tau_phi {
            phi = integrate_fixed(&field, tau_phi, &[phi], target, trajectory.step)?[0];
            tau_phi = target;
        }
        let w = protocol.lyapunov(s.state.kappa, &s.state.e)?;
        let value = cert.v(&s.state.x) + (gamma * phi * w * w).max(T::zero());
        reconstruction_error = reconstruction_error.max((value - m.u).abs());
        u.push(value);
        schedules.push(if protocol.kind.is_tod() {
            Vec::new()
        } else {
            protocol.lyapunov_schedule(s.state.kappa, &s.state.e)?
        });
    }

    let alpha_e = protocol.bounds().upper(trajectory.deadband);
    let d_hat = ((gamma * gamma - eta) * alpha_e * alpha_e).max(T::zero());

    // (a) flow decrease.
    let half = lit::<T>(0.5);
    let u_max = u.iter().copied().fold(T::zero(), T::max);
    let mut flow_margin = T::neg_infinity();
    let (mut flow_pairs, mut flow_pairs_skipped) = (0, 0);
    for k in 0..samples.len() - 1 {
        let (a, b) = (&samples[k], &samples[k + 1]);
        let dt = b.t - a.t;
        if a.j != b.j || !(dt > T::zero()) {
            continue;
        }
        if schedules[k] != schedules[k + 1] {
            flow_pairs_skipped += 1;
            continue;
        }
        let slope = (u[k + 1] - u[k]) / dt;
        let allowed = -eta * (u[k] + u[k + 1]) * half + d_hat;
        flow_margin = flow_margin.max(slope - allowed);
        flow_pairs += 1;
    }

    // (b) jumps: last sample of interval j against first sample of j + 1.
    let mut jump_margin = T::neg_infinity();
    let mut jumps_checked = 0;
    for k in 0..samples.len() - 1 {
        let (a, b) = (&samples[k], &samples[k + 1]);
        if b.j != a.j + 1 {
            continue;
        }
        let ratio = (intervals[b.j].lambda / intervals[a.j].lambda).max(T::one());
        jump_margin = jump_margin.max(u[k + 1] - ratio * u[k]);
        jumps_checked += 1;
    }

    // (c) concatenated decay.
    let (lam_min, lam_max) =
        intervals.iter().fold((T::infinity(), T::zero()), |(lo, hi), iv| (lo.min(iv.lambda), hi.max(iv.lambda)));
    let eps = trajectory.epsilon();
    let d_tilde =
        if d_hat > T::zero() { lam_max * d_hat / (lam_min * eta * (T::one() - (-eta * eps).exp())) } else { T::zero() };
    let ratio = lam_max / lam_min;
    let u0 = u[0];
    let concat_margin = samples
        .iter()
        .zip(&u)
        .map(|(s, &uk)| {
            let j = T::from_usize(s.j).unwrap();
            uk - (ratio * u0 * (-eta * (s.t * half + eps * j * half)).exp() + d_tilde)
        })
        .fold(T::neg_infinity(), T::max);

    Ok(MonitorReport {
        flow_margin,
        flow_tolerance: lit::<T>(FLOW_TOLERANCE_FACTOR) * (T::one() + u_max),
        flow_pairs,
        flow_pairs_skipped,
        jump_margin,
        jumps_checked,
        concat_margin,
        d_hat,
        d_tilde,
        eps,
        reconstruction_error,
    })
}
