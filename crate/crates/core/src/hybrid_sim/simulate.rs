use crate::certify::{Certificate, LinearNcsModel};
use crate::mati::{generate_lambda, mati_bound, MatiParams};
use crate::numerics::{norm, refine_crossing, FnField, Rk4};
use crate::scalar::{lit, Scalar};

use super::{
    deadband_guard, FlowSample, HybridState, IntervalRecord, JumpRecord, MonitorSample, SimError, Trajectory,
    TrajectorySummary, TriggerConfig,
};

/// Stacked state `(x, e, φ)`; `τ`, `κ` and `t` are tracked outside.
struct Arc<'a, T: Scalar> {
    cert: &'a Certificate<T>,
    cfg: &'a TriggerConfig<T>,
    nx: usize,
    y: Vec<T>,
    t: T,
    t_start: T,
    j: usize,
    kappa: u64,
    out: Trajectory<T>,
    tail_from: T,
}

impl<T: Scalar> Arc<'_, T> {
    fn e(&self) -> &[T] {
        &self.y[self.nx..self.y.len() - 1]
    }

    fn phi(&self) -> T {
        self.y[self.y.len() - 1]
    }

    fn record(&mut self) -> Result<(), SimError> {
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite { t: self.t.to_f64().unwrap_or(f64::NAN) });
        }
        let x = &self.y[..self.nx];
        let x_norm = norm(x);
        if self.t >= self.tail_from {
            self.out.summary.tail_max_x_norm = self.out.summary.tail_max_x_norm.max(x_norm);
        }
        self.out.summary.final_x_norm = x_norm;
        if !self.cfg.record_samples {
            return Ok(());
        }
        let w = self.cfg.protocol.lyapunov(self.kappa, self.e())?;
        let v = self.cert.v(x);
        let phi = self.phi();
        let u = v + (self.cert.gamma * phi * w * w).max(T::zero());
        self.out.samples.push(FlowSample {
            t: self.t,
            j: self.j,
            state: HybridState { x: x.to_vec(), e: self.e().to_vec(), tau: self.t - self.t_start, kappa: self.kappa },
        });
        self.out.monitor.push(MonitorSample { t: self.t, j: self.j, v, w, phi, u });
        Ok(())
    }

    /// `(λ, T)` for the interval that starts with Lyapunov value `w`.
    fn dwell_for(&self, w: T) -> Result<(T, T), SimError> {
        let lambda = generate_lambda(w, &self.cfg.protocol.sigma(), &self.cfg.lambda_policy);
        let dwell = self.cfg.mati_scale * mati_bound(&MatiParams::new(self.cert.gamma, self.cert.l, lambda)?)?;
        Ok((lambda, dwell))
    }
}

/// Simulates the hybrid loop from `(x0, e0, τ = 0, κ = initial_counter)` until
/// `cfg.horizon`.
///
/// `φ` follows its comparison ODE from `1/λⱼ` during the dwell phase and is
/// held at `φⱼ(Tⱼ)` while the loop waits inside the deadband. Deadband exits
/// are located by bisection on the RK4 sub-step.
pub fn simulate<T: Scalar>(
    model: &LinearNcsModel<T>,
    cert: &Certificate<T>,
    cfg: &TriggerConfig<T>,
    x0: &[T],
    e0: &[T],
) -> Result<Trajectory<T>, SimError> {
    cfg.validate()?;
    let (nx, ne) = (model.n_x(), model.n_e());
    if x0.len() != nx || e0.len() != ne {
        return Err(SimError::Mismatch(format!(
            "initial state has dims ({}, {}), model expects ({nx}, {ne})",
            x0.len(),
            e0.len()
        )));
    }
    if cert.p.order() != nx {
        return Err(SimError::Mismatch(format!("certificate has order {}, model has n_x = {nx}", cert.p.order())));
    }
    if cfg.protocol.partition != model.partition {
        return Err(SimError::Mismatch("protocol and model use different node partitions".into()));
    }

    let (gamma, l) = (cert.gamma, cert.l);
    let two = lit::<T>(2.0);
    let active = FnField::new(nx + ne + 1, |_t: T, y: &[T], dy: &mut [T]| {
        let (dx, rest) = dy.split_at_mut(nx);
        let (de, dphi) = rest.split_at_mut(ne);
        model.flow(&y[..nx], &y[nx..nx + ne], dx, de);
        let phi = y[nx + ne];
        dphi[0] = -two * l * phi - gamma * (phi * phi + T::one());
    });
    let hold = FnField::new(nx + ne + 1, |_t: T, y: &[T], dy: &mut [T]| {
        let (dx, rest) = dy.split_at_mut(nx);
        let (de, dphi) = rest.split_at_mut(ne);
        model.flow(&y[..nx], &y[nx..nx + ne], dx, de);
        dphi[0] = T::zero();
    });
    let partition = &model.partition;
    let d = cfg.deadband;
    let guard = |y: &[T]| deadband_guard(&y[nx..nx + ne], d, partition);

    let mut arc = Arc {
        cert,
        cfg,
        nx,
        y: x0.iter().chain(e0).copied().chain(std::iter::once(T::zero())).collect(),
        t: T::zero(),
        t_start: T::zero(),
        j: 0,
        kappa: cfg.initial_counter,
        out: Trajectory {
            samples: Vec::new(),
            monitor: Vec::new(),
            jumps: Vec::new(),
            intervals: Vec::new(),
            summary: TrajectorySummary {
                jump_count: 0,
                min_interjump: None,
                min_dwell: T::infinity(),
                final_x_norm: T::zero(),
                tail_max_x_norm: T::zero(),
                lambda_min: T::infinity(),
                lambda_max: T::zero(),
                jump_lambda_max: None,
            },
            deadband: d,
            horizon: cfg.horizon,
            step: cfg.step,
            gamma,
            l,
        },
        tail_from: lit::<T>(0.8) * cfg.horizon,
    };

    let w0 = cfg.protocol.lyapunov(arc.kappa, e0)?;
    let (mut lambda, mut dwell) = arc.dwell_for(w0)?;
    open_interval(&mut arc, lambda, dwell);
    arc.record()?;

    let mut rk = Rk4::new(nx + ne + 1);
    let mut next = arc.y.clone();
    let horizon = cfg.horizon;
    let tol = lit::<T>(1e-10) * horizon.max(cfg.step);
    'run: loop {
        // Dwell phase: unconditional flow for Tⱼ.
        let t_end = (arc.t_start + dwell).min(horizon);
        let n = ((t_end - arc.t) / cfg.step).ceil().to_usize().unwrap_or(0).max(1);
        let h = (t_end - arc.t) / T::from_usize(n).unwrap();
        let t0 = arc.t;
        for k in 0..n {
            rk.step(&active, arc.t, &mut arc.y, h)?;
            arc.t = if k + 1 == n { t_end } else { t0 + T::from_usize(k + 1).unwrap() * h };
            arc.record()?;
        }
        if arc.t >= horizon {
            break;
        }

        // Deadband phase: flow while every node error stays inside E_d.
        if d > T::zero() && guard(&arc.y) <= T::zero() {
            let t0 = arc.t;
            let mut k = 0usize;
            loop {
                let h = cfg.step.min(horizon - arc.t);
                next.copy_from_slice(&arc.y);
                rk.step(&hold, arc.t, &mut next, h)?;
                if guard(&next) > T::zero() {
                    let (te, ye) = refine_crossing(&hold, guard, arc.t, &arc.y, h, tol)?;
                    arc.t = te;
                    arc.y = ye;
                    arc.record()?;
                    break;
                }
                std::mem::swap(&mut arc.y, &mut next);
                k += 1;
                arc.t = (t0 + T::from_usize(k).unwrap() * cfg.step).min(horizon);
                arc.record()?;
                if arc.t >= horizon {
                    break 'run;
                }
            }
        }

        // Jump.
        if arc.out.jumps.len() >= cfg.max_jumps {
            return Err(SimError::TooManyJumps(cfg.max_jumps));
        }
        let e_before = arc.e().to_vec();
        let w_before = cfg.protocol.lyapunov(arc.kappa, &e_before)?;
        let e_after = cfg.protocol.jump(arc.kappa, &e_before)?;
        let w_after = cfg.protocol.lyapunov(arc.kappa + 1, &e_after)?;
        (lambda, dwell) = arc.dwell_for(w_before)?;
        let record = JumpRecord {
            t: arc.t,
            j: arc.j + 1,
            kappa_before: arc.kappa,
            tau_before: arc.t - arc.t_start,
            e_before,
            e_after,
            lambda,
            dwell,
            w_before,
            w_after,
        };
        if let Some(prev) = arc.out.jumps.last() {
            let gap = record.t - prev.t;
            let s = &mut arc.out.summary;
            s.min_interjump = Some(s.min_interjump.map_or(gap, |m: T| m.min(gap)));
        }
        let s = &mut arc.out.summary;
        s.jump_lambda_max = Some(s.jump_lambda_max.map_or(lambda, |m: T| m.max(lambda)));
        arc.y[nx..nx + ne].copy_from_slice(&record.e_after);
        arc.out.jumps.push(record);
        arc.j += 1;
        arc.kappa += 1;
        arc.t_start = arc.t;
        open_interval(&mut arc, lambda, dwell);
        arc.record()?;
    }

    arc.out.summary.jump_count = arc.out.jumps.len();
    Ok(arc.out)
}

fn open_interval<T: Scalar>(arc: &mut Arc<'_, T>, lambda: T, dwell: T) {
    let last = arc.y.len() - 1;
    arc.y[last] = T::one() / lambda;
    let s = &mut arc.out.summary;
    s.min_dwell = s.min_dwell.min(dwell);
    s.lambda_min = s.lambda_min.min(lambda);
    s.lambda_max = s.lambda_max.max(lambda);
    arc.out.intervals.push(IntervalRecord { j: arc.j, t_start: arc.t, lambda, dwell });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid_sim::in_deadband;
    use crate::numerics::{Matrix, SymMatrix};
    use crate::protocols::{NodePartition, Protocol, ProtocolKind};

    /// `ẋ = −x + e`, `ė = x − e` with two scalar nodes sharing a state.
    fn toy() -> (LinearNcsModel<f64>, Certificate<f64>) {
        let a11 = Matrix::from_rows(&[&[-2.0]]).unwrap();
        let a12 = Matrix::from_rows(&[&[0.5, 0.5]]).unwrap();
        let a21 = Matrix::from_rows(&[&[1.0], &[-1.0]]).unwrap();
        let a22 = Matrix::from_rows(&[&[-0.5, 0.0], &[0.0, -0.5]]).unwrap();
        let model = LinearNcsModel::new(a11, a12, a21, a22, NodePartition::scalar_nodes(2).unwrap()).unwrap();
        let cert = Certificate { p: SymMatrix::identity(1), gamma: 2.0, l: 0.5, eta: 0.1, eps_lmi: 0.1, m: 1.0 };
        (model, cert)
    }

    fn cfg(d: f64, kind: ProtocolKind) -> TriggerConfig<f64> {
        let mut c = TriggerConfig::new(d, Protocol::new(kind, NodePartition::scalar_nodes(2).unwrap()), 2.0);
        c.step = 1e-3;
        c
    }

    #[test]
    fn zero_deadband_jumps_at_dwell() {
        let (model, cert) = toy();
        let traj = simulate(&model, &cert, &cfg(0.0, ProtocolKind::ModifiedTod), &[1.0], &[0.5, -0.2]).unwrap();
        assert!(traj.jumps.len() > 3);
        let mut start = 0.0;
        for (k, jump) in traj.jumps.iter().enumerate() {
            assert!((jump.t - start - traj.intervals[k].dwell).abs() < 1e-12, "jump {k}");
            start = jump.t;
        }
    }

    #[test]
    fn deadband_jumps_leave_the_band() {
        let (model, cert) = toy();
        let c = cfg(0.2, ProtocolKind::ModifiedTod);
        let traj = simulate(&model, &cert, &c, &[1.0], &[0.5, -0.2]).unwrap();
        assert!(traj.respects_dwell(1e-12));
        for jump in &traj.jumps {
            let after_dwell = jump.tau_before > traj.intervals[jump.j - 1].dwell + 1e-12;
            if after_dwell {
                assert!(!in_deadband(&jump.e_before, 0.2, &model.partition));
            }
        }
    }

    #[test]
    fn counters_and_clock_are_consistent() {
        let (model, cert) = toy();
        let mut c = cfg(0.05, ProtocolKind::ModifiedRr);
        c.initial_counter = 2;
        let traj = simulate(&model, &cert, &c, &[0.3], &[0.1, 0.2]).unwrap();
        for s in &traj.samples {
            assert_eq!(s.state.kappa, 2 + s.j as u64);
            assert!(s.state.tau >= 0.0);
        }
        assert!(traj.samples.windows(2).all(|w| w[1].t >= w[0].t));
        assert_eq!(traj.samples.last().unwrap().t, 2.0);
    }

    #[test]
    fn rejects_mismatched_dims() {
        let (model, cert) = toy();
        let err = simulate(&model, &cert, &cfg(0.0, ProtocolKind::ModifiedTod), &[1.0, 2.0], &[0.0, 0.0]);
        assert!(matches!(err, Err(SimError::Mismatch(_))));
    }

    #[test]
    fn lean_run_matches_recorded_run() {
        let (model, cert) = toy();
        let mut c = cfg(0.1, ProtocolKind::ModifiedTod);
        let full = simulate(&model, &cert, &c, &[1.0], &[0.5, -0.2]).unwrap();
        c.record_samples = false;
        let lean = simulate(&model, &cert, &c, &[1.0], &[0.5, -0.2]).unwrap();
        assert!(lean.samples.is_empty());
        assert_eq!(lean.jumps, full.jumps);
        assert_eq!(lean.summary, full.summary);
    }
}
