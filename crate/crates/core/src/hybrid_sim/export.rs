use std::io::Write;

use crate::scalar::Scalar;

use super::{SimError, Trajectory};

pub const JUMP_LOG_HEADER: &str = "t_j,j,lambda_j,T_j,W_before,W_after";

/// Writes `t,j,x1..xn,e1..em,tau,kappa,V,W,U`, one row per flow sample.
pub fn write_trajectory_csv<T: Scalar, W: Write>(trajectory: &Trajectory<T>, mut out: W) -> Result<(), SimError> {
    let Some(first) = trajectory.samples.first() else {
        return Err(SimError::Mismatch("trajectory has no recorded samples".into()));
    };
    let mut header = vec!["t".to_string(), "j".to_string()];
    header.extend((1..=first.state.x.len()).map(|i| format!("x{i}")));
    header.extend((1..=first.state.e.len()).map(|i| format!("e{i}")));
    header.extend(["tau", "kappa", "V", "W", "U"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for (s, m) in trajectory.samples.iter().zip(&trajectory.monitor) {
        write!(out, "{},{}", s.t, s.j)?;
        for v in s.state.x.iter().chain(&s.state.e) {
            write!(out, ",{v}")?;
        }
        writeln!(out, ",{},{},{},{},{}", s.state.tau, s.state.kappa, m.v, m.w, m.u)?;
    }
    Ok(())
}

/// Writes one row per jump under [`JUMP_LOG_HEADER`].
pub fn write_jump_log_csv<T: Scalar, W: Write>(trajectory: &Trajectory<T>, mut out: W) -> Result<(), SimError> {
    writeln!(out, "{JUMP_LOG_HEADER}")?;
    for jump in &trajectory.jumps {
        writeln!(out, "{},{},{},{},{},{}", jump.t, jump.j, jump.lambda, jump.dwell, jump.w_before, jump.w_after)?;
    }
    Ok(())
}
