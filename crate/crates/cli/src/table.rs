use ncs_core::{Certificate, ProtocolKind};

use crate::error::CliError;
use crate::sweep::{t_lower, SweepRow};

/// One column of the dwell-bound table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Row {
    pub d: f64,
    pub lambda_max: f64,
    /// `𝒯(γ, L, λ_max(d))`.
    pub t_lower: f64,
}

/// `T̲(d) = 𝒯(γ, L, λ_max(d))` for every state-dependent row of `kind`.
pub fn table1(rows: &[SweepRow], cert: &Certificate, kind: ProtocolKind) -> Result<Vec<Table1Row>, CliError> {
    let out: Vec<Table1Row> = rows
        .iter()
        .filter(|r| r.protocol == kind.as_str() && r.lambda_mode == "state")
        .map(|r| Ok(Table1Row { d: r.d, lambda_max: r.lambda_max, t_lower: t_lower(cert, r.lambda_max)? }))
        .collect::<Result<_, CliError>>()?;
    if out.is_empty() {
        return Err(CliError::Parse(format!("no state-dependent sweep rows for protocol {kind}")));
    }
    Ok(out)
}

pub fn table1_csv(rows: &[Table1Row]) -> String {
    let mut s = String::from("d,lambda_max,t_lower\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.d, r.lambda_max, r.t_lower));
    }
    s
}
