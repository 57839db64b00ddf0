use std::path::PathBuf;

use ncs_core::certify::CertifyError;
use ncs_core::hybrid_sim::SimError;
use ncs_core::io::ModelError;
use ncs_core::ProtocolKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Model(ModelError),
    #[error("certification failed: {0}")]
    Certify(String),
    #[error("simulation failed for protocol {protocol}, d = {d}, seed {seed}: {source}")]
    Run { protocol: ProtocolKind, d: f64, seed: u64, source: SimError },
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Csv { .. } => 2,
            CliError::Model(ModelError::Certify(_)) | CliError::Certify(_) => 3,
            CliError::Model(_) => 2,
            CliError::Run { .. } | CliError::Sim(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Model(e)
    }
}

impl From<CertifyError> for CliError {
    fn from(e: CertifyError) -> Self {
        CliError::Certify(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Parse("x".into()).exit_code(), 2);
        assert_eq!(CliError::Model(ModelError::Parse("x".into())).exit_code(), 2);
        assert_eq!(CliError::Certify("x".into()).exit_code(), 3);
        assert_eq!(CliError::Sim(SimError::TooManyJumps(1)).exit_code(), 4);
        let run = CliError::Run {
            protocol: ProtocolKind::ModifiedTod,
            d: 0.1,
            seed: 0,
            source: SimError::NonFinite { t: 1.0 },
        };
        assert_eq!(run.exit_code(), 4);
    }
}
