use thiserror::Error;

use crate::certify::CertifyError;
use crate::hybrid_sim::SimError;
use crate::io::ModelError;
use crate::mati::MatiError;
use crate::numerics::NumericsError;
use crate::protocols::ProtocolError;

/// Any error raised by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Mati(#[from] MatiError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
