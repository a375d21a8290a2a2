use thiserror::Error;

use crate::physics::FluxKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("{0} flux does not support dry states")]
    DryStateUnsupported(FluxKind),

    #[error("non-finite wave speed estimate")]
    NonFiniteSpeed,

    #[error("inconsistent boundary data: {0}")]
    Boundary(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular diagonal block in row {0}")]
    SingularBlock(usize),

    #[error("singular matrix")]
    SingularMatrix,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("flow regime violation: {0}")]
    Regime(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
