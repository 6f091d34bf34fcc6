use thiserror::Error;

use crate::correction::SpectralError;
use crate::dynamics::DynamicsError;
use crate::expr::ParseError;
use crate::field::FieldError;
use crate::ode::OdeError;
use crate::quadrature::QuadratureError;
use crate::roots::RootError;

/// Umbrella error for callers that drive several modules at once.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl Error {
    /// Whether the failure is a numerical non-convergence rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Field(e) => e.is_numerical(),
            Error::Dynamics(e) => e.is_numerical(),
            Error::Spectral(e) => e.is_numerical(),
            Error::Ode(_) | Error::Quadrature(_) | Error::Root(_) => true,
            Error::Parse(_) => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
