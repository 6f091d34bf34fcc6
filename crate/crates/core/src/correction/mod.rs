//! Short-periodic-orbit correction: eigenvalue counting for the auxiliary 1D
//! operator (finite differences with Sturm sequences, Bohr–Sommerfeld), the
//! universal function `G`, the correction functional and its closed-form fit.

mod bohr;
mod count;
mod gfunc;
mod operator;
mod term;

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::field::FieldError;
use crate::quadrature::QuadratureError;
use crate::roots::RootError;

pub use bohr::{bohr_sommerfeld_eigenvalues, census_count, levels_below, BohrSommerfeld, ACTION_ROOT_TOL};
pub use count::{
    fd_eigencount, fd_eigenvalues, fd_matrix, CountCertificate, CountMethod, CountingFunction, Tridiagonal,
    BISECTION_REL_TOL, GRAZING_WINDOW, MAX_GRID, MIN_GRID,
};
pub use gfunc::{g_function, g_summary, holder_half_quotient, hurwitz_zeta, GSummary};
pub use operator::{action_by_quadrature, AuxOperator1D, Harmonic1D, Operator1D, TRUNCATION_MARGIN};
pub use term::{
    amplitude_over_period, closed_form_correction, correction_4d, correction_sweep, correction_term,
    critical_action, fit_closed_form, oscillation_analysis, weyl_part_closed_form, weyl_part_quadrature,
    Correction4d, Correction4dTerm, CorrectionFit, CorrectionParams, CorrectionSample, CorrectionTerm, FitOptions,
    OscillationReport, PeriodAmplitude, SweepPoint, WeylQuadrature,
};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("barrier top {barrier} at xi2 = {xi2} lies below the threshold {tau}; wells merge inside the counted range (lower tau or use fd_eigencount)")]
    MultiWell { xi2: f64, barrier: f64, tau: f64 },
    #[error("potential at the half-width {half_width} exceeds the threshold by only {margin} (need {required})")]
    Truncation { half_width: f64, margin: f64, required: f64 },
    #[error("eigencounts did not settle: {coarse} at N = {n}, {fine} at N = {}", 2 * n)]
    Resolution { n: usize, coarse: usize, fine: usize },
    #[error("counting function does not vanish at the window edge xi2 = {edge}")]
    Window { edge: f64 },
    #[error("fit failed: {0}")]
    Fit(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Root(#[from] RootError),
}

impl SpectralError {
    /// Whether the failure is a numerical non-convergence rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            SpectralError::InvalidParams(_) | SpectralError::MultiWell { .. } | SpectralError::Truncation { .. } => {
                false
            }
            SpectralError::Dynamics(e) => e.is_numerical(),
            SpectralError::Field(e) => e.is_numerical(),
            _ => true,
        }
    }
}
