use serde::Serialize;

use super::count::{CountCertificate, CountMethod, CountingFunction, GRAZING_WINDOW};
use super::operator::Operator1D;
use super::SpectralError;
use crate::dynamics::{EffectiveModel, WellSide};
use crate::roots::{brent, RootError};

/// Relative (to the energy range) tolerance of the quantised levels.
pub const ACTION_ROOT_TOL: f64 = 1e-12;

/// Number of `n ≥ 0` with `2πħ(n + ½) < action`.
pub fn levels_below(action: f64, hbar: f64) -> usize {
    let x = action / (std::f64::consts::TAU * hbar) - 0.5;
    if x <= 0.0 {
        0
    } else {
        x.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BohrSommerfeld {
    pub counting: CountingFunction,
    /// Levels below the threshold, each repeated once per well.
    pub eigenvalues: Vec<f64>,
}

/// Levels `S(E_n) = 2πħ(n + ½)` below `tau`.
pub fn bohr_sommerfeld_eigenvalues<O: Operator1D + ?Sized>(op: &O, tau: f64) -> Result<BohrSommerfeld, SpectralError> {
    if !tau.is_finite() {
        return Err(SpectralError::InvalidParams("threshold must be finite".into()));
    }
    let wells = op.wells(tau)?;
    let hbar = op.hbar();
    let floor = op.potential_minimum();
    let top = if tau > floor { op.action(tau)? } else { 0.0 };
    let n = levels_below(top, hbar);
    let tol = ACTION_ROOT_TOL * (tau - floor).abs().max(f64::MIN_POSITIVE);
    let mut levels = Vec::with_capacity(n * wells);
    for j in 0..n {
        let target = std::f64::consts::TAU * hbar * (j as f64 + 0.5);
        let e = brent(|e| op.action(e).map(|s| s - target).unwrap_or(f64::NAN), floor, tau, tol).map_err(|err| {
            match err {
                RootError::NonFinite(x) => op.action(x).err().unwrap_or(SpectralError::Root(err)),
                other => SpectralError::Root(other),
            }
        })?;
        levels.extend(std::iter::repeat_n(e, wells));
    }
    let grazing = levels.iter().any(|e| (e - tau).abs() < GRAZING_WINDOW);
    Ok(BohrSommerfeld {
        counting: CountingFunction {
            threshold: tau,
            count: levels.len(),
            method: CountMethod::BohrSommerfeld,
            certificate: CountCertificate::Action {
                rel_tol: ACTION_ROOT_TOL,
                wells,
            },
            grazing,
        },
        eigenvalues: levels,
    })
}

/// Semiclassical count `n₀(ξ₂)` of levels of the auxiliary operator below 0,
/// taking the well census at the threshold: one well while
/// `|ξ₂| < √W` (even ν), two mirror wells beyond. A threshold `τ` enters
/// through `W + 2τ`.
pub fn census_count(nu: u32, hbar: f64, xi2: f64, w: f64) -> Result<usize, SpectralError> {
    let s = w.sqrt();
    if nu.is_multiple_of(2) && xi2 <= -s {
        return Ok(0);
    }
    let model = EffectiveModel::new(nu, xi2, w)?.with_side(WellSide::Right);
    let action = model.action()?;
    let two_wells = nu.is_multiple_of(2) && xi2 >= s;
    Ok(if two_wells { 2 } else { 1 } * levels_below(action, hbar))
}
