use serde::Serialize;

use super::SpectralError;
use crate::dynamics::{DynamicsError, EffectiveModel, WellSide};
use crate::quadrature::composite_doubling;

/// Required excess of the potential over the threshold at `±L`.
pub const TRUNCATION_MARGIN: f64 = 1.0;

/// A 1D Schrödinger operator `−ħ²/2 ∂² + P(x)` with the data needed by both
/// counting methods.
pub trait Operator1D: Sync {
    fn hbar(&self) -> f64;
    fn potential(&self, x: f64) -> f64;
    fn potential_minimum(&self) -> f64;
    /// Half-width `L` of the Dirichlet box for threshold `tau`.
    fn half_width(&self, tau: f64) -> Result<f64, SpectralError>;
    /// Number of identical wells that carry the levels below `tau`; an error
    /// when the well census changes inside the counted energy range.
    fn wells(&self, tau: f64) -> Result<usize, SpectralError>;
    /// `∮ p dx` over one well at energy `e`, zero at and below the minimum.
    fn action(&self, e: f64) -> Result<f64, SpectralError>;
}

fn check_margin<O: Operator1D + ?Sized>(op: &O, half_width: f64, tau: f64) -> Result<f64, SpectralError> {
    let margin = op.potential(-half_width).min(op.potential(half_width)) - tau;
    if !(margin >= TRUNCATION_MARGIN) {
        return Err(SpectralError::Truncation {
            half_width,
            margin,
            required: TRUNCATION_MARGIN,
        });
    }
    Ok(half_width)
}

/// `2 ∫ √(2(e − P)) dx` between the turning points `lower < upper`, with
/// `x = c + a sin θ` to absorb the square-root ends.
pub fn action_by_quadrature<P: Fn(f64) -> f64>(
    potential: P,
    lower: f64,
    upper: f64,
    e: f64,
) -> Result<f64, SpectralError> {
    if !(upper > lower) {
        return Ok(0.0);
    }
    let c = 0.5 * (upper + lower);
    let a = 0.5 * (upper - lower);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let rep = composite_doubling(-half_pi, half_pi, 256, 1 << 20, 1e-12, |theta| {
        let x = c + a * theta.sin();
        a * theta.cos() * (2.0 * (e - potential(x))).max(0.0).sqrt()
    })?;
    Ok(2.0 * rep.value)
}

/// `a₀ = ½(ħ²D² + (ξ₂ − x^ν/ν)² − W)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuxOperator1D {
    pub nu: u32,
    pub hbar: f64,
    pub xi2: f64,
    pub w: f64,
    /// Fixed truncation; `None` derives it from the threshold.
    pub half_width: Option<f64>,
}

impl AuxOperator1D {
    pub fn new(nu: u32, hbar: f64, xi2: f64, w: f64) -> Result<Self, SpectralError> {
        if nu < 2 {
            return Err(SpectralError::InvalidParams(format!("nu must be >= 2, got {nu}")));
        }
        if !(hbar > 0.0 && hbar < 1.0) {
            return Err(SpectralError::InvalidParams(format!("hbar must lie in (0, 1), got {hbar}")));
        }
        if !(w > 0.0) || !w.is_finite() || !xi2.is_finite() {
            return Err(SpectralError::InvalidParams(format!("need W > 0 and finite xi2 (W = {w}, xi2 = {xi2})")));
        }
        Ok(AuxOperator1D {
            nu,
            hbar,
            xi2,
            w,
            half_width: None,
        })
    }

    pub fn with_half_width(mut self, half_width: f64) -> Self {
        self.half_width = Some(half_width);
        self
    }

    fn even(&self) -> bool {
        self.nu.is_multiple_of(2)
    }

    /// Central bump `P(0)` separating two mirror wells (even ν, ξ₂ > 0).
    pub fn barrier_top(&self) -> Option<f64> {
        (self.even() && self.xi2 > 0.0).then_some(0.5 * (self.xi2 * self.xi2 - self.w))
    }

    /// Smallest symmetric box whose ends sit `TRUNCATION_MARGIN` above `tau`.
    pub fn natural_half_width(&self, tau: f64) -> f64 {
        let lift = self.w + 2.0 * (tau + TRUNCATION_MARGIN);
        let nu = self.nu as f64;
        if lift <= 0.0 {
            return 1.0;
        }
        let s = lift.sqrt();
        let reach = |c: f64| (nu * c).abs().powf(1.0 / nu);
        let right = if self.xi2 + s > 0.0 { reach(self.xi2 + s) } else { 0.0 };
        let left = if self.even() { right } else { reach(self.xi2 - s) };
        // P grows monotonically beyond these points; the factor absorbs rounding
        (1.02 * right.max(left)).max(1e-3)
    }
}

impl Operator1D for AuxOperator1D {
    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn potential(&self, x: f64) -> f64 {
        let u = self.xi2 - x.powi(self.nu as i32) / self.nu as f64;
        0.5 * (u * u - self.w)
    }

    fn potential_minimum(&self) -> f64 {
        if self.even() && self.xi2 < 0.0 {
            0.5 * (self.xi2 * self.xi2 - self.w)
        } else {
            -0.5 * self.w
        }
    }

    fn half_width(&self, tau: f64) -> Result<f64, SpectralError> {
        check_margin(self, self.half_width.unwrap_or_else(|| self.natural_half_width(tau)), tau)
    }

    fn wells(&self, tau: f64) -> Result<usize, SpectralError> {
        match self.barrier_top() {
            Some(barrier) if tau > barrier => Err(SpectralError::MultiWell {
                xi2: self.xi2,
                barrier,
                tau,
            }),
            Some(_) => Ok(2),
            None => Ok(1),
        }
    }

    fn action(&self, e: f64) -> Result<f64, SpectralError> {
        // energy e lifts the well to W + 2e
        let lifted = self.w + 2.0 * e;
        if e <= self.potential_minimum() || lifted <= 0.0 {
            return Ok(0.0);
        }
        let model = EffectiveModel::new(self.nu, self.xi2, lifted)?.with_side(WellSide::Right);
        match model.action() {
            Ok(a) => Ok(a),
            Err(DynamicsError::NoWell { .. }) => Ok(0.0),
            Err(e) => Err(e.into()),
        }
    }
}

/// `−ħ²/2 ∂² + ω²x²/2`, used as an exactly solvable check of the counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Harmonic1D {
    pub omega: f64,
    pub hbar: f64,
}

impl Operator1D for Harmonic1D {
    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn potential(&self, x: f64) -> f64 {
        0.5 * self.omega * self.omega * x * x
    }

    fn potential_minimum(&self) -> f64 {
        0.0
    }

    fn half_width(&self, tau: f64) -> Result<f64, SpectralError> {
        let l = 1.02 * (2.0 * (tau + TRUNCATION_MARGIN)).max(1.0).sqrt() / self.omega;
        check_margin(self, l, tau)
    }

    fn wells(&self, _tau: f64) -> Result<usize, SpectralError> {
        Ok(1)
    }

    fn action(&self, e: f64) -> Result<f64, SpectralError> {
        if e <= 0.0 {
            return Ok(0.0);
        }
        let x = (2.0 * e).sqrt() / self.omega;
        action_by_quadrature(|y| self.potential(y), -x, x, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_box_clears_the_margin() {
        for (nu, xi2) in [(2, -0.5), (2, 0.0), (2, 1.3), (3, -2.0), (3, 0.4), (4, 0.7)] {
            let op = AuxOperator1D::new(nu, 0.05, xi2, 1.0).unwrap();
            for tau in [-0.3, 0.0, 0.8] {
                let l = op.half_width(tau).unwrap();
                assert!(op.potential(l) - tau >= 1.0 && op.potential(-l) - tau >= 1.0);
            }
        }
    }

    #[test]
    fn short_box_is_rejected() {
        let op = AuxOperator1D::new(2, 0.05, 0.0, 1.0).unwrap().with_half_width(0.5);
        assert!(matches!(op.half_width(0.0), Err(SpectralError::Truncation { .. })));
    }

    #[test]
    fn harmonic_action_is_linear_in_energy() {
        let op = Harmonic1D { omega: 1.7, hbar: 0.05 };
        for e in [0.01, 0.3, 2.0] {
            let s = op.action(e).unwrap();
            assert!((s - std::f64::consts::TAU * e / 1.7).abs() < 1e-12 * s.max(1.0));
        }
    }

    #[test]
    fn wells_follow_the_census() {
        let op = AuxOperator1D::new(2, 0.05, 0.6, 1.0).unwrap();
        assert_eq!(op.barrier_top(), Some(0.5 * (0.36 - 1.0)));
        assert_eq!(op.wells(-0.4).unwrap(), 2);
        assert!(matches!(op.wells(0.0), Err(SpectralError::MultiWell { .. })));
        assert_eq!(AuxOperator1D::new(3, 0.05, 0.6, 1.0).unwrap().wells(0.0).unwrap(), 1);
    }
}
