//! The degenerate 2D model at energy 0: effective potential
//! `cV(x₁) = W − (k − x₁^ν/ν)²`, its wells, the period `T(k)`, the
//! per-period increment `I(k)` of `x₂` and the critical momentum `k*`.

use serde::Serialize;

use super::DynamicsError;
use crate::quadrature::{composite_doubling, GaussLegendre, PANEL_ORDER};
use crate::roots::bisect;

/// Total nodes of the first turning-point quadrature.
pub const QUADRATURE_INITIAL_NODES: usize = 256;
/// Node cap of the doubling loop.
pub const QUADRATURE_MAX_NODES: usize = 1 << 21;
/// Relative change at which the doubling loop stops.
pub const QUADRATURE_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WellSide {
    #[default]
    Right,
    Left,
}

/// Shape of the classically allowed set `{cV > 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WellCensus {
    /// One interval (containing 0 for even ν).
    OneWell,
    /// Two mirror intervals separated by a bump above the surface (even ν).
    TwoWells,
    /// Two wells touching at a degenerate extreme `cV(0) = 0`.
    Merged,
    /// One well ending at a degenerate turning point `x₁ = 0` (odd ν).
    DegenerateEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TurningPoints {
    pub lower: f64,
    pub upper: f64,
    pub census: WellCensus,
    /// Value of `k − x₁^ν/ν` (±√W) at the lower and upper ends.
    #[serde(skip)]
    edge_u: (f64, f64),
}

impl TurningPoints {
    pub fn degenerate(&self) -> bool {
        matches!(self.census, WellCensus::Merged | WellCensus::DegenerateEdge)
    }
}

/// Effective 1D model for momentum `k = ξ₂` and well height `W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveModel {
    pub nu: u32,
    pub k: f64,
    pub w: f64,
    pub mu: f64,
    pub side: WellSide,
}

fn root_nu(c: f64, nu: u32) -> f64 {
    // x^ν = c with x ≥ 0 for even ν, sign-preserving for odd ν
    let target = |x: f64| x.powi(nu as i32) - c.abs();
    let hi = c.abs().max(1.0) * 2.0;
    let r = bisect(target, 0.0, hi, 0.0).unwrap_or_else(|_| c.abs().powf(1.0 / nu as f64));
    r.copysign(c)
}

/// `Σ_{i<ν} x^i y^{ν−1−i}`, so that `x^ν − y^ν = (x − y)·P`.
fn power_difference_factor(x: f64, y: f64, nu: u32) -> f64 {
    let mut acc = 0.0;
    let mut xi = 1.0;
    for i in 0..nu {
        acc += xi * y.powi((nu - 1 - i) as i32);
        xi *= x;
    }
    acc
}

impl EffectiveModel {
    pub fn new(nu: u32, k: f64, w: f64) -> Result<Self, DynamicsError> {
        if nu < 2 {
            return Err(DynamicsError::InvalidParams(format!("nu must be >= 2, got {nu}")));
        }
        if !(w > 0.0) || !w.is_finite() || !k.is_finite() {
            return Err(DynamicsError::InvalidParams(format!("need W > 0 and finite k (W = {w}, k = {k})")));
        }
        Ok(EffectiveModel {
            nu,
            k,
            w,
            mu: 1.0,
            side: WellSide::Right,
        })
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_side(mut self, side: WellSide) -> Self {
        self.side = side;
        self
    }

    fn even(&self) -> bool {
        self.nu.is_multiple_of(2)
    }

    /// `k − x₁^ν/ν`, the x₂-velocity of the model.
    pub fn momentum_gap(&self, x1: f64) -> f64 {
        self.k - x1.powi(self.nu as i32) / self.nu as f64
    }

    /// `W − (k − x₁^ν/ν)²`.
    pub fn effective_potential(&self, x1: f64) -> f64 {
        let u = self.momentum_gap(x1);
        self.w - u * u
    }

    /// Turning points of the selected well and the well census.
    pub fn turning_points(&self) -> Result<TurningPoints, DynamicsError> {
        let nu = self.nu as f64;
        let s = self.w.sqrt();
        // cV > 0 ⟺ a < x^ν < b
        let a = nu * (self.k - s);
        let b = nu * (self.k + s);
        let no_well = DynamicsError::NoWell { k: self.k, w: self.w };
        if self.even() {
            if b <= 0.0 {
                return Err(no_well);
            }
            let outer = root_nu(b, self.nu);
            if a < 0.0 {
                return Ok(TurningPoints {
                    lower: -outer,
                    upper: outer,
                    census: WellCensus::OneWell,
                    edge_u: (-s, -s),
                });
            }
            let inner = root_nu(a, self.nu);
            let census = if a == 0.0 { WellCensus::Merged } else { WellCensus::TwoWells };
            Ok(match self.side {
                WellSide::Right => TurningPoints {
                    lower: inner,
                    upper: outer,
                    census,
                    edge_u: (s, -s),
                },
                WellSide::Left => TurningPoints {
                    lower: -outer,
                    upper: -inner,
                    census,
                    edge_u: (-s, s),
                },
            })
        } else {
            let census = if a == 0.0 || b == 0.0 {
                WellCensus::DegenerateEdge
            } else {
                WellCensus::OneWell
            };
            Ok(TurningPoints {
                lower: root_nu(a, self.nu),
                upper: root_nu(b, self.nu),
                census,
                edge_u: (s, -s),
            })
        }
    }

    fn nondegenerate_well(&self) -> Result<TurningPoints, DynamicsError> {
        let tp = self.turning_points()?;
        if tp.degenerate() {
            return Err(DynamicsError::DegenerateTurningPoint { k: self.k, w: self.w });
        }
        Ok(tp)
    }

    /// `(u, cV)` at `x = c + a sin θ`, evaluated relative to the nearer
    /// turning point so that `cV` keeps full relative accuracy near the ends.
    fn gap_and_potential(&self, tp: &TurningPoints, theta: f64) -> (f64, f64, f64) {
        let c = 0.5 * (tp.upper + tp.lower);
        let a = 0.5 * (tp.upper - tp.lower);
        let (sn, cs) = theta.sin_cos();
        let x = c + a * sn;
        let (x_end, dx, u_end) = if theta >= 0.0 {
            (tp.upper, -a * cs * cs / (1.0 + sn), tp.edge_u.1)
        } else {
            (tp.lower, a * cs * cs / (1.0 - sn), tp.edge_u.0)
        };
        let e = -dx * power_difference_factor(x, x_end, self.nu) / self.nu as f64;
        let u = u_end + e;
        let s = self.w.sqrt();
        let cv = if u_end > 0.0 { -e * (2.0 * s + e) } else { e * (2.0 * s - e) };
        (x, u, cv)
    }

    /// `∫ w(θ) dθ` over `[−π/2, π/2]` for `w = a cos θ / √(2 cV) · {1, u}`,
    /// doubling the composite Gauss–Legendre rule until both integrals settle.
    fn well_integrals(&self) -> Result<(f64, f64), DynamicsError> {
        let tp = self.nondegenerate_well()?;
        let a = 0.5 * (tp.upper - tp.lower);
        let half_pi = std::f64::consts::FRAC_PI_2;
        let rule = GaussLegendre::get(PANEL_ORDER);
        let eval = |panels: usize| {
            let width = 2.0 * half_pi / panels as f64;
            let (mut t_acc, mut i_acc) = (0.0, 0.0);
            for p in 0..panels {
                let mid = -half_pi + width * (p as f64 + 0.5);
                for (node, weight) in rule.nodes.iter().zip(&rule.weights) {
                    let theta = mid + 0.5 * width * node;
                    let (_, u, cv) = self.gap_and_potential(&tp, theta);
                    let w = weight * a * theta.cos() / (2.0 * cv).sqrt();
                    t_acc += w;
                    i_acc += u * w;
                }
            }
            (0.5 * width * t_acc, 0.5 * width * i_acc)
        };
        let mut panels = (QUADRATURE_INITIAL_NODES / PANEL_ORDER).max(1);
        let (mut t_prev, mut i_prev) = eval(panels);
        loop {
            panels *= 2;
            let (t, i) = eval(panels);
            if !t.is_finite() || !i.is_finite() {
                return Err(crate::quadrature::QuadratureError::NonFinite(tp.lower).into());
            }
            let t_ok = (t - t_prev).abs() <= QUADRATURE_REL_TOL * t.abs();
            let i_ok = (i - i_prev).abs() <= QUADRATURE_REL_TOL * i.abs().max(1e-3 * t.abs());
            if t_ok && i_ok {
                return Ok((2.0 * t, 2.0 * i));
            }
            if panels * PANEL_ORDER >= QUADRATURE_MAX_NODES {
                return Err(crate::quadrature::QuadratureError::NotConverged {
                    estimate: 2.0 * t,
                    change: 2.0 * (t - t_prev).abs().max((i - i_prev).abs()),
                    evaluations: panels * PANEL_ORDER,
                }
                .into());
            }
            t_prev = t;
            i_prev = i;
        }
    }

    /// `T(k) = 2 ∫ dx₁ / √(2 cV)` over the selected well.
    pub fn period_t(&self) -> Result<f64, DynamicsError> {
        Ok(self.well_integrals()?.0)
    }

    /// `I(k) = 2 ∫ (k − x₁^ν/ν) dx₁ / √(2 cV)` over the selected well.
    pub fn drift_increment_i(&self) -> Result<f64, DynamicsError> {
        Ok(self.well_integrals()?.1)
    }

    /// Both `T(k)` and `I(k)` from one quadrature pass.
    pub fn period_and_increment(&self) -> Result<(f64, f64), DynamicsError> {
        self.well_integrals()
    }

    /// Sign of `I(k)`, also defined at the degenerate momenta where the
    /// particle creeps towards `x₁ = 0` forever and `I` diverges with the sign
    /// of `k − x₁^ν/ν` there.
    pub fn drift_increment_sign(&self) -> Result<f64, DynamicsError> {
        let tp = self.turning_points()?;
        if tp.degenerate() {
            return Ok(self.k.signum());
        }
        let i = self.drift_increment_i()?;
        Ok(if i == 0.0 { 0.0 } else { i.signum() })
    }
}

impl EffectiveModel {
    /// `A(k) = 2 ∫ √cV dx₁` over the selected well, the closed-orbit action of
    /// the 1D model at energy 0. Finite at degenerate wells.
    pub fn action(&self) -> Result<f64, DynamicsError> {
        let tp = self.turning_points()?;
        let a = 0.5 * (tp.upper - tp.lower);
        let half_pi = std::f64::consts::FRAC_PI_2;
        let report = composite_doubling(-half_pi, half_pi, QUADRATURE_INITIAL_NODES, QUADRATURE_MAX_NODES, 1e-13, |theta| {
            let (_, _, cv) = self.gap_and_potential(&tp, theta);
            a * theta.cos() * cv.max(0.0).sqrt()
        })?;
        Ok(2.0 * report.value)
    }
}

/// The critical momentum and the slope of `I` there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KStar {
    pub kstar: f64,
    /// Finite-difference `dI/dk` at `k*` (`None` for odd ν, where `k* = 0`
    /// follows from symmetry).
    pub slope: Option<f64>,
    /// Bisection tolerance on `k`.
    pub tol: f64,
}

/// Root of `I(k)` in `(0, √W)` for even ν; exactly 0 for odd ν.
pub fn find_kstar(nu: u32, w: f64) -> Result<KStar, DynamicsError> {
    EffectiveModel::new(nu, 0.0, w)?;
    if nu % 2 == 1 {
        return Ok(KStar {
            kstar: 0.0,
            slope: None,
            tol: 0.0,
        });
    }
    let s = w.sqrt();
    let tol = 1e-10 * s;
    let inc = |k: f64| {
        EffectiveModel::new(nu, k, w)
            .and_then(|m| m.drift_increment_i())
            .unwrap_or(f64::NAN)
    };
    let (lo, hi) = (1e-3 * s, (1.0 - 1e-3) * s);
    let kstar = bisect(inc, lo, hi, tol).map_err(|e| match e {
        crate::roots::RootError::NoBracket { .. } => DynamicsError::NoSignChange { lo, hi },
        other => other.into(),
    })?;
    let h = 1e-4 * s;
    let slope = (inc(kstar + h) - inc(kstar - h)) / (2.0 * h);
    Ok(KStar {
        kstar,
        slope: Some(slope),
        tol,
    })
}
