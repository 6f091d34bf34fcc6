//! Classical Hamiltonian flow of a charged particle,
//! `H(x, ξ) = ½ (Σ g^{jk} (ξ_j − μA_j)(ξ_k − μA_k) − V)`,
//! guiding-centre drift and the degenerate 2D/3D/4D models.

mod drift;
mod model;
mod models;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::field::{FieldError, MetricField, ScalarField, VectorPotential};
use crate::ode::{integrate, OdeError, OdeOptions, OdeSystem, Solution};
use crate::quadrature::QuadratureError;
use crate::roots::RootError;

pub use drift::{
    drift_velocity, extract_guiding_centers, guiding_center_error_scan, DriftScan, DriftScanRow, GuidingCenter, ScanHorizon,
};
pub use model::{
    find_kstar, EffectiveModel, KStar, TurningPoints, WellCensus, WellSide, QUADRATURE_INITIAL_NODES,
    QUADRATURE_MAX_NODES, QUADRATURE_REL_TOL,
};
pub use models::{
    adiabatic_invariant_scan, effective_potential_3d, model4d_invariants, model4d_system, model_system,
    scale_to_unit_mu, simulate_model, unscale_from_unit_mu, AdiabaticScan, MODEL4D_MIN_RHO, Model4dReport, ModelRun, ModelRunOptions, ScaledPoint,
};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error("energy drift {drift:e} exceeds the bound {bound:e} even at integrator tolerance {tol:e}")]
    EnergyDrift { drift: f64, bound: f64, tol: f64 },
    #[error("no classically allowed region for k = {k}, W = {w}")]
    NoWell { k: f64, w: f64 },
    #[error("turning point at x1 = 0 is degenerate for k = {k}, W = {w}; period and increment diverge")]
    DegenerateTurningPoint { k: f64, w: f64 },
    #[error("two-form is singular at {point:?}; the drift equation does not apply (use the degenerate model analysis)")]
    SingularField { point: Vec<f64> },
    #[error("metric is not the identity at {point:?}; the 2D drift formula needs pre-normalised coordinates")]
    MetricNotNormalized { point: Vec<f64> },
    #[error("scalar field must be positive, got {value} at {point:?}")]
    NonPositive { point: Vec<f64>, value: f64 },
    #[error("I(k) has no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("only {found} complete periods detected; need at least {needed}")]
    TooFewPeriods { found: usize, needed: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

impl DynamicsError {
    pub fn is_numerical(&self) -> bool {
        match self {
            DynamicsError::Field(e) => e.is_numerical(),
            DynamicsError::InvalidParams(_) | DynamicsError::NoWell { .. } | DynamicsError::MetricNotNormalized { .. } => {
                false
            }
            _ => true,
        }
    }
}

type DomainTest = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Metric, vector potential, scalar potential and coupling `μ`.
#[derive(Clone)]
pub struct MagneticSystem {
    pub metric: Arc<dyn MetricField>,
    pub potential: Arc<dyn VectorPotential>,
    pub scalar: Arc<dyn ScalarField>,
    pub mu: f64,
    domain: Option<DomainTest>,
}

impl fmt::Debug for MagneticSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MagneticSystem")
            .field("dim", &self.dim())
            .field("mu", &self.mu)
            .finish()
    }
}

impl MagneticSystem {
    pub fn new(
        metric: Arc<dyn MetricField>,
        potential: Arc<dyn VectorPotential>,
        scalar: Arc<dyn ScalarField>,
        mu: f64,
    ) -> Result<Self, DynamicsError> {
        if metric.dim() != potential.dim() {
            return Err(FieldError::DimensionMismatch {
                expected: potential.dim(),
                got: metric.dim(),
            }
            .into());
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(DynamicsError::InvalidParams(format!("mu must be positive, got {mu}")));
        }
        Ok(MagneticSystem {
            metric,
            potential,
            scalar,
            mu,
            domain: None,
        })
    }

    /// Restricts trajectories to positions where `inside` holds.
    pub fn with_domain<F: Fn(&[f64]) -> bool + Send + Sync + 'static>(mut self, inside: F) -> Self {
        self.domain = Some(Arc::new(inside));
        self
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        MagneticSystem { mu, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.domain.as_ref().is_none_or(|f| f(x))
    }

    /// Kinetic momentum `p = ξ − μA(x)`.
    pub fn kinetic_momentum(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; self.dim()];
        self.potential.eval(x, &mut a);
        xi.iter().zip(&a).map(|(s, ai)| s - self.mu * ai).collect()
    }

    /// Velocity `ẋ = G p`.
    pub fn velocity(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let p = DVector::from_vec(self.kinetic_momentum(x, xi));
        (self.metric.inverse_metric(x) * p).as_slice().to_vec()
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let d = self.dim();
        let (x, xi) = y.split_at(d);
        let p = DVector::from_vec(self.kinetic_momentum(x, xi));
        let g = self.metric.inverse_metric(x);
        let v = &g * &p;
        let j = self.potential.jacobian(x);
        let mut grad_v = vec![0.0; d];
        self.scalar.gradient(x, &mut grad_v);
        let lorentz = &j * &v;
        for i in 0..d {
            dy[i] = v[i];
            let mut f = self.mu * lorentz[i] + 0.5 * grad_v[i];
            if !self.metric.is_constant() {
                let dg: DMatrix<f64> = self.metric.derivative(x, i);
                f -= 0.5 * p.dot(&(&dg * &p));
            }
            dy[d + i] = f;
        }
    }
}

/// Position and canonical momentum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Self {
        PhasePoint { x, xi }
    }

    fn to_state(&self) -> Vec<f64> {
        self.x.iter().chain(&self.xi).copied().collect()
    }

    fn from_state(y: &[f64]) -> Self {
        let d = y.len() / 2;
        PhasePoint {
            x: y[..d].to_vec(),
            xi: y[d..].to_vec(),
        }
    }
}

/// `½ (pᵀ G p − V)` with `p = ξ − μA`.
pub fn hamiltonian_eval(sys: &MagneticSystem, z: &PhasePoint) -> f64 {
    let p = DVector::from_vec(sys.kinetic_momentum(&z.x, &z.xi));
    let g = sys.metric.inverse_metric(&z.x);
    0.5 * (p.dot(&(&g * &p)) - sys.scalar.value(&z.x))
}

struct Flow<'a>(&'a MagneticSystem);

impl OdeSystem for Flow<'_> {
    fn dim(&self) -> usize {
        2 * self.0.dim()
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        self.0.rhs(y, dy);
    }
    fn in_domain(&self, y: &[f64]) -> bool {
        self.0.contains(&y[..self.0.dim()])
    }
}

/// Accepted integrator steps of a trajectory with energies and optional
/// named channels.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySample {
    pub t: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub energy: Vec<f64>,
    pub channels: BTreeMap<String, Vec<f64>>,
    /// Bound the energy drift was checked against.
    pub energy_tol: f64,
    pub max_energy_drift: f64,
    /// Integrator tolerance that met the energy bound.
    pub ode_tol: f64,
    /// The trajectory left the domain before the final time.
    pub truncated: bool,
    #[serde(skip)]
    pub solution: Solution,
}

impl TrajectorySample {
    pub fn initial_energy(&self) -> f64 {
        self.energy[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().expect("nonempty trajectory")
    }

    pub fn state_at(&self, t: f64) -> PhasePoint {
        PhasePoint::from_state(&self.solution.interpolate(t))
    }

    /// Uniformly spaced copy (plus the final point) using the dense output.
    pub fn resample(&self, sys: &MagneticSystem, dt: f64) -> TrajectorySample {
        let t0 = self.t[0];
        let t1 = self.t_end();
        let n = ((t1 - t0) / dt).floor().max(0.0) as usize;
        let mut ts: Vec<f64> = (0..=n).map(|i| t0 + dt * i as f64).collect();
        if ts.last().is_some_and(|t| *t < t1 - 1e-12 * t1.abs().max(1.0)) {
            ts.push(t1);
        }
        let points: Vec<PhasePoint> = ts.iter().map(|t| self.state_at(*t)).collect();
        let energy = points.iter().map(|z| hamiltonian_eval(sys, z)).collect();
        TrajectorySample {
            t: ts,
            points,
            energy,
            channels: BTreeMap::new(),
            energy_tol: self.energy_tol,
            max_energy_drift: self.max_energy_drift,
            ode_tol: self.ode_tol,
            truncated: self.truncated,
            solution: self.solution.clone(),
        }
    }
}

/// Integrates Hamilton's equations over `[0, t_end]` (or backwards when
/// `t_end < 0`). The integrator tolerance is tightened until the energy drift
/// is at most `tol · max(1, |H(z0)|) · |t_end|`.
pub fn integrate_trajectory(
    sys: &MagneticSystem,
    z0: &PhasePoint,
    t_end: f64,
    tol: f64,
) -> Result<TrajectorySample, DynamicsError> {
    integrate_from(sys, z0, 0.0, t_end, tol)
}

pub(crate) fn integrate_from(
    sys: &MagneticSystem,
    z0: &PhasePoint,
    t0: f64,
    t_end: f64,
    tol: f64,
) -> Result<TrajectorySample, DynamicsError> {
    let d = sys.dim();
    if z0.x.len() != d || z0.xi.len() != d {
        return Err(FieldError::DimensionMismatch {
            expected: d,
            got: z0.x.len().min(z0.xi.len()),
        }
        .into());
    }
    if !(tol > 0.0) {
        return Err(DynamicsError::InvalidParams(format!("tolerance must be positive, got {tol}")));
    }
    if !sys.contains(&z0.x) {
        return Err(DynamicsError::InvalidParams(format!("initial point {:?} is outside the domain", z0.x)));
    }
    let h0 = hamiltonian_eval(sys, z0);
    let bound = tol * h0.abs().max(1.0) * (t_end - t0).abs();
    let y0 = z0.to_state();
    let mut ode_tol = (tol / sys.mu.max(1.0)).max(MIN_ODE_TOL);
    let mut last_drift = f64::INFINITY;
    loop {
        let sol = integrate(&Flow(sys), t0, &y0, t_end, &OdeOptions::with_tol(ode_tol))?;
        let points: Vec<PhasePoint> = sol.y.iter().map(|y| PhasePoint::from_state(y)).collect();
        let energy: Vec<f64> = points.iter().map(|z| hamiltonian_eval(sys, z)).collect();
        let drift = energy.iter().map(|e| (e - h0).abs()).fold(0.0, f64::max);
        if drift <= bound || drift == 0.0 {
            return Ok(TrajectorySample {
                t: sol.t.clone(),
                points,
                energy,
                channels: BTreeMap::new(),
                energy_tol: bound,
                max_energy_drift: drift,
                ode_tol,
                truncated: sol.truncated,
                solution: sol,
            });
        }
        last_drift = last_drift.min(drift);
        if ode_tol <= MIN_ODE_TOL {
            return Err(DynamicsError::EnergyDrift {
                drift: last_drift,
                bound,
                tol: ode_tol,
            });
        }
        ode_tol = (ode_tol * 0.1).max(MIN_ODE_TOL);
    }
}

const MIN_ODE_TOL: f64 = 1e-14;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{canonical_field, CanonicalKind, ConstantScalar, Euclidean};
    use proptest::prelude::*;

    fn constant_field(d: usize, f: Vec<f64>, v: f64, mu: f64) -> MagneticSystem {
        let (pot, _) = canonical_field(&CanonicalKind::Constant { intensities: f, dim: d }).unwrap();
        MagneticSystem::new(Arc::new(Euclidean(d)), pot, Arc::new(ConstantScalar(v)), mu).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let (pot, _) = canonical_field(&CanonicalKind::Constant { intensities: vec![1.0], dim: 2 }).unwrap();
        let free = MagneticSystem::new(Arc::new(Euclidean(2)), pot, Arc::new(ConstantScalar(0.0)), 1e-300).unwrap();
        assert!((hamiltonian_eval(&free, &PhasePoint::new(vec![0.0, 0.0], vec![1.0, 0.0])) - 0.5).abs() < 1e-15);

        let (pot, _) = canonical_field(&CanonicalKind::Model2d { nu: 2 }).unwrap();
        let model = MagneticSystem::new(Arc::new(Euclidean(2)), pot, Arc::new(ConstantScalar(1.0)), 1.0).unwrap();
        assert_eq!(hamiltonian_eval(&model, &PhasePoint::new(vec![0.0, 0.0], vec![0.0, 1.0])), 0.0);
    }

    #[test]
    fn free_motion_is_straight() {
        let sys = constant_field(2, vec![1.0], 0.0, 1e-300);
        let z0 = PhasePoint::new(vec![0.1, 0.2], vec![0.3, -0.4]);
        let tr = integrate_trajectory(&sys, &z0, 2.0, 1e-10).unwrap();
        let end = tr.points.last().unwrap();
        assert!((end.x[0] - 0.7).abs() < 1e-12 && (end.x[1] + 0.6).abs() < 1e-12);
    }

    #[test]
    fn cyclotron_circle() {
        // V ≡ 2E, H = E at |p|² = 4E
        let e = 0.5;
        for mu in [10.0, 100.0] {
            let sys = constant_field(2, vec![1.0], 2.0 * e, mu);
            let speed = (4.0 * e).sqrt();
            let z0 = PhasePoint::new(vec![0.0, 0.0], sys.kinetic_momentum(&[0.0, 0.0], &[0.0, 0.0]));
            let z0 = PhasePoint::new(z0.x, vec![z0.xi[0] + speed, z0.xi[1]]);
            assert!((hamiltonian_eval(&sys, &z0) - e).abs() < 1e-14);
            let period = std::f64::consts::TAU / mu;
            let tr = integrate_trajectory(&sys, &z0, period, 1e-12).unwrap();
            // centre is (0, -speed/mu) for clockwise rotation with F12 > 0
            let radius = speed / mu;
            for z in &tr.points {
                let r = z.x[0].hypot(z.x[1] + radius);
                assert!((r - radius).abs() < 1e-6 * radius, "mu={mu} r={r}");
            }
            let end = tr.points.last().unwrap();
            assert!(end.x[0].hypot(end.x[1]) < 1e-6 * radius);
        }
    }

    #[test]
    fn helix_in_three_dimensions() {
        let mu = 20.0;
        let sys = constant_field(3, vec![1.0], 0.0, mu);
        let (e1, ef): (f64, f64) = (0.5, 0.125);
        let z0 = PhasePoint::new(vec![0.0; 3], vec![(2.0 * e1).sqrt(), 0.0, (2.0 * ef).sqrt()]);
        let tr = integrate_trajectory(&sys, &z0, 1.0, 1e-11).unwrap();
        let radius = (2.0 * e1).sqrt() / mu;
        for (t, z) in tr.t.iter().zip(&tr.points) {
            assert!((z.x[0].hypot(z.x[1] + radius) - radius).abs() < 1e-6 * radius);
            assert!((z.x[2] - t * (2.0 * ef).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_bound_is_recorded() {
        let sys = constant_field(2, vec![1.0], 1.0, 50.0);
        let z0 = PhasePoint::new(vec![0.0, 0.0], vec![0.7, 0.2]);
        let tr = integrate_trajectory(&sys, &z0, 3.0, 1e-9).unwrap();
        assert!(tr.max_energy_drift <= tr.energy_tol);
        assert!(tr.t.windows(2).all(|w| w[1] > w[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn gauge_covariance(
            x in proptest::collection::vec(-0.8f64..0.8, 2),
            xi in proptest::collection::vec(-2.0f64..2.0, 2),
            c in -1.0f64..1.0,
        ) {
            // A + ∇(c x1 x2), ξ + μ∇(c x1 x2)
            struct Shifted(Arc<dyn VectorPotential>, f64);
            impl VectorPotential for Shifted {
                fn dim(&self) -> usize { 2 }
                fn eval(&self, x: &[f64], out: &mut [f64]) {
                    self.0.eval(x, out);
                    out[0] += self.1 * x[1];
                    out[1] += self.1 * x[0];
                }
            }
            let mu = 7.0;
            let (pot, _) = canonical_field(&CanonicalKind::Model2d { nu: 3 }).unwrap();
            let a = MagneticSystem::new(Arc::new(Euclidean(2)), pot.clone(), Arc::new(ConstantScalar(1.0)), mu).unwrap();
            let b = MagneticSystem::new(Arc::new(Euclidean(2)), Arc::new(Shifted(pot, c)), Arc::new(ConstantScalar(1.0)), mu).unwrap();
            let za = PhasePoint::new(x.clone(), xi.clone());
            let zb = PhasePoint::new(x.clone(), vec![xi[0] + mu * c * x[1], xi[1] + mu * c * x[0]]);
            prop_assert!((hamiltonian_eval(&a, &za) - hamiltonian_eval(&b, &zb)).abs() < 1e-12);
        }

        #[test]
        fn time_reversal(
            x in proptest::collection::vec(-0.5f64..0.5, 2),
            xi in proptest::collection::vec(-1.0f64..1.0, 2),
        ) {
            let tol = 1e-10;
            let (pot, _) = canonical_field(&CanonicalKind::Model2d { nu: 2 }).unwrap();
            let sys = MagneticSystem::new(Arc::new(Euclidean(2)), pot, Arc::new(ConstantScalar(1.0)), 3.0).unwrap();
            let z0 = PhasePoint::new(x, xi);
            let fwd = integrate_trajectory(&sys, &z0, 1.0, tol).unwrap();
            let mid = fwd.points.last().unwrap().clone();
            let back = integrate_from(&sys, &mid, 1.0, 0.0, tol).unwrap();
            let end = back.points.last().unwrap();
            for (a, b) in end.x.iter().chain(&end.xi).zip(z0.x.iter().chain(&z0.xi)) {
                prop_assert!((a - b).abs() <= 10.0 * tol, "{a} vs {b}");
            }
        }
    }
}
