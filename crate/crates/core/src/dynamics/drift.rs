//! Guiding-centre drift and its comparison with the full flow.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::{hamiltonian_eval, integrate_trajectory, DynamicsError, MagneticSystem, PhasePoint, TrajectorySample};
use crate::field::{central_diff4, two_form_from_potential, DEFAULT_RANK_TOL};
use crate::ode::{integrate, OdeOptions, OdeSystem};
use crate::roots::bisect;
use crate::stats::loglog_slope;

/// Step of the differences taken of the drift potential `(V + 2E)/f`.
const DRIFT_FD_STEP: f64 = 1e-3;

/// Drift velocity of the guiding centre at `x` on the energy level `E`.
///
/// In 2D this is `(2μ)⁻¹ (∇ (V + 2E)/F₁₂)^⊥` with `(a, b)^⊥ = (b, −a)` the
/// clockwise rotation; the metric must be the identity at `x`. In higher
/// (even) dimensions with `F` of full rank it is `−(2μ)⁻¹ F⁻¹ ∇V`, which
/// agrees with the 2D formula for constant `F₁₂`.
pub fn drift_velocity(sys: &MagneticSystem, x: &[f64], energy: f64) -> Result<Vec<f64>, DynamicsError> {
    let d = sys.dim();
    let f = two_form_from_potential(sys.potential.as_ref(), x)?;
    if f.rank(DEFAULT_RANK_TOL) < d || f.matrix().amax() == 0.0 {
        return Err(DynamicsError::SingularField { point: x.to_vec() });
    }
    let scale = 0.5 / sys.mu;
    if d == 2 {
        let g = sys.metric.inverse_metric(x);
        if (g - DMatrix::identity(2, 2)).amax() > 1e-12 {
            return Err(DynamicsError::MetricNotNormalized { point: x.to_vec() });
        }
        let q = |y: &[f64]| -> f64 {
            let f12 = two_form_from_potential(sys.potential.as_ref(), y)
                .map(|v| v.get(0, 1))
                .unwrap_or(f64::NAN);
            (sys.scalar.value(y) + 2.0 * energy) / f12
        };
        let mut grad = [0.0; 2];
        for (i, g) in grad.iter_mut().enumerate() {
            let mut y = x.to_vec();
            *g = central_diff4(
                |s| {
                    y[i] = s;
                    q(&y)
                },
                x[i],
                DRIFT_FD_STEP,
            );
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(DynamicsError::SingularField { point: x.to_vec() });
        }
        return Ok(vec![scale * grad[1], -scale * grad[0]]);
    }
    let inv = f
        .matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| DynamicsError::SingularField { point: x.to_vec() })?;
    let mut grad = vec![0.0; d];
    sys.scalar.gradient(x, &mut grad);
    let v = inv * DVector::from_vec(grad) * (-scale);
    Ok(v.as_slice().to_vec())
}

/// Position averaged over one cyclotron period, stamped at the period's midpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuidingCenter {
    pub t: f64,
    pub x: Vec<f64>,
    pub period: f64,
}

/// Upward zero crossings of the kinetic momentum `p₁ = ξ₁ − μA₁` on the dense
/// output, refined by bisection.
pub(crate) fn upward_crossings<F: Fn(&PhasePoint) -> f64>(traj: &TrajectorySample, signal: F) -> Vec<f64> {
    let values: Vec<f64> = traj.points.iter().map(&signal).collect();
    let mut out = Vec::new();
    for i in 0..values.len().saturating_sub(1) {
        if values[i] < 0.0 && values[i + 1] >= 0.0 {
            let (a, b) = (traj.t[i], traj.t[i + 1]);
            let tol = 1e-14 * b.abs().max(1.0);
            let root = bisect(|t| signal(&traj.state_at(t)), a, b, tol).unwrap_or(b);
            out.push(root);
        }
    }
    out
}

/// Guiding centres between consecutive upward crossings of `p₁`.
pub fn extract_guiding_centers(sys: &MagneticSystem, traj: &TrajectorySample) -> Vec<GuidingCenter> {
    let d = sys.dim();
    let crossings = upward_crossings(traj, |z| sys.kinetic_momentum(&z.x, &z.xi)[0]);
    crossings
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let x = (0..d)
                .map(|k| traj.solution.integrate_component(k, a, b) / (b - a))
                .collect();
            GuidingCenter {
                t: 0.5 * (a + b),
                x,
                period: b - a,
            }
        })
        .collect()
}

struct DriftFlow<'a> {
    sys: &'a MagneticSystem,
    energy: f64,
}

impl OdeSystem for DriftFlow<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        match drift_velocity(self.sys, y, self.energy) {
            Ok(v) => dy.copy_from_slice(&v),
            Err(_) => dy.fill(f64::NAN),
        }
    }
}

/// Length of the run used for each `μ` of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScanHorizon {
    /// The same `T` for every `μ`.
    #[default]
    Fixed,
    /// `T μ / μ_min`: the drift covers the same distance for every `μ`.
    DriftScaled,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftScanRow {
    pub mu: f64,
    pub t_end: f64,
    /// `max_i |X_drift(t_i) − X_avg(t_i)|` over the extracted centres.
    pub max_deviation: f64,
    pub centers: usize,
    /// Mean speed of the extracted centres.
    pub mean_drift_speed: f64,
    pub max_energy_drift: f64,
    pub energy_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftScan {
    pub rows: Vec<DriftScanRow>,
    /// Log-log slope of the deviation against μ (absent without drift).
    pub slope: Option<f64>,
    pub slope_rms: Option<f64>,
    /// The drift velocity vanishes along the path: deviations only measure
    /// the cyclotron averaging, not the drift equation.
    pub no_drift: bool,
}

fn scan_one(
    sys: &MagneticSystem,
    x0: &[f64],
    p0: &[f64],
    mu: f64,
    t_end: f64,
    tol: f64,
) -> Result<(DriftScanRow, bool), DynamicsError> {
    let s = sys.with_mu(mu);
    let mut a = vec![0.0; s.dim()];
    s.potential.eval(x0, &mut a);
    let xi: Vec<f64> = p0.iter().zip(&a).map(|(p, ai)| p + mu * ai).collect();
    let z0 = PhasePoint::new(x0.to_vec(), xi);
    let energy = hamiltonian_eval(&s, &z0);
    let traj = integrate_trajectory(&s, &z0, t_end, tol)?;
    let centers = extract_guiding_centers(&s, &traj);
    if centers.len() < 3 {
        return Err(DynamicsError::TooFewPeriods {
            found: centers.len(),
            needed: 3,
        });
    }
    let first = &centers[0];
    let last = centers.last().expect("checked length");
    let drift = integrate(
        &DriftFlow { sys: &s, energy },
        first.t,
        &first.x,
        last.t,
        &OdeOptions::with_tol(1e-12),
    )?;
    let mut max_dev: f64 = 0.0;
    let mut no_drift = true;
    for c in &centers {
        let y = drift.interpolate(c.t);
        let dev = y.iter().zip(&c.x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        max_dev = max_dev.max(dev);
        let v = drift_velocity(&s, &c.x, energy)?;
        no_drift &= v.iter().all(|vi| vi.abs() <= 1e-12);
    }
    let travelled = first.x.iter().zip(&last.x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    Ok((
        DriftScanRow {
            mu,
            t_end,
            max_deviation: max_dev,
            centers: centers.len(),
            mean_drift_speed: travelled / (last.t - first.t),
            max_energy_drift: traj.max_energy_drift,
            energy_tol: traj.energy_tol,
        },
        no_drift,
    ))
}

/// Integrates the full flow for each `μ` (from position `x0` with kinetic
/// momentum `p0`, so every run starts on the same cyclotron), extracts
/// guiding centres and compares them with the drift equation started from
/// the first centre.
///
/// At a fixed horizon the deviation decays like `μ⁻³`; over the drift time
/// scale ([`ScanHorizon::DriftScaled`]) it decays like `μ⁻²`.
#[allow(clippy::too_many_arguments)]
pub fn guiding_center_error_scan(
    sys: &MagneticSystem,
    x0: &[f64],
    p0: &[f64],
    mus: &[f64],
    t_end: f64,
    horizon: ScanHorizon,
    tol: f64,
) -> Result<DriftScan, DynamicsError> {
    if mus.is_empty() || mus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DynamicsError::InvalidParams("mu list must be nonempty and increasing".into()));
    }
    if !(t_end > 0.0) || !(tol > 0.0) {
        return Err(DynamicsError::InvalidParams("t_end and tol must be positive".into()));
    }
    let horizon_for = |mu: f64| match horizon {
        ScanHorizon::Fixed => t_end,
        ScanHorizon::DriftScaled => t_end * mu / mus[0],
    };
    let results: Vec<Result<(DriftScanRow, bool), DynamicsError>> = mus
        .par_iter()
        .map(|mu| scan_one(sys, x0, p0, *mu, horizon_for(*mu), tol))
        .collect();
    let mut rows = Vec::with_capacity(mus.len());
    let mut no_drift = true;
    for r in results {
        let (row, nd) = r?;
        no_drift &= nd;
        rows.push(row);
    }
    let (slope, slope_rms) = if no_drift || rows.len() < 2 {
        (None, None)
    } else {
        let xs: Vec<f64> = rows.iter().map(|r| r.mu).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.max_deviation).collect();
        match loglog_slope(&xs, &ys) {
            Some(fit) => (Some(fit.slope), Some(fit.rms)),
            None => (None, None),
        }
    };
    Ok(DriftScan {
        rows,
        slope,
        slope_rms,
        no_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{canonical_field, AffineScalar, CanonicalKind, ConstantScalar, Euclidean, VectorPotential};
    use std::sync::Arc;

    /// `A = (0, x₁ + c x₁²/2)`, so `F₁₂ = 1 + c x₁`.
    pub(crate) struct Ramp(pub f64);

    impl VectorPotential for Ramp {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, x: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
            out[1] = x[0] + 0.5 * self.0 * x[0] * x[0];
        }
        fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0 + self.0 * x[0], 0.0, 0.0])
        }
    }

    fn ramp_system(c: f64, slope: f64) -> MagneticSystem {
        MagneticSystem::new(
            Arc::new(Euclidean(2)),
            Arc::new(Ramp(c)),
            Arc::new(AffineScalar {
                constant: 1.0,
                slope: vec![slope, 0.0],
            }),
            50.0,
        )
        .unwrap()
    }

    #[test]
    fn uniform_field_linear_potential() {
        let sys = ramp_system(0.0, -0.5);
        let v = drift_velocity(&sys, &[0.1, 0.2], 0.0).unwrap();
        // |∇V| / (2μ), perpendicular to ∇V = (−0.5, 0)
        assert!(v[0].abs() < 1e-12);
        assert!((v[1] - 0.5 / (2.0 * 50.0)).abs() < 1e-12);
    }

    #[test]
    fn drift_matches_secular_motion_of_full_flow() {
        // oracle: least-squares line through the guiding centres of the full flow
        let sys = ramp_system(0.0, -0.5);
        let z0 = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 0.0]);
        let traj = integrate_trajectory(&sys, &z0, 3.0, 1e-10).unwrap();
        let centers = extract_guiding_centers(&sys, &traj);
        let t: Vec<f64> = centers.iter().map(|c| c.t).collect();
        let y: Vec<f64> = centers.iter().map(|c| c.x[1]).collect();
        let fit = crate::stats::linear_fit(&t, &y).unwrap();
        let v = drift_velocity(&sys, &centers[0].x, 0.0).unwrap();
        assert!((fit.slope - v[1]).abs() < 1e-6, "{} vs {}", fit.slope, v[1]);
    }

    #[test]
    fn constant_data_has_no_drift() {
        let (pot, _) = canonical_field(&CanonicalKind::Constant { intensities: vec![1.0], dim: 2 }).unwrap();
        let sys = MagneticSystem::new(Arc::new(Euclidean(2)), pot, Arc::new(ConstantScalar(1.0)), 10.0).unwrap();
        assert_eq!(drift_velocity(&sys, &[0.3, 0.3], 0.5).unwrap(), vec![0.0, 0.0]);
        let scan = guiding_center_error_scan(&sys, &[0.0, 0.0], &[1.0, 0.0], &[20.0, 40.0], 2.0, ScanHorizon::Fixed, 1e-10)
            .unwrap();
        assert!(scan.no_drift);
        assert!(scan.slope.is_none());
    }

    #[test]
    fn drift_follows_level_sets() {
        let sys = ramp_system(0.3, -0.5);
        for x in [[0.1, 0.0], [-0.2, 0.4], [0.3, -0.1]] {
            let e = 0.2;
            let v = drift_velocity(&sys, &x, e).unwrap();
            let q = |y: &[f64]| (1.0 - 0.5 * y[0] + 2.0 * e) / (1.0 + 0.3 * y[0]);
            let h = 1e-6;
            let g = [(q(&[x[0] + h, x[1]]) - q(&[x[0] - h, x[1]])) / (2.0 * h), 0.0];
            assert!((v[0] * g[0] + v[1] * g[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_model_reproduces_model_drift_law() {
        // dx₂/dt = ½(ν−1) μ⁻¹ x₁^{−ν} on V ≡ 1, E = 0
        let (pot, _) = canonical_field(&CanonicalKind::Model2d { nu: 2 }).unwrap();
        let sys = MagneticSystem::new(Arc::new(Euclidean(2)), pot, Arc::new(ConstantScalar(1.0)), 30.0).unwrap();
        let x1: f64 = 0.7;
        let v = drift_velocity(&sys, &[x1, 0.0], 0.0).unwrap();
        assert!(v[0].abs() < 1e-10);
        assert!((v[1] - 0.5 / 30.0 * x1.powi(-2)).abs() < 1e-9);
        assert!(matches!(
            drift_velocity(&sys, &[0.0, 0.0], 0.0),
            Err(DynamicsError::SingularField { .. })
        ));
    }

    #[test]
    fn deviation_decays_quadratically_on_the_drift_scale() {
        let sys = ramp_system(0.3, -0.5);
        let scan = guiding_center_error_scan(
            &sys,
            &[0.0, 0.0],
            &[1.0, 0.0],
            &[25.0, 50.0, 100.0],
            2.0,
            ScanHorizon::DriftScaled,
            1e-11,
        )
        .unwrap();
        assert_eq!(scan.rows[2].t_end, 8.0);
        let ratio = scan.rows[1].max_deviation / scan.rows[2].max_deviation;
        assert!((3.0..=5.0).contains(&ratio), "{ratio} {:?}", scan.rows);
    }

    #[test]
    fn deviation_decays_faster_at_a_fixed_horizon() {
        let sys = ramp_system(0.3, -0.5);
        let scan = guiding_center_error_scan(&sys, &[0.0, 0.0], &[1.0, 0.0], &[25.0, 50.0, 100.0], 2.0, ScanHorizon::Fixed, 1e-11)
            .unwrap();
        let slope = scan.slope.unwrap();
        assert!(slope < -2.5, "{slope}");
    }
}
