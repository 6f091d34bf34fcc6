//! Model runs: the degenerate 2D model in unscaled variables, the 3D
//! adiabatic check and the 4D model in polar coordinates.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::drift::upward_crossings;
use super::{
    hamiltonian_eval, integrate_trajectory, DynamicsError, EffectiveModel, MagneticSystem, PhasePoint,
    TrajectorySample,
};
use crate::field::{
    canonical_field, AffineScalar, CanonicalKind, ConstantScalar, Euclidean, MetricField, ScalarField,
    VectorPotential,
};

/// A phase point with its time in the `μ = 1` picture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledPoint {
    pub point: PhasePoint,
    pub t: f64,
}

/// Maps the model with coupling `μ` to `μ = 1`: `x ↦ μ^{1/ν} x`,
/// `t ↦ μ^{1/ν} t`, momenta unchanged (so `ξ₂ = k` keeps its value).
pub fn scale_to_unit_mu(nu: u32, mu: f64, z: &PhasePoint, t: f64) -> ScaledPoint {
    let s = mu.powf(1.0 / nu as f64);
    ScaledPoint {
        point: PhasePoint::new(z.x.iter().map(|v| v * s).collect(), z.xi.clone()),
        t: t * s,
    }
}

/// Inverse of [`scale_to_unit_mu`].
pub fn unscale_from_unit_mu(nu: u32, mu: f64, p: &ScaledPoint) -> (PhasePoint, f64) {
    let s = mu.powf(-1.0 / nu as f64);
    (
        PhasePoint::new(p.point.x.iter().map(|v| v * s).collect(), p.point.xi.clone()),
        p.t * s,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelRunOptions {
    pub nu: u32,
    pub mu: f64,
    pub k: f64,
    pub t_end: f64,
    /// Slope of the tilted potential `V = 1 − α X₁` in the `μ = 1` picture
    /// (`X₁ = μ^{1/ν} x₁`).
    pub alpha: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelRun {
    pub options: ModelRunOptions,
    /// Durations of the complete x₁-periods.
    pub periods: Vec<f64>,
    /// Increment of x₂ over each complete period.
    pub dx2_per_period: Vec<f64>,
    pub mean_dx2: f64,
    pub mean_period: f64,
    /// Mean arc length of the path per period.
    pub path_length_per_period: f64,
    /// `I(k)` and `T(k)` of the untilted model (absent when degenerate).
    pub increment_i: Option<f64>,
    pub period_t: Option<f64>,
    /// `√2 μ^{−1/ν} I(k)` and `√2 μ^{−1/ν} T(k)`: the untilted prediction in
    /// unscaled variables.
    pub predicted_dx2: Option<f64>,
    pub predicted_period: Option<f64>,
    /// Sign of the simulated drift agrees with the sign of `I(k)`.
    pub sign_agrees: Option<bool>,
    /// All per-period increments share one sign.
    pub sign_constant: bool,
    pub max_energy_drift: f64,
    pub energy_tol: f64,
    #[serde(skip)]
    pub trajectory: TrajectorySample,
}

/// The degenerate 2D model `A = (0, x₁^ν/ν)` with coupling `μ` and
/// `V = 1 − α μ^{1/ν} x₁`.
pub fn model_system(nu: u32, mu: f64, alpha: f64) -> Result<MagneticSystem, DynamicsError> {
    let (pot, _) = canonical_field(&CanonicalKind::Model2d { nu })?;
    let slope = -alpha * mu.powf(1.0 / nu as f64);
    MagneticSystem::new(
        Arc::new(Euclidean(2)),
        pot,
        Arc::new(AffineScalar {
            constant: 1.0,
            slope: vec![slope, 0.0],
        }),
        mu,
    )
}

/// Runs the model on the energy level 0 with `ξ₂ = k`, starting at the bottom
/// of the right well with `ξ₁ > 0`, and measures the x₂ increment per
/// x₁-period.
pub fn simulate_model(opts: &ModelRunOptions) -> Result<ModelRun, DynamicsError> {
    let ModelRunOptions { nu, mu, k, alpha, .. } = *opts;
    if !(mu > 0.0) || !(opts.t_end > 0.0) {
        return Err(DynamicsError::InvalidParams("mu and t_end must be positive".into()));
    }
    let model = EffectiveModel::new(nu, k, 1.0)?;
    let sys = model_system(nu, mu, alpha)?;
    let scale = mu.powf(-1.0 / nu as f64);
    // bottom of the well in the μ = 1 picture: k = X^ν/ν, or 0 when unreachable
    let bottom = if nu % 2 == 0 {
        if k > 0.0 {
            (nu as f64 * k).powf(1.0 / nu as f64)
        } else {
            0.0
        }
    } else {
        (nu as f64 * k).abs().powf(1.0 / nu as f64).copysign(k)
    };
    let x0 = vec![bottom * scale, 0.0];
    let kinetic2 = k - bottom.powi(nu as i32) / nu as f64;
    let allowed = sys.scalar.value(&x0) - kinetic2 * kinetic2;
    if !(allowed > 0.0) {
        return Err(DynamicsError::NoWell { k, w: 1.0 });
    }
    let z0 = PhasePoint::new(x0, vec![allowed.sqrt(), k]);
    let traj = integrate_trajectory(&sys, &z0, opts.t_end, opts.tol)?;
    let crossings = upward_crossings(&traj, |z| z.xi[0]);
    if crossings.len() < 2 {
        return Err(DynamicsError::TooFewPeriods {
            found: crossings.len().saturating_sub(1),
            needed: 1,
        });
    }
    let x2: Vec<f64> = crossings.iter().map(|t| traj.state_at(*t).x[1]).collect();
    let periods: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let dx2: Vec<f64> = x2.windows(2).map(|w| w[1] - w[0]).collect();
    let n = periods.len() as f64;
    let mean_dx2 = (x2[x2.len() - 1] - x2[0]) / n;
    let mean_period = (crossings[crossings.len() - 1] - crossings[0]) / n;

    let (first, last) = (crossings[0], crossings[crossings.len() - 1]);
    let mut path = 0.0;
    let mut prev = traj.state_at(first).x;
    for (t, z) in traj.t.iter().zip(&traj.points) {
        if *t > first && *t < last {
            path += (z.x[0] - prev[0]).hypot(z.x[1] - prev[1]);
            prev = z.x.clone();
        }
    }
    let end = traj.state_at(last).x;
    path += (end[0] - prev[0]).hypot(end[1] - prev[1]);

    let quad = model.period_and_increment().ok();
    let norm = 2f64.sqrt() * scale;
    let increment_i = quad.map(|q| q.1);
    let sign_agrees = if alpha == 0.0 {
        model
            .drift_increment_sign()
            .ok()
            .filter(|s| *s != 0.0)
            .map(|s| s == mean_dx2.signum())
    } else {
        None
    };
    let sign_constant = dx2.iter().all(|d| d.signum() == dx2[0].signum());
    Ok(ModelRun {
        options: *opts,
        periods,
        dx2_per_period: dx2,
        mean_dx2,
        mean_period,
        path_length_per_period: path / n,
        increment_i,
        period_t: quad.map(|q| q.0),
        predicted_dx2: increment_i.map(|i| norm * i),
        predicted_period: quad.map(|q| norm * q.0),
        sign_agrees,
        sign_constant,
        max_energy_drift: traj.max_energy_drift,
        energy_tol: traj.energy_tol,
        trajectory: traj,
    })
}

/// `V − M²/f` at `x`.
pub fn effective_potential_3d(
    f: &dyn ScalarField,
    v: &dyn ScalarField,
    m: f64,
    x: &[f64],
) -> Result<f64, DynamicsError> {
    let fx = f.value(x);
    if !(fx > 0.0) {
        return Err(DynamicsError::NonPositive {
            point: x.to_vec(),
            value: fx,
        });
    }
    Ok(v.value(x) - m * m / fx)
}

/// `A = f(x₃)(−x₂/2, x₁/2, 0)` with `f = 1 + ε x₃`: a field along `x₃` whose
/// strength grows slowly along its lines.
struct SlowlyVaryingAxial {
    eps: f64,
}

impl SlowlyVaryingAxial {
    fn strength(&self, x3: f64) -> f64 {
        1.0 + self.eps * x3
    }

    /// `B = curl A`.
    fn field(&self, x: &[f64]) -> [f64; 3] {
        let f = self.strength(x[2]);
        [-0.5 * self.eps * x[0], -0.5 * self.eps * x[1], f]
    }
}

impl VectorPotential for SlowlyVaryingAxial {
    fn dim(&self) -> usize {
        3
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let f = self.strength(x[2]);
        out[0] = -0.5 * f * x[1];
        out[1] = 0.5 * f * x[0];
        out[2] = 0.0;
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let f = self.strength(x[2]);
        let mut j = DMatrix::zeros(3, 3);
        j[(1, 0)] = -0.5 * f;
        j[(0, 1)] = 0.5 * f;
        j[(2, 0)] = -0.5 * self.eps * x[1];
        j[(2, 1)] = 0.5 * self.eps * x[0];
        j
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AdiabaticScan {
    pub eps: f64,
    pub mus: Vec<f64>,
    /// `max_t |J(t) − J(0)|` for `J = |p_⊥|²/|B|`.
    pub max_deviation: Vec<f64>,
    /// Largest relative change of `|p_⊥|²` itself over the run, for contrast.
    pub perpendicular_energy_change: Vec<f64>,
}

/// Integrates a 3D particle spiralling into a field that strengthens along its
/// lines and tracks the magnetic moment `|p_⊥|²/|B|`.
pub fn adiabatic_invariant_scan(eps: f64, mus: &[f64], t_end: f64, tol: f64) -> Result<AdiabaticScan, DynamicsError> {
    let rows: Vec<Result<(f64, f64), DynamicsError>> = mus
        .par_iter()
        .map(|&mu| {
            let field = Arc::new(SlowlyVaryingAxial { eps });
            let sys = MagneticSystem::new(Arc::new(Euclidean(3)), field.clone(), Arc::new(ConstantScalar(0.0)), mu)?;
            let z0 = PhasePoint::new(vec![0.0; 3], vec![1.0, 0.0, 0.5]);
            let traj = integrate_trajectory(&sys, &z0, t_end, tol)?;
            let moment = |z: &PhasePoint| {
                let p = sys.kinetic_momentum(&z.x, &z.xi);
                let b = field.field(&z.x);
                let bn = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
                let par = (p[0] * b[0] + p[1] * b[1] + p[2] * b[2]) / bn;
                let perp2 = p.iter().map(|v| v * v).sum::<f64>() - par * par;
                (perp2 / bn, perp2)
            };
            let (j0, e0) = moment(&traj.points[0]);
            let mut dev: f64 = 0.0;
            let mut change: f64 = 0.0;
            for z in &traj.points {
                let (j, e) = moment(z);
                dev = dev.max((j - j0).abs());
                change = change.max(((e - e0) / e0).abs());
            }
            Ok((dev, change))
        })
        .collect();
    let mut max_deviation = Vec::new();
    let mut perpendicular_energy_change = Vec::new();
    for r in rows {
        let (d, e) = r?;
        max_deviation.push(d);
        perpendicular_energy_change.push(e);
    }
    Ok(AdiabaticScan {
        eps,
        mus: mus.to_vec(),
        max_deviation,
        perpendicular_energy_change,
    })
}

/// Inverse metric `diag(1, 1, 1, ρ⁻²)` in coordinates `(x₁, x₂, ρ, θ)`.
struct PolarMetric;

impl MetricField for PolarMetric {
    fn dim(&self) -> usize {
        4
    }
    fn inverse_metric(&self, x: &[f64]) -> DMatrix<f64> {
        let mut g = DMatrix::identity(4, 4);
        g[(3, 3)] = 1.0 / (x[2] * x[2]);
        g
    }
    fn derivative(&self, x: &[f64], i: usize) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(4, 4);
        if i == 2 {
            d[(3, 3)] = -2.0 / (x[2] * x[2] * x[2]);
        }
        d
    }
}

/// `A = (0, x₁ − ½ρ², 0, (x₁ − ¼ρ²)ρ²)` in `(x₁, x₂, ρ, θ)`.
struct PolarPotential;

impl VectorPotential for PolarPotential {
    fn dim(&self) -> usize {
        4
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let r2 = x[2] * x[2];
        out[0] = 0.0;
        out[1] = x[0] - 0.5 * r2;
        out[2] = 0.0;
        out[3] = (x[0] - 0.25 * r2) * r2;
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let r = x[2];
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 1)] = 1.0;
        j[(2, 1)] = -r;
        j[(0, 3)] = r * r;
        j[(2, 3)] = 2.0 * x[0] * r - r * r * r;
        j
    }
}

/// Smallest radius the polar model integrates to.
pub const MODEL4D_MIN_RHO: f64 = 1e-3;

/// The 4D model in polar coordinates with `V ≡ 1`.
pub fn model4d_system(mu: f64) -> Result<MagneticSystem, DynamicsError> {
    Ok(MagneticSystem::new(
        Arc::new(PolarMetric),
        Arc::new(PolarPotential),
        Arc::new(ConstantScalar(1.0)),
        mu,
    )?
    .with_domain(|x| x[2] > MODEL4D_MIN_RHO))
}

#[derive(Debug, Clone, Serialize)]
pub struct Model4dReport {
    pub mu: f64,
    pub t_end: f64,
    pub xi2_drift: f64,
    pub vartheta_drift: f64,
    /// `max_t |Δ(x₁ − ½ρ²)|`.
    pub slow_drift: f64,
    pub max_energy_drift: f64,
    pub energy_tol: f64,
    pub truncated: bool,
    #[serde(skip)]
    pub trajectory: TrajectorySample,
}

/// Integrates the polar 4D model from `(x₁, x₂, ρ, θ) = (0, 0, 1, 0)` with unit
/// kinetic momentum `(0.6, 0, 0.8, 0)` (energy 0) and reports how well the
/// momenta dual to `x₂` and `θ` and the combination `x₁ − ½ρ²` are kept.
pub fn model4d_invariants(mu: f64, t_end: f64, tol: f64) -> Result<Model4dReport, DynamicsError> {
    let sys = model4d_system(mu)?;
    let x0 = vec![0.0, 0.0, 1.0, 0.0];
    let mut a = [0.0; 4];
    sys.potential.eval(&x0, &mut a);
    let kinetic = [0.6, 0.0, 0.8, 0.0];
    let xi: Vec<f64> = (0..4)
        .map(|i| {
            let p = if i == 3 { kinetic[3] * x0[2] } else { kinetic[i] };
            p + mu * a[i]
        })
        .collect();
    let z0 = PhasePoint::new(x0, xi);
    debug_assert!(hamiltonian_eval(&sys, &z0).abs() < 1e-12);
    let traj = integrate_trajectory(&sys, &z0, t_end, tol)?;
    let first = &traj.points[0];
    let slow = |z: &PhasePoint| z.x[0] - 0.5 * z.x[2] * z.x[2];
    let s0 = slow(first);
    let (mut d2, mut dt, mut ds): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for z in &traj.points {
        d2 = d2.max((z.xi[1] - first.xi[1]).abs());
        dt = dt.max((z.xi[3] - first.xi[3]).abs());
        ds = ds.max((slow(z) - s0).abs());
    }
    Ok(Model4dReport {
        mu,
        t_end,
        xi2_drift: d2,
        vartheta_drift: dt,
        slow_drift: ds,
        max_energy_drift: traj.max_energy_drift,
        energy_tol: traj.energy_tol,
        truncated: traj.truncated,
        trajectory: traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::find_kstar;
    use crate::field::FnScalar;

    #[test]
    fn scaling_round_trip_and_equivalence() {
        let (nu, mu) = (3, 40.0);
        let z = PhasePoint::new(vec![0.12, -0.3], vec![0.4, 0.7]);
        let s = scale_to_unit_mu(nu, mu, &z, 0.25);
        let (back, t) = unscale_from_unit_mu(nu, mu, &s);
        assert!((t - 0.25).abs() < 1e-15);
        for (a, b) in back.x.iter().zip(&z.x) {
            assert!((a - b).abs() < 1e-15);
        }
        // the flow commutes with the scaling
        let unscaled = model_system(nu, mu, 0.0).unwrap();
        let unit = model_system(nu, 1.0, 0.0).unwrap();
        let a = integrate_trajectory(&unscaled, &z, 0.25, 1e-12).unwrap();
        let b = integrate_trajectory(&unit, &s.point, s.t, 1e-12).unwrap();
        let mapped = scale_to_unit_mu(nu, mu, a.points.last().unwrap(), 0.25);
        for (p, q) in mapped.point.x.iter().chain(&mapped.point.xi).zip(b.points.last().unwrap().x.iter().chain(&b.points.last().unwrap().xi)) {
            assert!((p - q).abs() < 1e-8, "{p} vs {q}");
        }
    }

    fn run(k: f64, mu: f64, t_end: f64) -> ModelRun {
        simulate_model(&ModelRunOptions {
            nu: 2,
            mu,
            k,
            t_end,
            alpha: 0.0,
            tol: 1e-10,
        })
        .unwrap()
    }

    #[test]
    fn simulated_drift_follows_increment_sign() {
        let up = run(2.0, 100.0, 4.0);
        assert!(up.mean_dx2 > 0.0 && up.sign_agrees == Some(true));
        let down = run(0.3, 100.0, 8.0);
        assert!(down.mean_dx2 < 0.0 && down.sign_agrees == Some(true));
        let ks = find_kstar(2, 1.0).unwrap().kstar;
        let still = run(ks, 100.0, 8.0);
        assert!(still.mean_dx2.abs() < 1e-3 * still.path_length_per_period, "{}", still.mean_dx2);
    }

    #[test]
    fn simulated_increment_matches_quadrature() {
        // normalisation fixed by the k = 2 run, then checked at other momenta
        let reference = run(2.0, 100.0, 4.0);
        let norm = reference.mean_dx2 / reference.increment_i.unwrap();
        assert!((norm - 2f64.sqrt() / 10.0).abs() < 1e-3 * norm);
        for k in [0.3, 1.2] {
            let r = run(k, 100.0, 8.0);
            let predicted = norm * r.increment_i.unwrap();
            assert!((r.mean_dx2 - predicted).abs() < 0.05 * predicted.abs(), "k={k}");
            assert!((r.mean_period - r.predicted_period.unwrap()).abs() < 1e-3 * r.mean_period);
        }
    }

    #[test]
    fn effective_potential_3d_examples() {
        let one = ConstantScalar(1.0);
        let v = FnScalar(|x: &[f64]| 0.5 + x[0]);
        assert_eq!(effective_potential_3d(&one, &v, 0.0, &[0.2, 0.0, 0.0]).unwrap(), 0.7);
        assert_eq!(effective_potential_3d(&one, &one, 1.0, &[0.0; 3]).unwrap(), 0.0);
        assert!(effective_potential_3d(&ConstantScalar(0.0), &one, 1.0, &[0.0; 3]).is_err());
    }

    #[test]
    fn magnetic_moment_is_adiabatic() {
        let scan = adiabatic_invariant_scan(0.5, &[50.0, 100.0], 4.0, 1e-10).unwrap();
        // the particle mirrors where f = 1.25, so |p⊥|² itself changes by a quarter
        assert!(scan.perpendicular_energy_change[1] > 0.2, "{scan:?}");
        assert!(scan.max_deviation[1] < 1e-3, "{scan:?}");
        // at least first order in 1/μ
        let ratio = scan.max_deviation[0] / scan.max_deviation[1];
        assert!(ratio > 1.6, "{ratio}");
    }

    #[test]
    fn polar_model_integrals() {
        let r100 = model4d_invariants(100.0, 10.0, 1e-10).unwrap();
        assert!(r100.xi2_drift <= 1e-9 && r100.vartheta_drift <= 1e-9);
        assert!(!r100.truncated);
        let r200 = model4d_invariants(200.0, 10.0, 1e-10).unwrap();
        let ratio = r100.slow_drift / r200.slow_drift;
        assert!((1.4..=2.6).contains(&ratio), "{ratio}");
    }
}
