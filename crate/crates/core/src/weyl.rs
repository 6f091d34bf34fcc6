//! Magnetic Weyl density, the 2D Landau-level density and their integrals
//! against a cutoff.

use serde::Serialize;

use crate::correction::SpectralError;
use crate::field::{intensity_eigenvalues, MagneticTwoForm, MetricField, ScalarField, DEFAULT_RANK_TOL};
use crate::quadrature::adaptive;

/// Pointwise inputs of the magnetic Weyl density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylParams {
    pub d: usize,
    /// Half-rank: number of intensities.
    pub r: usize,
    pub intensities: Vec<f64>,
    pub v: f64,
    /// Spectral threshold.
    pub energy: f64,
    pub mu: f64,
    pub h: f64,
    /// `g = det(g^{jk})⁻¹`.
    pub g: f64,
}

impl WeylParams {
    pub fn validate(&self) -> Result<(), SpectralError> {
        let bad = |m: &str| Err(SpectralError::InvalidParams(m.to_string()));
        if self.d == 0 || 2 * self.r > self.d {
            return bad("need 0 <= 2r <= d and d >= 1");
        }
        if self.intensities.len() != self.r {
            return bad("number of intensities must equal r");
        }
        if self.intensities.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return bad("intensities must be positive");
        }
        if !(self.mu > 0.0) || !(self.h > 0.0) || !(self.g > 0.0) {
            return bad("mu, h and g must be positive");
        }
        if !self.v.is_finite() || !self.energy.is_finite() {
            return bad("V and E must be finite");
        }
        Ok(())
    }

    /// `2E + V`, the budget shared by the Landau levels.
    fn budget(&self) -> f64 {
        2.0 * self.energy + self.v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityValue {
    pub value: f64,
    /// Number of lattice points `α` with a positive contribution.
    pub terms: usize,
    /// Largest contribution among the first lattice points outside the
    /// enumerated box; always 0 for an exact truncation.
    pub certificate: f64,
}

/// Volume of the unit ball in `ℝ^k`.
pub fn unit_ball_volume(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => std::f64::consts::TAU / k as f64 * unit_ball_volume(k - 2),
    }
}

/// `s_+^p` with the convention `θ(0) = 0` for `p = 0`.
fn plus_power(s: f64, p: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if p == 0.0 {
        1.0
    } else {
        s.powf(p)
    }
}

/// Magnetic Weyl density
/// `Ω_{d−2r} (2π)^{r−d} μ^r h^{r−d} Σ_α (2E + V − Σ_j (2α_j+1) f_j μh)_+^{d/2−r} f₁⋯f_r √g`.
///
/// The lattice is enumerated lexicographically with `α_j ≤ ⌈(2E+V)/(2 f_j μh)⌉`.
pub fn magnetic_weyl_density(p: &WeylParams) -> Result<DensityValue, SpectralError> {
    p.validate()?;
    let muh = p.mu * p.h;
    let power = p.d as f64 / 2.0 - p.r as f64;
    let levels: Vec<f64> = p.intensities.iter().map(|f| f * muh).collect();
    let budget = p.budget();
    let bounds: Vec<usize> = levels
        .iter()
        .map(|l| (budget / (2.0 * l)).ceil().max(0.0) as usize)
        .collect();

    let mut sum = 0.0;
    let mut terms = 0;
    let mut alpha = vec![0usize; p.r];
    // odometer over the box, last coordinate fastest; r = 0 is the single term α = ()
    'lattice: loop {
        let s = budget - alpha.iter().zip(&levels).map(|(a, l)| (2 * a + 1) as f64 * l).sum::<f64>();
        let t = plus_power(s, power);
        if t > 0.0 {
            sum += t;
            terms += 1;
        }
        let mut j = p.r;
        loop {
            if j == 0 {
                break 'lattice;
            }
            j -= 1;
            if alpha[j] < bounds[j] {
                alpha[j] += 1;
                alpha[j + 1..].fill(0);
                break;
            }
        }
    }

    let certificate = (0..p.r)
        .map(|j| {
            let s = budget - (2 * (bounds[j] + 1) + 1) as f64 * levels[j]
                - levels.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, l)| l).sum::<f64>();
            plus_power(s, power)
        })
        .fold(0.0, f64::max);

    let prefactor = unit_ball_volume(p.d - 2 * p.r)
        * std::f64::consts::TAU.powi(p.r as i32 - p.d as i32)
        * p.mu.powi(p.r as i32)
        * p.h.powi(p.r as i32 - p.d as i32)
        * p.intensities.iter().product::<f64>()
        * p.g.sqrt();
    Ok(DensityValue {
        value: prefactor * sum,
        terms,
        certificate,
    })
}

/// Longest jump list reported by [`landau_density_2d`].
pub const MAX_LISTED_JUMPS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandauDensity {
    pub value: f64,
    /// Number of Landau levels below the threshold.
    pub levels: usize,
    /// Thresholds `τ_n = ((2n+1) μhf − V)/2` of the levels passed and the
    /// next one, at most `MAX_LISTED_JUMPS` of them.
    pub jumps: Vec<f64>,
    /// `(2π)⁻¹ μ h⁻¹ f √g`.
    pub jump_size: f64,
}

/// `#{n ≥ 0 : (2n+1)·level < budget}`.
fn levels_below_budget(budget: f64, level: f64) -> usize {
    let x = budget / level;
    if x <= 1.0 {
        0
    } else {
        ((x - 1.0) / 2.0).ceil() as usize
    }
}

/// `(2π)⁻¹ Σ_{n≥0} θ(2τ + V − (2n+1) μhf) μ h⁻¹ f √g` with `θ(0) = 0`.
pub fn landau_density_2d(f: f64, v: f64, g: f64, mu: f64, h: f64, tau: f64) -> Result<LandauDensity, SpectralError> {
    if !(f > 0.0) || !(g > 0.0) || !(mu > 0.0) || !(h > 0.0) {
        return Err(SpectralError::InvalidParams("f, g, mu and h must be positive".into()));
    }
    let level = mu * h * f;
    let budget = 2.0 * tau + v;
    // same comparisons and products as the lattice sum, so both agree bit for bit
    let mut n = levels_below_budget(budget, level);
    while budget - (2 * n + 1) as f64 * level > 0.0 {
        n += 1;
    }
    while n > 0 && budget - (2 * n - 1) as f64 * level <= 0.0 {
        n -= 1;
    }
    let jump_size = unit_ball_volume(0)
        * std::f64::consts::TAU.powi(-1)
        * mu.powi(1)
        * h.powi(-1)
        * f
        * g.sqrt();
    let jumps = (0..=n.min(MAX_LISTED_JUMPS - 1))
        .map(|k| 0.5 * ((2 * k + 1) as f64 * level - v))
        .collect();
    Ok(LandauDensity {
        value: n as f64 * jump_size,
        levels: n,
        jumps,
        jump_size,
    })
}

/// Local Weyl parameters of a field at `x`.
#[allow(clippy::too_many_arguments)]
pub fn local_weyl_params(
    metric: &dyn MetricField,
    form: &MagneticTwoForm,
    scalar: &dyn ScalarField,
    x: &[f64],
    energy: f64,
    mu: f64,
    h: f64,
) -> Result<WeylParams, SpectralError> {
    let spectrum = intensity_eigenvalues(metric, form, x, DEFAULT_RANK_TOL)?;
    let det = metric.inverse_metric(x).determinant();
    Ok(WeylParams {
        d: form.dim(),
        r: spectrum.half_rank(),
        intensities: spectrum.intensities,
        v: scalar.value(x),
        energy,
        mu,
        h,
        g: 1.0 / det,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrationOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Bisection depth of the adaptive rule along each axis.
    pub max_depth: u32,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            rel_tol: 1e-6,
            abs_tol: 1e-12,
            max_depth: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratedDensity {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    /// False when some axis hit the depth limit; `value` is then the best
    /// estimate reached.
    pub converged: bool,
}

/// `∫ e(x) ψ(x) dx` over the box `[lo, hi]` by nested adaptive Gauss–Kronrod
/// rules, which refine locally around the jumps of `e` at Landau levels.
pub fn integrate_density<E, P>(
    density: E,
    cutoff: P,
    lo: &[f64],
    hi: &[f64],
    opts: &IntegrationOptions,
) -> Result<IntegratedDensity, SpectralError>
where
    E: Fn(&[f64]) -> f64,
    P: Fn(&[f64]) -> f64,
{
    if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        return Err(SpectralError::InvalidParams("integration box must be nonempty".into()));
    }
    let mut state = NestedState {
        evaluations: 0,
        error: 0.0,
        converged: true,
    };
    let mut x = lo.to_vec();
    let value = nested(0, &mut x, lo, hi, opts, &|y: &[f64]| {
        let w = cutoff(y);
        if w == 0.0 {
            0.0
        } else {
            density(y) * w
        }
    }, &mut state);
    Ok(IntegratedDensity {
        value,
        error_estimate: state.error,
        evaluations: state.evaluations,
        converged: state.converged,
    })
}

struct NestedState {
    evaluations: usize,
    error: f64,
    converged: bool,
}

fn nested(
    axis: usize,
    x: &mut [f64],
    lo: &[f64],
    hi: &[f64],
    opts: &IntegrationOptions,
    f: &dyn Fn(&[f64]) -> f64,
    state: &mut NestedState,
) -> f64 {
    let last = axis + 1 == lo.len();
    let rep = adaptive(lo[axis], hi[axis], opts.abs_tol, opts.rel_tol, opts.max_depth, |s| {
        x[axis] = s;
        if last {
            state.evaluations += 1;
            f(x)
        } else {
            let mut inner = x.to_vec();
            nested(axis + 1, &mut inner, lo, hi, opts, f, state)
        }
    });
    state.error += rep.error_estimate;
    state.converged &= rep.converged;
    rep.value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{canonical_field, CanonicalKind, ConstantScalar, Euclidean};
    use crate::stats::loglog_slope;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(d: usize, f: Vec<f64>, v: f64, e: f64, mu: f64, h: f64, g: f64) -> WeylParams {
        WeylParams {
            d,
            r: f.len(),
            intensities: f,
            v,
            energy: e,
            mu,
            h,
            g,
        }
    }

    /// Reference α-sum: nested loops over a generous box, summed in plain order.
    fn brute_force(p: &WeylParams) -> f64 {
        let muh = p.mu * p.h;
        let power = p.d as f64 / 2.0 - p.r as f64;
        let budget = 2.0 * p.energy + p.v;
        let cap = |f: f64| (budget / (f * muh)) as i64 + 3;
        let mut total = 0.0;
        match p.r {
            1 => {
                for a in 0..cap(p.intensities[0]) {
                    let s = budget - (2 * a + 1) as f64 * p.intensities[0] * muh;
                    if s > 0.0 {
                        total += s.powf(power);
                    }
                }
            }
            2 => {
                for a in 0..cap(p.intensities[0]) {
                    for b in 0..cap(p.intensities[1]) {
                        let s = budget
                            - (2 * a + 1) as f64 * p.intensities[0] * muh
                            - (2 * b + 1) as f64 * p.intensities[1] * muh;
                        if s > 0.0 {
                            total += if power == 0.0 { 1.0 } else { s.powf(power) };
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        let tau = std::f64::consts::TAU;
        unit_ball_volume(p.d - 2 * p.r)
            * tau.powi(p.r as i32 - p.d as i32)
            * p.mu.powi(p.r as i32)
            * p.h.powi(p.r as i32 - p.d as i32)
            * p.intensities.iter().product::<f64>()
            * p.g.sqrt()
            * total
    }

    #[test]
    fn ball_volumes() {
        let pi = std::f64::consts::PI;
        assert_eq!(unit_ball_volume(0), 1.0);
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - pi).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * pi / 3.0).abs() < 1e-15);
        assert!((unit_ball_volume(4) - pi * pi / 2.0).abs() < 1e-14);
    }

    #[test]
    fn three_dimensional_example() {
        // f = 1, V = 0, 2E = 5μh, μh = 1: terms √4 + √2 + √0
        let p = params(3, vec![1.0], 0.0, 2.5, 10.0, 0.1, 1.0);
        let d = magnetic_weyl_density(&p).unwrap();
        let expected = 2.0 / std::f64::consts::TAU.powi(2) * 10.0 / 0.01 * (2.0 + 2f64.sqrt());
        assert!((d.value - expected).abs() < 1e-12 * expected, "{} vs {expected}", d.value);
        assert_eq!(d.terms, 2);
        assert!((d.value - brute_force(&p)).abs() < 1e-12 * expected);
    }

    #[test]
    fn below_first_level_is_zero() {
        let p = params(2, vec![1.5], 0.5, 0.1, 10.0, 0.1, 1.0);
        let d = magnetic_weyl_density(&p).unwrap();
        assert_eq!((d.value, d.terms), (0.0, 0));
        // exactly at a level: θ(0) = 0
        let at = params(2, vec![1.0], 0.0, 0.5, 1.0, 1.0, 1.0);
        assert_eq!(magnetic_weyl_density(&at).unwrap().value, 0.0);
    }

    #[test]
    fn zero_rank_is_the_plain_weyl_density() {
        let p = params(3, vec![], 1.0, 0.5, 7.0, 0.1, 4.0);
        let d = magnetic_weyl_density(&p).unwrap();
        let expected = 4.0 * std::f64::consts::PI / 3.0 / std::f64::consts::TAU.powi(3) * 1e3 * 2f64.powf(1.5) * 2.0;
        assert!((d.value - expected).abs() < 1e-12 * expected);
        assert_eq!(d.terms, 1);
    }

    #[test]
    fn two_dimensional_density_is_the_landau_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let f = rng.random_range(0.1..3.0);
            let v = rng.random_range(-1.0..2.0);
            let g = rng.random_range(0.5..2.0);
            let mu = rng.random_range(1.0..100.0);
            let h = rng.random_range(0.001..0.5);
            let tau = rng.random_range(-0.5..3.0);
            let w = magnetic_weyl_density(&params(2, vec![f], v, tau, mu, h, g)).unwrap();
            let l = landau_density_2d(f, v, g, mu, h, tau).unwrap();
            assert_eq!(w.value, l.value);
            assert_eq!(w.terms, l.levels);
        }
    }

    #[test]
    fn landau_jumps() {
        let (f, v, g, mu, h) = (2.0, 0.3, 1.0, 10.0, 0.05);
        let l = landau_density_2d(f, v, g, mu, h, 0.0).unwrap();
        let size = mu / h * f / std::f64::consts::TAU;
        assert!((l.jump_size - size).abs() < 1e-12 * size);
        for tau in &l.jumps {
            let below = landau_density_2d(f, v, g, mu, h, tau - 1e-9).unwrap().value;
            let above = landau_density_2d(f, v, g, mu, h, tau + 1e-9).unwrap().value;
            assert!((above - below - size).abs() < 1e-9 * size);
        }
        let first = landau_density_2d(f, v, g, mu, h, l.jumps[0] + 1e-6).unwrap();
        assert_eq!(first.levels, 1);
    }

    #[test]
    fn four_dimensional_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let f = vec![rng.random_range(0.2..2.0), rng.random_range(0.2..2.0)];
            let p = params(4, f, rng.random_range(0.0..1.0), rng.random_range(0.0..2.0), 5.0, 0.1, 1.3);
            let d = magnetic_weyl_density(&p).unwrap();
            let b = brute_force(&p);
            assert!((d.value - b).abs() <= 1e-12 * b.abs().max(1.0));
            assert_eq!(d.certificate, 0.0);
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(magnetic_weyl_density(&params(2, vec![1.0, 1.0], 0.0, 1.0, 1.0, 0.1, 1.0)).is_err());
        assert!(magnetic_weyl_density(&params(2, vec![-1.0], 0.0, 1.0, 1.0, 0.1, 1.0)).is_err());
        assert!(magnetic_weyl_density(&params(2, vec![1.0], 0.0, 1.0, 1.0, 0.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_energy_and_potential(
            f in 0.1f64..2.0, v in -1.0f64..2.0, e in -0.5f64..2.0, de in 0.0f64..1.0, d in 2usize..4,
        ) {
            let base = magnetic_weyl_density(&params(d, vec![f], v, e, 10.0, 0.05, 1.0)).unwrap().value;
            let more_e = magnetic_weyl_density(&params(d, vec![f], v, e + de, 10.0, 0.05, 1.0)).unwrap().value;
            let more_v = magnetic_weyl_density(&params(d, vec![f], v + de, e, 10.0, 0.05, 1.0)).unwrap().value;
            prop_assert!(more_e >= base && more_v >= base);
        }

        #[test]
        fn term_count_is_scale_invariant(f in 0.1f64..2.0, b in 0.1f64..20.0, lambda in 0.1f64..10.0) {
            let p = params(2, vec![f], b, 0.0, 1.0, 1.0, 1.0);
            let q = params(2, vec![lambda * f], lambda * b, 0.0, 1.0, 1.0, 1.0);
            prop_assert_eq!(magnetic_weyl_density(&p).unwrap().terms, magnetic_weyl_density(&q).unwrap().terms);
        }

        #[test]
        fn truncation_is_exact(f in 0.1f64..2.0, v in 0.0f64..3.0, e in 0.0f64..2.0) {
            let p = params(3, vec![f], v, e, 3.0, 0.2, 1.0);
            let d = magnetic_weyl_density(&p).unwrap();
            prop_assert_eq!(d.certificate, 0.0);
            prop_assert!((d.value - brute_force(&p)).abs() <= 1e-12 * d.value.max(1.0));
        }
    }

    #[test]
    fn constant_data_integrates_to_the_pointwise_value() {
        let p = params(2, vec![1.0], 1.0, 0.0, 10.0, 0.01, 1.0);
        let pointwise = magnetic_weyl_density(&p).unwrap().value;
        // ψ = bump normalised to unit mass on [0, 1]²: ψ = 36 x(1−x) y(1−y)
        let psi = |x: &[f64]| 36.0 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
        let r = integrate_density(|_| pointwise, psi, &[0.0, 0.0], &[1.0, 1.0], &IntegrationOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.value - pointwise).abs() < 1e-9 * pointwise);
        let away = integrate_density(|_| pointwise, |x: &[f64]| if x[0] > 2.0 { 1.0 } else { 0.0 }, &[0.0, 0.0], &[1.0, 1.0], &IntegrationOptions::default())
            .unwrap();
        assert_eq!(away.value, 0.0);
    }

    /// `2 ∫ E^MW dx₁` over `x₁ ∈ [0.3 s, 1.5 s]`, `s = (μh)^{−1/(ν−1)}`, for
    /// `f = x₁^{ν−1}`, `V = 1`. The cut keeps the number of Landau levels finite.
    fn model_mass(nu: u32, mu: f64, h: f64) -> f64 {
        let (_, form) = canonical_field(&CanonicalKind::Model2d { nu }).unwrap();
        let metric = Euclidean(2);
        let v = ConstantScalar(1.0);
        let scale = (mu * h).powf(-1.0 / (nu as f64 - 1.0));
        let density = |x: &[f64]| {
            let p = local_weyl_params(&metric, &form, &v, &[x[0], 0.0], 0.0, mu, h).unwrap();
            magnetic_weyl_density(&p).unwrap().value
        };
        let opts = IntegrationOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_depth: 50,
        };
        2.0 * integrate_density(density, |_| 1.0, &[0.3 * scale], &[1.5 * scale], &opts).unwrap().value
    }

    #[test]
    fn degenerate_model_mass_scales_with_mu_h() {
        let h = 0.01;
        for nu in [2u32, 3] {
            let muh = [1.0, 2.0, 4.0, 8.0];
            let mass: Vec<f64> = muh.iter().map(|m| model_mass(nu, m / h, h)).collect();
            let fit = loglog_slope(&muh, &mass).unwrap();
            let expected = -1.0 / (nu as f64 - 1.0);
            assert!((fit.slope - expected).abs() < 0.02, "nu={nu}: {} vs {expected}", fit.slope);
        }
        // ν = 2 level by level: level k occupies x₁ < X_k = 1/((2k+1)μh)
        let (mu, h) = (200.0, 0.01);
        let (lo, hi) = (0.3 / (mu * h), 1.5 / (mu * h));
        let oracle: f64 = (0..10)
            .map(|k| {
                let top = (1.0 / ((2 * k + 1) as f64 * mu * h)).min(hi);
                if top > lo { 0.5 * (top * top - lo * lo) } else { 0.0 }
            })
            .sum::<f64>()
            * 2.0
            * mu
            / h
            / std::f64::consts::TAU;
        let mass = model_mass(2, mu, h);
        assert!((mass - oracle).abs() < 1e-6 * oracle, "{mass} vs {oracle}");
    }

    #[test]
    fn support_is_a_strip() {
        let (_, form) = canonical_field(&CanonicalKind::Model2d { nu: 2 }).unwrap();
        let (mu, h) = (400.0, 0.01);
        let edge = 1.0 / (mu * h);
        let p = local_weyl_params(&Euclidean(2), &form, &ConstantScalar(1.0), &[1.01 * edge, 0.0], 0.0, mu, h).unwrap();
        assert_eq!(magnetic_weyl_density(&p).unwrap().value, 0.0);
        let q = local_weyl_params(&Euclidean(2), &form, &ConstantScalar(1.0), &[0.99 * edge, 0.0], 0.0, mu, h).unwrap();
        assert!(magnetic_weyl_density(&q).unwrap().value > 0.0);
    }
}
