use serde::Serialize;

/// `B_{2j}/(2j)!` for `j = 1..=7`.
const BERNOULLI_OVER_FACTORIAL: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30_240.0,
    -1.0 / 1_209_600.0,
    1.0 / 47_900_160.0,
    -691.0 / 1_307_674_368_000.0,
    1.0 / 74_724_249_600.0,
];

/// Hurwitz zeta `ζ(s, q) = Σ_{n≥0} (n + q)^{−s}` (analytically continued for
/// `s < 1`) by Euler–Maclaurin after 12 explicit terms. `NaN` for `s = 1` or
/// `q ≤ 0`.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    if s == 1.0 || !(q > 0.0) {
        return f64::NAN;
    }
    const HEAD: usize = 12;
    let mut sum: f64 = (0..HEAD).map(|k| (k as f64 + q).powf(-s)).sum();
    let a = q + HEAD as f64;
    sum += a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    let mut factor = s * a.powf(-s - 1.0);
    for (j, b) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        sum += b * factor;
        let m = 2.0 * j as f64;
        factor *= (s + m + 1.0) * (s + m + 2.0) / (a * a);
    }
    sum
}

/// `G(t) = ∫_ℝ (t + ½η² − ⌊t + ½η² + ½⌋) dη`, 1-periodic.
///
/// With `u = ½η²` the integral splits into unit sawtooth periods whose sum is
/// `2√2 ζ(−½, q)` with `q = ⌊t + ½⌋ + ½ − t ∈ (0, 1]`. The argument is reduced
/// mod 1 first, so `G(t)` and `G(t mod 1)` are bit-identical.
pub fn g_function(t: f64) -> f64 {
    let mut r = t.rem_euclid(1.0);
    if r >= 1.0 {
        r = 0.0;
    }
    let q = (r + 0.5).floor() + 0.5 - r;
    2.0 * std::f64::consts::SQRT_2 * hurwitz_zeta(-0.5, q)
}

/// `max |G(t) − G(s)| / |t − s|^{1/2}` over the given pairs.
pub fn holder_half_quotient(pairs: &[(f64, f64)]) -> f64 {
    pairs
        .iter()
        .filter(|(t, s)| t != s)
        .map(|&(t, s)| (g_function(t) - g_function(s)).abs() / (t - s).abs().sqrt())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GSummary {
    pub nodes: usize,
    /// Rectangle rule for `∫₀¹ G`, exact for trigonometric polynomials.
    pub integral: f64,
    pub max_abs: f64,
    /// Largest C^{1/2} quotient over node pairs spaced `10⁻⁴ … 10⁻¹` apart.
    pub holder: f64,
}

/// Mean, peak and Hölder quotient of `G` on `nodes` equispaced points of `[0, 1)`.
pub fn g_summary(nodes: usize) -> GSummary {
    let nodes = nodes.max(1);
    let t: Vec<f64> = (0..nodes).map(|i| i as f64 / nodes as f64).collect();
    let g: Vec<f64> = t.iter().map(|&x| g_function(x)).collect();
    let mut pairs = Vec::new();
    for gap in [1e-4, 1e-3, 1e-2, 1e-1] {
        pairs.extend(t.iter().map(|&x| (x, x + gap)));
    }
    GSummary {
        nodes,
        integral: crate::quadrature::pairwise_sum(&g) / nodes as f64,
        max_abs: g.iter().fold(0.0, |m, v| m.max(v.abs())),
        holder: holder_half_quotient(&pairs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `∫_0^{N} (t + u − ⌊t + u + ½⌋) du/√(2u)` summed over unit pieces with
    /// exact antiderivatives, then Richardson-extrapolated in `N^{-1/2}`.
    fn series_oracle(t: f64) -> f64 {
        let prim = |u: f64, m: f64| (t - m) * (2.0 * u).sqrt() + (2.0 / 3.0) * u.powf(1.5) / std::f64::consts::SQRT_2;
        let partial = |n: usize| {
            // breakpoints where t + u + ½ crosses an integer
            let mut acc = 0.0;
            let mut lo = 0.0;
            let mut m = (t + 0.5).floor();
            while lo < n as f64 {
                let hi = (m + 0.5 - t).min(n as f64);
                if hi > lo {
                    acc += prim(hi, m) - prim(lo, m);
                }
                lo = hi.max(lo);
                m += 1.0;
            }
            2.0 * acc
        };
        let (n1, n2) = (40_000usize, 160_000usize);
        let (a, b) = (partial(n1), partial(n2));
        // error ~ c N^{-1/2}: the two samples differ by a factor 2 in that
        2.0 * b - a
    }

    #[test]
    fn zeta_reference_values() {
        assert!((hurwitz_zeta(2.0, 1.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-14);
        assert!((hurwitz_zeta(-0.5, 1.0) + 0.207_886_224_977_354_56).abs() < 1e-13);
        assert!((hurwitz_zeta(1.5, 1.0) - 2.612_375_348_685_488).abs() < 1e-13);
    }

    #[test]
    fn closed_form_matches_the_sawtooth_series() {
        for t in [0.0, 0.1, 0.3, 0.5, 0.77, 0.95] {
            let g = g_function(t);
            let oracle = series_oracle(t);
            assert!((g - oracle).abs() < 1e-5, "t {t}: {g} vs {oracle}");
        }
    }

    #[test]
    fn period_mean_and_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        for _ in 0..50 {
            let t: f64 = rng.random_range(-20.0..20.0);
            assert!((g_function(t + 1.0) - g_function(t)).abs() < 1e-6);
            assert_eq!(g_function(t).to_bits(), g_function(t.rem_euclid(1.0)).to_bits());
        }
        let s = g_summary(512);
        assert!(s.integral.abs() <= 1e-4, "{}", s.integral);
        let fine = g_summary(1000);
        assert!(fine.max_abs > 0.01);
        assert!(fine.holder.is_finite() && fine.holder < 10.0);
    }
}
