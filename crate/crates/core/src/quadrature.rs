//! Quadrature rules: cached Gauss–Legendre panels, composite refinement by
//! doubling, and adaptive Gauss–Kronrod (7/15) with an error estimate.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("quadrature did not converge: estimate {estimate:e}, last change {change:e} after {evaluations} evaluations")]
    NotConverged {
        estimate: f64,
        change: f64,
        evaluations: usize,
    },
    #[error("non-finite integrand value at x = {0}")]
    NonFinite(f64),
}

/// Result of a quadrature together with its accuracy certificate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadratureReport {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nodes and weights of an `n`-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    fn compute(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, refined by Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared, lazily computed rule.
    pub fn get(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(GaussLegendre::compute(n)))
            .clone()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Nodes per panel of the composite rule used by [`composite_doubling`].
pub const PANEL_ORDER: usize = 32;

/// Composite Gauss–Legendre on `[a, b]` with `panels` equal panels.
pub fn composite<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, mut f: F) -> f64 {
    let rule = GaussLegendre::get(PANEL_ORDER);
    let width = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + width * p as f64;
        acc += rule.integrate(lo, lo + width, &mut f);
    }
    acc
}

/// Composite Gauss–Legendre starting from `initial_nodes` total nodes, doubling
/// until the relative change drops below `rel_tol` or `max_nodes` is reached.
pub fn composite_doubling<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    initial_nodes: usize,
    max_nodes: usize,
    rel_tol: f64,
    mut f: F,
) -> Result<QuadratureReport, QuadratureError> {
    let mut panels = (initial_nodes / PANEL_ORDER).max(1);
    let mut prev = composite(a, b, panels, &mut f);
    if !prev.is_finite() {
        return Err(QuadratureError::NonFinite(a));
    }
    let mut evaluations = panels * PANEL_ORDER;
    loop {
        panels *= 2;
        let next = composite(a, b, panels, &mut f);
        evaluations += panels * PANEL_ORDER;
        if !next.is_finite() {
            return Err(QuadratureError::NonFinite(a));
        }
        let change = (next - prev).abs();
        if change <= rel_tol * next.abs() || change <= f64::MIN_POSITIVE {
            return Ok(QuadratureReport {
                value: next,
                error_estimate: change,
                evaluations,
                converged: true,
            });
        }
        if panels * PANEL_ORDER >= max_nodes {
            return Err(QuadratureError::NotConverged {
                estimate: next,
                change,
                evaluations,
            });
        }
        prev = next;
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7/15 panel: (kronrod estimate, |kronrod - gauss|).
pub fn gauss_kronrod_15<F: FnMut(f64) -> f64>(a: f64, b: f64, f: &mut F) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod integration by recursive bisection.
///
/// Returns a report even when the depth cap is hit (`converged == false`), so
/// callers with discontinuous integrands can surface an accuracy warning.
pub fn adaptive<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_depth: u32,
    mut f: F,
) -> QuadratureReport {
    let (whole, err) = gauss_kronrod_15(a, b, &mut f);
    let mut evaluations = 15;
    let tol = abs_tol.max(rel_tol * whole.abs());
    let mut converged = true;
    let (value, error_estimate) = adaptive_step(
        a,
        b,
        whole,
        err,
        tol,
        max_depth,
        &mut f,
        &mut evaluations,
        &mut converged,
    );
    QuadratureReport {
        value,
        error_estimate,
        evaluations,
        converged,
    }
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    whole: f64,
    err: f64,
    tol: f64,
    depth: u32,
    f: &mut F,
    evaluations: &mut usize,
    converged: &mut bool,
) -> (f64, f64) {
    if err <= tol {
        return (whole, err);
    }
    if depth == 0 || (b - a).abs() <= 1e-14 * a.abs().max(b.abs()).max(1.0) {
        *converged = false;
        return (whole, err);
    }
    let m = 0.5 * (a + b);
    let (left, el) = gauss_kronrod_15(a, m, f);
    let (right, er) = gauss_kronrod_15(m, b, f);
    *evaluations += 30;
    let (vl, ql) = adaptive_step(a, m, left, el, 0.5 * tol, depth - 1, f, evaluations, converged);
    let (vr, qr) = adaptive_step(m, b, right, er, 0.5 * tol, depth - 1, f, evaluations, converged);
    (vl + vr, ql + qr)
}

/// Pairwise (cascade) summation; order-deterministic and accurate.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (l, r) = values.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 32, 64] {
            let rule = GaussLegendre::get(n);
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n={n} wsum={wsum}");
            // x^(2n-2) on [-1,1]
            let p = 2 * n - 2;
            let exact = 2.0 / (p as f64 + 1.0);
            let got = rule.integrate(-1.0, 1.0, |x| x.powi(p as i32));
            assert!((got - exact).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn kronrod_pair_degrees() {
        let mut f = |x: f64| x.powi(22) + x.powi(13);
        let (k, _) = gauss_kronrod_15(-1.0, 1.0, &mut f);
        assert!((k - 2.0 / 23.0).abs() < 1e-14);
        let mut g = |x: f64| x.powi(12) + 3.0 * x.powi(4);
        let (k, e) = gauss_kronrod_15(0.0, 1.0, &mut g);
        assert!((k - (1.0 / 13.0 + 3.0 / 5.0)).abs() < 1e-14);
        assert!(e < 1e-13);
    }

    #[test]
    fn adaptive_handles_jump() {
        let rep = adaptive(0.0, 1.0, 1e-10, 1e-10, 60, |x| if x < 0.3 { 1.0 } else { 2.0 });
        assert!((rep.value - 1.7).abs() < 1e-9, "{rep:?}");
    }

    #[test]
    fn doubling_converges_on_smooth_integrand() {
        let rep = composite_doubling(0.0, std::f64::consts::PI, 64, 1 << 14, 1e-12, f64::sin).unwrap();
        assert!((rep.value - 2.0).abs() < 1e-13);
    }

    #[test]
    fn pairwise_matches_naive_on_small_inputs() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&v), 2475.0);
    }
}
