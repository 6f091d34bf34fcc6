//! Adaptive Dormand–Prince 5(4) integrator with dense (cubic Hermite) output.
//!
//! Error control can be per step (classical) or per unit step, where the
//! accepted local error is proportional to the step length. The latter bounds
//! the accumulated error linearly in the integration time, which is what the
//! energy-drift guarantees of the trajectory layer rely on.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e}); the problem looks stiff")]
    StepUnderflow { t: f64, h: f64 },
    #[error("maximum number of steps ({0}) exceeded")]
    MaxSteps(usize),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
}

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
    /// `false` once the state has left the region where the right-hand side
    /// may be evaluated.
    fn in_domain(&self, _y: &[f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
    pub per_unit_step: bool,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-10,
            h_init: None,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 50_000_000,
            per_unit_step: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Accepted steps of an integration with derivatives for Hermite interpolation.
#[derive(Debug, Clone)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub dy: Vec<Vec<f64>>,
    pub truncated: bool,
    pub stats: OdeStats,
}

impl Solution {
    pub fn last(&self) -> &[f64] {
        self.y.last().expect("solution always holds the initial state")
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().expect("solution always holds the initial time")
    }

    /// Index `i` with `t[i] <= t < t[i+1]` (forward) or the mirrored condition.
    fn segment(&self, t: f64) -> usize {
        let n = self.t.len();
        if n < 2 {
            return 0;
        }
        let forward = self.t[n - 1] >= self.t[0];
        let pos = if forward {
            self.t.partition_point(|&s| s <= t)
        } else {
            self.t.partition_point(|&s| s >= t)
        };
        pos.clamp(1, n - 1) - 1
    }

    /// Cubic Hermite interpolation of the state at time `t`.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let i = self.segment(t);
        if self.t.len() < 2 {
            return self.y[0].clone();
        }
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        (0..self.y[i].len())
            .map(|k| {
                h00 * self.y[i][k]
                    + h10 * h * self.dy[i][k]
                    + h01 * self.y[i + 1][k]
                    + h11 * h * self.dy[i + 1][k]
            })
            .collect()
    }

    /// Integral of component `k` of the interpolant over `[a, b]`.
    pub fn integrate_component(&self, k: usize, a: f64, b: f64) -> f64 {
        // Gauss-Legendre 3 is exact for the cubic interpolant on each piece.
        const X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut knots: Vec<f64> = self
            .t
            .iter()
            .copied()
            .filter(|&s| s > lo && s < hi)
            .collect();
        knots.push(lo);
        knots.push(hi);
        knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut acc = 0.0;
        for w in knots.windows(2) {
            let (p, q) = (w[0], w[1]);
            let half = 0.5 * (q - p);
            let mid = 0.5 * (p + q);
            for (x, wt) in X.iter().zip(W) {
                acc += wt * half * self.interpolate(mid + half * x)[k];
            }
        }
        sign * acc
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b* (difference between the 5th and embedded 4th order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate `sys` from `(t0, y0)` to `t1` (either direction).
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &OdeOptions,
) -> Result<Solution, OdeError> {
    let n = sys.dim();
    assert_eq!(y0.len(), n, "state dimension mismatch");
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();

    let mut stats = OdeStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    sys.rhs(t, &y, &mut k1);
    stats.evaluations += 1;

    let mut sol = Solution {
        t: vec![t],
        y: vec![y.clone()],
        dy: vec![k1.clone()],
        truncated: false,
        stats,
    };
    if span == 0.0 {
        return Ok(sol);
    }

    let order_exp = 1.0 / 5.0;
    let mut h = opts
        .h_init
        .unwrap_or_else(|| initial_step(&y, &k1, opts, span))
        .min(opts.h_max)
        .min(span);

    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    while (t1 - t) * dir > 0.0 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(OdeError::MaxSteps(opts.max_steps));
        }
        let last = (t1 - t).abs() <= h * (1.0 + 1e-12);
        let hs = if last { (t1 - t).abs() } else { h };
        let hd = hs * dir;

        for i in 0..n {
            tmp[i] = y[i] + hd * A21 * k1[i];
        }
        sys.rhs(t + C2 * hd, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + hd * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + C3 * hd, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + hd * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + C4 * hd, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + hd * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + C5 * hd, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i]
                + hd * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(t + hd, &tmp, &mut k6);
        for i in 0..n {
            ynew[i] =
                y[i] + hd * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        sys.rhs(t + hd, &ynew, &mut k7);
        stats.evaluations += 6;

        let mut err2 = 0.0;
        let mut finite = true;
        for i in 0..n {
            let e = hd
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let mut sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            if opts.per_unit_step {
                sc *= hs.min(1.0);
            }
            err2 += (e / sc) * (e / sc);
            finite &= ynew[i].is_finite();
        }
        let err = (err2 / n as f64).sqrt();

        if !finite || !err.is_finite() {
            stats.rejected += 1;
            h = hs * 0.2;
            if h < opts.h_min {
                return Err(OdeError::NonFinite(t));
            }
            continue;
        }

        if err <= 1.0 {
            if !sys.in_domain(&ynew) {
                sol.truncated = true;
                break;
            }
            t = if last { t1 } else { t + hd };
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            stats.accepted += 1;
            sol.t.push(t);
            sol.y.push(y.clone());
            sol.dy.push(k1.clone());
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-order_exp)).clamp(0.2, 5.0)
            };
            h = (hs * fac).min(opts.h_max);
        } else {
            stats.rejected += 1;
            let fac = (0.9 * err.powf(-order_exp)).clamp(0.1, 1.0);
            h = hs * fac;
            if h < opts.h_min {
                return Err(OdeError::StepUnderflow { t, h });
            }
        }
    }
    sol.stats = stats;
    Ok(sol)
}

fn initial_step(y: &[f64], dy: &[f64], opts: &OdeOptions, span: f64) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(dy) {
        let sc = opts.atol + opts.rtol * yi.abs();
        d0 += (yi / sc).powi(2);
        d1 += (fi / sc).powi(2);
    }
    let h = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * (d0 / d1).sqrt()
    };
    h.min(span).min(opts.h_max).max(opts.h_min * 10.0) * 0.1
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator;
    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    #[test]
    fn harmonic_oscillator_one_period() {
        let tp = 2.0 * std::f64::consts::PI;
        let sol = integrate(&Oscillator, 0.0, &[1.0, 0.0], tp, &OdeOptions::with_tol(1e-12)).unwrap();
        let y = sol.last();
        assert!((y[0] - 1.0).abs() < 1e-10 && y[1].abs() < 1e-10, "{y:?}");
        let mid = sol.interpolate(0.5 * tp);
        assert!((mid[0] + 1.0).abs() < 1e-8, "{mid:?}");
    }

    #[test]
    fn fifth_order_convergence_with_fixed_steps() {
        // Per-step error control off and a step cap forces near-uniform steps.
        let run = |h: f64| {
            let opts = OdeOptions {
                rtol: 1.0,
                atol: 1.0,
                h_init: Some(h),
                h_max: h,
                per_unit_step: false,
                ..Default::default()
            };
            let sol = integrate(&Oscillator, 0.0, &[1.0, 0.0], 2.0, &opts).unwrap();
            (sol.last()[0] - 2f64.cos()).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!(ratio > 20.0 && ratio < 45.0, "ratio {ratio}");
    }

    #[test]
    fn backward_integration_returns() {
        let opts = OdeOptions::with_tol(1e-12);
        let fwd = integrate(&Oscillator, 0.0, &[1.0, 0.0], 3.0, &opts).unwrap();
        let back = integrate(&Oscillator, 3.0, fwd.last(), 0.0, &opts).unwrap();
        assert!((back.last()[0] - 1.0).abs() < 1e-10);
        assert!(back.last()[1].abs() < 1e-10);
    }

    #[test]
    fn interpolant_integral_is_exact_for_cubic_segments() {
        let sol = integrate(&Oscillator, 0.0, &[0.0, 1.0], 1.0, &OdeOptions::with_tol(1e-13)).unwrap();
        let got = sol.integrate_component(0, 0.1, 0.9);
        let exact = 0.1f64.cos() - 0.9f64.cos();
        assert!((got - exact).abs() < 1e-9, "{got} vs {exact}");
    }
}
