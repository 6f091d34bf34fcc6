use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use super::bohr::census_count;
use super::gfunc::{g_function, hurwitz_zeta};
use super::SpectralError;
use crate::dynamics::{find_kstar, DynamicsError, EffectiveModel, WellSide};
use crate::quadrature::pairwise_sum;
use crate::roots::{brent, RootError};
use crate::stats::{dft_magnitudes, mean, rms};
use crate::weyl::landau_density_2d;

/// One `x₂`-slice of the correction: exponent ν, well value `W(x₂)`,
/// effective Planck constant `ħ`, semiclassical parameter `h` and threshold `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrectionParams {
    pub nu: u32,
    pub w: f64,
    pub hbar: f64,
    pub h: f64,
    pub tau: f64,
}

impl CorrectionParams {
    pub fn new(nu: u32, w: f64, hbar: f64, h: f64) -> Self {
        CorrectionParams { nu, w, hbar, h, tau: 0.0 }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    /// `W + 2τ`: the threshold only ever enters through this combination.
    pub fn lifted_w(&self) -> f64 {
        self.w + 2.0 * self.tau
    }

    fn validate(&self) -> Result<(), SpectralError> {
        let bad = |m: String| Err(SpectralError::InvalidParams(m));
        if self.nu < 2 {
            return bad(format!("nu must be >= 2, got {}", self.nu));
        }
        if !(self.hbar > 0.0 && self.hbar < 1.0) {
            return bad(format!("hbar must lie in (0, 1), got {}", self.hbar));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return bad(format!("h must be positive, got {}", self.h));
        }
        if !(self.lifted_w() > 0.0) || !self.lifted_w().is_finite() {
            return bad(format!("W + 2 tau must be positive, got {}", self.lifted_w()));
        }
        Ok(())
    }

    /// `W^{1/4 − 1/(4ν)} ħ^{1/2} / h`, the size of the correction.
    pub fn envelope(&self) -> f64 {
        let nu = self.nu as f64;
        self.lifted_w().powf(0.25 - 0.25 / nu) * self.hbar.sqrt() / self.h
    }

    /// `W^{(ν+1)/(2ν)} / (2πħ)`; times an action gives the phase of `G`.
    pub fn phase_scale(&self) -> f64 {
        let nu = self.nu as f64;
        self.lifted_w().powf((nu + 1.0) / (2.0 * nu)) / (TAU * self.hbar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionTerm {
    /// `E_corr = h⁻¹ D`.
    pub value: f64,
    /// `D = (2π)⁻¹ (∫ n₀ dξ₂ − Σ_n 2X_n^ν/ν)`.
    pub reduced: f64,
    pub n0_integral: f64,
    pub weyl_part: f64,
    /// `ξ₂` support of `n₀`; the count vanishes just outside.
    pub window: (f64, f64),
    /// Jump points of `n₀` located.
    pub jumps: usize,
    /// `S(k*) W^{(ν+1)/(2ν)} / (2πħ)`.
    pub action_variable: f64,
    /// Absolute tolerance on each jump location (unit well).
    pub root_tol: f64,
}

fn action_cache() -> &'static Mutex<HashMap<u32, (f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, (f64, f64)>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `(k*, A(k*))` for `W = 1`: the momentum where the drift increment
/// vanishes and the zero-energy action there, which is the largest action
/// over all `ξ₂`.
pub fn critical_action(nu: u32) -> Result<(f64, f64), SpectralError> {
    if let Some(v) = action_cache().lock().map_err(|_| SpectralError::Fit("poisoned cache".into()))?.get(&nu) {
        return Ok(*v);
    }
    let kstar = find_kstar(nu, 1.0)?.kstar;
    let s0 = EffectiveModel::new(nu, kstar, 1.0)?.action()?;
    action_cache()
        .lock()
        .map_err(|_| SpectralError::Fit("poisoned cache".into()))?
        .insert(nu, (kstar, s0));
    Ok((kstar, s0))
}

/// Zero-energy action of the right (or only) well at `W = 1`.
fn unit_action(nu: u32, k: f64) -> Result<f64, SpectralError> {
    match EffectiveModel::new(nu, k, 1.0)?.with_side(WellSide::Right).action() {
        Ok(a) => Ok(a),
        Err(DynamicsError::NoWell { .. }) => Ok(0.0),
        Err(e) => Err(e.into()),
    }
}

const JUMP_ROOT_TOL: f64 = 1e-13;

/// Root of `unit_action(k) = c` on a bracket.
fn level_crossing(nu: u32, c: f64, a: f64, b: f64) -> Result<f64, SpectralError> {
    let tol = JUMP_ROOT_TOL * a.abs().max(b.abs()).max(1.0);
    brent(|k| unit_action(nu, k).map(|s| s - c).unwrap_or(f64::NAN), a, b, tol).map_err(|err| match err {
        RootError::NonFinite(x) => unit_action(nu, x).err().unwrap_or(SpectralError::Root(err)),
        other => SpectralError::Root(other),
    })
}

/// Moves `from` away from `toward` in doubling steps until the action drops
/// below `c`.
fn expand_until_below(nu: u32, c: f64, from: f64, direction: f64) -> Result<f64, SpectralError> {
    let mut reach = 1.0;
    loop {
        let k = from + direction * reach;
        if unit_action(nu, k)? < c {
            return Ok(k);
        }
        reach *= 2.0;
        if reach > 1e12 {
            return Err(SpectralError::Window { edge: k });
        }
    }
}

struct UnitIntegral {
    integral: f64,
    lo: f64,
    hi: f64,
    jumps: usize,
}

/// `∫ n₀ dξ₂` at `W = 1` from the jump locations of `n₀`: for every level
/// `c_m = 2πħ(m + ½)` below the peak action, the measure of `{A(ξ₂) > c_m}`.
fn unit_n0_integral(nu: u32, hbar: f64) -> Result<UnitIntegral, SpectralError> {
    let (kstar, peak) = critical_action(nu)?;
    let levels: Vec<f64> = (0..)
        .map(|m| TAU * hbar * (m as f64 + 0.5))
        .take_while(|c| *c < peak)
        .collect();
    let even = nu.is_multiple_of(2);
    // action of the merged well just below ξ₂ = 1 and of each mirror well just above
    let merged_edge = if even { 2.0 * unit_action(nu, 1.0)? } else { 0.0 };
    let pieces: Vec<Result<(f64, f64, f64, usize), SpectralError>> = levels
        .par_iter()
        .map(|&c| {
            if even {
                let lo = level_crossing(nu, c, -1.0, kstar)?;
                let (hi, extra, extra_hi, roots) = if c < merged_edge {
                    if c < 0.5 * merged_edge {
                        let far = expand_until_below(nu, c, 1.0, 1.0)?;
                        let b = level_crossing(nu, c, 1.0, far)?;
                        (1.0, 2.0 * (b - 1.0), b, 2)
                    } else {
                        (1.0, 0.0, 1.0, 1)
                    }
                } else {
                    let r = level_crossing(nu, c, kstar, 1.0)?;
                    (r, 0.0, r, 2)
                };
                Ok((hi - lo + extra, lo, extra_hi.max(hi), roots))
            } else {
                let left = expand_until_below(nu, c, kstar, -1.0)?;
                let right = expand_until_below(nu, c, kstar, 1.0)?;
                let lo = level_crossing(nu, c, left, kstar)?;
                let hi = level_crossing(nu, c, kstar, right)?;
                Ok((hi - lo, lo, hi, 2))
            }
        })
        .collect();
    let mut lengths = Vec::with_capacity(pieces.len());
    let (mut lo, mut hi, mut jumps) = (kstar, kstar, 0);
    for p in pieces {
        let (len, a, b, r) = p?;
        lengths.push(len);
        lo = lo.min(a);
        hi = hi.max(b);
        jumps += r;
    }
    Ok(UnitIntegral {
        integral: pairwise_sum(&lengths),
        lo,
        hi,
        jumps,
    })
}

/// `Σ_{n≥0} 2X_n^ν/ν` with `X_n = (W/((2n+1)ħ))^{1/(ν−1)}`, i.e. `2πħ` times
/// the `x₁`-integral of the Landau density with `f = |x₁|^{ν−1}`, in closed
/// form through `ζ(s)`, `s = ν/(ν−1)`.
pub fn weyl_part_closed_form(nu: u32, w: f64, hbar: f64) -> f64 {
    let nu_f = nu as f64;
    let s = nu_f / (nu_f - 1.0);
    2.0 / nu_f * (w / hbar).powf(s) * (1.0 - 2f64.powf(-s)) * hurwitz_zeta(s, 1.0)
}

/// The same quantity by quadrature of the Landau density over `x₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylQuadrature {
    pub value: f64,
    /// Bound on the fluctuation neglected in the smooth tail.
    pub error_bound: f64,
    pub pieces: usize,
}

/// Gauss–Legendre on each interval `(X_{n+1}, X_n)` between consecutive
/// jumps of the Landau count, using the count reported by the Landau density
/// at the interval midpoint. Below `X_pieces` the count is replaced by its
/// mean `W/(2ħf)`.
pub fn weyl_part_quadrature(nu: u32, w: f64, hbar: f64, pieces: usize) -> Result<WeylQuadrature, SpectralError> {
    if nu < 2 || !(w > 0.0) || !(hbar > 0.0) || pieces == 0 {
        return Err(SpectralError::InvalidParams("need nu >= 2, W > 0, hbar > 0 and pieces > 0".into()));
    }
    let nu_f = nu as f64;
    let reach = |n: usize| (w / ((2 * n + 1) as f64 * hbar)).powf(1.0 / (nu_f - 1.0));
    let rule = crate::quadrature::GaussLegendre::get(((nu as usize) / 2 + 1).max(2));
    let contributions: Vec<f64> = (0..pieces)
        .into_par_iter()
        .map(|n| {
            let (lo, hi) = (reach(n + 1), reach(n));
            let f_mid = (0.5 * (lo + hi)).powi(nu as i32 - 1);
            let density = landau_density_2d(f_mid, w, 1.0, 1.0, hbar, 0.0).map(|d| d.levels as f64).unwrap_or(f64::NAN);
            density * rule.integrate(lo, hi, |x| x.powi(nu as i32 - 1))
        })
        .collect();
    let tail_edge = reach(pieces);
    let tail = w * tail_edge / (2.0 * hbar);
    // both half-lines; 2πħ × (2πħ)⁻¹ cancels
    let value = 2.0 * (pairwise_sum(&contributions) + tail);
    if !value.is_finite() {
        return Err(SpectralError::InvalidParams("non-finite Landau density".into()));
    }
    Ok(WeylQuadrature {
        value,
        error_bound: 2.0 * tail_edge.powf(nu_f),
        pieces,
    })
}

/// The correction `E_corr = (2πh)⁻¹ ∫ n₀ dξ₂ − ∫ E₀ dx₁` in the ħ-scaled
/// model variables, with `n₀` the semiclassical count of the auxiliary
/// operator and `E₀` the matching Landau density. Everything is reduced to
/// `W = 1` by `D(W, ħ) = √W D(1, ħ W^{−(ν+1)/(2ν)})`.
pub fn correction_term(p: &CorrectionParams) -> Result<CorrectionTerm, SpectralError> {
    p.validate()?;
    let w = p.lifted_w();
    let root_w = w.sqrt();
    let unit_hbar = p.hbar / w.powf((p.nu as f64 + 1.0) / (2.0 * p.nu as f64));
    if !(unit_hbar < 1.0) {
        return Err(SpectralError::InvalidParams(format!(
            "scaled hbar {unit_hbar} must be below 1; increase W or lower hbar"
        )));
    }
    let unit = unit_n0_integral(p.nu, unit_hbar)?;
    let window = (root_w * unit.lo, root_w * unit.hi);
    for edge in [window.0, window.1] {
        let outside = edge + edge.signum() * 1e-9 * edge.abs().max(1.0);
        if census_count(p.nu, p.hbar, outside, w)? != 0 {
            return Err(SpectralError::Window { edge });
        }
    }
    let n0_integral = root_w * unit.integral;
    let weyl_part = weyl_part_closed_form(p.nu, w, p.hbar);
    let reduced = (n0_integral - weyl_part) / TAU;
    let (_, peak) = critical_action(p.nu)?;
    Ok(CorrectionTerm {
        value: reduced / p.h,
        reduced,
        n0_integral,
        weyl_part,
        window,
        jumps: unit.jumps,
        action_variable: peak * p.phase_scale(),
        root_tol: JUMP_ROOT_TOL,
    })
}

/// `κ h⁻¹ ħ^{1/2} W^{1/4−1/(4ν)} G(S₀ W^{1/2+1/(2ν)}/(2πħ))`.
pub fn closed_form_correction(w: f64, hbar: f64, nu: u32, kappa: f64, s0: f64, h: f64) -> f64 {
    let nu_f = nu as f64;
    kappa / h * hbar.sqrt() * w.powf(0.25 - 0.25 / nu_f) * g_function(s0 * w.powf(0.5 + 0.5 / nu_f) / (TAU * hbar))
}

/// Correction sampled along a sweep of `W` at fixed `ħ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub w: f64,
    pub action_variable: f64,
    /// `E_corr / envelope`.
    pub normalized: f64,
    pub term: CorrectionTerm,
}

/// Correction at the `W` values that put the action variable
/// `S(k*) (W + 2τ)^{(ν+1)/(2ν)}/(2πħ)` at each entry of `t`, evaluated in parallel.
pub fn correction_sweep(nu: u32, hbar: f64, h: f64, tau: f64, t: &[f64]) -> Result<Vec<SweepPoint>, SpectralError> {
    let (_, peak) = critical_action(nu)?;
    let nu_f = nu as f64;
    t.par_iter()
        .map(|&ti| {
            let lifted = (TAU * hbar * ti / peak).powf(2.0 * nu_f / (nu_f + 1.0));
            let p = CorrectionParams::new(nu, lifted - 2.0 * tau, hbar, h).with_tau(tau);
            let term = correction_term(&p)?;
            Ok(SweepPoint {
                w: p.w,
                action_variable: term.action_variable,
                normalized: term.value / p.envelope(),
                term,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillationReport {
    /// Period of the dominant oscillation in the sampled variable.
    pub period: f64,
    /// Dominant DFT bin (number of oscillations across the sample span).
    pub dominant_bin: usize,
    /// Dominant amplitude over the larger neighbouring bin.
    pub neighbour_ratio: f64,
    pub mean: f64,
    /// Half the peak-to-peak range.
    pub amplitude: f64,
    /// RMS about the mean.
    pub rms: f64,
    pub samples: usize,
}

/// Dominant period of uniformly spaced samples: the strongest nonzero DFT
/// bin, refined by maximising the continuous Fourier magnitude over its main lobe.
pub fn oscillation_analysis(t: &[f64], y: &[f64]) -> Result<OscillationReport, SpectralError> {
    let n = y.len();
    if n < 8 || t.len() != n {
        return Err(SpectralError::InvalidParams("need at least 8 samples with matching abscissae".into()));
    }
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    if !(dt > 0.0) || t.windows(2).any(|p| ((p[1] - p[0]) - dt).abs() > 1e-6 * dt) {
        return Err(SpectralError::InvalidParams("samples must be uniformly spaced and increasing".into()));
    }
    let m = mean(y);
    let centered: Vec<f64> = y.iter().map(|v| v - m).collect();
    let mags = dft_magnitudes(&centered);
    let (bin, peak) = mags
        .iter()
        .enumerate()
        .skip(1)
        .fold((1, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    let neighbour = [bin.checked_sub(1).filter(|b| *b >= 1), (bin + 1 < mags.len()).then_some(bin + 1)]
        .into_iter()
        .flatten()
        .map(|b| mags[b])
        .fold(0.0, f64::max);
    let span = n as f64 * dt;
    let magnitude = |f: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (ti, v) in t.iter().zip(&centered) {
            let ang = -TAU * f * (ti - t[0]);
            re += v * ang.cos();
            im += v * ang.sin();
        }
        -(re * re + im * im).sqrt()
    };
    let lo = (bin as f64 - 1.0).max(0.5) / span;
    let hi = (bin as f64 + 1.0) / span;
    let freq = golden_min(magnitude, lo, hi, 1e-10 / span);
    let (min, max) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    Ok(OscillationReport {
        period: 1.0 / freq,
        dominant_bin: bin,
        neighbour_ratio: if neighbour > 0.0 { peak / neighbour } else { f64::INFINITY },
        mean: m,
        amplitude: 0.5 * (max - min),
        rms: rms(&centered),
        samples: n,
    })
}

fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Size of the correction over one full period of the action variable,
/// starting at `W + 2τ = 1`, normalised back to `W + 2τ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodAmplitude {
    pub hbar: f64,
    pub h: f64,
    /// RMS of `E_corr` about its mean over the period.
    pub rms: f64,
    pub mean: f64,
    pub half_range: f64,
    pub values: Vec<f64>,
}

pub fn amplitude_over_period(nu: u32, hbar: f64, h: f64, tau: f64, samples: usize) -> Result<PeriodAmplitude, SpectralError> {
    if samples < 4 {
        return Err(SpectralError::InvalidParams("need at least 4 samples per period".into()));
    }
    let (_, peak) = critical_action(nu)?;
    let t0 = peak / (TAU * hbar);
    let t: Vec<f64> = (0..samples).map(|j| t0 + j as f64 / samples as f64).collect();
    let sweep = correction_sweep(nu, hbar, h, tau, &t)?;
    let unit_envelope = hbar.sqrt() / h;
    let values: Vec<f64> = sweep.iter().map(|s| s.normalized * unit_envelope).collect();
    let m = mean(&values);
    let centered: Vec<f64> = values.iter().map(|v| v - m).collect();
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    Ok(PeriodAmplitude {
        hbar,
        h,
        rms: rms(&centered),
        mean: m,
        half_range: 0.5 * (max - min),
        values,
    })
}

/// A computed correction with the parameters it was computed at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrectionSample {
    pub params: CorrectionParams,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions {
    /// `|S₀|` is scanned over `[s0_min, s0_max]` with both signs.
    pub s0_min: f64,
    pub s0_max: f64,
    /// Scan step as a fraction of the phase period at the largest phase scale.
    pub phase_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            s0_min: 0.5,
            s0_max: 20.0,
            phase_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionFit {
    pub kappa: f64,
    #[serde(rename = "S0")]
    pub s0: f64,
    /// RMS residual of `E_corr / envelope − κ G(S₀ · phase)`.
    pub rms: f64,
    /// Half the peak-to-peak range of the normalised samples.
    pub amplitude: f64,
    pub relative_rms: f64,
    pub samples: usize,
}

/// Least-squares `(κ, S₀)` for the closed form: `κ` is linear and solved
/// exactly for each `S₀`; `S₀` is scanned on a grid fine enough to resolve
/// one period of `G` at every sample, then refined by golden section.
pub fn fit_closed_form(samples: &[CorrectionSample], opts: &FitOptions) -> Result<CorrectionFit, SpectralError> {
    if samples.len() < 3 {
        return Err(SpectralError::Fit("need at least 3 samples".into()));
    }
    if !(opts.s0_min >= 0.0 && opts.s0_max > opts.s0_min && opts.phase_step > 0.0) {
        return Err(SpectralError::InvalidParams("need 0 <= s0_min < s0_max and phase_step > 0".into()));
    }
    let y: Vec<f64> = samples.iter().map(|s| s.value / s.params.envelope()).collect();
    let c: Vec<f64> = samples.iter().map(|s| s.params.phase_scale()).collect();
    let sse = |s0: f64| -> (f64, f64) {
        let g: Vec<f64> = c.iter().map(|ci| g_function(s0 * ci)).collect();
        let gg: f64 = g.iter().map(|v| v * v).sum();
        let kappa = if gg > 0.0 { g.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / gg } else { 0.0 };
        let e = y.iter().zip(&g).map(|(yi, gi)| (yi - kappa * gi).powi(2)).sum();
        (e, kappa)
    };
    let cmax = c.iter().fold(0.0, |m: f64, v| m.max(*v));
    let step = opts.phase_step / cmax;
    let count = ((opts.s0_max - opts.s0_min) / step).ceil() as usize + 1;
    let grid: Vec<f64> = (0..count)
        .flat_map(|i| {
            let s = (opts.s0_min + i as f64 * step).min(opts.s0_max);
            [s, -s]
        })
        .collect();
    let scores: Vec<f64> = grid.par_iter().map(|s| sse(*s).0).collect();
    let best = scores
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc })
        .0;
    let centre = grid[best];
    let s0 = golden_min(|s| sse(s).0, centre - step, centre + step, 1e-12 * centre.abs().max(1.0));
    let (e, kappa) = sse(s0);
    let rms = (e / y.len() as f64).sqrt();
    let (min, max) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let amplitude = 0.5 * (max - min);
    Ok(CorrectionFit {
        kappa,
        s0,
        rms,
        amplitude,
        relative_rms: if amplitude > 0.0 { rms / amplitude } else { f64::INFINITY },
        samples: y.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correction4dTerm {
    pub beta: usize,
    pub v_beta: f64,
    pub term: CorrectionTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correction4d {
    pub total: f64,
    pub terms: Vec<Correction4dTerm>,
}

/// Sum of 2D corrections with `W = V_β = V − (2β+1)μh f₂` over all `β` with `V_β > 0`.
#[allow(clippy::too_many_arguments)]
pub fn correction_4d(nu: u32, v: f64, f2: f64, mu: f64, h: f64, hbar: f64, tau: f64) -> Result<Correction4d, SpectralError> {
    if !(f2 > 0.0) || !(mu > 0.0) || !(h > 0.0) {
        return Err(SpectralError::InvalidParams("f2, mu and h must be positive".into()));
    }
    let step = mu * h * f2;
    let mut terms = Vec::new();
    let mut beta = 0;
    loop {
        let v_beta = v - (2 * beta + 1) as f64 * step;
        if v_beta <= 0.0 {
            break;
        }
        let term = correction_term(&CorrectionParams::new(nu, v_beta, hbar, h).with_tau(tau))?;
        terms.push(Correction4dTerm { beta, v_beta, term });
        beta += 1;
    }
    let values: Vec<f64> = terms.iter().map(|t| t.term.value).collect();
    Ok(Correction4d {
        total: pairwise_sum(&values),
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::loglog_slope;

    #[test]
    fn critical_action_is_the_peak() {
        let (kstar, s0) = critical_action(2).unwrap();
        assert!((s0 - 6.189_465_953_414_455).abs() < 1e-8);
        for dk in [-0.05, 0.05] {
            assert!(unit_action(2, kstar + dk).unwrap() < s0);
        }
        assert_eq!(critical_action(3).unwrap().0, 0.0);
    }

    #[test]
    fn weyl_closed_form_matches_quadrature() {
        for (nu, w, hbar) in [(2, 1.0, 0.05), (3, 0.7, 0.03), (4, 1.2, 0.02)] {
            let closed = weyl_part_closed_form(nu, w, hbar);
            let quad = weyl_part_quadrature(nu, w, hbar, 100_000).unwrap();
            assert!((closed - quad.value).abs() <= quad.error_bound + 1e-10 * closed, "{closed} vs {quad:?}");
        }
    }

    #[test]
    fn weyl_smooth_counts_give_no_correction() {
        // n₀ replaced by its Weyl-smooth part, the Landau integral
        let p = CorrectionParams::new(2, 1.3, 0.04, 0.01);
        let smooth = weyl_part_quadrature(2, p.lifted_w(), p.hbar, 100_000).unwrap();
        let residual = (smooth.value - weyl_part_closed_form(2, p.lifted_w(), p.hbar)) / TAU / p.h;
        assert!(residual.abs() < 1e-6, "{residual}");
    }

    #[test]
    fn unit_integral_matches_direct_counting() {
        // oracle: midpoint rule of the census count over the window
        let hbar = 0.1;
        let unit = unit_n0_integral(2, hbar).unwrap();
        let n = 400_000;
        let (lo, hi) = (unit.lo - 0.01, unit.hi + 0.01);
        let dx = (hi - lo) / n as f64;
        let mut direct = 0.0;
        for i in 0..n {
            let k = lo + (i as f64 + 0.5) * dx;
            direct += census_count(2, hbar, k, 1.0).unwrap() as f64 * dx;
        }
        assert!((direct - unit.integral).abs() < 2.0 * unit.jumps as f64 * dx, "{direct} vs {}", unit.integral);
    }

    #[test]
    fn scaling_in_w_is_exact() {
        let a = correction_term(&CorrectionParams::new(2, 1.0, 0.05, 1.0)).unwrap();
        let w: f64 = 1.7;
        let b = correction_term(&CorrectionParams::new(2, w, 0.05 * w.powf(0.75), 1.0)).unwrap();
        assert!((b.reduced - w.sqrt() * a.reduced).abs() < 1e-9 * b.n0_integral);
        let lifted = correction_term(&CorrectionParams::new(2, 0.7, 0.05 * w.powf(0.75), 1.0).with_tau(0.5)).unwrap();
        assert!((lifted.reduced - b.reduced).abs() < 1e-12 * b.n0_integral);
    }

    #[test]
    fn reference_values_at_w_one() {
        let d05 = correction_term(&CorrectionParams::new(2, 1.0, 0.05, 1.0)).unwrap().reduced;
        let d025 = correction_term(&CorrectionParams::new(2, 1.0, 0.025, 1.0)).unwrap().reduced;
        assert!((d05 - 0.00545).abs() < 5e-5, "{d05}");
        assert!((d025 + 0.00873).abs() < 5e-5, "{d025}");
    }

    #[test]
    fn magnitude_scales_like_root_hbar() {
        let hs = [0.05, 0.025, 0.0125];
        let amps: Vec<f64> = hs.iter().map(|h| amplitude_over_period(2, *h, 1.0, 0.0, 16).unwrap().rms).collect();
        let p = loglog_slope(&hs, &amps).unwrap().slope;
        assert!((p - 0.5).abs() < 0.15, "p = {p}, amps {amps:?}");
    }

    #[test]
    fn closed_form_substitution() {
        let v = closed_form_correction(1.0, 0.03, 2, 0.2, 5.0, 0.5);
        assert!((v - 0.2 / 0.5 * 0.03f64.sqrt() * g_function(5.0 / (TAU * 0.03))).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_synthetic_parameters() {
        let samples: Vec<CorrectionSample> = (0..60)
            .map(|i| {
                let hbar = 0.01 + 0.04 * i as f64 / 59.0;
                let params = CorrectionParams::new(2, 1.0, hbar, 1.0);
                CorrectionSample {
                    params,
                    value: closed_form_correction(1.0, hbar, 2, 0.14, -6.19, 1.0),
                }
            })
            .collect();
        let fit = fit_closed_form(&samples, &FitOptions::default()).unwrap();
        assert!((fit.s0 + 6.19).abs() < 1e-6, "{fit:?}");
        assert!((fit.kappa - 0.14).abs() < 1e-9);
        assert!(fit.relative_rms < 1e-8);
    }

    #[test]
    fn dominant_period_of_a_pure_tone() {
        let t: Vec<f64> = (0..64).map(|j| 3.0 + j as f64 / 16.0).collect();
        let y: Vec<f64> = t.iter().map(|x| 0.1 + (TAU * x / 1.03).sin()).collect();
        let r = oscillation_analysis(&t, &y).unwrap();
        assert!((r.period - 1.03).abs() < 0.01, "{r:?}");
        assert_eq!(r.dominant_bin, 4);
    }

    #[test]
    fn four_dimensional_sum_stops_at_positive_levels() {
        let c = correction_4d(2, 1.0, 1.0, 10.0, 0.02, 0.05, 0.0).unwrap();
        // V_β = 1 − 0.2(2β + 1) > 0 for β = 0, 1
        assert_eq!(c.terms.len(), 2);
        let sum: f64 = c.terms.iter().map(|t| t.term.value).sum();
        assert!((c.total - sum).abs() < 1e-12);
    }
}
