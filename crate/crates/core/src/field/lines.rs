//! Magnetic lines: integral curves of the kernel line field of `F`.

use nalgebra::DVector;
use serde::Serialize;

use super::{central_diff4, FieldError, MagneticTwoForm, TwoFormValue, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy)]
pub struct LineOptions {
    /// Relative rank tolerance for the kernel.
    pub rank_tol: f64,
    /// Smallest accepted cosine between consecutive directions.
    pub min_cosine: f64,
}

impl Default for LineOptions {
    fn default() -> Self {
        LineOptions {
            rank_tol: DEFAULT_RANK_TOL,
            min_cosine: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LineSample {
    pub s: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MagneticLine {
    pub samples: Vec<LineSample>,
    /// Whether any point needed the restriction to the tangent space of the
    /// degeneracy surface to single out a direction.
    pub used_surface_projection: bool,
}

/// Right singular vectors spanning the numerical kernel of `f`.
fn kernel_basis(f: &TwoFormValue, tol: f64) -> Vec<DVector<f64>> {
    let d = f.dim();
    let rank = f.rank(tol);
    let svd = f.matrix().clone().svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    order[rank..]
        .iter()
        .map(|&i| vt.row(i).transpose().into_owned())
        .collect()
}

/// Unit kernel direction at `x` (unoriented) and whether it came from the
/// surface projection.
pub(crate) fn kernel_direction(
    form: &MagneticTwoForm,
    x: &[f64],
    tol: f64,
) -> Result<(DVector<f64>, bool), FieldError> {
    let f = form.at(x)?;
    let basis = kernel_basis(&f, tol);
    match basis.len() {
        1 => Ok((basis[0].normalize(), false)),
        2 if f.pfaffian().is_some() && f.dim() % 2 == 0 => {
            // Restrict to the tangent space of {Pf = 0}.
            let grad = pfaffian_gradient(form, x)?;
            let a = grad.dot(&basis[0]);
            let b = grad.dot(&basis[1]);
            let v = &basis[0] * b - &basis[1] * a;
            let norm = v.norm();
            if !(norm > 1e-10 * grad.norm()) || !(grad.norm() > 0.0) {
                return Err(FieldError::Degenerate {
                    point: x.to_vec(),
                    kernel_dim: 2,
                });
            }
            Ok((v / norm, true))
        }
        k => Err(FieldError::Degenerate {
            point: x.to_vec(),
            kernel_dim: k,
        }),
    }
}

fn pfaffian_gradient(form: &MagneticTwoForm, x: &[f64]) -> Result<DVector<f64>, FieldError> {
    let d = x.len();
    let mut g = DVector::zeros(d);
    let mut y = x.to_vec();
    for i in 0..d {
        let mut failed = None;
        g[i] = central_diff4(
            |s| {
                y[i] = s;
                match form.at(&y) {
                    Ok(v) => v.pfaffian().unwrap_or(f64::NAN),
                    Err(e) => {
                        failed = Some(e);
                        f64::NAN
                    }
                }
            },
            x[i],
            1e-5,
        );
        y[i] = x[i];
        if let Some(e) = failed {
            return Err(e);
        }
    }
    Ok(g)
}

fn initial_orientation(v: DVector<f64>) -> DVector<f64> {
    match v.iter().find(|c| c.abs() > 1e-9) {
        Some(c) if *c < 0.0 => -v,
        _ => v,
    }
}

/// Integrates a magnetic line from `x0` over signed arc length `arc_length`
/// with RK4 steps no longer than `step`.
///
/// Where the kernel is two-dimensional on the degeneracy surface `{Pf = 0}`
/// of an even-dimensional form, the direction is the part of the kernel
/// tangent to that surface. Any other kernel dimension is reported as a
/// degeneracy.
pub fn magnetic_line(
    form: &MagneticTwoForm,
    x0: &[f64],
    arc_length: f64,
    step: f64,
    opts: &LineOptions,
) -> Result<MagneticLine, FieldError> {
    if !(step > 0.0) || !arc_length.is_finite() {
        return Err(FieldError::InvalidParams(format!(
            "step must be positive and arc length finite (step {step}, length {arc_length})"
        )));
    }
    let n = (arc_length.abs() / step).ceil().max(1.0) as usize;
    let h = arc_length / n as f64;
    let mut projected = false;

    let (v0, p) = kernel_direction(form, x0, opts.rank_tol)?;
    projected |= p;
    let mut prev = initial_orientation(v0);

    let mut x = DVector::from_column_slice(x0);
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(LineSample { s: 0.0, x: x0.to_vec() });

    let oriented = |y: &DVector<f64>, reference: &DVector<f64>, projected: &mut bool| {
        let (v, p) = kernel_direction(form, y.as_slice(), opts.rank_tol)?;
        *projected |= p;
        Ok::<_, FieldError>(if v.dot(reference) < 0.0 { -v } else { v })
    };

    for i in 0..n {
        let k1 = oriented(&x, &prev, &mut projected)?;
        let cosine = k1.dot(&prev);
        if cosine < opts.min_cosine {
            return Err(FieldError::Discontinuity {
                point: x.as_slice().to_vec(),
                cosine,
            });
        }
        let k2 = oriented(&(&x + &k1 * (0.5 * h)), &k1, &mut projected)?;
        let k3 = oriented(&(&x + &k2 * (0.5 * h)), &k1, &mut projected)?;
        let k4 = oriented(&(&x + &k3 * h), &k1, &mut projected)?;
        x += (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
        prev = k1;
        samples.push(LineSample {
            s: h * (i + 1) as f64,
            x: x.as_slice().to_vec(),
        });
    }
    Ok(MagneticLine {
        samples,
        used_surface_projection: projected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{canonical_field, CanonicalKind};

    fn line(kind: CanonicalKind, x0: &[f64], len: f64) -> Result<MagneticLine, FieldError> {
        let (_, form) = canonical_field(&kind).unwrap();
        magnetic_line(&form, x0, len, 0.01, &LineOptions::default())
    }

    #[test]
    fn odd_dimensional_constant_field_gives_straight_lines() {
        let l = line(CanonicalKind::Constant { intensities: vec![1.0], dim: 3 }, &[0.1, 0.2, 0.3], 2.0).unwrap();
        let last = &l.samples.last().unwrap().x;
        assert!((last[0] - 0.1).abs() < 1e-12 && (last[1] - 0.2).abs() < 1e-12);
        assert!((last[2] - 2.3).abs() < 1e-12);
        assert!(!l.used_surface_projection);
    }

    #[test]
    fn martinet_line_is_the_surface() {
        let l = line(CanonicalKind::Martinet2d { nu: 2 }, &[0.0, -0.3], 1.0).unwrap();
        for s in &l.samples {
            assert!(s.x[0].abs() < 1e-12);
        }
        assert!((l.samples.last().unwrap().x[1] - 0.7).abs() < 1e-12);
        assert!(l.used_surface_projection);
    }

    #[test]
    fn nondegenerate_4d_lines_are_straight() {
        let l = line(CanonicalKind::Nondeg4d, &[0.0, 0.1, 0.4, -0.2], 3.0).unwrap();
        for s in &l.samples {
            assert!(s.x[0].abs() < 1e-12);
            assert!((s.x[2] - 0.4).abs() < 1e-12 && (s.x[3] + 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn roussarie_lines_are_helices() {
        let r = 0.5;
        let l = line(CanonicalKind::Roussarie4d, &[0.0, 0.2, r, 0.0], 10.0).unwrap();
        let mut theta = 0.0;
        let mut prev_angle = 0.0f64;
        let mut max_rho = 0.0f64;
        let mut max_inv = 0.0f64;
        for s in &l.samples {
            let angle = s.x[3].atan2(s.x[2]);
            let mut d = angle - prev_angle;
            d -= std::f64::consts::TAU * (d / std::f64::consts::TAU).round();
            theta += d;
            prev_angle = angle;
            let rho = s.x[2].hypot(s.x[3]);
            max_rho = max_rho.max((rho - r).abs());
            // the kernel direction (0, −ρ², −x4, x3) keeps x2 + ρ²θ fixed
            max_inv = max_inv.max((s.x[1] + rho * rho * theta - 0.2).abs());
            assert!(s.x[0].abs() < 1e-10);
        }
        assert!(theta.abs() > 1.0);
        assert!(max_rho < 1e-6, "{max_rho}");
        assert!(max_inv < 1e-5, "{max_inv}");
    }

    #[test]
    fn full_rank_point_has_no_line() {
        let err = line(CanonicalKind::Nondeg4d, &[0.5, 0.0, 0.0, 0.0], 1.0).unwrap_err();
        assert!(matches!(err, FieldError::Degenerate { kernel_dim: 0, .. }));
    }

    #[test]
    fn kernel_tangent_to_surface_is_degenerate() {
        let err = line(CanonicalKind::Roussarie4d, &[0.0, 0.0, 0.0, 0.0], 1.0).unwrap_err();
        assert!(matches!(err, FieldError::Degenerate { .. }));
    }
}
