//! Model magnetic fields with closed-form potentials and two-forms.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use super::{FieldError, MagneticTwoForm, VectorPotential};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CanonicalKind {
    /// `Σ dx_{2j-1} ∧ dx_{2j}` in symmetric gauge.
    Darboux { dim: usize },
    /// `x_1^{ν-1} dx_1 ∧ dx_2` with `A = (−x_1^{ν−1} x_2, 0)`.
    Martinet2d { nu: u32 },
    /// `x_1 dx_1 ∧ dx_2 + dx_3 ∧ dx_4`.
    Nondeg4d,
    /// Degenerate 4D form whose magnetic lines wind around `{x_1 = x_3 = x_4 = 0}`.
    Roussarie4d,
    /// Constant block form `Σ f_j dx_{2j-1} ∧ dx_{2j}` in ℝ^dim.
    Constant { intensities: Vec<f64>, dim: usize },
    /// `x_1^{ν-1} dx_1 ∧ dx_2` with `A = (0, x_1^ν/ν)`.
    Model2d { nu: u32 },
}

impl CanonicalKind {
    pub fn dim(&self) -> usize {
        match self {
            CanonicalKind::Darboux { dim } | CanonicalKind::Constant { dim, .. } => *dim,
            CanonicalKind::Martinet2d { .. } | CanonicalKind::Model2d { .. } => 2,
            CanonicalKind::Nondeg4d | CanonicalKind::Roussarie4d => 4,
        }
    }

    fn validate(&self) -> Result<(), FieldError> {
        match self {
            CanonicalKind::Darboux { dim } if *dim < 2 => {
                Err(FieldError::InvalidParams(format!("darboux needs dim >= 2, got {dim}")))
            }
            CanonicalKind::Martinet2d { nu } | CanonicalKind::Model2d { nu } if *nu < 2 => {
                Err(FieldError::InvalidParams(format!("nu must be an integer >= 2, got {nu}")))
            }
            CanonicalKind::Constant { intensities, dim } => {
                if intensities.is_empty() || intensities.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
                    return Err(FieldError::InvalidParams(
                        "constant field needs a nonempty list of positive intensities".into(),
                    ));
                }
                if 2 * intensities.len() > *dim || *dim < 2 {
                    return Err(FieldError::InvalidParams(format!(
                        "{} intensities do not fit in dimension {dim}",
                        intensities.len()
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Closed-form `F_{jk}` at `x`.
    pub fn two_form(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut f = DMatrix::zeros(d, d);
        let mut set = |j: usize, k: usize, v: f64| {
            f[(j, k)] = v;
            f[(k, j)] = -v;
        };
        match self {
            CanonicalKind::Darboux { dim } => {
                for j in 0..dim / 2 {
                    set(2 * j, 2 * j + 1, 1.0);
                }
            }
            CanonicalKind::Martinet2d { nu } | CanonicalKind::Model2d { nu } => {
                set(0, 1, x[0].powi(*nu as i32 - 1));
            }
            CanonicalKind::Nondeg4d => {
                set(0, 1, x[0]);
                set(2, 3, 1.0);
            }
            CanonicalKind::Roussarie4d => {
                let rho2 = x[2] * x[2] + x[3] * x[3];
                set(0, 1, 1.0);
                set(0, 2, -x[3]);
                set(0, 3, x[2]);
                set(1, 2, x[2]);
                set(1, 3, x[3]);
                set(2, 3, 2.0 * (x[0] - 0.5 * rho2));
            }
            CanonicalKind::Constant { intensities, .. } => {
                for (j, fj) in intensities.iter().enumerate() {
                    set(2 * j, 2 * j + 1, *fj);
                }
            }
        }
        f
    }
}

/// Closed-form gauge for a [`CanonicalKind`].
#[derive(Debug, Clone)]
pub struct CanonicalPotential {
    kind: CanonicalKind,
}

impl CanonicalPotential {
    pub fn new(kind: CanonicalKind) -> Result<Self, FieldError> {
        kind.validate()?;
        Ok(CanonicalPotential { kind })
    }

    pub fn kind(&self) -> &CanonicalKind {
        &self.kind
    }
}

impl VectorPotential for CanonicalPotential {
    fn dim(&self) -> usize {
        self.kind.dim()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match &self.kind {
            CanonicalKind::Darboux { .. } | CanonicalKind::Constant { .. } => {
                // A_k = ½ Σ_j F_{jk} x_j
                let f = self.kind.two_form(x);
                for (k, o) in out.iter_mut().enumerate() {
                    *o = 0.5 * (0..x.len()).map(|j| f[(j, k)] * x[j]).sum::<f64>();
                }
            }
            CanonicalKind::Martinet2d { nu } => {
                out[0] = -x[0].powi(*nu as i32 - 1) * x[1];
            }
            CanonicalKind::Model2d { nu } => {
                out[1] = x[0].powi(*nu as i32) / *nu as f64;
            }
            CanonicalKind::Nondeg4d => {
                out[1] = 0.5 * x[0] * x[0];
                out[2] = -0.5 * x[3];
                out[3] = 0.5 * x[2];
            }
            CanonicalKind::Roussarie4d => {
                let rho2 = x[2] * x[2] + x[3] * x[3];
                let c = x[0] - 0.25 * rho2;
                out[1] = x[0] - 0.5 * rho2;
                out[2] = -c * x[3];
                out[3] = c * x[2];
            }
        }
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut j = DMatrix::zeros(d, d);
        match &self.kind {
            CanonicalKind::Darboux { .. } | CanonicalKind::Constant { .. } => {
                j = self.kind.two_form(x) * 0.5;
            }
            CanonicalKind::Martinet2d { nu } => {
                let n = *nu as i32;
                j[(0, 0)] = -(n - 1) as f64 * x[0].powi(n - 2) * x[1];
                j[(1, 0)] = -x[0].powi(n - 1);
            }
            CanonicalKind::Model2d { nu } => {
                j[(0, 1)] = x[0].powi(*nu as i32 - 1);
            }
            CanonicalKind::Nondeg4d => {
                j[(0, 1)] = x[0];
                j[(3, 2)] = -0.5;
                j[(2, 3)] = 0.5;
            }
            CanonicalKind::Roussarie4d => {
                let (x3, x4) = (x[2], x[3]);
                let c = x[0] - 0.25 * (x3 * x3 + x4 * x4);
                j[(0, 1)] = 1.0;
                j[(2, 1)] = -x3;
                j[(3, 1)] = -x4;
                // A_3 = −c x_4
                j[(0, 2)] = -x4;
                j[(2, 2)] = 0.5 * x3 * x4;
                j[(3, 2)] = 0.5 * x4 * x4 - c;
                // A_4 = c x_3
                j[(0, 3)] = x3;
                j[(2, 3)] = c - 0.5 * x3 * x3;
                j[(3, 3)] = -0.5 * x3 * x4;
            }
        }
        j
    }
}

/// Closed-form gauge and two-form of a model field.
pub fn canonical_field(kind: &CanonicalKind) -> Result<(Arc<dyn VectorPotential>, MagneticTwoForm), FieldError> {
    let pot = CanonicalPotential::new(kind.clone())?;
    let k = kind.clone();
    let form = MagneticTwoForm::from_fn(kind.dim(), move |x| k.two_form(x));
    Ok((Arc::new(pot), form))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{fd_jacobian, two_form_from_potential};

    fn all_kinds() -> Vec<CanonicalKind> {
        vec![
            CanonicalKind::Darboux { dim: 4 },
            CanonicalKind::Darboux { dim: 3 },
            CanonicalKind::Martinet2d { nu: 2 },
            CanonicalKind::Martinet2d { nu: 4 },
            CanonicalKind::Nondeg4d,
            CanonicalKind::Roussarie4d,
            CanonicalKind::Constant { intensities: vec![2.0, 1.0], dim: 4 },
            CanonicalKind::Model2d { nu: 3 },
        ]
    }

    #[test]
    fn gauges_reproduce_closed_forms() {
        let pts = [[0.3, -0.7, 0.2, 0.9], [-0.5, 0.1, -0.4, 0.6], [0.0, 0.0, 0.0, 0.0]];
        for kind in all_kinds() {
            let pot = CanonicalPotential::new(kind.clone()).unwrap();
            for p in &pts {
                let x = &p[..kind.dim()];
                let f = two_form_from_potential(&pot, x).unwrap();
                assert!((f.matrix() - kind.two_form(x)).amax() < 1e-14, "{kind:?}");
                let fd = fd_jacobian(&pot, x, 1e-3);
                assert!((fd - pot.jacobian(x)).amax() < 1e-10, "{kind:?}");
            }
        }
    }

    #[test]
    fn named_examples() {
        let m = CanonicalKind::Martinet2d { nu: 2 };
        assert_eq!(m.two_form(&[0.4, 0.9])[(0, 1)], 0.4);
        let model = CanonicalPotential::new(CanonicalKind::Model2d { nu: 3 }).unwrap();
        let mut a = [0.0; 2];
        model.eval(&[0.6, 0.0], &mut a);
        assert!((a[1] - 0.072).abs() < 1e-15);
        assert!((CanonicalKind::Model2d { nu: 3 }.two_form(&[0.6, 0.0])[(0, 1)] - 0.36).abs() < 1e-15);
        let c = CanonicalKind::Constant { intensities: vec![3.0, 1.0], dim: 4 }.two_form(&[0.0; 4]);
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 3.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0],
        );
        assert_eq!(c, expected);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(CanonicalPotential::new(CanonicalKind::Model2d { nu: 1 }).is_err());
        assert!(CanonicalPotential::new(CanonicalKind::Constant { intensities: vec![1.0, -1.0], dim: 4 }).is_err());
        assert!(CanonicalPotential::new(CanonicalKind::Constant { intensities: vec![1.0, 1.0], dim: 3 }).is_err());
    }
}
