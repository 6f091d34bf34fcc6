//! Magnetic two-forms, their intensities and rank strata.
//!
//! Potentials, metrics and scalar potentials are trait objects so that closed
//! forms, parsed expressions and ad-hoc closures can be mixed freely. Missing
//! derivatives fall back to fourth-order central differences.

mod canonical;
mod lines;
mod load;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::expr::{Expr, ParseError};

pub use canonical::{canonical_field, CanonicalKind, CanonicalPotential};
pub use lines::{magnetic_line, LineOptions, LineSample, MagneticLine};
pub use load::{load_field, parse_field, FieldDocument, LoadedField};

/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Default step of the central-difference derivatives.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("non-finite field value at {point:?}: {what}")]
    Domain { point: Vec<f64>, what: String },
    #[error("metric is not positive definite at {point:?} (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { point: Vec<f64>, min_eigenvalue: f64 },
    #[error("kernel of the two-form has dimension {kernel_dim} at {point:?}; a magnetic line needs exactly one direction")]
    Degenerate { point: Vec<f64>, kernel_dim: usize },
    #[error("kernel direction jumps at {point:?} (cosine with previous direction {cosine})")]
    Discontinuity { point: Vec<f64>, cosine: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown field kind {0:?}")]
    UnknownKind(String),
    #[error("invalid field parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl FieldError {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FieldError::Domain { .. } | FieldError::Degenerate { .. } | FieldError::Discontinuity { .. }
        )
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), FieldError> {
    if expected != got {
        return Err(FieldError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Fourth-order central difference of `f` at `x` with step `h`.
pub fn central_diff4<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    let (p2, p1, m1, m2) = (f(x + 2.0 * h), f(x + h), f(x - h), f(x - 2.0 * h));
    (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h)
}

fn partial<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut y = x.to_vec();
    central_diff4(
        |s| {
            y[i] = s;
            f(&y)
        },
        x[i],
        h,
    )
}

/// Magnetic vector potential `A = (A_1, ..., A_d)`.
pub trait VectorPotential: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
    /// Jacobian `J[(i, k)] = ∂_i A_k`.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        fd_jacobian(self, x, DEFAULT_FD_STEP)
    }
}

/// Central-difference Jacobian `∂_i A_k` of any potential.
pub fn fd_jacobian<P: VectorPotential + ?Sized>(a: &P, x: &[f64], step: f64) -> DMatrix<f64> {
    let d = a.dim();
    let mut j = DMatrix::zeros(d, d);
    let mut y = x.to_vec();
    let mut buf = [
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
    ];
    for i in 0..d {
        for (slot, off) in buf.iter_mut().zip([2.0, 1.0, -1.0, -2.0]) {
            y[i] = x[i] + off * step;
            a.eval(&y, slot);
        }
        y[i] = x[i];
        for k in 0..d {
            j[(i, k)] = (-buf[0][k] + 8.0 * buf[1][k] - 8.0 * buf[2][k] + buf[3][k]) / (12.0 * step);
        }
    }
    j
}

/// Inverse metric `g^{jk}(x)`.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;
    fn inverse_metric(&self, x: &[f64]) -> DMatrix<f64>;
    /// `∂_i g^{jk}`.
    fn derivative(&self, x: &[f64], i: usize) -> DMatrix<f64> {
        let h = DEFAULT_FD_STEP;
        let mut y = x.to_vec();
        let mut at = |s: f64| {
            y[i] = s;
            self.inverse_metric(&y)
        };
        let (p2, p1, m1, m2) = (at(x[i] + 2.0 * h), at(x[i] + h), at(x[i] - h), at(x[i] - 2.0 * h));
        (-p2 + p1 * 8.0 - m1 * 8.0 + m2) / (12.0 * h)
    }
    /// Whether the metric is constant, which lets the dynamics skip derivatives.
    fn is_constant(&self) -> bool {
        false
    }
}

/// Scalar potential `V(x)`.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = partial(|y| self.value(y), x, i, DEFAULT_FD_STEP);
        }
    }
}

/// The flat metric `g^{jk} = δ_{jk}`.
#[derive(Debug, Clone, Copy)]
pub struct Euclidean(pub usize);

impl MetricField for Euclidean {
    fn dim(&self) -> usize {
        self.0
    }
    fn inverse_metric(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.0, self.0)
    }
    fn derivative(&self, _x: &[f64], _i: usize) -> DMatrix<f64> {
        DMatrix::zeros(self.0, self.0)
    }
    fn is_constant(&self) -> bool {
        true
    }
}

/// A constant (not necessarily identity) inverse metric.
#[derive(Debug, Clone)]
pub struct ConstantMetric(pub DMatrix<f64>);

impl MetricField for ConstantMetric {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn inverse_metric(&self, _x: &[f64]) -> DMatrix<f64> {
        self.0.clone()
    }
    fn derivative(&self, _x: &[f64], _i: usize) -> DMatrix<f64> {
        DMatrix::zeros(self.0.nrows(), self.0.nrows())
    }
    fn is_constant(&self) -> bool {
        true
    }
}

/// Inverse metric given entrywise by parsed expressions (symmetrised), with
/// symbolic derivatives.
#[derive(Debug, Clone)]
pub struct ExprMetric {
    entries: Vec<Vec<Expr>>,
    derivatives: Vec<Vec<Vec<Expr>>>,
}

impl ExprMetric {
    pub fn new(entries: Vec<Vec<Expr>>) -> Result<Self, FieldError> {
        let d = entries.len();
        for row in &entries {
            check_dim(d, row.len())?;
        }
        let derivatives = (0..d)
            .map(|i| entries.iter().map(|row| row.iter().map(|e| e.derivative(i)).collect()).collect())
            .collect();
        Ok(ExprMetric { entries, derivatives })
    }
}

fn symmetric_from(entries: &[Vec<Expr>], x: &[f64]) -> DMatrix<f64> {
    let d = entries.len();
    let m = DMatrix::from_fn(d, d, |j, k| entries[j][k].eval(x));
    (&m + m.transpose()) * 0.5
}

impl MetricField for ExprMetric {
    fn dim(&self) -> usize {
        self.entries.len()
    }
    fn inverse_metric(&self, x: &[f64]) -> DMatrix<f64> {
        symmetric_from(&self.entries, x)
    }
    fn derivative(&self, x: &[f64], i: usize) -> DMatrix<f64> {
        symmetric_from(&self.derivatives[i], x)
    }
    fn is_constant(&self) -> bool {
        self.derivatives.iter().flatten().flatten().all(|e| matches!(e, Expr::Num(v) if *v == 0.0))
    }
}

/// Vector potential given componentwise by parsed expressions. The Jacobian
/// is symbolic unless a finite-difference step is requested.
#[derive(Debug, Clone)]
pub struct ExprPotential {
    components: Vec<Expr>,
    /// `jacobian[i][k] = ∂_i A_k`.
    jacobian: Vec<Vec<Expr>>,
    step: Option<f64>,
}

impl ExprPotential {
    pub fn new(components: Vec<Expr>) -> Self {
        let d = components.len();
        let jacobian = (0..d).map(|i| components.iter().map(|c| c.derivative(i)).collect()).collect();
        ExprPotential {
            components,
            jacobian,
            step: None,
        }
    }

    /// Use central differences with the given step instead of the symbolic
    /// Jacobian.
    pub fn with_step(mut self, step: f64) -> Self {
        self.step = Some(step);
        self
    }
}

impl VectorPotential for ExprPotential {
    fn dim(&self) -> usize {
        self.components.len()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.components) {
            *o = e.eval(x);
        }
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match self.step {
            Some(h) => fd_jacobian(self, x, h),
            None => {
                let d = self.dim();
                DMatrix::from_fn(d, d, |i, k| self.jacobian[i][k].eval(x))
            }
        }
    }
}

/// Scalar field from a parsed expression with symbolic gradient.
#[derive(Debug, Clone)]
pub struct ExprScalar {
    expr: Expr,
    gradient: Vec<Expr>,
}

impl ExprScalar {
    /// `dim` fixes the length of the gradient.
    pub fn new(expr: Expr, dim: usize) -> Self {
        let gradient = (0..dim).map(|i| expr.derivative(i)).collect();
        ExprScalar { expr, gradient }
    }
}

impl ScalarField for ExprScalar {
    fn value(&self, x: &[f64]) -> f64 {
        self.expr.eval(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.gradient.get(i).map_or(0.0, |g| g.eval(x));
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantScalar(pub f64);

impl ScalarField for ConstantScalar {
    fn value(&self, _x: &[f64]) -> f64 {
        self.0
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `V(x) = c + <a, x>`.
#[derive(Debug, Clone)]
pub struct AffineScalar {
    pub constant: f64,
    pub slope: Vec<f64>,
}

impl ScalarField for AffineScalar {
    fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(self.slope.iter().chain(std::iter::repeat(&0.0))) {
            *o = *a;
        }
    }
}

/// Scalar field from a closure (derivatives by central differences).
pub struct FnScalar<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Send + Sync> ScalarField for FnScalar<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Antisymmetric matrix `F_{jk}` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoFormValue(DMatrix<f64>);

impl TwoFormValue {
    /// Antisymmetrises `m`.
    pub fn new(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        TwoFormValue((m - t) * 0.5)
    }

    /// `F_{jk} = J_{jk} - J_{kj}` from a Jacobian `J_{jk} = ∂_j A_k`.
    pub fn from_jacobian(j: &DMatrix<f64>) -> Self {
        TwoFormValue(j - j.transpose())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.0[(j, k)]
    }

    /// Singular values in decreasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.0.clone().svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Numerical rank with singular values below `tol * max` counted as zero.
    /// Singular values come in equal pairs, so pairs are decided together and
    /// the result is always even.
    pub fn rank(&self, tol: f64) -> usize {
        let s = self.singular_values();
        let smax = s.first().copied().unwrap_or(0.0);
        if !(smax > 0.0) {
            return 0;
        }
        s.chunks(2)
            .filter(|p| p.len() == 2 && 0.5 * (p[0] + p[1]) > tol * smax)
            .count()
            * 2
    }

    /// Pfaffian (defined for d = 2 and d = 4; zero for odd d).
    pub fn pfaffian(&self) -> Option<f64> {
        let f = &self.0;
        match self.dim() {
            2 => Some(f[(0, 1)]),
            4 => Some(f[(0, 1)] * f[(2, 3)] - f[(0, 2)] * f[(1, 3)] + f[(0, 3)] * f[(1, 2)]),
            d if d % 2 == 1 => Some(0.0),
            _ => None,
        }
    }
}

type FormFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A magnetic two-form as a field over ℝ^d.
#[derive(Clone)]
pub struct MagneticTwoForm {
    dim: usize,
    eval: FormFn,
}

impl fmt::Debug for MagneticTwoForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MagneticTwoForm").field("dim", &self.dim).finish()
    }
}

impl MagneticTwoForm {
    pub fn from_potential(a: Arc<dyn VectorPotential>) -> Self {
        MagneticTwoForm {
            dim: a.dim(),
            eval: Arc::new(move |x| {
                let j = a.jacobian(x);
                &j - j.transpose()
            }),
        }
    }

    /// From a closure returning the matrix `F_{jk}` (antisymmetrised on use).
    pub fn from_fn<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        MagneticTwoForm {
            dim,
            eval: Arc::new(f),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, x: &[f64]) -> Result<TwoFormValue, FieldError> {
        check_dim(self.dim, x.len())?;
        let v = TwoFormValue::new((self.eval)(x));
        if v.0.iter().any(|e| !e.is_finite()) {
            return Err(FieldError::Domain {
                point: x.to_vec(),
                what: "two-form".into(),
            });
        }
        Ok(v)
    }
}

/// `F_{jk} = ∂_j A_k − ∂_k A_j` at `x`.
pub fn two_form_from_potential(a: &dyn VectorPotential, x: &[f64]) -> Result<TwoFormValue, FieldError> {
    check_dim(a.dim(), x.len())?;
    let j = a.jacobian(x);
    if j.iter().any(|e| !e.is_finite()) {
        return Err(FieldError::Domain {
            point: x.to_vec(),
            what: "potential derivative".into(),
        });
    }
    Ok(TwoFormValue::from_jacobian(&j))
}

/// Magnetic intensities `f_1 ≥ … ≥ f_r > 0` and kernel dimension `q = d − 2r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensitySpectrum {
    pub intensities: Vec<f64>,
    pub kernel_dim: usize,
    pub tol: f64,
}

impl IntensitySpectrum {
    pub fn half_rank(&self) -> usize {
        self.intensities.len()
    }
}

/// Symmetric square root of a positive-definite matrix, or the smallest
/// eigenvalue if it is not positive.
pub fn sqrt_spd(g: &DMatrix<f64>) -> Result<DMatrix<f64>, f64> {
    let eig = SymmetricEigen::new((g + g.transpose()) * 0.5);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(min);
    }
    let roots = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|v| v.sqrt()));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Intensities from pointwise values of the inverse metric and the two-form.
///
/// The mixed tensor `G F` is similar to the antisymmetric `G^{1/2} F G^{1/2}`,
/// whose singular values are the moduli of its eigenvalues `±i f_j`.
pub fn intensity_spectrum(g: &DMatrix<f64>, f: &TwoFormValue, tol: f64) -> Result<IntensitySpectrum, FieldError> {
    let d = f.dim();
    check_dim(d, g.nrows())?;
    let root = sqrt_spd(g).map_err(|min_eigenvalue| FieldError::NotPositiveDefinite {
        point: vec![],
        min_eigenvalue,
    })?;
    let k = TwoFormValue::new(&root * f.matrix() * &root);
    let s = k.singular_values();
    let smax = s.first().copied().unwrap_or(0.0);
    let intensities: Vec<f64> = s
        .chunks(2)
        .filter(|p| p.len() == 2)
        .map(|p| 0.5 * (p[0] + p[1]))
        .filter(|v| smax > 0.0 && *v > tol * smax)
        .collect();
    Ok(IntensitySpectrum {
        kernel_dim: d - 2 * intensities.len(),
        intensities,
        tol,
    })
}

/// Intensities of `form` with respect to `metric` at `x`.
pub fn intensity_eigenvalues(
    metric: &dyn MetricField,
    form: &MagneticTwoForm,
    x: &[f64],
    tol: f64,
) -> Result<IntensitySpectrum, FieldError> {
    let f = form.at(x)?;
    let g = metric.inverse_metric(x);
    intensity_spectrum(&g, &f, tol).map_err(|e| match e {
        FieldError::NotPositiveDefinite { min_eigenvalue, .. } => FieldError::NotPositiveDefinite {
            point: x.to_vec(),
            min_eigenvalue,
        },
        other => other,
    })
}

/// `k` such that `x ∈ Σ_k = {rank F ≤ d − k}` at the given tolerance.
pub fn rank_stratum(form: &MagneticTwoForm, x: &[f64], tol: f64) -> Result<usize, FieldError> {
    let f = form.at(x)?;
    Ok(f.dim() - f.rank(tol))
}
