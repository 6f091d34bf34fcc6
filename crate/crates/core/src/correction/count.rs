use serde::Serialize;

use super::operator::Operator1D;
use super::SpectralError;

/// Smallest admissible interior grid.
pub const MIN_GRID: usize = 200;
/// Largest grid tried by the doubling loop.
pub const MAX_GRID: usize = 1 << 20;
/// An eigenvalue this close to the threshold marks the count as grazing.
pub const GRAZING_WINDOW: f64 = 1e-9;
/// Eigenvalue bisection stops at this fraction of the Gershgorin width.
pub const BISECTION_REL_TOL: f64 = 1e-12;

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    /// Sub-diagonal, `diag.len() − 1` entries.
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `x`: negative pivots of the
    /// `LDLᵀ` factorisation of `M − x` (Sturm sequence).
    pub fn count_below(&self, x: f64) -> usize {
        let pivmin = f64::MIN_POSITIVE * self.off.iter().fold(1.0_f64, |m, e| m.max(e * e));
        let mut count = 0;
        let mut q = 1.0;
        for (i, d) in self.diag.iter().enumerate() {
            q = if i == 0 { d - x } else { d - x - self.off[i - 1] * self.off[i - 1] / q };
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `index`-th smallest eigenvalue by bisection on the Sturm count.
    pub fn eigenvalue(&self, index: usize, rel_tol: f64) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let tol = rel_tol * (hi - lo).max(f64::MIN_POSITIVE);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.count_below(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Three-point discretisation of `−ħ²/2 ∂² + P` on `n` interior nodes of
/// `[−L, L]` with Dirichlet ends.
pub fn fd_matrix<O: Operator1D + ?Sized>(op: &O, half_width: f64, n: usize) -> Tridiagonal {
    let dx = 2.0 * half_width / (n + 1) as f64;
    let kinetic = op.hbar() * op.hbar() / (dx * dx);
    let diag = (0..n)
        .map(|i| kinetic + op.potential(-half_width + (i + 1) as f64 * dx))
        .collect();
    Tridiagonal {
        diag,
        off: vec![-0.5 * kinetic; n.saturating_sub(1)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountMethod {
    FiniteDifference,
    BohrSommerfeld,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CountCertificate {
    /// Grid on which the count agreed with the next coarser one.
    Grid { n: usize, half_width: f64, margin: f64 },
    /// Root tolerance of the quantisation condition and the wells counted.
    Action { rel_tol: f64, wells: usize },
}

/// Number of eigenvalues below a threshold, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountingFunction {
    pub threshold: f64,
    pub count: usize,
    pub method: CountMethod,
    pub certificate: CountCertificate,
    /// An eigenvalue lies within `GRAZING_WINDOW` of the threshold.
    pub grazing: bool,
}

/// Eigenvalues below `tau` by Sturm counts on grids `n, 2n, 4n, …` until two
/// consecutive grids agree.
pub fn fd_eigencount<O: Operator1D + ?Sized>(op: &O, tau: f64, n: usize) -> Result<CountingFunction, SpectralError> {
    if n < MIN_GRID {
        return Err(SpectralError::InvalidParams(format!("grid size must be >= {MIN_GRID}, got {n}")));
    }
    if !tau.is_finite() {
        return Err(SpectralError::InvalidParams("threshold must be finite".into()));
    }
    let half_width = op.half_width(tau)?;
    let margin = op.potential(-half_width).min(op.potential(half_width)) - tau;
    let mut n = n;
    let mut coarse = fd_matrix(op, half_width, n).count_below(tau);
    loop {
        let fine_matrix = fd_matrix(op, half_width, 2 * n);
        let fine = fine_matrix.count_below(tau);
        if fine == coarse {
            let grazing = fine_matrix.count_below(tau - GRAZING_WINDOW) != fine_matrix.count_below(tau + GRAZING_WINDOW);
            return Ok(CountingFunction {
                threshold: tau,
                count: fine,
                method: CountMethod::FiniteDifference,
                certificate: CountCertificate::Grid {
                    n: 2 * n,
                    half_width,
                    margin,
                },
                grazing,
            });
        }
        if 4 * n > MAX_GRID {
            return Err(SpectralError::Resolution { n, coarse, fine });
        }
        n *= 2;
        coarse = fine;
    }
}

/// The settled count together with the eigenvalues below `tau` on the final grid.
pub fn fd_eigenvalues<O: Operator1D + ?Sized>(
    op: &O,
    tau: f64,
    n: usize,
) -> Result<(CountingFunction, Vec<f64>), SpectralError> {
    let counting = fd_eigencount(op, tau, n)?;
    let CountCertificate::Grid { n: grid, half_width, .. } = counting.certificate else {
        unreachable!("finite-difference counts carry a grid certificate")
    };
    let matrix = fd_matrix(op, half_width, grid);
    let values = (0..counting.count).map(|i| matrix.eigenvalue(i, BISECTION_REL_TOL)).collect();
    Ok((counting, values))
}
