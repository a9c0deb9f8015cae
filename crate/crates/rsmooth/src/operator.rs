//! Linear operators `A : R^n -> R^m` with adjoints, spectral-norm estimation
//! and the pseudo-inverse correction used to form the corrected point.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const POWER_ITER_TOL: f64 = 1e-8;
const POWER_ITER_MAX: usize = 10_000;

#[derive(Clone, Debug)]
enum Kind {
    Identity {
        dim: usize,
    },
    Dense {
        a: DMatrix<f64>,
        op_norm: f64,
        sigma_min: f64,
        surjective: bool,
        /// Moore-Penrose pseudo-inverse, present iff surjective.
        pinv: Option<DMatrix<f64>>,
    },
}

/// A linear map applied columnwise to matrices (`X` n-by-r maps to `AX`
/// m-by-r). Immutable after construction; the spectral norm and, for dense
/// surjective operators, the smallest singular value and pseudo-inverse are
/// cached.
#[derive(Clone, Debug)]
pub struct LinearMap {
    kind: Kind,
}

impl LinearMap {
    pub fn identity(dim: usize) -> Self {
        LinearMap {
            kind: Kind::Identity { dim },
        }
    }

    /// Wraps a dense matrix. The spectral norm is estimated by power
    /// iteration (tolerance 1e-8, at most 10_000 iterations); singular values
    /// below `1e-12 * sigma_max` are treated as zero, and the operator is
    /// declared surjective iff the m-th singular value exceeds
    /// `1e-10 * sigma_max`.
    pub fn dense(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::invalid("a", "operator matrix must be nonempty"));
        }
        let op_norm = power_iteration_norm(&a, POWER_ITER_TOL, POWER_ITER_MAX)?;
        let svd = a.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        let m = a.nrows();
        let sigma_m = if svd.singular_values.len() >= m {
            svd.singular_values[m - 1]
        } else {
            0.0
        };
        let surjective = m <= a.ncols() && sigma_m > 1e-10 * sigma_max;
        let pinv = if surjective {
            let cutoff = 1e-12 * sigma_max;
            Some(
                svd.pseudo_inverse(cutoff)
                    .map_err(|e| Error::invalid("a", e.to_string()))?,
            )
        } else {
            None
        };
        Ok(LinearMap {
            kind: Kind::Dense {
                a,
                op_norm,
                sigma_min: sigma_m,
                surjective,
                pinv,
            },
        })
    }

    /// Input dimension n (rows of the matrices the operator acts on).
    pub fn input_dim(&self) -> usize {
        match &self.kind {
            Kind::Identity { dim } => *dim,
            Kind::Dense { a, .. } => a.ncols(),
        }
    }

    /// Output dimension m.
    pub fn output_dim(&self) -> usize {
        match &self.kind {
            Kind::Identity { dim } => *dim,
            Kind::Dense { a, .. } => a.nrows(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, Kind::Identity { .. })
    }

    /// `A x`, applied columnwise. The identity fast path returns the input
    /// unchanged (bitwise).
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.kind {
            Kind::Identity { dim } => {
                self.check_rows(x, *dim)?;
                Ok(x.clone())
            }
            Kind::Dense { a, .. } => {
                self.check_rows(x, a.ncols())?;
                Ok(a * x)
            }
        }
    }

    /// Adjoint `A^T y`, applied columnwise.
    pub fn adjoint(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.kind {
            Kind::Identity { dim } => {
                self.check_rows(y, *dim)?;
                Ok(y.clone())
            }
            Kind::Dense { a, .. } => {
                self.check_rows(y, a.nrows())?;
                Ok(a.tr_mul(y))
            }
        }
    }

    /// Cached spectral norm estimate; exactly 1 for the identity.
    pub fn op_norm(&self) -> f64 {
        match &self.kind {
            Kind::Identity { .. } => 1.0,
            Kind::Dense { op_norm, .. } => *op_norm,
        }
    }

    /// Smallest singular value, available when the operator is surjective.
    pub fn sigma_min(&self) -> Option<f64> {
        match &self.kind {
            Kind::Identity { .. } => Some(1.0),
            Kind::Dense {
                sigma_min,
                surjective,
                ..
            } => surjective.then_some(*sigma_min),
        }
    }

    pub fn is_surjective(&self) -> bool {
        match &self.kind {
            Kind::Identity { .. } => true,
            Kind::Dense { surjective, .. } => *surjective,
        }
    }

    /// Corrected point `x_hat = x - A^+(A x - z)`: the nearest point whose
    /// image under `A` equals `z`. Requires a surjective operator.
    pub fn correct_point(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.kind {
            Kind::Identity { dim } => {
                self.check_rows(x, *dim)?;
                self.check_rows(z, *dim)?;
                Ok(z.clone())
            }
            Kind::Dense { a, pinv, .. } => {
                self.check_rows(x, a.ncols())?;
                self.check_rows(z, a.nrows())?;
                let pinv = pinv.as_ref().ok_or(Error::NotSurjective)?;
                let residual = a * x - z;
                Ok(x - pinv * residual)
            }
        }
    }

    fn check_rows(&self, m: &DMatrix<f64>, rows: usize) -> Result<()> {
        if m.nrows() != rows {
            return Err(Error::DimensionMismatch {
                expected: (rows, m.ncols()),
                got: m.shape(),
            });
        }
        Ok(())
    }
}

/// Spectral norm by two-sided power iteration on `A^T A`. The start vector is
/// deterministic. Errors if the estimate has not stabilized to `tol`
/// (relative) within `max_iters` iterations.
pub fn power_iteration_norm(a: &DMatrix<f64>, tol: f64, max_iters: usize) -> Result<f64> {
    let n = a.ncols();
    // Deterministic, non-uniform start so it is not orthogonal to the
    // dominant right singular vector for structured matrices.
    let mut v = DMatrix::from_fn(n, 1, |i, _| 1.0 + ((i + 1) as f64).sin() * 0.5);
    let nv = v.norm();
    v /= nv;
    let mut last = 0.0;
    for it in 0..max_iters {
        let u = a * &v;
        let sigma = u.norm();
        if sigma == 0.0 {
            return Ok(0.0);
        }
        let w = a.tr_mul(&u);
        let nw = w.norm();
        if nw == 0.0 {
            return Ok(0.0);
        }
        v = w / nw;
        if it > 0 && (sigma - last).abs() <= tol * sigma.max(1.0) {
            return Ok(sigma);
        }
        last = sigma;
    }
    Err(Error::PowerIterationDiverged {
        iterations: max_iters,
        last_estimate: last,
    })
}
