//! Compressed modes: `min tr(X^T H X) + lambda ||X||_1` over `St(n, r)`,
//! where `H` is the discretized free-particle Schroedinger operator.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{l1_composite, SmoothTerm, SmoothedProblem};
use crate::error::{Error, Result};
use crate::operator::power_iteration_norm;

/// Default domain length of the 1-D free-electron model.
pub const CM_DOMAIN_LENGTH: f64 = 50.0;

/// Discretization of `-(1/2) d^2/dx^2` on `[0, L]` with `n` interior nodes
/// and Dirichlet boundaries: `H = tridiag(-1, 2, -1) / (2 dx^2)` with
/// `dx = L / (n + 1)`. Symmetric positive definite.
pub fn cm_build_h(n: usize, length: f64) -> Result<DMatrix<f64>> {
    if n < 3 {
        return Err(Error::invalid(
            "n",
            format!("discretization needs n >= 3 nodes, got {n}"),
        ));
    }
    if !(length > 0.0) {
        return Err(Error::invalid(
            "length",
            format!("domain length must be positive, got {length}"),
        ));
    }
    let dx = length / (n as f64 + 1.0);
    let c = 1.0 / (2.0 * dx * dx);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = 2.0 * c;
        if i + 1 < n {
            h[(i, i + 1)] = -c;
            h[(i + 1, i)] = -c;
        }
    }
    Ok(h)
}

/// A compressed-modes instance: the Schroedinger operator, the sparsity
/// weight and the number of modes sought.
pub struct CmInstance {
    h: DMatrix<f64>,
    lambda: f64,
    r: usize,
    length: f64,
    h_norm: f64,
}

impl CmInstance {
    pub fn new(n: usize, r: usize, lambda: f64, length: f64) -> Result<Self> {
        let h = cm_build_h(n, length)?;
        Self::from_matrix(h, r, lambda, length)
    }

    /// Wraps an existing operator matrix (e.g. one loaded from a replay dump).
    pub fn from_matrix(h: DMatrix<f64>, r: usize, lambda: f64, length: f64) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::DimensionMismatch {
                expected: (h.nrows(), h.nrows()),
                got: h.shape(),
            });
        }
        if r < 1 || r > h.nrows() {
            return Err(Error::invalid(
                "r",
                format!("require 1 <= r <= n = {}, got {r}", h.nrows()),
            ));
        }
        if lambda < 0.0 {
            return Err(Error::invalid(
                "lambda",
                format!("must be nonnegative, got {lambda}"),
            ));
        }
        let h_norm = power_iteration_norm(&h, 1e-8, 10_000)?;
        Ok(CmInstance {
            h,
            lambda,
            r,
            length,
            h_norm,
        })
    }

    pub fn operator_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn domain_length(&self) -> f64 {
        self.length
    }

    pub fn into_problem(self) -> Result<SmoothedProblem> {
        let (n, r, lambda) = (self.n(), self.r, self.lambda);
        l1_composite(Arc::new(self), n, r, lambda)
    }
}

impl SmoothTerm for CmInstance {
    fn value(&self, x: &DMatrix<f64>) -> f64 {
        (&self.h * x).dot(x)
    }

    fn grad(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        (&self.h * x) * 2.0
    }

    fn grad_lipschitz(&self) -> f64 {
        2.0 * self.h_norm
    }

    fn grad_norm_bound(&self) -> Option<f64> {
        Some(2.0 * self.h_norm * (self.r as f64).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stencil_worked_example() {
        // n = 3, L = 4 gives dx = 1: H = 0.5 * tridiag(-1, 2, -1).
        let h = cm_build_h(3, 4.0).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, -0.5, 0.0, -0.5, 1.0, -0.5, 0.0, -0.5, 1.0]);
        assert!((h - expected).norm() <= 1e-15);
    }

    #[test]
    fn operator_is_exactly_symmetric() {
        let h = cm_build_h(17, CM_DOMAIN_LENGTH).unwrap();
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn operator_is_positive_definite() {
        let h = cm_build_h(32, CM_DOMAIN_LENGTH).unwrap();
        let eig = nalgebra::SymmetricEigen::new(h);
        let min = eig.eigenvalues.min();
        assert!(min > 0.0, "smallest eigenvalue {min}");
    }

    #[test]
    fn too_few_nodes_is_rejected() {
        assert!(cm_build_h(2, 4.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let inst = CmInstance::new(12, 2, 0.2, CM_DOMAIN_LENGTH).unwrap();
        let x = DMatrix::identity(12, 2);
        let g = inst.grad(&x);
        let step = 1e-6;
        for i in 0..12 {
            for j in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[(i, j)] += step;
                xm[(i, j)] -= step;
                let fd = (inst.value(&xp) - inst.value(&xm)) / (2.0 * step);
                assert_relative_eq!(fd, g[(i, j)], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn grad_lipschitz_matches_eigen_oracle() {
        let inst = CmInstance::new(24, 2, 0.1, CM_DOMAIN_LENGTH).unwrap();
        let eig = nalgebra::SymmetricEigen::new(inst.operator_matrix().clone());
        let oracle = 2.0 * eig.eigenvalues.max();
        assert!((inst.grad_lipschitz() - oracle).abs() <= 1e-6 * oracle);
    }
}
