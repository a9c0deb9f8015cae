//! The Stiefel manifold `St(n, r)` of n-by-r matrices with orthonormal
//! columns: feasibility checks, tangent projection and retractions.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rand_util::standard_normal_matrix;

/// Orthonormality tolerance enforced on construction and after retractions.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Tangency tolerance enforced when wrapping a raw matrix as a tangent vector.
pub const TANGENCY_TOL: f64 = 1e-10;

/// Retraction map choice. Polar is the default and matches the experiments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RetractionKind {
    /// Polar factor of `X + eta`, computed via thin SVD.
    #[default]
    Polar,
    /// Q factor of a sign-fixed thin QR of `X + eta` (diagonal of R positive).
    Qr,
}

/// Feasibility residual `||X^T X - I_r||_F` of an arbitrary matrix.
pub fn check_feasible(x: &DMatrix<f64>) -> f64 {
    let r = x.ncols();
    let mut gram = x.tr_mul(x);
    for i in 0..r {
        gram[(i, i)] -= 1.0;
    }
    gram.norm()
}

/// A point on `St(n, r)`; the wrapped matrix has orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelPoint {
    data: DMatrix<f64>,
}

impl StiefelPoint {
    /// Wraps a matrix after verifying `n >= r >= 1` and the orthonormality
    /// residual is within [`FEASIBILITY_TOL`].
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let (n, r) = data.shape();
        if r < 1 || n < r {
            return Err(Error::invalid(
                "data",
                format!("St(n,r) requires n >= r >= 1, got n={n}, r={r}"),
            ));
        }
        let residual = check_feasible(&data);
        if residual > FEASIBILITY_TOL {
            return Err(Error::Infeasible { n, r, residual });
        }
        Ok(StiefelPoint { data })
    }

    /// The first `r` columns of the identity.
    pub fn identity(n: usize, r: usize) -> Result<Self> {
        if r < 1 || n < r {
            return Err(Error::invalid(
                "n, r",
                format!("St(n,r) requires n >= r >= 1, got n={n}, r={r}"),
            ));
        }
        Ok(StiefelPoint {
            data: DMatrix::identity(n, r),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn r(&self) -> usize {
        self.data.ncols()
    }

    /// Current orthonormality residual of this point.
    pub fn feasibility(&self) -> f64 {
        check_feasible(&self.data)
    }

    /// Nearest orthonormal matrix (polar factor of the point itself). Used by
    /// the solvers to repair floating-point feasibility drift.
    pub fn reorthonormalized(&self) -> StiefelPoint {
        StiefelPoint {
            data: polar_factor(&self.data),
        }
    }
}

/// A tangent vector `eta` at a base point `X`, i.e. `X^T eta + eta^T X = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    data: DMatrix<f64>,
    base: StiefelPoint,
}

impl TangentVector {
    /// Wraps a matrix after verifying shape and the tangency residual.
    pub fn new(base: StiefelPoint, data: DMatrix<f64>) -> Result<Self> {
        if data.shape() != base.data.shape() {
            return Err(Error::DimensionMismatch {
                expected: base.data.shape(),
                got: data.shape(),
            });
        }
        let sym = base.data.tr_mul(&data) + data.tr_mul(&base.data);
        let residual = sym.norm();
        if residual > TANGENCY_TOL {
            return Err(Error::NotTangent { residual });
        }
        Ok(TangentVector { data, base })
    }

    pub fn zero(base: StiefelPoint) -> Self {
        let data = DMatrix::zeros(base.n(), base.r());
        TangentVector { data, base }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn base(&self) -> &StiefelPoint {
        &self.base
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    /// Scaled copy `s * eta` (tangency is preserved by scaling).
    pub fn scaled(&self, s: f64) -> TangentVector {
        TangentVector {
            data: &self.data * s,
            base: self.base.clone(),
        }
    }

    pub(crate) fn from_projected(base: StiefelPoint, data: DMatrix<f64>) -> Self {
        TangentVector { data, base }
    }
}

/// The manifold `St(n, r)` itself; operations are pure and the type is `Copy`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stiefel {
    n: usize,
    r: usize,
}

impl Stiefel {
    pub fn new(n: usize, r: usize) -> Result<Self> {
        if r < 1 || n < r {
            return Err(Error::invalid(
                "n, r",
                format!("St(n,r) requires n >= r >= 1, got n={n}, r={r}"),
            ));
        }
        Ok(Stiefel { n, r })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    fn check_shape(&self, m: &DMatrix<f64>) -> Result<()> {
        if m.shape() != (self.n, self.r) {
            return Err(Error::DimensionMismatch {
                expected: (self.n, self.r),
                got: m.shape(),
            });
        }
        Ok(())
    }

    /// Orthogonal projection of an ambient matrix onto the tangent space:
    /// `P_X(U) = U - X (U^T X + X^T U) / 2`.
    pub fn project_tangent(&self, x: &StiefelPoint, u: &DMatrix<f64>) -> Result<TangentVector> {
        self.check_shape(x.matrix())?;
        self.check_shape(u)?;
        let xtu = x.matrix().tr_mul(u);
        let sym = (&xtu + xtu.transpose()) * 0.5;
        let data = u - x.matrix() * sym;
        Ok(TangentVector::from_projected(x.clone(), data))
    }

    /// Retracts a tangent vector onto the manifold. `retract(X, 0)` returns
    /// `X` bitwise, and the result always satisfies the feasibility invariant.
    pub fn retract(
        &self,
        x: &StiefelPoint,
        eta: &TangentVector,
        kind: RetractionKind,
    ) -> Result<StiefelPoint> {
        self.check_shape(x.matrix())?;
        self.check_shape(eta.data())?;
        if eta.data().iter().all(|&v| v == 0.0) {
            return Ok(x.clone());
        }
        let moved = x.matrix() + eta.data();
        let data = match kind {
            RetractionKind::Polar => polar_factor(&moved),
            RetractionKind::Qr => signed_qr_factor(&moved)?,
        };
        debug_assert!(check_feasible(&data) <= FEASIBILITY_TOL);
        Ok(StiefelPoint { data })
    }

    /// Random point: polar factor of a standard Gaussian matrix.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> StiefelPoint {
        let g = standard_normal_matrix(self.n, self.r, rng);
        StiefelPoint {
            data: polar_factor(&g),
        }
    }

    /// Random tangent vector: projection of a standard Gaussian matrix.
    pub fn random_tangent<R: Rng + ?Sized>(&self, x: &StiefelPoint, rng: &mut R) -> TangentVector {
        let g = standard_normal_matrix(self.n, self.r, rng);
        self.project_tangent(x, &g)
            .expect("shapes agree by construction")
    }
}

/// Polar factor `U V^T` from the thin SVD `M = U S V^T`.
pub(crate) fn polar_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    u * v_t
}

/// Thin QR factor with the diagonal of R forced positive so the map is
/// deterministic. Fails if `M` is numerically rank deficient.
fn signed_qr_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = m.norm();
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..r.ncols().min(r.nrows()) {
        let d = r[(j, j)];
        if d.abs() <= 1e-12 * scale {
            return Err(Error::DegenerateStep(format!(
                "rank-deficient QR step: |R[{j},{j}]| = {:.3e}",
                d.abs()
            )));
        }
        if d < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(q)
}
