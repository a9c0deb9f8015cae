//! Composite problem assembly: a smooth term with full and minibatch
//! gradients, a weakly convex term behind a linear operator, and the smoothed
//! surrogate values and Riemannian gradients consumed by the solvers.

mod cm;
pub mod io;
mod spca;

pub use cm::{cm_build_h, CmInstance, CM_DOMAIN_LENGTH};
pub use spca::SpcaInstance;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::manifold::{Stiefel, StiefelPoint, TangentVector};
use crate::operator::LinearMap;
use crate::prox::{MoreauParams, WeaklyConvexFn};

/// The smooth part `f`, possibly a finite sum exposing minibatch gradients.
///
/// Batches are fixed at construction. `batch_weight(p)` is the sampling
/// probability of batch `p`; the weighted sum of batch gradients equals the
/// full gradient, so the sampler is unbiased by construction.
pub trait SmoothTerm: Send + Sync {
    fn value(&self, x: &DMatrix<f64>) -> f64;

    /// Euclidean gradient of `f`.
    fn grad(&self, x: &DMatrix<f64>) -> DMatrix<f64>;

    /// Lipschitz constant of the gradient map.
    fn grad_lipschitz(&self) -> f64;

    fn batch_count(&self) -> usize {
        1
    }

    fn batch_weight(&self, _p: usize) -> f64 {
        1.0
    }

    fn batch_grad(&self, x: &DMatrix<f64>, _p: usize) -> DMatrix<f64> {
        self.grad(x)
    }

    /// A rigorous upper bound on `||grad f||_F` over the manifold, when one
    /// is available in closed form.
    fn grad_norm_bound(&self) -> Option<f64> {
        None
    }
}

/// Everything evaluated at one iterate under one smoothing parameter; the
/// proximal point is computed once and shared.
#[derive(Clone, Debug)]
pub struct StateEval {
    /// `F_k(x) = f(x) + h_mu(A x)`.
    pub smoothed_value: f64,
    /// The true nonsmooth objective `phi(x) = f(x) + h(A x)`.
    pub objective: f64,
    /// Riemannian gradient of `F_k` at `x`.
    pub grad: TangentVector,
    pub grad_norm: f64,
    /// `||A x - prox_{mu h}(A x)||_F`.
    pub prox_residual: f64,
}

/// The assembled composite problem `min_{x in St(n,r)} f(x) + h(A x)`.
pub struct SmoothedProblem {
    f: Arc<dyn SmoothTerm>,
    h: Arc<dyn WeaklyConvexFn>,
    a: LinearMap,
    manifold: Stiefel,
}

impl SmoothedProblem {
    pub fn new(
        f: Arc<dyn SmoothTerm>,
        h: Arc<dyn WeaklyConvexFn>,
        a: LinearMap,
        manifold: Stiefel,
    ) -> Result<Self> {
        if a.input_dim() != manifold.n() {
            return Err(Error::DimensionMismatch {
                expected: (manifold.n(), manifold.r()),
                got: (a.input_dim(), manifold.r()),
            });
        }
        Ok(SmoothedProblem { f, h, a, manifold })
    }

    pub fn manifold(&self) -> &Stiefel {
        &self.manifold
    }

    pub fn smooth_term(&self) -> &dyn SmoothTerm {
        self.f.as_ref()
    }

    pub fn nonsmooth_term(&self) -> &dyn WeaklyConvexFn {
        self.h.as_ref()
    }

    pub fn operator(&self) -> &LinearMap {
        &self.a
    }

    pub fn batch_count(&self) -> usize {
        self.f.batch_count()
    }

    pub fn batch_weight(&self, p: usize) -> f64 {
        self.f.batch_weight(p)
    }

    /// The true objective `phi(x) = f(x) + h(A x)`.
    pub fn objective(&self, x: &StiefelPoint) -> f64 {
        let ax = self.a.apply(x.matrix()).expect("dims checked at build");
        self.f.value(x.matrix()) + self.h.eval(&ax)
    }

    /// Smoothed value `F_k(x) = f(x) + h_mu(A x)`.
    pub fn smoothed_value(&self, x: &StiefelPoint, mu: f64) -> Result<f64> {
        let mu = MoreauParams::new(mu, self.h.as_ref())?.mu();
        let ax = self.a.apply(x.matrix())?;
        let p = self.h.prox(&ax, mu);
        Ok(self.f.value(x.matrix()) + self.h.eval(&p) + (&p - ax).norm_squared() / (2.0 * mu))
    }

    /// Euclidean gradient `grad F_k = grad f + A^T (A x - prox) / mu`.
    pub fn euclidean_grad(&self, x: &StiefelPoint, mu: f64) -> Result<DMatrix<f64>> {
        let mu = MoreauParams::new(mu, self.h.as_ref())?.mu();
        let ax = self.a.apply(x.matrix())?;
        let p = self.h.prox(&ax, mu);
        Ok(self.f.grad(x.matrix()) + self.a.adjoint(&(ax - p))? / mu)
    }

    /// Riemannian gradient: tangent projection of the Euclidean gradient.
    pub fn riemannian_grad(&self, x: &StiefelPoint, mu: f64) -> Result<TangentVector> {
        let g = self.euclidean_grad(x, mu)?;
        self.manifold.project_tangent(x, &g)
    }

    /// Riemannian stochastic gradient using minibatch `p` for the smooth term.
    pub fn riemannian_grad_batch(
        &self,
        x: &StiefelPoint,
        mu: f64,
        p: usize,
    ) -> Result<TangentVector> {
        let mu = MoreauParams::new(mu, self.h.as_ref())?.mu();
        if p >= self.f.batch_count() {
            return Err(Error::invalid(
                "p",
                format!("batch index {p} out of range 0..{}", self.f.batch_count()),
            ));
        }
        let ax = self.a.apply(x.matrix())?;
        let pr = self.h.prox(&ax, mu);
        let g = self.f.batch_grad(x.matrix(), p) + self.a.adjoint(&(ax - pr))? / mu;
        self.manifold.project_tangent(x, &g)
    }

    /// `||A x - prox_{mu h}(A x)||_F`.
    pub fn prox_residual(&self, x: &StiefelPoint, mu: f64) -> Result<f64> {
        let mu = MoreauParams::new(mu, self.h.as_ref())?.mu();
        let ax = self.a.apply(x.matrix())?;
        let p = self.h.prox(&ax, mu);
        Ok((ax - p).norm())
    }

    /// Bundled evaluation sharing one proximal computation.
    pub fn eval_state(&self, x: &StiefelPoint, mu: f64) -> Result<StateEval> {
        let mu = MoreauParams::new(mu, self.h.as_ref())?.mu();
        let ax = self.a.apply(x.matrix())?;
        let p = self.h.prox(&ax, mu);
        let diff = &ax - &p;
        let fv = self.f.value(x.matrix());
        let smoothed_value = fv + self.h.eval(&p) + diff.norm_squared() / (2.0 * mu);
        let objective = fv + self.h.eval(&ax);
        let eg = self.f.grad(x.matrix()) + self.a.adjoint(&diff)? / mu;
        let grad = self.manifold.project_tangent(x, &eg)?;
        let grad_norm = grad.norm();
        Ok(StateEval {
            smoothed_value,
            objective,
            grad,
            grad_norm,
            prox_residual: diff.norm(),
        })
    }

    /// Retraction-smoothness constant
    /// `ell_k = alpha^2 ell_{grad f} + alpha^2 ||A||^2 / mu + 2 G beta`
    /// (the `1/mu` factor is `h`'s envelope-gradient Lipschitz constant, zero
    /// for the zero function). Monotone decreasing in `mu`.
    pub fn smoothness_constant(&self, mu: f64, g: f64, alpha: f64, beta: f64) -> Result<f64> {
        let mu = MoreauParams::new(mu, self.h.as_ref())?.mu();
        for (name, v) in [("g", g), ("alpha", alpha)] {
            if !(v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(beta >= 0.0) {
            return Err(Error::invalid(
                "beta",
                format!("must be nonnegative, got {beta}"),
            ));
        }
        let a2 = alpha * alpha;
        let an = self.a.op_norm();
        Ok(a2 * self.f.grad_lipschitz()
            + a2 * an * an * self.h.envelope_grad_lipschitz(mu)
            + 2.0 * g * beta)
    }

    /// Weighted mean of the Euclidean batch gradients; equals the full
    /// gradient up to floating-point reassociation (the unbiasedness
    /// identity of the partition sampler).
    pub fn batch_grad_mean(&self, x: &StiefelPoint) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(x.n(), x.r());
        for p in 0..self.f.batch_count() {
            acc += self.f.batch_grad(x.matrix(), p) * self.f.batch_weight(p);
        }
        acc
    }

    /// Exact variance of the Euclidean batch gradient at `x` under the
    /// partition sampler: `sum_p w_p ||grad f(x, p) - grad f(x)||^2`.
    pub fn batch_variance(&self, x: &StiefelPoint) -> f64 {
        let full = self.f.grad(x.matrix());
        let mut var = 0.0;
        for p in 0..self.f.batch_count() {
            let g = self.f.batch_grad(x.matrix(), p);
            var += self.f.batch_weight(p) * (g - &full).norm_squared();
        }
        var
    }

    /// Variance proxy `sigma^2`: twice the largest batch variance observed
    /// over random feasible points.
    pub fn estimate_sigma2<R: Rng + ?Sized>(&self, rng: &mut R, samples: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x = self.manifold.random_point(rng);
            worst = worst.max(self.batch_variance(&x));
        }
        2.0 * worst
    }

    /// Gradient bound `G`: twice the largest `||grad F(x)||` observed over
    /// random feasible points at the initial smoothing parameter.
    pub fn estimate_grad_bound<R: Rng + ?Sized>(
        &self,
        mu1: f64,
        rng: &mut R,
        samples: usize,
    ) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x = self.manifold.random_point(rng);
            worst = worst.max(self.euclidean_grad(&x, mu1)?.norm());
        }
        Ok(2.0 * worst)
    }

    /// Closed-form bound on `||grad F_k||`, valid for every `k`:
    /// `max ||grad f|| + ||A|| ell_h`. Available when the smooth term exposes
    /// its own gradient-norm bound.
    pub fn analytic_grad_bound(&self) -> Option<f64> {
        self.f
            .grad_norm_bound()
            .map(|b| b + self.a.op_norm() * self.h.lipschitz())
    }
}

/// Assembles `f + lambda ||.||_1` (or plain `f` when `lambda == 0`) over
/// `St(n, r)` with `A` the identity.
pub(crate) fn l1_composite(
    f: Arc<dyn SmoothTerm>,
    n: usize,
    r: usize,
    lambda: f64,
) -> Result<SmoothedProblem> {
    if lambda < 0.0 {
        return Err(Error::invalid(
            "lambda",
            format!("must be nonnegative, got {lambda}"),
        ));
    }
    let h: Arc<dyn WeaklyConvexFn> = if lambda > 0.0 {
        Arc::new(crate::prox::L1Norm::new(lambda, n, r)?)
    } else {
        Arc::new(crate::prox::ZeroFn)
    };
    SmoothedProblem::new(f, h, LinearMap::identity(n), Stiefel::new(n, r)?)
}
