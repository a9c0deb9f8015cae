//! Riemannian smoothing gradient methods for nonsmooth composite minimization
//! on compact embedded submanifolds.
//!
//! The crate solves problems of the form
//!
//! ```text
//!     min_{x in M}  f(x) + h(A x)
//! ```
//!
//! where `M` is the Stiefel manifold `St(n, r)` of matrices with orthonormal
//! columns, `f` is smooth (possibly given as a finite sum with minibatch
//! gradients), `h` is weakly convex with a closed-form proximal operator, and
//! `A` is a linear operator. The nonsmooth term is replaced by its Moreau
//! envelope `h_mu` with a decreasing smoothing parameter, and the smoothed
//! surrogate is minimized by Riemannian gradient steps.
//!
//! Four solver variants are provided: a deterministic gradient method, its
//! epoch-doubling variant, and stochastic counterparts of both. A Riemannian
//! subgradient baseline is included for benchmark comparisons, together with
//! the sparse-PCA and compressed-modes problem generators used throughout the
//! tests.

pub mod error;
pub mod manifold;
pub mod operator;
pub mod problem;
pub mod prox;
pub mod solver;

pub(crate) mod rand_util;

pub use error::{Error, Result};
pub use manifold::{check_feasible, RetractionKind, Stiefel, StiefelPoint, TangentVector};
pub use operator::LinearMap;
pub use problem::{CmInstance, SmoothTerm, SmoothedProblem, SpcaInstance};
pub use prox::{L1Norm, MoreauParams, WeaklyConvexFn, WeaklyConvexL1, ZeroFn};
pub use solver::{
    solve_rsg, solve_rsg_epochs, solve_rssg, solve_rssg_epochs, solve_rsub,
    stationarity_residuals, theory_constants, RunRecord, ScheduleConfig, StepsizeMode, StopReason,
    StopRule, TheoryConstants,
};
