//! Schedule configuration, constant resolution and the theory constants of
//! the convergence bounds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{RetractionKind, StiefelPoint};
use crate::problem::SmoothedProblem;

/// Fixed RNG seed for the internal constant estimators (gradient bound,
/// variance proxy), so deterministic solvers stay deterministic without a
/// user-visible seed.
const ESTIMATION_SEED: u64 = 0x5eed_c0de;

/// Number of random feasible points probed by the constant estimators.
const ESTIMATION_SAMPLES: usize = 100;

/// Stepsize regime.
///
/// `Theory` uses the schedule stepsizes exactly: `gamma_k = 1/ell_k` for the
/// deterministic solvers and `gamma_k = omega / ell_k^3` for the stochastic
/// ones. `Practical` uses `gamma_k = c k^{-1/3}` (deterministic) or
/// `c k^{-3/5}` (stochastic) with a tunable scale `c`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeMode {
    Theory,
    #[default]
    Practical,
}

/// Smoothing-schedule and stepsize configuration shared by all solvers.
///
/// The smoothing parameter follows `mu_k = mu_0 k^{-1/3}` (deterministic
/// family) or `mu_0 k^{-1/5}` (stochastic family). When `mu0` is not given it
/// defaults to `1/(2 rho)` for weakly convex `h` with `rho > 0`, and to `1.0`
/// for convex `h`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub mu0: Option<f64>,
    pub stepsize_mode: StepsizeMode,
    /// Practical-mode scale `c`; calibrated by one backtracking pass at
    /// `k = 1` when absent.
    pub step_scale: Option<f64>,
    /// Retraction bound `alpha` (first inequality); 1 is exact for the polar
    /// retraction, which is non-expansive.
    pub alpha: f64,
    /// Retraction bound `beta` (second inequality); 1 is a safe empirical
    /// bound for the polar retraction.
    pub beta: f64,
    /// Upper bound `G` on `||grad F_k||`; estimated by sampling when absent.
    pub grad_bound: Option<f64>,
    /// Lower bound on the objective, standing in for `F*` in the theory
    /// constants. Required in Theory mode.
    pub objective_lower_bound: Option<f64>,
    /// Epoch variants: replace the prox-residual break test with the
    /// corrected-point residual `||x - x_hat||` (surjective operators only).
    pub corrected_check: bool,
    pub retraction: RetractionKind,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            mu0: None,
            stepsize_mode: StepsizeMode::Practical,
            step_scale: None,
            alpha: 1.0,
            beta: 1.0,
            grad_bound: None,
            objective_lower_bound: None,
            corrected_check: false,
            retraction: RetractionKind::Polar,
        }
    }
}

impl ScheduleConfig {
    pub fn theory() -> Self {
        ScheduleConfig {
            stepsize_mode: StepsizeMode::Theory,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(mu0) = self.mu0 {
            if !(mu0 > 0.0) {
                return Err(Error::invalid(
                    "mu0",
                    format!("must be positive, got {mu0}"),
                ));
            }
        }
        if let Some(c) = self.step_scale {
            if !(c > 0.0) {
                return Err(Error::invalid(
                    "step_scale",
                    format!("must be positive, got {c}"),
                ));
            }
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid(
                "alpha",
                format!("must be positive, got {}", self.alpha),
            ));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::invalid(
                "beta",
                format!("must be nonnegative, got {}", self.beta),
            ));
        }
        Ok(())
    }
}

/// Termination rule: stationarity tolerance, iteration budget and an
/// optional reference objective (e.g. from an external solver).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StopRule {
    pub tol: f64,
    pub max_iters: usize,
    pub reference_objective: Option<f64>,
}

impl StopRule {
    /// Default for the smoothing solvers: `tol = 1e-8 n r`, 1000 iterations.
    pub fn smoothing(n: usize, r: usize) -> Self {
        StopRule {
            tol: 1e-8 * (n * r) as f64,
            max_iters: 1000,
            reference_objective: None,
        }
    }

    /// Default for the subgradient baseline: 10_000 iterations.
    pub fn subgradient(n: usize, r: usize) -> Self {
        StopRule {
            tol: 1e-8 * (n * r) as f64,
            max_iters: 10_000,
            reference_objective: None,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_reference(mut self, reference: f64) -> Self {
        self.reference_objective = Some(reference);
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) {
            return Err(Error::invalid(
                "tol",
                format!("must be nonnegative, got {}", self.tol),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

/// The constants of the deterministic and stochastic rate bounds:
/// `omega1 = alpha^2 ell_{grad f} + 2 G beta + alpha^2 ||A||^2 / mu1`,
/// `omega2 = F_1(x^1) - F_lower + mu1 ell_h^2`,
/// `omega3 = (ell_{grad f} mu1^{1.5} ell_h / sigma_min(A))^2 / (alpha^2 ||A||^2)`,
/// `omega4 = alpha^2 ||A||^2 / mu1`, and `omega = 2 omega4^3 / omega1`.
///
/// With the default anchor `mu1 = 1/(2 rho)` these are exactly the constants
/// of the bounds; for convex `h` an explicit `mu0` plays the role of
/// `1/(2 rho)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub omega1: f64,
    pub omega2: f64,
    /// Requires a surjective operator; `None` otherwise.
    pub omega3: Option<f64>,
    pub omega4: f64,
    pub omega: f64,
    /// Schedule anchor `mu_1`.
    pub mu1: f64,
}

impl TheoryConstants {
    /// Deterministic rate bound `2 sqrt(omega1 omega2) / K^{1/3}` on the
    /// running minimum of the gradient norm.
    pub fn deterministic_grad_bound(&self, k: usize) -> f64 {
        2.0 * (self.omega1 * self.omega2).sqrt() / (k as f64).powf(1.0 / 3.0)
    }

    /// Iteration budget of the deterministic epoch variant:
    /// `2 max(8 sqrt(omega1^3 omega2^3), (mu1 ell_h)^3) / eps^3`.
    pub fn epoch_iteration_budget(&self, ell_h: f64, eps: f64) -> f64 {
        let a = 8.0 * (self.omega1 * self.omega2).powf(1.5);
        let b = (self.mu1 * ell_h).powi(3);
        2.0 * a.max(b) / eps.powi(3)
    }

    /// Stochastic rate bound
    /// `B_K = (omega2 omega1^4 omega4^-3 + 2 sigma^2 omega1^2 omega4^-2 ln(3K)) K^{-2/5}`
    /// on `E ||grad F_R(x^R)||^2`.
    pub fn stochastic_grad_bound(&self, sigma2: f64, k: usize) -> f64 {
        let kf = k as f64;
        (self.omega2 * self.omega1.powi(4) / self.omega4.powi(3)
            + 2.0 * sigma2 * self.omega1.powi(2) / self.omega4.powi(2) * (3.0 * kf).ln())
            * kf.powf(-0.4)
    }
}

/// Schedule anchor `mu_1`: the configured `mu0`, else `1/(2 rho)` for weakly
/// convex `h`, else 1.
pub(crate) fn resolve_mu0(problem: &SmoothedProblem, cfg: &ScheduleConfig) -> f64 {
    cfg.mu0.unwrap_or_else(|| {
        let rho = problem.nonsmooth_term().weak_convexity();
        if rho > 0.0 {
            1.0 / (2.0 * rho)
        } else {
            1.0
        }
    })
}

fn resolve_grad_bound(problem: &SmoothedProblem, cfg: &ScheduleConfig, mu1: f64) -> Result<f64> {
    if let Some(g) = cfg.grad_bound {
        if !(g > 0.0) {
            return Err(Error::invalid(
                "grad_bound",
                format!("must be positive, got {g}"),
            ));
        }
        return Ok(g);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ESTIMATION_SEED);
    problem.estimate_grad_bound(mu1, &mut rng, ESTIMATION_SAMPLES)
}

/// Constants shared by every solver run.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ResolvedConstants {
    pub mu0: f64,
    pub grad_bound: f64,
    pub alpha: f64,
    pub beta: f64,
}

pub(crate) fn resolve_constants(
    problem: &SmoothedProblem,
    cfg: &ScheduleConfig,
) -> Result<ResolvedConstants> {
    cfg.validate()?;
    let mu0 = resolve_mu0(problem, cfg);
    let grad_bound = resolve_grad_bound(problem, cfg, mu0)?;
    Ok(ResolvedConstants {
        mu0,
        grad_bound,
        alpha: cfg.alpha,
        beta: cfg.beta,
    })
}

/// Step-weight constants `omega1`, `omega4`, `omega` (no `F*` needed).
pub(crate) fn omega_step_constants(
    problem: &SmoothedProblem,
    consts: &ResolvedConstants,
) -> (f64, f64, f64) {
    let a2 = consts.alpha * consts.alpha;
    let an = problem.operator().op_norm();
    let omega4 = a2 * an * an / consts.mu0;
    let omega1 = a2 * problem.smooth_term().grad_lipschitz()
        + 2.0 * consts.grad_bound * consts.beta
        + omega4;
    let omega = 2.0 * omega4.powi(3) / omega1;
    (omega1, omega4, omega)
}

/// Computes the rate-bound constants for a run starting at `x1`.
///
/// Needs either `rho > 0` or an explicit `mu0` as the schedule anchor, and a
/// lower bound on the objective in place of `F*`.
pub fn theory_constants(
    problem: &SmoothedProblem,
    cfg: &ScheduleConfig,
    x1: &StiefelPoint,
) -> Result<TheoryConstants> {
    cfg.validate()?;
    let rho = problem.nonsmooth_term().weak_convexity();
    if cfg.mu0.is_none() && !(rho > 0.0) {
        return Err(Error::invalid(
            "mu0",
            "theory constants need rho > 0 or an explicit mu0 anchor; use Practical mode for \
             convex h without one",
        ));
    }
    let consts = resolve_constants(problem, cfg)?;
    let f_lower = cfg.objective_lower_bound.ok_or_else(|| {
        Error::invalid(
            "objective_lower_bound",
            "theory constants need a lower bound on the objective in place of F*",
        )
    })?;
    let (omega1, omega4, omega) = omega_step_constants(problem, &consts);
    let mu1 = consts.mu0;
    let ell_h = problem.nonsmooth_term().lipschitz();
    let f1 = problem.smoothed_value(x1, mu1)?;
    let omega2 = f1 - f_lower + mu1 * ell_h * ell_h;
    if !(omega2 > 0.0) {
        return Err(Error::invalid(
            "objective_lower_bound",
            format!("is not a lower bound: F_1(x^1) = {f1} lies below it"),
        ));
    }
    let a2 = consts.alpha * consts.alpha;
    let an = problem.operator().op_norm();
    let omega3 = problem.operator().sigma_min().map(|s| {
        let t = problem.smooth_term().grad_lipschitz() * mu1.powf(1.5) * ell_h / s;
        t * t / (a2 * an * an)
    });
    debug_assert!(omega1 >= omega4 && omega4 > 0.0);
    Ok(TheoryConstants {
        omega1,
        omega2,
        omega3,
        omega4,
        omega,
        mu1,
    })
}
