//! The Riemannian smoothing solvers (deterministic, epoch, stochastic,
//! stochastic-epoch), the subgradient baseline, stationarity measures and
//! per-run traces.

mod constants;
mod deterministic;
mod record;
mod stochastic;
mod subgradient;

pub use constants::{theory_constants, ScheduleConfig, StepsizeMode, StopRule, TheoryConstants};
pub use deterministic::{solve_rsg, solve_rsg_epochs};
pub use record::{EpochMark, IterationRow, RunRecord, StopReason, CSV_HEADER};
pub use stochastic::{sample_index_from_weights, solve_rssg, solve_rssg_epochs};
pub use subgradient::solve_rsub;

use crate::error::{Error, Result};
use crate::manifold::{StiefelPoint, TangentVector};
use crate::problem::{SmoothedProblem, StateEval};
use crate::prox::MoreauParams;

use constants::{omega_step_constants, resolve_constants, ResolvedConstants};
use record::RecordBuilder;

/// Slack allowed when asserting the per-iteration descent inequality.
const DESCENT_SLACK: f64 = 1e-10;

/// Feasibility drift beyond which an iterate is re-orthonormalized.
const DRIFT_TOL: f64 = 1e-8;

/// Margin used by the `F(x) <= F_M - 1e-10` reference stop of the smoothing
/// solvers (the subgradient baseline stops at `F_M + 1e-10` instead).
const REFERENCE_MARGIN: f64 = 1e-10;

/// Stationarity residuals at one iterate:
/// the Riemannian gradient norm of the smoothed surrogate, the proximal
/// residual `||A x - prox_{mu h}(A x)||`, and, for surjective operators, the
/// distance `||x - x_hat||` to the corrected point.
#[derive(Clone, Copy, Debug)]
pub struct Residuals {
    pub grad_norm: f64,
    pub prox_residual: f64,
    pub corrected: Option<f64>,
}

/// Computes the stationarity residuals of Definition-style stopping rules.
pub fn stationarity_residuals(
    problem: &SmoothedProblem,
    x: &StiefelPoint,
    mu: f64,
) -> Result<Residuals> {
    let state = problem.eval_state(x, mu)?;
    let corrected = corrected_residual(problem, x, mu)?;
    Ok(Residuals {
        grad_norm: state.grad_norm,
        prox_residual: state.prox_residual,
        corrected,
    })
}

/// `||x - x_hat||` with `x_hat = x - A^+(A x - prox_{mu h}(A x))`, when the
/// operator is surjective.
pub(crate) fn corrected_residual(
    problem: &SmoothedProblem,
    x: &StiefelPoint,
    mu: f64,
) -> Result<Option<f64>> {
    if !problem.operator().is_surjective() {
        return Ok(None);
    }
    let mu = MoreauParams::new(mu, problem.nonsmooth_term())?.mu();
    let ax = problem.operator().apply(x.matrix())?;
    let z = problem.nonsmooth_term().prox(&ax, mu);
    let xh = problem.operator().correct_point(x.matrix(), &z)?;
    Ok(Some((x.matrix() - xh).norm()))
}

/// Solver family; fixes the schedule and practical-stepsize exponents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Family {
    /// `mu_k ~ k^{-1/3}`, practical steps `~ k^{-1/3}`.
    Deterministic,
    /// `mu_k ~ k^{-1/5}`, practical steps `~ k^{-3/5}`.
    Stochastic,
}

impl Family {
    fn mu_exponent(self) -> f64 {
        match self {
            Family::Deterministic => 1.0 / 3.0,
            Family::Stochastic => 1.0 / 5.0,
        }
    }

    fn step_exponent(self) -> f64 {
        match self {
            Family::Deterministic => 1.0 / 3.0,
            Family::Stochastic => 3.0 / 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum StepRule {
    /// `gamma_k = 1 / ell_k`.
    TheoryInverse,
    /// `gamma_k = omega / ell_k^3`.
    TheoryOmega(f64),
    /// `gamma_k = c k^{-q}`.
    Practical(f64),
}

impl StepRule {
    fn scale(&self) -> Option<f64> {
        match self {
            StepRule::Practical(c) => Some(*c),
            _ => None,
        }
    }
}

/// Shared per-run schedule state.
pub(crate) struct SolverContext<'a> {
    pub problem: &'a SmoothedProblem,
    pub cfg: &'a ScheduleConfig,
    pub consts: ResolvedConstants,
    pub family: Family,
    pub rule: StepRule,
}

impl<'a> SolverContext<'a> {
    /// Resolves constants and the stepsize rule, running the practical
    /// calibration pass at `x1` when needed.
    pub fn prepare(
        problem: &'a SmoothedProblem,
        cfg: &'a ScheduleConfig,
        x1: &StiefelPoint,
        family: Family,
    ) -> Result<Self> {
        let consts = resolve_constants(problem, cfg)?;
        let rule = match cfg.stepsize_mode {
            StepsizeMode::Theory => match family {
                Family::Deterministic => StepRule::TheoryInverse,
                Family::Stochastic => {
                    let (_, _, omega) = omega_step_constants(problem, &consts);
                    StepRule::TheoryOmega(omega)
                }
            },
            StepsizeMode::Practical => {
                let c = match cfg.step_scale {
                    Some(c) => c,
                    None => calibrate_step_scale(problem, cfg, x1, &consts)?,
                };
                StepRule::Practical(c)
            }
        };
        Ok(SolverContext {
            problem,
            cfg,
            consts,
            family,
            rule,
        })
    }

    pub fn step_scale(&self) -> Option<f64> {
        self.rule.scale()
    }

    pub fn mu(&self, k: usize) -> f64 {
        self.consts.mu0 * (k as f64).powf(-self.family.mu_exponent())
    }

    pub fn ell(&self, mu: f64) -> Result<f64> {
        self.problem.smoothness_constant(
            mu,
            self.consts.grad_bound,
            self.consts.alpha,
            self.consts.beta,
        )
    }

    pub fn gamma(&self, k: usize, ell: f64) -> f64 {
        match self.rule {
            StepRule::TheoryInverse => 1.0 / ell,
            StepRule::TheoryOmega(omega) => omega / (ell * ell * ell),
            StepRule::Practical(c) => c * (k as f64).powf(-self.family.step_exponent()),
        }
    }

    /// One retraction step `x <- R_x(-gamma grad)`, with feasibility-drift
    /// repair.
    pub fn step(&self, x: &StiefelPoint, grad: &TangentVector, gamma: f64, k: usize) -> Result<StiefelPoint> {
        let eta = grad.scaled(-gamma);
        let mut next = self
            .problem
            .manifold()
            .retract(x, &eta, self.cfg.retraction)?;
        let drift = next.feasibility();
        if drift > DRIFT_TOL {
            log::warn!("feasibility drift {drift:.3e} at iteration {k}; re-orthonormalizing");
            next = next.reorthonormalized();
        }
        Ok(next)
    }
}

/// One backtracking pass at `k = 1`: start from the inverse smoothness bound
/// and halve until the smoothed-descent inequality holds at the first step.
fn calibrate_step_scale(
    problem: &SmoothedProblem,
    cfg: &ScheduleConfig,
    x1: &StiefelPoint,
    consts: &ResolvedConstants,
) -> Result<f64> {
    let mu1 = consts.mu0;
    let ell1 = problem.smoothness_constant(mu1, consts.grad_bound, consts.alpha, consts.beta)?;
    let state = problem.eval_state(x1, mu1)?;
    let g2 = state.grad_norm * state.grad_norm;
    let mut c = 1.0 / ell1;
    if g2 == 0.0 {
        return Ok(c);
    }
    for _ in 0..60 {
        let eta = state.grad.scaled(-c);
        let next = problem.manifold().retract(x1, &eta, cfg.retraction)?;
        let value = problem.smoothed_value(&next, mu1)?;
        if value <= state.smoothed_value - 0.5 * c * g2 + DESCENT_SLACK {
            return Ok(c);
        }
        c *= 0.5;
    }
    Err(Error::invalid(
        "step_scale",
        "backtracking calibration failed to find a descent step at k = 1",
    ))
}

fn state_is_finite(state: &StateEval) -> bool {
    state.smoothed_value.is_finite()
        && state.objective.is_finite()
        && state.grad_norm.is_finite()
        && state.prox_residual.is_finite()
}

/// Evaluates the bundled state and aborts with the partial trace attached if
/// anything is non-finite.
fn checked_state(
    problem: &SmoothedProblem,
    x: &StiefelPoint,
    mu: f64,
    k: usize,
    rec: RecordBuilder,
) -> std::result::Result<(StateEval, RecordBuilder), Box<Error>> {
    match problem.eval_state(x, mu) {
        Ok(state) if state_is_finite(&state) => Ok((state, rec)),
        Ok(_) => Err(Box::new(rec.numeric_failure(k, x.clone()))),
        Err(e) => Err(Box::new(e)),
    }
}

pub(crate) use checked_state as eval_checked;
