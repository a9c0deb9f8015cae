//! Per-iteration traces and their CSV / JSON serializations.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::manifold::StiefelPoint;

/// Fixed CSV header of a per-run trace.
pub const CSV_HEADER: &str = "k,mu,gamma,ell,grad_norm,prox_residual,F_k,phi,seconds";

/// One trace row. For the subgradient baseline, which has no smoothing, `mu`
/// and `ell` are written as zero and `F_k` coincides with `phi`.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRow {
    pub k: usize,
    pub mu: f64,
    pub gamma: f64,
    pub ell: f64,
    pub grad_norm: f64,
    pub prox_residual: f64,
    /// Smoothed objective `F_k(x^k)`.
    pub smoothed_value: f64,
    /// True objective `phi(x^k)`.
    pub objective: f64,
    /// Wall-clock seconds since the solver started (monotonic clock).
    pub seconds: f64,
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The stationarity residuals fell below the tolerance (or, for the
    /// epoch variants, the epoch break test fired).
    Tolerance,
    /// The iteration budget was exhausted.
    MaxIters,
    /// The objective crossed the user-supplied reference value.
    BeatReference,
}

/// Summary of one epoch of the epoch-based variants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochMark {
    pub epoch: u32,
    pub k_start: usize,
    pub k_end: usize,
    /// Best tracked gradient norm `S_l` (deterministic epochs).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_grad_norm: Option<f64>,
    /// Iteration index `k_l` attaining `S_l`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_iter: Option<usize>,
    /// Sampled output index `R_l` (stochastic epochs).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampled_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampled_grad_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampled_prox_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampled_corrected_residual: Option<f64>,
    /// Sum of the raw sampling weights of the epoch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_sum: Option<f64>,
}

/// Full record of one solver run.
#[derive(Debug)]
pub struct RunRecord {
    pub rows: Vec<IterationRow>,
    /// Last trajectory iterate.
    pub final_point: StiefelPoint,
    pub stop_reason: StopReason,
    pub total_seconds: f64,
    pub final_grad_norm: f64,
    pub final_prox_residual: f64,
    pub final_objective: f64,
    pub final_corrected_residual: Option<f64>,
    /// Output index `R` of the stochastic solvers.
    pub sampled_index: Option<usize>,
    /// The iterate `x^R` the stochastic solvers return.
    pub sampled_point: Option<StiefelPoint>,
    /// Raw sampling weights `2 gamma_k - ell_k gamma_k^2` for the iterations
    /// actually performed (stochastic solvers only; empty otherwise).
    pub weights: Vec<f64>,
    pub epochs: Vec<EpochMark>,
    pub seed: Option<u64>,
    /// Practical-mode stepsize scale actually used (calibrated or supplied).
    pub step_scale: Option<f64>,
    /// Iterations at which the smoothed-descent inequality was violated by
    /// more than the 1e-10 slack (deterministic solvers only).
    pub descent_violations: usize,
}

impl RunRecord {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    /// Writes the fixed-schema CSV trace.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                row.k,
                row.mu,
                row.gamma,
                row.ell,
                row.grad_norm,
                row.prox_residual,
                row.smoothed_value,
                row.objective,
                row.seconds
            )?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }

    /// JSON summary: stop reason, final residuals, sampled index, seed, and
    /// an arbitrary configuration echo provided by the caller.
    pub fn summary_json(&self, config_echo: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "stop_reason": self.stop_reason,
            "iterations": self.iterations(),
            "total_seconds": self.total_seconds,
            "final": {
                "grad_norm": self.final_grad_norm,
                "prox_residual": self.final_prox_residual,
                "objective": self.final_objective,
                "corrected_residual": self.final_corrected_residual,
            },
            "sampled_index": self.sampled_index,
            "seed": self.seed,
            "step_scale": self.step_scale,
            "descent_violations": self.descent_violations,
            "epochs": self.epochs,
            "config": config_echo,
        })
    }
}

/// Incrementally assembled [`RunRecord`].
pub(crate) struct RecordBuilder {
    rows: Vec<IterationRow>,
    started: Instant,
    weights: Vec<f64>,
    epochs: Vec<EpochMark>,
    seed: Option<u64>,
    step_scale: Option<f64>,
    descent_violations: usize,
}

pub(crate) struct FinalState {
    pub grad_norm: f64,
    pub prox_residual: f64,
    pub objective: f64,
    pub corrected_residual: Option<f64>,
}

impl RecordBuilder {
    pub fn new(seed: Option<u64>, step_scale: Option<f64>) -> Self {
        RecordBuilder {
            rows: Vec::new(),
            started: Instant::now(),
            weights: Vec::new(),
            epochs: Vec::new(),
            seed,
            step_scale,
            descent_violations: 0,
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn push_row(
        &mut self,
        k: usize,
        mu: f64,
        gamma: f64,
        ell: f64,
        grad_norm: f64,
        prox_residual: f64,
        smoothed_value: f64,
        objective: f64,
    ) {
        self.rows.push(IterationRow {
            k,
            mu,
            gamma,
            ell,
            grad_norm,
            prox_residual,
            smoothed_value,
            objective,
            seconds: self.elapsed(),
        });
    }

    pub fn push_weight(&mut self, w: f64) {
        self.weights.push(w);
    }

    pub fn push_epoch(&mut self, mark: EpochMark) {
        self.epochs.push(mark);
    }

    pub fn note_descent_violation(&mut self) {
        self.descent_violations += 1;
    }

    pub fn finish(
        self,
        final_point: StiefelPoint,
        stop_reason: StopReason,
        fin: FinalState,
        sampled: Option<(usize, StiefelPoint)>,
    ) -> RunRecord {
        let total_seconds = self.elapsed();
        let (sampled_index, sampled_point) = match sampled {
            Some((k, p)) => (Some(k), Some(p)),
            None => (None, None),
        };
        RunRecord {
            rows: self.rows,
            final_point,
            stop_reason,
            total_seconds,
            final_grad_norm: fin.grad_norm,
            final_prox_residual: fin.prox_residual,
            final_objective: fin.objective,
            final_corrected_residual: fin.corrected_residual,
            sampled_index,
            sampled_point,
            weights: self.weights,
            epochs: self.epochs,
            seed: self.seed,
            step_scale: self.step_scale,
            descent_violations: self.descent_violations,
        }
    }

    /// Wraps the partial trace into a numeric-failure error.
    pub fn numeric_failure(self, iteration: usize, last_point: StiefelPoint) -> crate::Error {
        let record = self.finish(
            last_point,
            StopReason::MaxIters,
            FinalState {
                grad_norm: f64::NAN,
                prox_residual: f64::NAN,
                objective: f64::NAN,
                corrected_residual: None,
            },
            None,
        );
        crate::Error::NumericFailure {
            iteration,
            record: Box::new(record),
        }
    }
}
