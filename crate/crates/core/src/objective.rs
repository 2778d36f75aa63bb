//! Objective contract, counted evaluation and per-run telemetry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linesearch::{LineSearchResult, LineSearchStatus, WolfeParams};
use crate::vecops::{norm2, norm_inf};

/// A smooth objective `f: R^n -> R` evaluated together with its gradient.
///
/// Implementations must be deterministic: the same `x` always yields the
/// same bits for both `f` and the gradient.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Writes `∇f(x)` into `grad` (length [`dim`](Self::dim)) and returns `f(x)`.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Minimizer and minimum value, when known in closed form.
    fn known_optimum(&self) -> Option<(Vec<f64>, f64)> {
        None
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).value_and_gradient(x, grad)
    }
    fn known_optimum(&self) -> Option<(Vec<f64>, f64)> {
        (**self).known_optimum()
    }
}

/// Number of combined f/g evaluations performed during one run.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounter {
    pub fg_evals: u64,
}

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Evaluates `f(x)` and `∇f(x)`, charging one evaluation to `counter`.
///
/// Fails with [`Error::NumericalFailure`] if the value or any gradient
/// entry is non-finite. The counter is incremented even on failure.
pub fn evaluate(obj: &dyn Objective, x: &[f64], counter: &mut EvalCounter) -> Result<(f64, Vec<f64>)> {
    let n = obj.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure {
            context: "evaluation point",
            value: *bad,
            point: x.to_vec(),
        });
    }
    let mut g = vec![0.0; n];
    let f = obj.value_and_gradient(x, &mut g);
    counter.fg_evals += 1;
    if !f.is_finite() {
        return Err(Error::NumericalFailure { context: "objective value", value: f, point: x.to_vec() });
    }
    if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure { context: "gradient entry", value: *bad, point: x.to_vec() });
    }
    Ok((f, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    /// The starting point.
    Initial,
    /// N-GMRES kept the preliminary iterate because the Step III search found no decrease.
    Precondition,
    /// N-GMRES accepted a line-search point along the accelerated direction.
    Accelerated,
    /// N-GMRES fell back to the preliminary iterate and reset its window.
    Restart,
    /// A baseline optimizer's line-search step.
    Descent,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Initial => "initial",
            StepKind::Precondition => "precondition",
            StepKind::Accelerated => "accelerated",
            StepKind::Restart => "restart",
            StepKind::Descent => "descent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter_index: usize,
    pub fg_evals_cumulative: u64,
    pub f_value: f64,
    pub grad_norm_2: f64,
    pub grad_norm_inf: f64,
    pub step_kind: StepKind,
}

/// Which part of an algorithm issued a line search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchRole {
    Precondition,
    Acceleration,
    Descent,
}

/// Everything needed to re-verify the Wolfe inequalities after the fact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchLog {
    pub iter_index: usize,
    pub role: SearchRole,
    pub f0: f64,
    /// `∇f(x)ᵀp` at the start point.
    pub slope0: f64,
    pub step: f64,
    pub f_new: f64,
    /// `∇f(x + step·p)ᵀp`.
    pub slope_new: f64,
    pub c1: f64,
    pub c2: f64,
    pub status: LineSearchStatus,
    pub fg_evals: u64,
}

impl LineSearchLog {
    pub fn new(iter_index: usize, role: SearchRole, f0: f64, slope0: f64, params: &WolfeParams, res: &LineSearchResult) -> Self {
        Self {
            iter_index,
            role,
            f0,
            slope0,
            step: res.step,
            f_new: res.f_new,
            slope_new: res.slope_new,
            c1: params.c1,
            c2: params.c2,
            status: res.status,
            fg_evals: res.fg_evals,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceHistory {
    pub records: Vec<IterationRecord>,
    pub line_searches: Vec<LineSearchLog>,
}

impl ConvergenceHistory {
    pub fn push(&mut self, iter_index: usize, counter: &EvalCounter, f: f64, g: &[f64], step_kind: StepKind) {
        self.records.push(IterationRecord {
            iter_index,
            fg_evals_cumulative: counter.fg_evals,
            f_value: f,
            grad_norm_2: norm2(g),
            grad_norm_inf: norm_inf(g),
            step_kind,
        });
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    GradTol,
    FvalTol,
    MaxIters,
    /// No line search could decrease `f` from the current iterate.
    Stalled,
    /// Aborted by a numerical failure; the history is partial.
    Failed,
}

/// Benchmark stopping target `|f - f_star| < tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FvalTarget {
    pub f_star: f64,
    pub tol: f64,
}

impl FvalTarget {
    pub fn reached(&self, f: f64) -> bool {
        (f - self.f_star).abs() < self.tol
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub status: SolveStatus,
    pub history: ConvergenceHistory,
    pub fg_evals: u64,
    pub iterations: usize,
    /// Set when `status` is [`SolveStatus::Failed`].
    pub error: Option<Error>,
}

/// Shared termination test used by every solver loop.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StopRule {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub fval_tol: Option<FvalTarget>,
}

impl StopRule {
    pub fn check(&self, iter: usize, f: f64, g: &[f64]) -> Option<SolveStatus> {
        if norm2(g) <= self.grad_tol {
            return Some(SolveStatus::GradTol);
        }
        if self.fval_tol.is_some_and(|t| t.reached(f)) {
            return Some(SolveStatus::FvalTol);
        }
        if iter >= self.max_iters {
            return Some(SolveStatus::MaxIters);
        }
        None
    }
}
