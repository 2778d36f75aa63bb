//! The N-GMRES optimization driver.
//!
//! Each outer iteration has three steps:
//!
//! 1. a one-step update `ū = M(u)` supplied by a [`Preconditioner`];
//! 2. an accelerated iterate `û = ū + Σⱼ αⱼ (ū − uⱼ)` over the stored window,
//!    with `α` minimizing the linearized gradient norm
//!    `‖g(ū) + Σⱼ αⱼ (g(ū) − g(uⱼ))‖₂`;
//! 3. a Wolfe line search from `ū` along `û − ū` when that direction is a
//!    descent direction, otherwise a restart that keeps `ū` and shrinks the
//!    window back to one entry.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leastsq::{solve_recombination, RecombinationSystem};
use crate::linesearch::{line_search, WolfeParams};
use crate::objective::{
    evaluate, ConvergenceHistory, EvalCounter, FvalTarget, LineSearchLog, Objective, SearchRole, SolveResult,
    SolveStatus, StepKind, StopRule,
};
use crate::vecops::{add_scaled, dot, norm2, sub};

/// Output of one preconditioning step.
#[derive(Debug, Clone, PartialEq)]
pub struct Preliminary {
    pub x_bar: Vec<f64>,
    pub f_bar: f64,
    pub g_bar: Vec<f64>,
    /// Present when the preconditioner ran a line search.
    pub search: Option<LineSearchLog>,
}

/// A one-step update process `ū = M(u)`.
///
/// Implementations receive `f(u)` and `∇f(u)` and must return the evaluated
/// value and gradient at `ū`, so the driver never re-evaluates.
pub trait Preconditioner {
    fn apply(&self, obj: &dyn Objective, x: &[f64], f_x: f64, g_x: &[f64], counter: &mut EvalCounter) -> Result<Preliminary>;

    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdParams {
    /// Upper bound on the fixed step length.
    pub delta: f64,
}

impl Default for SdParams {
    fn default() -> Self {
        Self { delta: 1e-4 }
    }
}

/// Steepest descent with a Wolfe line search along `−g/‖g‖`.
///
/// If the search exhausts its budget without decreasing `f`, the input point
/// is returned unchanged.
pub fn precondition_sdls(
    obj: &dyn Objective,
    x: &[f64],
    f_x: f64,
    g_x: &[f64],
    wolfe: &WolfeParams,
    counter: &mut EvalCounter,
) -> Result<Preliminary> {
    let gnorm = norm2(g_x);
    if gnorm == 0.0 {
        return Err(Error::AlreadyStationary);
    }
    let p: Vec<f64> = g_x.iter().map(|v| -v / gnorm).collect();
    let res = line_search(obj, x, &p, f_x, g_x, wolfe, counter)?;
    let log = LineSearchLog::new(0, SearchRole::Precondition, f_x, dot(g_x, &p), wolfe, &res);
    if !res.wolfe_satisfied() && res.f_new > f_x {
        return Ok(Preliminary { x_bar: x.to_vec(), f_bar: f_x, g_bar: g_x.to_vec(), search: Some(log) });
    }
    Ok(Preliminary { x_bar: res.x_new, f_bar: res.f_new, g_bar: res.g_new, search: Some(log) })
}

/// Steepest descent with the predefined step `β = min(δ, ‖g‖)`.
///
/// Costs exactly one evaluation and gives no descent guarantee.
pub fn precondition_sd(
    obj: &dyn Objective,
    x: &[f64],
    g_x: &[f64],
    params: &SdParams,
    counter: &mut EvalCounter,
) -> Result<Preliminary> {
    if !(params.delta > 0.0) {
        return Err(Error::InvalidConfig(format!("delta must be positive, got {}", params.delta)));
    }
    let gnorm = norm2(g_x);
    if gnorm == 0.0 {
        return Err(Error::AlreadyStationary);
    }
    let beta = params.delta.min(gnorm);
    let x_bar = add_scaled(x, -beta / gnorm, g_x);
    let (f_bar, g_bar) = evaluate(obj, &x_bar, counter)?;
    Ok(Preliminary { x_bar, f_bar, g_bar, search: None })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SteepestDescentLineSearch {
    pub wolfe: WolfeParams,
}

impl Preconditioner for SteepestDescentLineSearch {
    fn apply(&self, obj: &dyn Objective, x: &[f64], f_x: f64, g_x: &[f64], counter: &mut EvalCounter) -> Result<Preliminary> {
        precondition_sdls(obj, x, f_x, g_x, &self.wolfe, counter)
    }

    fn name(&self) -> &'static str {
        "sdls"
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SteepestDescentFixedStep {
    pub params: SdParams,
}

impl Preconditioner for SteepestDescentFixedStep {
    fn apply(&self, obj: &dyn Objective, x: &[f64], _f_x: f64, g_x: &[f64], counter: &mut EvalCounter) -> Result<Preliminary> {
        precondition_sd(obj, x, g_x, &self.params, counter)
    }

    fn name(&self) -> &'static str {
        "sd"
    }
}

/// Bounded history of `(iterate, gradient)` pairs, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    capacity: usize,
    entries: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl Window {
    pub fn new(capacity: usize, x: Vec<f64>, g: Vec<f64>) -> Self {
        assert!(capacity >= 1, "window capacity must be at least 1");
        let mut entries = VecDeque::with_capacity(capacity);
        entries.push_back((x, g));
        Self { capacity, entries }
    }

    pub fn push(&mut self, x: Vec<f64>, g: Vec<f64>) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((x, g));
    }

    /// Drops everything and keeps only `(x, g)`.
    pub fn reset(&mut self, x: Vec<f64>, g: Vec<f64>) {
        self.entries.clear();
        self.entries.push_back((x, g));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.entries.iter().map(|(x, g)| (x.as_slice(), g.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Acceleration {
    pub u_hat: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Achieved linearized residual norm.
    pub residual_norm: f64,
}

/// Recombines the window with the preliminary iterate. No evaluations.
pub fn gmres_accelerate(window: &Window, x_bar: &[f64], g_bar: &[f64]) -> Result<Acceleration> {
    if window.is_empty() {
        return Err(Error::InvalidConfig("acceleration needs a nonempty window".into()));
    }
    let columns = window.iter().map(|(_, g)| sub(g_bar, g)).collect();
    let sys = RecombinationSystem::new(g_bar.to_vec(), columns)?;
    let rec = solve_recombination(&sys)?;
    let mut u_hat = x_bar.to_vec();
    for (alpha, (u, _)) in rec.alphas.iter().zip(window.iter()) {
        for ((h, xb), uj) in u_hat.iter_mut().zip(x_bar).zip(u) {
            *h += alpha * (xb - uj);
        }
    }
    Ok(Acceleration { u_hat, alphas: rec.alphas, residual_norm: rec.residual_norm })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NGmresConfig {
    pub window_w: usize,
    pub max_iters: usize,
    /// Stop once `‖g‖₂ <= grad_tol`.
    pub grad_tol: f64,
    pub fval_tol: Option<FvalTarget>,
    pub wolfe: WolfeParams,
}

impl Default for NGmresConfig {
    fn default() -> Self {
        Self { window_w: 20, max_iters: 1500, grad_tol: 1e-8, fval_tol: None, wolfe: WolfeParams::default() }
    }
}

impl NGmresConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_w == 0 {
            return Err(Error::InvalidConfig("window size must be at least 1".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!("grad_tol must be nonnegative, got {}", self.grad_tol)));
        }
        self.wolfe.validate()
    }

    pub(crate) fn stop_rule(&self) -> StopRule {
        StopRule { max_iters: self.max_iters, grad_tol: self.grad_tol, fval_tol: self.fval_tol }
    }
}

/// Current iterate with its value, gradient and window.
#[derive(Debug, Clone)]
pub struct NGmresState {
    pub x: Vec<f64>,
    pub f: f64,
    pub g: Vec<f64>,
    pub window: Window,
    pub iter: usize,
}

impl NGmresState {
    pub fn new(x: Vec<f64>, f: f64, g: Vec<f64>, window_w: usize) -> Self {
        let window = Window::new(window_w, x.clone(), g.clone());
        Self { x, f, g, window, iter: 0 }
    }
}

/// Diagnostics of one outer iteration.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub step_kind: StepKind,
    pub x_bar: Vec<f64>,
    pub f_bar: f64,
    pub g_bar_norm: f64,
    pub u_hat: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Linearized residual norm after recombination.
    pub ls_residual_norm: f64,
    /// `ḡᵀ(û − ū)`.
    pub accel_slope: f64,
    pub precondition_search: Option<LineSearchLog>,
    pub acceleration_search: Option<LineSearchLog>,
}

/// Advances `state` by one N-GMRES iteration.
pub fn ngmres_step(
    state: &mut NGmresState,
    obj: &dyn Objective,
    precond: &dyn Preconditioner,
    config: &NGmresConfig,
    counter: &mut EvalCounter,
) -> Result<StepReport> {
    let iter = state.iter + 1;

    let pre = precond.apply(obj, &state.x, state.f, &state.g, counter)?;
    let precondition_search = pre.search.map(|l| LineSearchLog { iter_index: iter, ..l });

    let acc = gmres_accelerate(&state.window, &pre.x_bar, &pre.g_bar)?;

    let p = sub(&acc.u_hat, &pre.x_bar);
    let accel_slope = dot(&pre.g_bar, &p);
    let mut acceleration_search = None;

    let step_kind = if accel_slope < 0.0 {
        let res = line_search(obj, &pre.x_bar, &p, pre.f_bar, &pre.g_bar, &config.wolfe, counter)?;
        acceleration_search = Some(LineSearchLog::new(iter, SearchRole::Acceleration, pre.f_bar, accel_slope, &config.wolfe, &res));
        if res.wolfe_satisfied() || res.f_new <= pre.f_bar {
            state.x = res.x_new;
            state.f = res.f_new;
            state.g = res.g_new;
            state.window.push(state.x.clone(), state.g.clone());
            StepKind::Accelerated
        } else {
            StepKind::Precondition
        }
    } else {
        StepKind::Restart
    };

    if step_kind != StepKind::Accelerated {
        state.x = pre.x_bar.clone();
        state.f = pre.f_bar;
        state.g = pre.g_bar.clone();
        state.window.reset(state.x.clone(), state.g.clone());
    }
    state.iter = iter;

    Ok(StepReport {
        step_kind,
        g_bar_norm: norm2(&pre.g_bar),
        x_bar: pre.x_bar,
        f_bar: pre.f_bar,
        u_hat: acc.u_hat,
        alphas: acc.alphas,
        ls_residual_norm: acc.residual_norm,
        accel_slope,
        precondition_search,
        acceleration_search,
    })
}

pub fn ngmres_solve(
    obj: &dyn Objective,
    precond: &dyn Preconditioner,
    config: &NGmresConfig,
    x0: &[f64],
    counter: &mut EvalCounter,
) -> Result<SolveResult> {
    ngmres_solve_observed(obj, precond, config, x0, counter, |_, _| {})
}

/// Like [`ngmres_solve`], calling `observer` after every outer iteration.
pub fn ngmres_solve_observed(
    obj: &dyn Objective,
    precond: &dyn Preconditioner,
    config: &NGmresConfig,
    x0: &[f64],
    counter: &mut EvalCounter,
    mut observer: impl FnMut(&NGmresState, &StepReport),
) -> Result<SolveResult> {
    config.validate()?;
    let stop = config.stop_rule();
    let mut history = ConvergenceHistory::default();

    let (f0, g0) = evaluate(obj, x0, counter)?;
    let mut state = NGmresState::new(x0.to_vec(), f0, g0, config.window_w);
    history.push(0, counter, state.f, &state.g, StepKind::Initial);

    let status = loop {
        if let Some(s) = stop.check(state.iter, state.f, &state.g) {
            break s;
        }
        match ngmres_step(&mut state, obj, precond, config, counter) {
            Ok(report) => {
                history.line_searches.extend(report.precondition_search);
                history.line_searches.extend(report.acceleration_search);
                history.push(state.iter, counter, state.f, &state.g, report.step_kind);
                observer(&state, &report);
            }
            Err(Error::AlreadyStationary) => break SolveStatus::GradTol,
            Err(e @ Error::NumericalFailure { .. }) => {
                return Ok(SolveResult {
                    fg_evals: counter.fg_evals,
                    iterations: state.iter,
                    x: state.x,
                    f: state.f,
                    grad: state.g,
                    status: SolveStatus::Failed,
                    history,
                    error: Some(e),
                })
            }
            Err(e) => return Err(e),
        }
    };

    Ok(SolveResult {
        fg_evals: counter.fg_evals,
        iterations: state.iter,
        x: state.x,
        f: state.f,
        grad: state.g,
        status,
        history,
        error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_problem, ProblemKind, ProblemTag};
    use approx::assert_abs_diff_eq;

    /// `f(u) = ½‖u − c‖² `, gradient `u − c`.
    struct Shifted(Vec<f64>);
    impl Objective for Shifted {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
            let mut f = 0.0;
            for i in 0..x.len() {
                g[i] = x[i] - self.0[i];
                f += 0.5 * g[i] * g[i];
            }
            f
        }
    }

    /// Returns its input unchanged.
    struct Identity;
    impl Preconditioner for Identity {
        fn apply(&self, _: &dyn Objective, x: &[f64], f_x: f64, g_x: &[f64], _: &mut EvalCounter) -> Result<Preliminary> {
            Ok(Preliminary { x_bar: x.to_vec(), f_bar: f_x, g_bar: g_x.to_vec(), search: None })
        }
        fn name(&self) -> &'static str {
            "identity"
        }
    }

    #[test]
    fn sdls_on_half_square_decreases() {
        let obj = Shifted(vec![0.0]);
        let mut c = EvalCounter::new();
        let pre = precondition_sdls(&obj, &[2.0], 2.0, &[2.0], &WolfeParams::default(), &mut c).unwrap();
        assert!(pre.f_bar < 2.0);
        assert!(pre.search.unwrap().status == crate::linesearch::LineSearchStatus::WolfeSatisfied);
    }

    #[test]
    fn zero_gradient_is_stationary() {
        let obj = Shifted(vec![0.0]);
        let mut c = EvalCounter::new();
        assert_eq!(
            precondition_sdls(&obj, &[0.0], 0.0, &[0.0], &WolfeParams::default(), &mut c).unwrap_err(),
            Error::AlreadyStationary
        );
        assert_eq!(precondition_sd(&obj, &[0.0], &[0.0], &SdParams::default(), &mut c).unwrap_err(), Error::AlreadyStationary);
        assert_eq!(c.fg_evals, 0);
    }

    #[test]
    fn sdls_problem_a_decreases() {
        let obj = make_problem(&ProblemKind::new(ProblemTag::A, 2)).unwrap();
        let mut c = EvalCounter::new();
        let (f0, g0) = evaluate(&obj, &[0.0, 0.0], &mut c).unwrap();
        let pre = precondition_sdls(&obj, &[0.0, 0.0], f0, &g0, &WolfeParams::default(), &mut c).unwrap();
        assert!(pre.f_bar <= 2.5);
    }

    #[test]
    fn sd_step_uses_delta_when_gradient_large() {
        let obj = make_problem(&ProblemKind::new(ProblemTag::A, 2)).unwrap();
        let mut c = EvalCounter::new();
        let pre = precondition_sd(&obj, &[0.0, 0.0], &[-1.0, -2.0], &SdParams::default(), &mut c).unwrap();
        let s5 = 5f64.sqrt();
        assert_abs_diff_eq!(pre.x_bar[0], 1e-4 / s5, epsilon = 1e-15);
        assert_abs_diff_eq!(pre.x_bar[1], 2e-4 / s5, epsilon = 1e-15);
        assert_abs_diff_eq!(pre.x_bar[0], 4.4721e-5, epsilon = 1e-9);
        assert_abs_diff_eq!(pre.x_bar[1], 8.9443e-5, epsilon = 1e-9);
        assert_eq!(c.fg_evals, 1);
    }

    #[test]
    fn sd_step_uses_gradient_norm_when_small() {
        let obj = Shifted(vec![0.0, 0.0]);
        let mut c = EvalCounter::new();
        let g = [3e-5, 4e-5];
        let pre = precondition_sd(&obj, &[0.0, 0.0], &g, &SdParams::default(), &mut c).unwrap();
        assert_abs_diff_eq!(norm2(&pre.x_bar), 5e-5, epsilon = 1e-18);
        let pre = precondition_sd(&obj, &[0.0, 0.0], &[1.0, 0.0], &SdParams { delta: 1e-3 }, &mut c).unwrap();
        assert_abs_diff_eq!(pre.x_bar[0], -1e-3, epsilon = 1e-18);
    }

    #[test]
    fn identity_operator_accelerates_to_minimizer() {
        let window = Window::new(5, vec![0.0, 0.0], vec![-1.0, -1.0]);
        let acc = gmres_accelerate(&window, &[0.5, 0.5], &[-0.5, -0.5]).unwrap();
        assert_abs_diff_eq!(acc.alphas[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(acc.u_hat[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(acc.u_hat[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_column_leaves_preliminary_iterate() {
        let window = Window::new(5, vec![0.5, 0.5], vec![-0.5, -0.5]);
        let acc = gmres_accelerate(&window, &[0.5, 0.5], &[-0.5, -0.5]).unwrap();
        assert_eq!(acc.u_hat, vec![0.5, 0.5]);
        let window = Window::new(5, vec![0.0, 0.0], vec![-1.0, -1.0]);
        let acc = gmres_accelerate(&window, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(acc.alphas, vec![0.0]);
        assert_eq!(acc.u_hat, vec![1.0, 1.0]);
    }

    #[test]
    fn window_evicts_oldest() {
        let mut w = Window::new(2, vec![0.0], vec![0.0]);
        w.push(vec![1.0], vec![1.0]);
        w.push(vec![2.0], vec![2.0]);
        assert_eq!(w.len(), 2);
        assert_eq!(w.iter().next().unwrap().0, &[1.0]);
        w.reset(vec![3.0], vec![3.0]);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn one_step_reaches_minimizer_for_identity_hessian() {
        // Shifted: g = u − (1,1), so the first sd step gives a column parallel
        // to the residual and the acceleration lands on the minimizer.
        let obj = Shifted(vec![1.0, 1.0]);
        let config = NGmresConfig { grad_tol: 1e-12, ..Default::default() };
        let mut c = EvalCounter::new();
        let (f0, g0) = evaluate(&obj, &[0.0, 0.0], &mut c).unwrap();
        let mut state = NGmresState::new(vec![0.0, 0.0], f0, g0, config.window_w);
        let precond = SteepestDescentFixedStep::default();
        let rep = ngmres_step(&mut state, &obj, &precond, &config, &mut c).unwrap();
        assert_eq!(rep.step_kind, StepKind::Accelerated);
        // The relative Tikhonov term perturbs û at the 1e-12 level.
        assert!(norm2(&state.g) < 1e-10);
        assert_abs_diff_eq!(state.x[0], 1.0, epsilon = 1e-10);
        assert_eq!(state.window.len(), 2);
    }

    #[test]
    fn zero_acceleration_restarts() {
        let obj = Shifted(vec![1.0, 1.0]);
        let config = NGmresConfig::default();
        let mut c = EvalCounter::new();
        let (f0, g0) = evaluate(&obj, &[0.0, 0.0], &mut c).unwrap();
        let mut state = NGmresState::new(vec![0.0, 0.0], f0, g0, 4);
        state.window.push(vec![0.0, 0.0], vec![-1.0, -1.0]);
        state.window.push(vec![0.0, 0.0], vec![-1.0, -1.0]);
        assert_eq!(state.window.len(), 3);
        let rep = ngmres_step(&mut state, &obj, &Identity, &config, &mut c).unwrap();
        assert_eq!(rep.step_kind, StepKind::Restart);
        assert_eq!(state.window.len(), 1);
        assert_eq!(state.x, vec![0.0, 0.0]);
    }

    #[test]
    fn solve_from_optimum_stops_immediately() {
        let obj = make_problem(&ProblemKind::new(ProblemTag::A, 10)).unwrap();
        let mut c = EvalCounter::new();
        let r = ngmres_solve(&obj, &SteepestDescentFixedStep::default(), &NGmresConfig::default(), &[1.0; 10], &mut c)
            .unwrap();
        assert_eq!(r.status, SolveStatus::GradTol);
        assert_eq!(r.iterations, 0);
        assert_eq!(c.fg_evals, 1);
        assert_eq!(r.history.records.len(), 1);
    }

    #[test]
    fn zero_window_rejected() {
        let obj = Shifted(vec![0.0]);
        let cfg = NGmresConfig { window_w: 0, ..Default::default() };
        let mut c = EvalCounter::new();
        let err = ngmres_solve(&obj, &SteepestDescentFixedStep::default(), &cfg, &[1.0], &mut c).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }
}
