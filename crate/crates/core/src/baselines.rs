//! Reference optimizers: steepest descent with line search, Polak-Ribière
//! nonlinear conjugate gradients and two-loop L-BFGS.
//!
//! All three share the same Wolfe line search so that evaluation counts are
//! comparable with N-GMRES.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linesearch::{line_search, WolfeParams};
use crate::objective::{
    evaluate, ConvergenceHistory, EvalCounter, FvalTarget, LineSearchLog, Objective, SearchRole, SolveResult,
    SolveStatus, StepKind, StopRule,
};
use crate::vecops::{axpy, dot, norm2, scale, sub};

/// Curvature pairs with `sᵀy <= CURVATURE_SKIP · ‖s‖‖y‖` are not stored.
pub const CURVATURE_SKIP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub fval_tol: Option<FvalTarget>,
    pub wolfe: WolfeParams,
}

pub type NcgConfig = DescentConfig;

impl Default for DescentConfig {
    fn default() -> Self {
        Self { max_iters: 1500, grad_tol: 1e-8, fval_tol: None, wolfe: WolfeParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub memory_m: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub fval_tol: Option<FvalTarget>,
    pub wolfe: WolfeParams,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory_m: 5, max_iters: 1500, grad_tol: 1e-8, fval_tol: None, wolfe: WolfeParams::default() }
    }
}

impl LbfgsConfig {
    fn descent(&self) -> DescentConfig {
        DescentConfig { max_iters: self.max_iters, grad_tol: self.grad_tol, fval_tol: self.fval_tol, wolfe: self.wolfe }
    }
}

/// Search direction policy plugged into the shared descent loop.
trait DirectionRule {
    fn direction(&mut self, g: &[f64]) -> Vec<f64>;
    /// Called after an accepted step `x_old -> x_new`.
    fn accepted(&mut self, s: &[f64], g_old: &[f64], g_new: &[f64]);
    /// Forget accumulated information; the next direction is steepest descent.
    fn reset(&mut self);
}

struct NormalizedSteepest;

impl DirectionRule for NormalizedSteepest {
    fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        scale(-1.0 / norm2(g), g)
    }
    fn accepted(&mut self, _: &[f64], _: &[f64], _: &[f64]) {}
    fn reset(&mut self) {}
}

#[derive(Default)]
struct PolakRibiere {
    /// Gradient and direction of the previous iteration.
    prev: Option<(Vec<f64>, Vec<f64>)>,
    pending: Vec<f64>,
}

impl DirectionRule for PolakRibiere {
    fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        let mut p = scale(-1.0, g);
        if let Some((g_prev, p_prev)) = &self.prev {
            let beta = (dot(g, g) - dot(g, g_prev)) / dot(g_prev, g_prev);
            if beta.is_finite() {
                axpy(beta, p_prev, &mut p);
            }
            if !(dot(g, &p) < 0.0) {
                p = scale(-1.0, g);
            }
        }
        debug_assert!(dot(g, &p) < 0.0 || norm2(g) == 0.0);
        self.pending = p.clone();
        p
    }

    fn accepted(&mut self, _: &[f64], g_old: &[f64], _: &[f64]) {
        self.prev = Some((g_old.to_vec(), std::mem::take(&mut self.pending)));
    }

    fn reset(&mut self) {
        self.prev = None;
    }
}

struct Lbfgs {
    memory: VecDeque<(Vec<f64>, Vec<f64>)>,
    capacity: usize,
}

impl DirectionRule for Lbfgs {
    fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        let pairs: Vec<_> = self.memory.iter().cloned().collect();
        lbfgs_direction(&pairs, g)
    }

    fn accepted(&mut self, s: &[f64], g_old: &[f64], g_new: &[f64]) {
        let y = sub(g_new, g_old);
        let sy = dot(s, &y);
        if sy > CURVATURE_SKIP * norm2(s) * norm2(&y) {
            assert!(sy > 0.0);
            if self.memory.len() == self.capacity {
                self.memory.pop_front();
            }
            self.memory.push_back((s.to_vec(), y));
        }
    }

    fn reset(&mut self) {
        self.memory.clear();
    }
}

/// Two-loop recursion: returns `-H g` for the L-BFGS inverse Hessian built
/// from `pairs` (oldest first), seeded with `γI`, `γ = sᵀy / yᵀy` of the
/// newest pair (1 when `pairs` is empty).
pub fn lbfgs_direction(pairs: &[(Vec<f64>, Vec<f64>)], g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (i, (s, y)) in pairs.iter().enumerate().rev() {
        let rho = 1.0 / dot(y, s);
        alphas[i] = rho * dot(s, &q);
        axpy(-alphas[i], y, &mut q);
    }
    let gamma = pairs.last().map_or(1.0, |(s, y)| dot(s, y) / dot(y, y));
    let mut r = scale(gamma, &q);
    for (i, (s, y)) in pairs.iter().enumerate() {
        let rho = 1.0 / dot(y, s);
        let beta = rho * dot(y, &r);
        axpy(alphas[i] - beta, s, &mut r);
    }
    scale(-1.0, &r)
}

pub fn steepest_descent_solve(obj: &dyn Objective, config: &DescentConfig, x0: &[f64], counter: &mut EvalCounter) -> Result<SolveResult> {
    descent_loop(obj, config, x0, counter, &mut NormalizedSteepest)
}

pub fn ncg_solve(obj: &dyn Objective, config: &NcgConfig, x0: &[f64], counter: &mut EvalCounter) -> Result<SolveResult> {
    descent_loop(obj, config, x0, counter, &mut PolakRibiere::default())
}

pub fn lbfgs_solve(obj: &dyn Objective, config: &LbfgsConfig, x0: &[f64], counter: &mut EvalCounter) -> Result<SolveResult> {
    if config.memory_m == 0 {
        return Err(Error::InvalidConfig("L-BFGS memory must be at least 1".into()));
    }
    let mut rule = Lbfgs { memory: VecDeque::with_capacity(config.memory_m), capacity: config.memory_m };
    descent_loop(obj, &config.descent(), x0, counter, &mut rule)
}

fn descent_loop(
    obj: &dyn Objective,
    config: &DescentConfig,
    x0: &[f64],
    counter: &mut EvalCounter,
    rule: &mut dyn DirectionRule,
) -> Result<SolveResult> {
    config.wolfe.validate()?;
    let stop = StopRule { max_iters: config.max_iters, grad_tol: config.grad_tol, fval_tol: config.fval_tol };
    let mut history = ConvergenceHistory::default();
    let (mut f, mut g) = evaluate(obj, x0, counter)?;
    let mut x = x0.to_vec();
    let mut iter = 0;
    history.push(0, counter, f, &g, StepKind::Initial);

    let finish = |x, f, g, status, history, iter, error, counter: &EvalCounter| SolveResult {
        x,
        f,
        grad: g,
        status,
        history,
        fg_evals: counter.fg_evals,
        iterations: iter,
        error,
    };

    loop {
        if let Some(status) = stop.check(iter, f, &g) {
            return Ok(finish(x, f, g, status, history, iter, None, counter));
        }
        iter += 1;

        let mut p = rule.direction(&g);
        let mut fresh = false;
        if !(dot(&g, &p) < 0.0) {
            rule.reset();
            p = rule.direction(&g);
            fresh = true;
        }

        let res = loop {
            let attempt = line_search(obj, &x, &p, f, &g, &config.wolfe, counter);
            let res = match attempt {
                Ok(r) => r,
                Err(e @ Error::NumericalFailure { .. }) => {
                    return Ok(finish(x, f, g, SolveStatus::Failed, history, iter, Some(e), counter));
                }
                Err(e) => return Err(e),
            };
            history.line_searches.push(LineSearchLog::new(iter, SearchRole::Descent, f, dot(&g, &p), &config.wolfe, &res));
            if res.wolfe_satisfied() || res.f_new <= f {
                break Some(res);
            }
            if fresh {
                break None;
            }
            // Retry once along the steepest-descent direction of the rule.
            rule.reset();
            p = rule.direction(&g);
            fresh = true;
        };

        let Some(res) = res else {
            return Ok(finish(x, f, g, SolveStatus::Stalled, history, iter, None, counter));
        };
        let s = sub(&res.x_new, &x);
        rule.accepted(&s, &g, &res.g_new);
        x = res.x_new;
        f = res.f_new;
        g = res.g_new;
        history.push(iter, counter, f, &g, StepKind::Descent);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_problem, ProblemKind, ProblemTag};
    use approx::assert_abs_diff_eq;

    struct HalfSquare;
    impl Objective for HalfSquare {
        fn dim(&self) -> usize {
            1
        }
        fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
            g[0] = x[0];
            0.5 * x[0] * x[0]
        }
    }

    #[test]
    fn two_loop_without_memory_is_steepest_descent() {
        assert_eq!(lbfgs_direction(&[], &[1.0, -2.0]), vec![-1.0, 2.0]);
    }

    #[test]
    fn two_loop_single_pair_by_hand() {
        let d = lbfgs_direction(&[(vec![1.0, 0.0], vec![1.0, 0.0])], &[1.0, 1.0]);
        assert_eq!(d, vec![-1.0, -1.0]);
    }

    #[test]
    fn two_loop_satisfies_secant_equation() {
        // With one pair, H y = s must hold for the seeded BFGS update.
        let s = vec![0.3, -0.2, 0.5];
        let y = vec![0.9, 0.1, 0.4];
        let d = lbfgs_direction(&[(s.clone(), y.clone())], &y);
        for i in 0..3 {
            assert_abs_diff_eq!(-d[i], s[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn sdls_half_square_one_step() {
        let mut c = EvalCounter::new();
        let r = steepest_descent_solve(&HalfSquare, &DescentConfig::default(), &[2.0], &mut c).unwrap();
        assert_eq!(r.status, SolveStatus::GradTol);
        assert_eq!(r.iterations, 1);
        assert!(r.f < 1e-16);
    }

    #[test]
    fn all_baselines_stop_at_optimum() {
        let obj = make_problem(&ProblemKind::new(ProblemTag::A, 6)).unwrap();
        let x0 = vec![1.0; 6];
        for run in [
            |o: &dyn Objective, x: &[f64], c: &mut EvalCounter| steepest_descent_solve(o, &DescentConfig::default(), x, c),
            |o: &dyn Objective, x: &[f64], c: &mut EvalCounter| ncg_solve(o, &DescentConfig::default(), x, c),
            |o: &dyn Objective, x: &[f64], c: &mut EvalCounter| lbfgs_solve(o, &LbfgsConfig::default(), x, c),
        ] {
            let mut c = EvalCounter::new();
            let r = run(&obj, &x0, &mut c).unwrap();
            assert_eq!(r.status, SolveStatus::GradTol);
            assert_eq!(c.fg_evals, 1);
        }
    }

    #[test]
    fn ncg_quadratic_converges_quickly() {
        let n = 5;
        let obj = make_problem(&ProblemKind::new(ProblemTag::A, n)).unwrap();
        let x0 = vec![0.3, 0.9, 0.1, 0.5, 0.7];
        let mut c = EvalCounter::new();
        let r = ncg_solve(&obj, &DescentConfig::default(), &x0, &mut c).unwrap();
        assert_eq!(r.status, SolveStatus::GradTol);
        assert!(r.iterations <= 3 * n, "{} iterations", r.iterations);
        for v in &r.x {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn lbfgs_quadratic_converges() {
        let obj = make_problem(&ProblemKind::new(ProblemTag::A, 20)).unwrap();
        let x0: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).fract()).collect();
        let mut c = EvalCounter::new();
        let r = lbfgs_solve(&obj, &LbfgsConfig::default(), &x0, &mut c).unwrap();
        assert_eq!(r.status, SolveStatus::GradTol);
    }

    #[test]
    fn zero_memory_rejected() {
        let cfg = LbfgsConfig { memory_m: 0, ..Default::default() };
        let mut c = EvalCounter::new();
        assert!(matches!(lbfgs_solve(&HalfSquare, &cfg, &[1.0], &mut c), Err(Error::InvalidConfig(_))));
    }
}
