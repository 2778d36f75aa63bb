//! Wolfe line search.
//!
//! The step update follows the Moré-Thuente safeguarded cubic/quadratic
//! interpolation scheme. Until the minimizer is bracketed, each new trial
//! doubles the previous step. A trial step is accepted as soon as it satisfies
//! the sufficient decrease condition
//!
//! ```text
//! f(x + βp) <= f(x) + c1·β·∇f(x)ᵀp
//! ```
//!
//! and the curvature condition
//!
//! ```text
//! ∇f(x + βp)ᵀp >= c2·∇f(x)ᵀp                 (standard)
//! |∇f(x + βp)ᵀp| <= c2·|∇f(x)ᵀp|             (strong, optional)
//! ```
//!
//! The strong form implies the standard one.
//!
//! If the evaluation budget runs out first, the trial point with the lowest
//! objective value is returned and flagged; it need not improve on `f(x)`.
//!
//! A trial whose value or gradient is not finite (for example an overflow
//! far along `p`) is discarded: the step is contracted toward the best finite
//! step and later proposals stay below it. Only when no finite trial is found
//! within the budget is the failure returned as an error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{evaluate, EvalCounter, Objective};
use crate::vecops::{add_scaled, dot};

pub const STEP_MIN: f64 = 1e-20;
pub const STEP_MAX: f64 = 1e20;
/// Relative width below which a bracketing interval is considered collapsed.
pub const XTOL: f64 = 1e-15;

/// Growth factor for the next trial while no interval is bracketed.
pub const EXPANSION: f64 = 2.0;
/// Contraction applied after a non-finite trial.
const OVERFLOW_SHRINK: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CurvatureRule {
    #[default]
    Standard,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WolfeParams {
    /// Sufficient decrease coefficient.
    pub c1: f64,
    /// Curvature coefficient, `c1 < c2 < 1`.
    pub c2: f64,
    pub initial_step: f64,
    pub max_fg_evals: usize,
    #[serde(default)]
    pub curvature: CurvatureRule,
}

impl Default for WolfeParams {
    fn default() -> Self {
        Self { c1: 1e-4, c2: 1e-2, initial_step: 1.0, max_fg_evals: 20, curvature: CurvatureRule::Standard }
    }
}

impl WolfeParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "Wolfe coefficients must satisfy 0 < c1 < c2 < 1 (c1 = {}, c2 = {})",
                self.c1, self.c2
            )));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::InvalidConfig(format!("initial step must be positive, got {}", self.initial_step)));
        }
        if self.max_fg_evals == 0 {
            return Err(Error::InvalidConfig("line search needs at least one evaluation".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineSearchStatus {
    WolfeSatisfied,
    BudgetExhaustedBestFound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchResult {
    pub step: f64,
    pub x_new: Vec<f64>,
    pub f_new: f64,
    pub g_new: Vec<f64>,
    /// `g_newᵀp`.
    pub slope_new: f64,
    pub status: LineSearchStatus,
    /// Evaluations consumed by this search.
    pub fg_evals: u64,
}

impl LineSearchResult {
    pub fn wolfe_satisfied(&self) -> bool {
        self.status == LineSearchStatus::WolfeSatisfied
    }
}

/// Checks both (standard) Wolfe inequalities from scalar quantities.
pub fn wolfe_conditions_hold(f0: f64, slope0: f64, step: f64, f_new: f64, slope_new: f64, c1: f64, c2: f64) -> bool {
    f_new <= f0 + c1 * step * slope0 && slope_new >= c2 * slope0
}

/// Checks sufficient decrease and the curvature condition selected by `rule`.
pub fn acceptance_holds(f0: f64, slope0: f64, step: f64, f_new: f64, slope_new: f64, params: &WolfeParams) -> bool {
    let standard = wolfe_conditions_hold(f0, slope0, step, f_new, slope_new, params.c1, params.c2);
    match params.curvature {
        CurvatureRule::Standard => standard,
        CurvatureRule::Strong => standard && slope_new <= -params.c2 * slope0,
    }
}

/// Searches along `p` from `x` for a step satisfying the Wolfe conditions.
///
/// `f0` and `g0` must already hold `f(x)` and `∇f(x)`; they are not
/// re-evaluated. At most `params.max_fg_evals` evaluations are charged.
pub fn line_search(
    obj: &dyn Objective,
    x: &[f64],
    p: &[f64],
    f0: f64,
    g0: &[f64],
    params: &WolfeParams,
    counter: &mut EvalCounter,
) -> Result<LineSearchResult> {
    params.validate()?;
    let slope0 = dot(g0, p);
    if !(slope0 < 0.0) {
        return Err(Error::NotDescentDirection { slope: slope0 });
    }

    let start_evals = counter.fg_evals;
    let gtest = params.c1 * slope0;
    let mut state = Bracket::new(f0, slope0, params.initial_step);
    let mut stp = params.initial_step.clamp(STEP_MIN, STEP_MAX);
    let mut best: Option<Trial> = None;
    let mut overflow: Option<Error> = None;

    for _ in 0..params.max_fg_evals {
        let xt = add_scaled(x, stp, p);
        let (ft, gt) = match evaluate(obj, &xt, counter) {
            Ok(v) => v,
            Err(e @ Error::NumericalFailure { .. }) => {
                overflow = Some(e);
                match state.reject(stp) {
                    Some(s) => {
                        stp = s;
                        continue;
                    }
                    None => break,
                }
            }
            Err(e) => return Err(e),
        };
        let slope = dot(&gt, p);
        let trial = Trial { step: stp, x: xt, f: ft, g: gt, slope };

        if acceptance_holds(f0, slope0, stp, ft, slope, params) {
            return Ok(trial.finish(LineSearchStatus::WolfeSatisfied, counter.fg_evals - start_evals));
        }

        let next = state.next_step(stp, ft, slope, gtest);
        if best.as_ref().is_none_or(|b| trial.f < b.f) {
            best = Some(trial);
        }
        match next {
            Some(s) if s != stp => stp = s,
            // Interval collapsed or pinned at a bound; further trials would repeat.
            _ => break,
        }
    }

    let Some(best) = best else {
        return Err(overflow.expect("a trial without a finite result recorded its failure"));
    };
    Ok(best.finish(LineSearchStatus::BudgetExhaustedBestFound, counter.fg_evals - start_evals))
}

struct Trial {
    step: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

impl Trial {
    fn finish(self, status: LineSearchStatus, fg_evals: u64) -> LineSearchResult {
        LineSearchResult { step: self.step, x_new: self.x, f_new: self.f, g_new: self.g, slope_new: self.slope, status, fg_evals }
    }
}

/// Moré-Thuente interval state. `x` is the best step so far, `y` the other
/// endpoint of the interval of uncertainty.
struct Bracket {
    finit: f64,
    stage_one: bool,
    brackt: bool,
    stx: f64,
    fx: f64,
    gx: f64,
    sty: f64,
    fy: f64,
    gy: f64,
    stmin: f64,
    stmax: f64,
    width: f64,
    width1: f64,
    /// Smallest step known to give a non-finite result.
    cap: f64,
}

impl Bracket {
    fn new(finit: f64, ginit: f64, stp: f64) -> Self {
        let width = STEP_MAX - STEP_MIN;
        Self {
            finit,
            stage_one: true,
            brackt: false,
            stx: 0.0,
            fx: finit,
            gx: ginit,
            sty: 0.0,
            fy: finit,
            gy: ginit,
            stmin: 0.0,
            stmax: EXPANSION * stp,
            width,
            width1: 2.0 * width,
            cap: f64::INFINITY,
        }
    }

    /// Records a non-finite trial at `stp` and proposes a shorter step.
    fn reject(&mut self, stp: f64) -> Option<f64> {
        self.cap = self.cap.min(stp);
        let next = self.stx + OVERFLOW_SHRINK * (stp - self.stx);
        (next > STEP_MIN && next < stp && next != self.stx).then_some(next)
    }

    /// Consumes the trial `(stp, f, g)` and proposes the next step, or `None`
    /// when no further progress is possible.
    fn next_step(&mut self, stp: f64, f: f64, g: f64, gtest: f64) -> Option<f64> {
        let ftest = self.finit + stp * gtest;
        if self.stage_one && f <= ftest && g >= 0.0 {
            self.stage_one = false;
        }
        if self.brackt && (stp <= self.stmin || stp >= self.stmax) {
            return None;
        }
        if self.brackt && self.stmax - self.stmin <= XTOL * self.stmax {
            return None;
        }
        if stp >= STEP_MAX && f <= ftest && g <= gtest {
            return None;
        }
        if stp <= STEP_MIN && (f > ftest || g >= gtest) {
            return None;
        }

        let mut stp = stp;
        if self.stage_one && f <= self.fx && f > ftest {
            // Modified function ψ(β) = f(β) - f(0) - c1·β·f'(0) while no
            // decrease-and-nonnegative-slope point has been seen.
            let mut fxm = self.fx - self.stx * gtest;
            let mut fym = self.fy - self.sty * gtest;
            let mut gxm = self.gx - gtest;
            let mut gym = self.gy - gtest;
            let fm = f - stp * gtest;
            let gm = g - gtest;
            step_update(
                &mut self.stx, &mut fxm, &mut gxm, &mut self.sty, &mut fym, &mut gym, &mut stp, fm, gm,
                &mut self.brackt, self.stmin, self.stmax,
            );
            self.fx = fxm + self.stx * gtest;
            self.fy = fym + self.sty * gtest;
            self.gx = gxm + gtest;
            self.gy = gym + gtest;
        } else {
            step_update(
                &mut self.stx, &mut self.fx, &mut self.gx, &mut self.sty, &mut self.fy, &mut self.gy, &mut stp, f, g,
                &mut self.brackt, self.stmin, self.stmax,
            );
        }

        if self.brackt {
            if (self.sty - self.stx).abs() >= 0.66 * self.width1 {
                stp = self.stx + 0.5 * (self.sty - self.stx);
            }
            self.width1 = self.width;
            self.width = (self.sty - self.stx).abs();
            self.stmin = self.stx.min(self.sty);
            self.stmax = self.stx.max(self.sty);
        } else {
            self.stmin = EXPANSION * stp;
            self.stmax = EXPANSION * stp;
        }

        if stp >= self.cap {
            stp = self.stx + 0.5 * (self.cap - self.stx);
        }
        stp = stp.clamp(STEP_MIN, STEP_MAX);
        if (self.brackt && (stp <= self.stmin || stp >= self.stmax))
            || (self.brackt && self.stmax - self.stmin <= XTOL * self.stmax)
        {
            stp = self.stx;
        }
        if !stp.is_finite() {
            return None;
        }
        Some(stp)
    }
}

/// Safeguarded step computation of Moré and Thuente: updates the interval
/// of uncertainty `[stx, sty]` with the trial `stp` and writes the next
/// trial step into `stp`.
#[allow(clippy::too_many_arguments)]
fn step_update(
    stx: &mut f64,
    fx: &mut f64,
    dx: &mut f64,
    sty: &mut f64,
    fy: &mut f64,
    dy: &mut f64,
    stp: &mut f64,
    fp: f64,
    dp: f64,
    brackt: &mut bool,
    stpmin: f64,
    stpmax: f64,
) {
    let sgnd = dp * dx.signum();
    let stpf;

    if fp > *fx {
        // Higher function value: the minimum is bracketed.
        let theta = 3.0 * (*fx - fp) / (*stp - *stx) + *dx + dp;
        let s = theta.abs().max(dx.abs()).max(dp.abs());
        let mut gamma = s * ((theta / s).powi(2) - (*dx / s) * (dp / s)).max(0.0).sqrt();
        if *stp < *stx {
            gamma = -gamma;
        }
        let p = (gamma - *dx) + theta;
        let q = ((gamma - *dx) + gamma) + dp;
        let r = p / q;
        let stpc = *stx + r * (*stp - *stx);
        let stpq = *stx + ((*dx / ((*fx - fp) / (*stp - *stx) + *dx)) / 2.0) * (*stp - *stx);
        stpf = if (stpc - *stx).abs() < (stpq - *stx).abs() { stpc } else { stpc + (stpq - stpc) / 2.0 };
        *brackt = true;
    } else if sgnd < 0.0 {
        // Derivatives of opposite sign: the minimum is bracketed.
        let theta = 3.0 * (*fx - fp) / (*stp - *stx) + *dx + dp;
        let s = theta.abs().max(dx.abs()).max(dp.abs());
        let mut gamma = s * ((theta / s).powi(2) - (*dx / s) * (dp / s)).max(0.0).sqrt();
        if *stp > *stx {
            gamma = -gamma;
        }
        let p = (gamma - dp) + theta;
        let q = ((gamma - dp) + gamma) + *dx;
        let r = p / q;
        let stpc = *stp + r * (*stx - *stp);
        let stpq = *stp + (dp / (dp - *dx)) * (*stx - *stp);
        stpf = if (stpc - *stp).abs() > (stpq - *stp).abs() { stpc } else { stpq };
        *brackt = true;
    } else if dp.abs() < dx.abs() {
        // Same sign, decreasing derivative magnitude.
        let theta = 3.0 * (*fx - fp) / (*stp - *stx) + *dx + dp;
        let s = theta.abs().max(dx.abs()).max(dp.abs());
        let mut gamma = s * ((theta / s).powi(2) - (*dx / s) * (dp / s)).max(0.0).sqrt();
        if *stp > *stx {
            gamma = -gamma;
        }
        let p = (gamma - dp) + theta;
        let q = (gamma + (*dx - dp)) + gamma;
        let r = p / q;
        let stpc = if r < 0.0 && gamma != 0.0 {
            *stp + r * (*stx - *stp)
        } else if *stp > *stx {
            stpmax
        } else {
            stpmin
        };
        let stpq = *stp + (dp / (dp - *dx)) * (*stx - *stp);
        if *brackt {
            let mut v = if (stpc - *stp).abs() < (stpq - *stp).abs() { stpc } else { stpq };
            if *stp > *stx {
                v = v.min(*stp + 0.66 * (*sty - *stp));
            } else {
                v = v.max(*stp + 0.66 * (*sty - *stp));
            }
            stpf = v;
        } else {
            let v = if (stpc - *stp).abs() > (stpq - *stp).abs() { stpc } else { stpq };
            stpf = v.min(stpmax).max(stpmin);
        }
    } else {
        // Same sign, derivative magnitude not decreasing.
        stpf = if *brackt {
            let theta = 3.0 * (fp - *fy) / (*sty - *stp) + *dy + dp;
            let s = theta.abs().max(dy.abs()).max(dp.abs());
            let mut gamma = s * ((theta / s).powi(2) - (*dy / s) * (dp / s)).max(0.0).sqrt();
            if *stp > *sty {
                gamma = -gamma;
            }
            let p = (gamma - dp) + theta;
            let q = ((gamma - dp) + gamma) + *dy;
            let r = p / q;
            *stp + r * (*sty - *stp)
        } else if *stp > *stx {
            stpmax
        } else {
            stpmin
        };
    }

    if fp > *fx {
        *sty = *stp;
        *fy = fp;
        *dy = dp;
    } else {
        if sgnd < 0.0 {
            *sty = *stx;
            *fy = *fx;
            *dy = *dx;
        }
        *stx = *stp;
        *fx = fp;
        *dx = dp;
    }
    *stp = stpf;
}
