//! C ABI over the `ngmres` optimizer library.
//!
//! Every function returns an [`NgmresStatus`] (or a plain value for trivial
//! accessors), never unwinds across the boundary, and records a message that
//! [`ngmres_last_error`] retrieves. Problems and results are opaque handles
//! owned by the caller and released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_void};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ngmres::baselines::{lbfgs_solve, ncg_solve, steepest_descent_solve, DescentConfig, LbfgsConfig};
use ngmres::linesearch::{CurvatureRule, WolfeParams};
use ngmres::ngmres::{
    ngmres_solve, NGmresConfig, SdParams, SteepestDescentFixedStep, SteepestDescentLineSearch,
};
use ngmres::objective::FvalTarget;
use ngmres::problems::{make_problem, Problem, ProblemKind, ProblemTag};
use ngmres::{Error, EvalCounter, Objective, SolveResult, SolveStatus, StepKind};

/// Return code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NgmresStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidProblem = 3,
    InvalidConfig = 4,
    DimensionMismatch = 5,
    NumericalFailure = 6,
    NotDescentDirection = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NgmresProblemTag {
    A = 0,
    B = 1,
    C = 2,
    D = 3,
    E = 4,
    F = 5,
    G = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NgmresMethod {
    /// N-GMRES with the line-searched steepest-descent preconditioner.
    NgmresSdls = 0,
    /// N-GMRES with the fixed-step steepest-descent preconditioner.
    NgmresSd = 1,
    Ncg = 2,
    Lbfgs = 3,
    /// Stand-alone steepest descent with line search.
    Sdls = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NgmresSolveStatus {
    GradTol = 0,
    FvalTol = 1,
    MaxIters = 2,
    Stalled = 3,
    Failed = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NgmresStepKind {
    Initial = 0,
    Precondition = 1,
    Accelerated = 2,
    Restart = 3,
    Descent = 4,
}

/// Solver settings. Obtain defaults from [`ngmres_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NgmresConfig {
    pub window_w: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// When nonzero, also stop once `|f - f_star| < fval_tol`.
    pub use_fval_target: u8,
    pub f_star: f64,
    pub fval_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub initial_step: f64,
    pub max_ls_evals: usize,
    /// When nonzero, use the strong curvature condition.
    pub strong_wolfe: u8,
    /// Step bound of the fixed-step preconditioner.
    pub delta: f64,
    pub lbfgs_memory: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgmresIterationRecord {
    pub iter_index: usize,
    pub fg_evals_cumulative: u64,
    pub f_value: f64,
    pub grad_norm_2: f64,
    pub grad_norm_inf: f64,
    pub step_kind: NgmresStepKind,
}

/// `f(x)` with the gradient written to `grad`; both arrays have length `n`.
pub type NgmresObjectiveFn = Option<unsafe extern "C" fn(x: *const f64, grad: *mut f64, n: usize, user_data: *mut c_void) -> f64>;

struct Callback {
    n: usize,
    f: unsafe extern "C" fn(*const f64, *mut f64, usize, *mut c_void) -> f64,
    user_data: *mut c_void,
}

impl Objective for Callback {
    fn dim(&self) -> usize {
        self.n
    }
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        // SAFETY: the caller of `ngmres_problem_from_callback` promised a
        // function valid for arrays of length `n`.
        unsafe { (self.f)(x.as_ptr(), grad.as_mut_ptr(), self.n, self.user_data) }
    }
}

enum Body {
    Builtin(Problem),
    Callback(Callback),
}

/// Opaque objective handle.
pub struct NgmresProblem {
    body: Body,
}

impl NgmresProblem {
    fn objective(&self) -> &dyn Objective {
        match &self.body {
            Body::Builtin(p) => p,
            Body::Callback(c) => c,
        }
    }
}

/// Opaque solver output.
pub struct NgmresResult {
    inner: SolveResult,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> NgmresStatus {
    match err {
        Error::NumericalFailure { .. } => NgmresStatus::NumericalFailure,
        Error::NotDescentDirection { .. } => NgmresStatus::NotDescentDirection,
        Error::AlreadyStationary => NgmresStatus::InvalidArgument,
        Error::InvalidProblem(_) => NgmresStatus::InvalidProblem,
        Error::InvalidConfig(_) => NgmresStatus::InvalidConfig,
        Error::DimensionMismatch { .. } => NgmresStatus::DimensionMismatch,
    }
}

fn fail(err: Error) -> NgmresStatus {
    set_error(err.to_string());
    status_of(&err)
}

/// Runs `body`, converting panics into [`NgmresStatus::Panic`].
fn guard(body: impl FnOnce() -> NgmresStatus) -> NgmresStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            NgmresStatus::Panic
        }
    }
}

fn null(what: &str) -> NgmresStatus {
    set_error(format!("{what} is null"));
    NgmresStatus::NullPointer
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ngmres_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a built-in benchmark problem. `seed` is used by problem C only.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ngmres_problem_new(tag: NgmresProblemTag, n: usize, seed: u64, out: *mut *mut NgmresProblem) -> NgmresStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let tag = match tag {
            NgmresProblemTag::A => ProblemTag::A,
            NgmresProblemTag::B => ProblemTag::B,
            NgmresProblemTag::C => ProblemTag::C,
            NgmresProblemTag::D => ProblemTag::D,
            NgmresProblemTag::E => ProblemTag::E,
            NgmresProblemTag::F => ProblemTag::F,
            NgmresProblemTag::G => ProblemTag::G,
        };
        let kind = if tag.needs_seed() { ProblemKind::with_seed(tag, n, seed) } else { ProblemKind::new(tag, n) };
        match make_problem(&kind) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(NgmresProblem { body: Body::Builtin(p) }));
                NgmresStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Wraps a caller-supplied objective of dimension `n`.
///
/// # Safety
/// `f` must be safe to call with arrays of length `n` and `user_data` for as
/// long as the problem handle lives. `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ngmres_problem_from_callback(
    n: usize,
    f: NgmresObjectiveFn,
    user_data: *mut c_void,
    out: *mut *mut NgmresProblem,
) -> NgmresStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let Some(f) = f else {
            return null("objective function");
        };
        if n == 0 {
            set_error("dimension must be positive");
            return NgmresStatus::InvalidArgument;
        }
        *out = Box::into_raw(Box::new(NgmresProblem { body: Body::Callback(Callback { n, f, user_data }) }));
        NgmresStatus::Ok
    })
}

/// # Safety
/// `problem` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ngmres_problem_free(problem: *mut NgmresProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Dimension of `problem`, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ngmres_problem_dim(problem: *const NgmresProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.objective().dim())
}

/// Evaluates `f(x)` into `f_out` and `∇f(x)` into `grad_out` (length `n`).
///
/// # Safety
/// `x` and `grad_out` must be valid for `n` doubles, `f_out` for one.
#[no_mangle]
pub unsafe extern "C" fn ngmres_problem_eval(
    problem: *const NgmresProblem,
    x: *const f64,
    n: usize,
    f_out: *mut f64,
    grad_out: *mut f64,
) -> NgmresStatus {
    guard(|| {
        let Some(p) = problem.as_ref() else { return null("problem") };
        if x.is_null() || f_out.is_null() || grad_out.is_null() {
            return null("argument");
        }
        let obj = p.objective();
        if n != obj.dim() {
            return fail(Error::DimensionMismatch { expected: obj.dim(), got: n });
        }
        let x = slice::from_raw_parts(x, n);
        let g = slice::from_raw_parts_mut(grad_out, n);
        *f_out = obj.value_and_gradient(x, g);
        NgmresStatus::Ok
    })
}

#[no_mangle]
pub extern "C" fn ngmres_config_default() -> NgmresConfig {
    let w = WolfeParams::default();
    let n = NGmresConfig::default();
    NgmresConfig {
        window_w: n.window_w,
        max_iters: n.max_iters,
        grad_tol: n.grad_tol,
        use_fval_target: 0,
        f_star: 0.0,
        fval_tol: 1e-6,
        c1: w.c1,
        c2: w.c2,
        initial_step: w.initial_step,
        max_ls_evals: w.max_fg_evals,
        strong_wolfe: 0,
        delta: SdParams::default().delta,
        lbfgs_memory: LbfgsConfig::default().memory_m,
    }
}

fn run(obj: &dyn Objective, method: NgmresMethod, cfg: &NgmresConfig, x0: &[f64]) -> ngmres::Result<SolveResult> {
    let wolfe = WolfeParams {
        c1: cfg.c1,
        c2: cfg.c2,
        initial_step: cfg.initial_step,
        max_fg_evals: cfg.max_ls_evals,
        curvature: if cfg.strong_wolfe != 0 { CurvatureRule::Strong } else { CurvatureRule::Standard },
    };
    let fval_tol = (cfg.use_fval_target != 0).then_some(FvalTarget { f_star: cfg.f_star, tol: cfg.fval_tol });
    let mut counter = EvalCounter::new();
    let descent = DescentConfig { max_iters: cfg.max_iters, grad_tol: cfg.grad_tol, fval_tol, wolfe };
    match method {
        NgmresMethod::NgmresSdls | NgmresMethod::NgmresSd => {
            let config = NGmresConfig { window_w: cfg.window_w, max_iters: cfg.max_iters, grad_tol: cfg.grad_tol, fval_tol, wolfe };
            if method == NgmresMethod::NgmresSdls {
                ngmres_solve(obj, &SteepestDescentLineSearch { wolfe }, &config, x0, &mut counter)
            } else {
                let pre = SteepestDescentFixedStep { params: SdParams { delta: cfg.delta } };
                ngmres_solve(obj, &pre, &config, x0, &mut counter)
            }
        }
        NgmresMethod::Ncg => ncg_solve(obj, &descent, x0, &mut counter),
        NgmresMethod::Sdls => steepest_descent_solve(obj, &descent, x0, &mut counter),
        NgmresMethod::Lbfgs => {
            let config = LbfgsConfig { memory_m: cfg.lbfgs_memory, max_iters: cfg.max_iters, grad_tol: cfg.grad_tol, fval_tol, wolfe };
            lbfgs_solve(obj, &config, x0, &mut counter)
        }
    }
}

/// Minimizes `problem` from `x0` (length `n`). `config` may be null for
/// defaults. On success `*out` receives a result handle, also when the run
/// itself ended with [`NgmresSolveStatus::Failed`].
///
/// # Safety
/// `problem` must be a live handle, `x0` valid for `n` doubles, `config` null
/// or valid, and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ngmres_solve_problem(
    problem: *const NgmresProblem,
    method: NgmresMethod,
    config: *const NgmresConfig,
    x0: *const f64,
    n: usize,
    out: *mut *mut NgmresResult,
) -> NgmresStatus {
    guard(|| {
        let Some(p) = problem.as_ref() else { return null("problem") };
        if x0.is_null() || out.is_null() {
            return null("argument");
        }
        let cfg = config.as_ref().copied().unwrap_or_else(|| ngmres_config_default());
        let x0 = slice::from_raw_parts(x0, n);
        match run(p.objective(), method, &cfg, x0) {
            Ok(inner) => {
                if let Some(e) = &inner.error {
                    set_error(e.to_string());
                }
                *out = Box::into_raw(Box::new(NgmresResult { inner }));
                NgmresStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `result` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ngmres_result_free(result: *mut NgmresResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Length of the solution vector, or 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ngmres_result_dim(result: *const NgmresResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.x.len())
}

/// Copies the final iterate into `x_out` (length `n`, must equal the dimension).
///
/// # Safety
/// `result` must be a live handle and `x_out` valid for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ngmres_result_x(result: *const NgmresResult, x_out: *mut f64, n: usize) -> NgmresStatus {
    guard(|| {
        let Some(r) = result.as_ref() else { return null("result") };
        if x_out.is_null() {
            return null("x_out");
        }
        if n != r.inner.x.len() {
            return fail(Error::DimensionMismatch { expected: r.inner.x.len(), got: n });
        }
        slice::from_raw_parts_mut(x_out, n).copy_from_slice(&r.inner.x);
        NgmresStatus::Ok
    })
}

/// Final objective value, NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ngmres_result_f(result: *const NgmresResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.f)
}

/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ngmres_result_status(result: *const NgmresResult, out: *mut NgmresSolveStatus) -> NgmresStatus {
    guard(|| {
        let Some(r) = result.as_ref() else { return null("result") };
        if out.is_null() {
            return null("out");
        }
        *out = match r.inner.status {
            SolveStatus::GradTol => NgmresSolveStatus::GradTol,
            SolveStatus::FvalTol => NgmresSolveStatus::FvalTol,
            SolveStatus::MaxIters => NgmresSolveStatus::MaxIters,
            SolveStatus::Stalled => NgmresSolveStatus::Stalled,
            SolveStatus::Failed => NgmresSolveStatus::Failed,
        };
        NgmresStatus::Ok
    })
}

/// Total f/g evaluations, 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ngmres_result_fg_evals(result: *const NgmresResult) -> u64 {
    result.as_ref().map_or(0, |r| r.inner.fg_evals)
}

/// Outer iterations performed, 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ngmres_result_iterations(result: *const NgmresResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.iterations)
}

/// Number of history records (initial point included), 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ngmres_result_history_len(result: *const NgmresResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.history.records.len())
}

/// Copies history record `index` into `out`.
///
/// # Safety
/// `result` must be a live handle and `out` valid for one record.
#[no_mangle]
pub unsafe extern "C" fn ngmres_result_history(result: *const NgmresResult, index: usize, out: *mut NgmresIterationRecord) -> NgmresStatus {
    guard(|| {
        let Some(r) = result.as_ref() else { return null("result") };
        if out.is_null() {
            return null("out");
        }
        let Some(rec) = r.inner.history.records.get(index) else {
            set_error(format!("history index {index} out of range ({} records)", r.inner.history.records.len()));
            return NgmresStatus::InvalidArgument;
        };
        *out = NgmresIterationRecord {
            iter_index: rec.iter_index,
            fg_evals_cumulative: rec.fg_evals_cumulative,
            f_value: rec.f_value,
            grad_norm_2: rec.grad_norm_2,
            grad_norm_inf: rec.grad_norm_inf,
            step_kind: match rec.step_kind {
                StepKind::Initial => NgmresStepKind::Initial,
                StepKind::Precondition => NgmresStepKind::Precondition,
                StepKind::Accelerated => NgmresStepKind::Accelerated,
                StepKind::Restart => NgmresStepKind::Restart,
                StepKind::Descent => NgmresStepKind::Descent,
            },
        };
        NgmresStatus::Ok
    })
}
