//! Seeded benchmark trials, multi-seed tables, window sweeps and output.
//!
//! A trial draws its initial guess uniformly from `[0, 1)ⁿ` using the trial
//! seed, so every method in a table sees the same starting points. Progress
//! is measured in f/g evaluations until `|f − f*| < fval_tol`; trials that
//! miss the target within the iteration cap are counted as DNF.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{lbfgs_solve, ncg_solve, steepest_descent_solve, DescentConfig, LbfgsConfig};
use crate::error::{Error, Result};
use crate::linesearch::WolfeParams;
use crate::ngmres::{
    ngmres_solve, ngmres_solve_observed, NGmresConfig, SdParams, SteepestDescentFixedStep, SteepestDescentLineSearch,
};
use crate::objective::{ConvergenceHistory, EvalCounter, FvalTarget, Objective, SolveResult, SolveStatus};
use crate::problems::{
    gradient_check, initial_guess, linear_gmres_oracle, make_problem, ProblemKind, ProblemTag, QuadraticSpec, PRNG_ID,
};
use crate::vecops::{norm2, norm_inf};

/// Solvers stop once `‖g‖₂` drops below this, whatever the f-target.
pub const GRAD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    NGmresSdls,
    NGmresSd,
    Ncg,
    Lbfgs,
    Sdls,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::NGmresSdls, Method::NGmresSd, Method::Ncg, Method::Lbfgs, Method::Sdls];

    pub fn label(&self) -> &'static str {
        match self {
            Method::NGmresSdls => "N-GMRES-sdls",
            Method::NGmresSd => "N-GMRES-sd",
            Method::Ncg => "N-CG",
            Method::Lbfgs => "L-BFGS",
            Method::Sdls => "sdls",
        }
    }

    pub fn cli_name(&self) -> &'static str {
        match self {
            Method::NGmresSdls => "ngmres-sdls",
            Method::NGmresSd => "ngmres-sd",
            Method::Ncg => "ncg",
            Method::Lbfgs => "lbfgs",
            Method::Sdls => "sdls",
        }
    }

    pub fn is_ngmres(&self) -> bool {
        matches!(self, Method::NGmresSdls | Method::NGmresSd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.cli_name().eq_ignore_ascii_case(s.trim()) || m.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

pub fn default_iter_cap(tag: ProblemTag) -> usize {
    match tag {
        ProblemTag::A | ProblemTag::B | ProblemTag::C => 1500,
        _ => 500,
    }
}

/// Shared settings for every trial of a table or sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSettings {
    pub window_w: usize,
    pub delta: f64,
    pub fval_tol: f64,
    /// `None` selects the per-problem default.
    pub iter_cap: Option<usize>,
    pub wolfe: WolfeParams,
    pub lbfgs_memory: usize,
}

impl Default for TrialSettings {
    fn default() -> Self {
        Self { window_w: 20, delta: 1e-4, fval_tol: 1e-6, iter_cap: None, wolfe: WolfeParams::default(), lbfgs_memory: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub tag: ProblemTag,
    pub n: usize,
    pub method: Method,
    pub seed: u64,
    pub settings: TrialSettings,
}

impl TrialConfig {
    pub fn new(tag: ProblemTag, n: usize, method: Method, seed: u64) -> Self {
        Self { tag, n, method, seed, settings: TrialSettings::default() }
    }

    /// Problem C instances draw their rotation from the trial seed.
    pub fn problem_kind(&self) -> ProblemKind {
        if self.tag.needs_seed() {
            ProblemKind::with_seed(self.tag, self.n, self.seed)
        } else {
            ProblemKind::new(self.tag, self.n)
        }
    }

    pub fn iter_cap(&self) -> usize {
        self.settings.iter_cap.unwrap_or_else(|| default_iter_cap(self.tag))
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub config: TrialConfig,
    pub x0: Vec<f64>,
    pub f_star: f64,
    pub result: SolveResult,
}

impl TrialOutcome {
    pub fn converged(&self) -> bool {
        self.fg_evals_to_tol().is_some()
    }

    /// Evaluations spent when `|f − f*| < fval_tol` was first met.
    pub fn fg_evals_to_tol(&self) -> Option<u64> {
        let tol = self.config.settings.fval_tol;
        self.result.history.records.iter().find(|r| (r.f_value - self.f_star).abs() < tol).map(|r| r.fg_evals_cumulative)
    }

    pub fn history(&self) -> &ConvergenceHistory {
        &self.result.history
    }

    pub fn summary(&self) -> TrialSummary {
        TrialSummary {
            seed: self.config.seed,
            converged: self.converged(),
            fg_evals_to_tol: self.fg_evals_to_tol(),
            total_fg_evals: self.result.fg_evals,
            iterations: self.result.iterations,
            status: self.result.status,
            final_f: self.result.f,
            final_grad_norm: norm2(&self.result.grad),
            error: self.result.error.as_ref().map(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    pub converged: bool,
    pub fg_evals_to_tol: Option<u64>,
    pub total_fg_evals: u64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub final_f: f64,
    pub final_grad_norm: f64,
    pub error: Option<String>,
}

/// The benchmark target value `f*` for a problem instance.
pub fn target_value(kind: &ProblemKind) -> Result<f64> {
    let problem = make_problem(kind)?;
    match problem.known_optimum() {
        Some((_, f)) => Ok(f),
        None => penalty_reference_value(kind.n),
    }
}

fn reference_cache() -> &'static Mutex<HashMap<usize, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Reference minimum of problem G for dimension `n`.
///
/// Runs L-BFGS and N-CG from two different seeded starts until
/// `‖g‖∞ < 1e-13` (or until no further decrease is possible) and requires
/// the two minima to agree within `1e-10`. Results are cached per `n`.
pub fn penalty_reference_value(n: usize) -> Result<f64> {
    if let Some(v) = reference_cache().lock().expect("cache lock").get(&n) {
        return Ok(*v);
    }
    let problem = make_problem(&ProblemKind::new(ProblemTag::G, n))?;
    let wolfe = WolfeParams::default();
    let mut c1 = EvalCounter::new();
    let lb = lbfgs_solve(
        &problem,
        &LbfgsConfig { max_iters: 20_000, grad_tol: 1e-13, wolfe, ..Default::default() },
        &initial_guess(n, 0),
        &mut c1,
    )?;
    let mut c2 = EvalCounter::new();
    let cg = ncg_solve(
        &problem,
        &DescentConfig { max_iters: 20_000, grad_tol: 1e-13, fval_tol: None, wolfe },
        &initial_guess(n, 1),
        &mut c2,
    )?;
    for r in [&lb, &cg] {
        if r.status == SolveStatus::Failed || norm_inf(&r.grad) > 1e-9 {
            return Err(Error::InvalidProblem(format!(
                "reference run for G (n = {n}) ended with {:?} at ‖g‖∞ = {:e}",
                r.status,
                norm_inf(&r.grad)
            )));
        }
    }
    if (lb.f - cg.f).abs() > 1e-10 {
        return Err(Error::InvalidProblem(format!(
            "reference runs for G (n = {n}) disagree: {} vs {}",
            lb.f, cg.f
        )));
    }
    let v = lb.f.min(cg.f);
    reference_cache().lock().expect("cache lock").insert(n, v);
    Ok(v)
}

fn solve_with(
    obj: &dyn Objective,
    cfg: &TrialConfig,
    target: FvalTarget,
    x0: &[f64],
    counter: &mut EvalCounter,
) -> Result<SolveResult> {
    let s = &cfg.settings;
    let max_iters = cfg.iter_cap();
    let fval_tol = Some(target);
    match cfg.method {
        Method::NGmresSdls | Method::NGmresSd => {
            let config = NGmresConfig { window_w: s.window_w, max_iters, grad_tol: GRAD_FLOOR, fval_tol, wolfe: s.wolfe };
            if cfg.method == Method::NGmresSdls {
                ngmres_solve(obj, &SteepestDescentLineSearch { wolfe: s.wolfe }, &config, x0, counter)
            } else {
                ngmres_solve(obj, &SteepestDescentFixedStep { params: SdParams { delta: s.delta } }, &config, x0, counter)
            }
        }
        Method::Ncg | Method::Sdls => {
            let config = DescentConfig { max_iters, grad_tol: GRAD_FLOOR, fval_tol, wolfe: s.wolfe };
            if cfg.method == Method::Ncg {
                ncg_solve(obj, &config, x0, counter)
            } else {
                steepest_descent_solve(obj, &config, x0, counter)
            }
        }
        Method::Lbfgs => {
            let config = LbfgsConfig { memory_m: s.lbfgs_memory, max_iters, grad_tol: GRAD_FLOOR, fval_tol, wolfe: s.wolfe };
            lbfgs_solve(obj, &config, x0, counter)
        }
    }
}

/// Runs one seeded trial. Deterministic in `cfg`.
pub fn run_trial(cfg: &TrialConfig) -> Result<TrialOutcome> {
    let x0 = initial_guess(cfg.n, cfg.seed);
    run_trial_from(cfg, x0)
}

/// Runs a trial from an explicit starting point.
pub fn run_trial_from(cfg: &TrialConfig, x0: Vec<f64>) -> Result<TrialOutcome> {
    let kind = cfg.problem_kind();
    let problem = make_problem(&kind)?;
    let f_star = target_value(&kind)?;
    let target = FvalTarget { f_star, tol: cfg.settings.fval_tol };
    let mut counter = EvalCounter::new();
    let result = solve_with(&problem, cfg, target, &x0, &mut counter)?;
    Ok(TrialOutcome { config: *cfg, x0, f_star, result })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tag: ProblemTag,
    pub n: usize,
    pub method: Method,
    pub window_w: usize,
    pub trials: usize,
    pub dnf_count: usize,
    /// Mean over converged trials only.
    pub mean_fg_evals_to_tol: Option<f64>,
    /// Mean over all trials, charging DNF trials their total spend; a lower
    /// bound on the true cost whenever DNFs are present.
    pub mean_fg_evals_lower_bound: f64,
    pub f_star: f64,
    pub details: Vec<TrialSummary>,
}

impl RunSummary {
    fn from_outcomes(outcomes: &[TrialOutcome]) -> Self {
        let first = &outcomes[0];
        let details: Vec<TrialSummary> = outcomes.iter().map(TrialOutcome::summary).collect();
        let converged: Vec<u64> = details.iter().filter_map(|d| d.fg_evals_to_tol).collect();
        let mean_fg_evals_to_tol =
            (!converged.is_empty()).then(|| converged.iter().sum::<u64>() as f64 / converged.len() as f64);
        let lower = details.iter().map(|d| d.fg_evals_to_tol.unwrap_or(d.total_fg_evals) as f64).sum::<f64>()
            / details.len() as f64;
        RunSummary {
            tag: first.config.tag,
            n: first.config.n,
            method: first.config.method,
            window_w: first.config.settings.window_w,
            trials: details.len(),
            dnf_count: details.len() - converged.len(),
            mean_fg_evals_to_tol,
            mean_fg_evals_lower_bound: lower,
            f_star: first.f_star,
            details,
        }
    }

    pub fn converged_count(&self) -> usize {
        self.trials - self.dnf_count
    }

    /// `mean(dnf)` as printed in tables; `-` when nothing converged.
    pub fn cell(&self) -> String {
        let mean = self.mean_fg_evals_to_tol.map_or("-".to_string(), |m| format!("{m:.0}"));
        if self.dnf_count > 0 {
            format!("{mean}({})", self.dnf_count)
        } else {
            mean
        }
    }
}

pub fn trial_seeds(seed0: u64, trials: usize) -> Vec<u64> {
    (0..trials as u64).map(|k| seed0 + k).collect()
}

fn run_cell(tag: ProblemTag, n: usize, method: Method, seeds: &[u64], settings: &TrialSettings) -> Result<Vec<TrialOutcome>> {
    let mut outcomes: Vec<TrialOutcome> = seeds
        .par_iter()
        .map(|&seed| run_trial(&TrialConfig { tag, n, method, seed, settings: *settings }))
        .collect::<Result<_>>()?;
    outcomes.sort_by_key(|o| o.config.seed);
    Ok(outcomes)
}

/// One summary per `(row, method)`; every method sees seeds `seed0..seed0+trials`.
pub fn run_table(
    rows: &[(ProblemTag, usize)],
    methods: &[Method],
    trials: usize,
    seed0: u64,
    settings: &TrialSettings,
) -> Result<Vec<RunSummary>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("a table needs at least one trial".into()));
    }
    for (tag, n) in rows {
        if *tag == ProblemTag::G {
            penalty_reference_value(*n)?;
        }
    }
    let seeds = trial_seeds(seed0, trials);
    let mut out = Vec::with_capacity(rows.len() * methods.len());
    for &(tag, n) in rows {
        for &method in methods {
            out.push(RunSummary::from_outcomes(&run_cell(tag, n, method, &seeds, settings)?));
        }
    }
    Ok(out)
}

/// One summary per window size.
pub fn run_window_sweep(
    tag: ProblemTag,
    n: usize,
    method: Method,
    w_values: &[usize],
    trials: usize,
    seed0: u64,
    settings: &TrialSettings,
) -> Result<Vec<RunSummary>> {
    if !method.is_ngmres() {
        return Err(Error::InvalidConfig(format!("window sweep needs an N-GMRES method, got {method}")));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("a sweep needs at least one trial".into()));
    }
    let seeds = trial_seeds(seed0, trials);
    w_values
        .iter()
        .map(|&w| {
            let s = TrialSettings { window_w: w, ..*settings };
            Ok(RunSummary::from_outcomes(&run_cell(tag, n, method, &seeds, &s)?))
        })
        .collect()
}

/// Problem rows of the quadratic-family table (A-C).
pub const QUADRATIC_ROWS: [(ProblemTag, usize); 6] = [
    (ProblemTag::A, 100),
    (ProblemTag::A, 200),
    (ProblemTag::B, 100),
    (ProblemTag::B, 200),
    (ProblemTag::C, 100),
    (ProblemTag::C, 200),
];

/// Problem rows of the least-squares test-function table (D-G).
pub const LEAST_SQUARES_ROWS: [(ProblemTag, usize); 8] = [
    (ProblemTag::D, 500),
    (ProblemTag::D, 1000),
    (ProblemTag::E, 100),
    (ProblemTag::E, 200),
    (ProblemTag::F, 200),
    (ProblemTag::F, 500),
    (ProblemTag::G, 100),
    (ProblemTag::G, 200),
];

/// Everything needed to reproduce a table or sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub prng: String,
    pub seeds: Vec<u64>,
    pub settings: TrialSettings,
    pub grad_floor: f64,
    pub iter_caps: Vec<(ProblemTag, usize, usize)>,
    /// Target values `f*` per problem row.
    pub reference_values: Vec<(ProblemTag, usize, f64)>,
}

impl Manifest {
    pub fn new(summaries: &[RunSummary], seeds: Vec<u64>, settings: &TrialSettings) -> Self {
        let mut reference_values: Vec<(ProblemTag, usize, f64)> = Vec::new();
        let mut iter_caps = Vec::new();
        for s in summaries {
            if !reference_values.iter().any(|(t, n, _)| *t == s.tag && *n == s.n) {
                reference_values.push((s.tag, s.n, s.f_star));
                iter_caps.push((s.tag, s.n, settings.iter_cap.unwrap_or_else(|| default_iter_cap(s.tag))));
            }
        }
        Manifest {
            prng: PRNG_ID.to_string(),
            seeds,
            settings: *settings,
            grad_floor: GRAD_FLOOR,
            iter_caps,
            reference_values,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub manifest: Manifest,
    pub summaries: Vec<RunSummary>,
}

/// Aligned text table: one row per problem, one column per method.
pub fn format_table(summaries: &[RunSummary]) -> String {
    let mut methods: Vec<Method> = Vec::new();
    let mut rows: Vec<(ProblemTag, usize, usize)> = Vec::new();
    for s in summaries {
        if !methods.contains(&s.method) {
            methods.push(s.method);
        }
        if !rows.contains(&(s.tag, s.n, s.window_w)) {
            rows.push((s.tag, s.n, s.window_w));
        }
    }
    let by_window = rows.iter().any(|r| r.0 == rows[0].0 && r.1 == rows[0].1 && r.2 != rows[0].2);
    let mut header = vec!["problem".to_string()];
    header.extend(methods.iter().map(|m| m.label().to_string()));
    let mut lines = vec![header];
    for &(tag, n, w) in &rows {
        let mut line = vec![if by_window { format!("{tag} n={n} w={w}") } else { format!("{tag} n={n}") }];
        for m in &methods {
            let cell = summaries
                .iter()
                .find(|s| s.tag == tag && s.n == n && s.window_w == w && s.method == *m)
                .map_or(String::new(), RunSummary::cell);
            line.push(cell);
        }
        lines.push(line);
    }
    let widths: Vec<usize> =
        (0..lines[0].len()).map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    out
}

pub const HISTORY_CSV_HEADER: &str = "iter,fg_evals,f,log10_abs_f_err,gnorm2,gnorminf,step_kind";

/// Writes one CSV row per outer iteration. `log10_abs_f_err` is `nan`
/// when `f_star` is unknown.
pub fn write_history_csv<W: Write>(mut out: W, history: &ConvergenceHistory, f_star: Option<f64>) -> io::Result<()> {
    writeln!(out, "{HISTORY_CSV_HEADER}")?;
    for r in &history.records {
        let err = f_star.map_or(f64::NAN, |fs| (r.f_value - fs).abs().log10());
        writeln!(
            out,
            "{},{},{:e},{},{:e},{:e},{}",
            r.iter_index,
            r.fg_evals_cumulative,
            r.f_value,
            err,
            r.grad_norm_2,
            r.grad_norm_inf,
            r.step_kind.as_str()
        )?;
    }
    Ok(())
}

/// Linear-residual comparison between N-GMRES-sd and linear GMRES on
/// `½uᵀDu − bᵀu`, `D = diag(1..n)`, `b = D·1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub n: usize,
    pub seed: u64,
    /// `‖b − A û_i‖₂` for every accelerated iterate, in order.
    pub ngmres_residuals: Vec<f64>,
    pub oracle_residuals: Vec<f64>,
    /// Number of leading terms compared (oracle residual above `cutoff`).
    pub compared: usize,
    pub max_rel_diff: f64,
    pub restarts: usize,
}

pub fn gmres_equivalence(n: usize, seed: u64, cutoff: f64) -> Result<EquivalenceReport> {
    let d: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let spec = QuadraticSpec::diagonal(&d, d.clone())?;
    let x0 = initial_guess(n, seed);
    let oracle = linear_gmres_oracle(&spec, &x0, n)?;

    let config = NGmresConfig { window_w: n, max_iters: n, grad_tol: cutoff * 1e-2, ..Default::default() };
    let mut residuals = Vec::new();
    let mut restarts = 0;
    let mut counter = EvalCounter::new();
    ngmres_solve_observed(&spec, &SteepestDescentFixedStep::default(), &config, &x0, &mut counter, |_, report| {
        residuals.push(norm2(&spec.residual(&report.u_hat)));
        if report.step_kind != crate::objective::StepKind::Accelerated {
            restarts += 1;
        }
    })?;

    let compared = oracle.iter().take_while(|r| **r >= cutoff).count().min(residuals.len());
    let max_rel_diff = (0..compared).map(|i| (residuals[i] - oracle[i]).abs() / oracle[i]).fold(0.0, f64::max);
    Ok(EquivalenceReport { n, seed, ngmres_residuals: residuals, oracle_residuals: oracle, compared, max_rel_diff, restarts })
}

/// Worst relative analytic-vs-finite-difference gradient error over seeded
/// random points in `[0, 1)ⁿ`.
pub fn gradient_check_report(tag: ProblemTag, n: usize, points: usize, seed: u64, h: f64) -> Result<f64> {
    let kind = if tag.needs_seed() { ProblemKind::with_seed(tag, n, seed) } else { ProblemKind::new(tag, n) };
    let problem = make_problem(&kind)?;
    let mut worst: f64 = 0.0;
    for k in 0..points as u64 {
        let x = initial_guess(n, seed.wrapping_mul(1000).wrapping_add(k));
        worst = worst.max(gradient_check(&problem, &x, h)?);
    }
    Ok(worst)
}
