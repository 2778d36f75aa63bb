use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use ngmres::baselines::{lbfgs_solve, ncg_solve, steepest_descent_solve, DescentConfig, LbfgsConfig};
use ngmres::harness::{gmres_equivalence, run_trial, Method, TrialConfig};
use ngmres::leastsq::{solve_recombination, RecombinationSystem};
use ngmres::linesearch::{wolfe_conditions_hold, LineSearchStatus};
use ngmres::ngmres::{
    ngmres_solve, ngmres_solve_observed, ngmres_step, NGmresConfig, NGmresState, Preconditioner, Preliminary,
    SteepestDescentFixedStep, SteepestDescentLineSearch, Window,
};
use ngmres::problems::{gradient_check, initial_guess, make_problem, Problem, ProblemKind, ProblemTag};
use ngmres::{evaluate, EvalCounter, Objective, SolveResult, StepKind};
use proptest::prelude::*;

fn problem(tag: ProblemTag, n: usize, seed: u64) -> Problem {
    let kind = if tag.needs_seed() { ProblemKind::with_seed(tag, n, seed) } else { ProblemKind::new(tag, n) };
    make_problem(&kind).unwrap()
}

fn tag_strategy() -> impl Strategy<Value = ProblemTag> {
    prop::sample::select(ProblemTag::ALL.to_vec())
}

/// Counts calls independently of the library counter.
struct Instrumented<'a> {
    inner: &'a dyn Objective,
    calls: Cell<u64>,
}

impl Objective for Instrumented<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        self.calls.set(self.calls.get() + 1);
        self.inner.value_and_gradient(x, g)
    }
}

fn solve_with(method: Method, obj: &dyn Objective, x0: &[f64]) -> (SolveResult, u64) {
    let cfg = NGmresConfig { max_iters: 300, ..Default::default() };
    let desc = DescentConfig { max_iters: 300, ..Default::default() };
    let mut c = EvalCounter::new();
    let res = match method {
        Method::NGmresSdls => ngmres_solve(obj, &SteepestDescentLineSearch::default(), &cfg, x0, &mut c),
        Method::NGmresSd => ngmres_solve(obj, &SteepestDescentFixedStep::default(), &cfg, x0, &mut c),
        Method::Ncg => ncg_solve(obj, &desc, x0, &mut c),
        Method::Lbfgs => lbfgs_solve(obj, &LbfgsConfig { max_iters: 300, ..Default::default() }, x0, &mut c),
        Method::Sdls => steepest_descent_solve(obj, &desc, x0, &mut c),
    };
    (res.unwrap(), c.fg_evals)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_gradient_matches_finite_differences(
        tag in tag_strategy(),
        big in any::<bool>(),
        seed in 0u64..1000,
        x in prop::collection::vec(-1.5f64..1.5, 10),
    ) {
        let n = if big { 10 } else { 4 };
        let p = problem(tag, n, seed);
        let err = gradient_check(&p, &x[..n], 1e-6).unwrap();
        prop_assert!(err <= 1e-5, "{tag} n={n}: relative gradient error {err:e}");
    }

    #[test]
    fn recombination_matches_svd_oracle(
        n in 1usize..=8,
        k in 1usize..=4,
        data in prop::collection::vec(-1.0f64..1.0, 8 * 5),
        log_scale in -6.0f64..6.0,
    ) {
        let s = 10f64.powf(log_scale);
        let base: Vec<f64> = data[..n].iter().map(|v| v * s).collect();
        let columns: Vec<Vec<f64>> = (0..k).map(|j| data[8 * (j + 1)..8 * (j + 1) + n].iter().map(|v| v * s).collect()).collect();
        let sys = RecombinationSystem::new(base.clone(), columns.clone()).unwrap();
        let rec = solve_recombination(&sys).unwrap();

        let a = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
        let rhs = -DVector::from_vec(base.clone());
        let y = a.clone().svd(true, true).solve(&rhs, 1e-14).unwrap();
        let oracle = (&a * y - &rhs).norm();
        let base_norm = rhs.norm();

        prop_assert!(rec.residual_norm <= base_norm * (1.0 + 1e-15));
        prop_assert!((rec.residual_norm - sys.residual_norm(&rec.alphas)).abs() <= 1e-12 * base_norm);
        // Relative to the oracle residual, floored at the data scale for
        // systems whose exact least-squares residual vanishes.
        let scale = oracle.max(base_norm);
        prop_assert!((rec.residual_norm - oracle).abs() <= 1e-8 * scale,
            "residual {} vs oracle {} (base {})", rec.residual_norm, oracle, base_norm);
    }

    #[test]
    fn counter_counts_every_evaluation(tag in prop::sample::select(vec![ProblemTag::A, ProblemTag::C, ProblemTag::D, ProblemTag::F]), seed in 0u64..50) {
        let p = problem(tag, 12, seed);
        let wrapped = Instrumented { inner: &p, calls: Cell::new(0) };
        let x0 = initial_guess(12, seed);
        for method in Method::ALL {
            wrapped.calls.set(0);
            let (res, counted) = solve_with(method, &wrapped, &x0);
            prop_assert_eq!(res.fg_evals, counted, "{}", method);
            prop_assert_eq!(counted, wrapped.calls.get(), "{}", method);
            prop_assert_eq!(res.history.last().unwrap().fg_evals_cumulative, counted, "{}", method);
        }
    }

    #[test]
    fn window_stays_bounded_and_restarts_shrink_it(tag in prop::sample::select(vec![ProblemTag::A, ProblemTag::B, ProblemTag::E, ProblemTag::G]), w in 1usize..6, seed in 0u64..20) {
        let p = problem(tag, 20, seed);
        let cfg = NGmresConfig { window_w: w, max_iters: 150, ..Default::default() };
        let mut violations = Vec::new();
        let mut c = EvalCounter::new();
        ngmres_solve_observed(&p, &SteepestDescentFixedStep::default(), &cfg, &initial_guess(20, seed), &mut c, |st, rep| {
            if st.window.len() > w {
                violations.push(format!("window {} > {w}", st.window.len()));
            }
            if rep.step_kind != StepKind::Accelerated && st.window.len() != 1 {
                violations.push(format!("{:?} left window at {}", rep.step_kind, st.window.len()));
            }
            if rep.step_kind == StepKind::Restart && (rep.accel_slope.is_nan() || rep.accel_slope < 0.0) {
                violations.push(format!("restart with slope {}", rep.accel_slope));
            }
        }).unwrap();
        prop_assert!(violations.is_empty(), "{:?}", violations);
    }
}

#[test]
fn logged_wolfe_steps_reverify() {
    let mut audited = 0;
    for tag in [ProblemTag::A, ProblemTag::B, ProblemTag::D] {
        for method in Method::ALL {
            for seed in 0..3 {
                let out = run_trial(&TrialConfig::new(tag, 50, method, seed)).unwrap();
                for log in &out.history().line_searches {
                    if log.status != LineSearchStatus::WolfeSatisfied {
                        continue;
                    }
                    audited += 1;
                    assert!(
                        wolfe_conditions_hold(log.f0, log.slope0, log.step, log.f_new, log.slope_new, log.c1, log.c2),
                        "{tag} {method} seed {seed}: {log:?}"
                    );
                }
            }
        }
    }
    assert!(audited > 1000, "only {audited} searches audited");
}

#[test]
fn sd_preconditioned_quadratic_reproduces_linear_gmres() {
    for n in [4, 8, 10] {
        for seed in 0..3 {
            let rep = gmres_equivalence(n, seed, 1e-10).unwrap();
            assert!(rep.compared >= n.min(rep.oracle_residuals.len()) - 1, "{rep:?}");
            assert!(rep.max_rel_diff <= 1e-6, "n={n} seed={seed}: {rep:?}");
        }
    }
}

#[test]
fn line_searched_runs_never_increase_f() {
    for tag in [ProblemTag::A, ProblemTag::B, ProblemTag::C, ProblemTag::D, ProblemTag::E, ProblemTag::F, ProblemTag::G] {
        let p = problem(tag, 20, 3);
        let x0 = initial_guess(20, 3);
        for method in Method::ALL.into_iter().filter(|m| *m != Method::NGmresSd) {
            let (res, _) = solve_with(method, &p, &x0);
            for pair in res.history.records.windows(2) {
                assert!(pair[1].f_value <= pair[0].f_value, "{tag} {method}: {:?}", pair);
            }
        }
    }
}

#[test]
fn sdls_preconditioner_and_acceleration_both_descend() {
    let p = problem(ProblemTag::D, 20, 0);
    let cfg = NGmresConfig { max_iters: 200, ..Default::default() };
    let mut c = EvalCounter::new();
    let mut prev = f64::INFINITY;
    let (f0, _) = evaluate(&p, &initial_guess(20, 0), &mut EvalCounter::new()).unwrap();
    prev = prev.min(f0);
    ngmres_solve_observed(&p, &SteepestDescentLineSearch::default(), &cfg, &initial_guess(20, 0), &mut c, |st, rep| {
        assert!(rep.f_bar <= prev, "f(ū) = {} > f(u) = {prev}", rep.f_bar);
        assert!(st.f <= rep.f_bar);
        prev = st.f;
    })
    .unwrap();
}

#[test]
fn sd_accepted_wolfe_steps_do_not_exceed_preliminary_value() {
    for tag in [ProblemTag::A, ProblemTag::D, ProblemTag::F] {
        let p = problem(tag, 30, 1);
        let cfg = NGmresConfig { max_iters: 300, ..Default::default() };
        let mut c = EvalCounter::new();
        ngmres_solve_observed(&p, &SteepestDescentFixedStep::default(), &cfg, &initial_guess(30, 1), &mut c, |st, rep| {
            if let Some(log) = rep.acceleration_search {
                if log.status == LineSearchStatus::WolfeSatisfied {
                    assert!(st.f <= rep.f_bar, "{tag}: {} > {}", st.f, rep.f_bar);
                }
            }
        })
        .unwrap();
    }
}

/// Returns the current point unchanged.
struct Stay;

impl Preconditioner for Stay {
    fn apply(&self, _: &dyn Objective, x: &[f64], f_x: f64, g_x: &[f64], _: &mut EvalCounter) -> ngmres::Result<Preliminary> {
        Ok(Preliminary { x_bar: x.to_vec(), f_bar: f_x, g_bar: g_x.to_vec(), search: None })
    }
    fn name(&self) -> &'static str {
        "stay"
    }
}

#[test]
fn zero_acceleration_restarts_to_a_single_entry() {
    let p = problem(ProblemTag::A, 6, 0);
    let x = initial_guess(6, 0);
    let (f, g) = evaluate(&p, &x, &mut EvalCounter::new()).unwrap();
    let mut state = NGmresState::new(x.clone(), f, g.clone(), 5);
    for _ in 0..3 {
        state.window.push(x.clone(), g.clone());
    }
    assert_eq!(state.window.len(), 4);

    let cfg = NGmresConfig { window_w: 5, ..Default::default() };
    let mut c = EvalCounter::new();
    let rep = ngmres_step(&mut state, &p, &Stay, &cfg, &mut c).unwrap();
    assert_eq!(rep.u_hat, rep.x_bar);
    assert_eq!(rep.accel_slope, 0.0);
    assert_eq!(rep.step_kind, StepKind::Restart);
    assert!(rep.acceleration_search.is_none());
    assert_eq!(state.window.len(), 1);
    assert_eq!(state.x, x);
    assert_eq!(c.fg_evals, 0);
}

#[test]
fn window_evicts_oldest_first() {
    let mut w = Window::new(2, vec![0.0], vec![0.0]);
    w.push(vec![1.0], vec![1.0]);
    w.push(vec![2.0], vec![2.0]);
    let xs: Vec<f64> = w.iter().map(|(x, _)| x[0]).collect();
    assert_eq!(xs, vec![1.0, 2.0]);
}
