use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ngmres::harness::{
    format_table, gmres_equivalence, gradient_check_report, run_table, run_trial, run_window_sweep, trial_seeds,
    write_history_csv, Manifest, Method, Report, RunSummary, TrialConfig, TrialSettings, LEAST_SQUARES_ROWS,
    QUADRATIC_ROWS,
};
use ngmres::linesearch::{CurvatureRule, WolfeParams};
use ngmres::problems::ProblemTag;
use ngmres::SolveStatus;

#[derive(Parser)]
#[command(name = "ngmres", version, about = "Nonlinear GMRES optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single seeded trial and print its convergence history.
    Run(RunArgs),
    /// Run a multi-seed table over problem rows and methods.
    Table(TableArgs),
    /// Sweep the N-GMRES window size on one problem.
    SweepWindow(SweepArgs),
    /// Compare analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Compare N-GMRES-sd with linear GMRES on a diagonal quadratic.
    GmresEquiv(EquivArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Problems A-C at n = 100, 200.
    Quadratic,
    /// Problems D-G at their benchmark sizes.
    LeastSquares,
    All,
}

#[derive(Args, Clone)]
struct Common {
    /// N-GMRES window size.
    #[arg(long, default_value_t = 20)]
    window: usize,
    /// Fixed step cap for the sd preconditioner.
    #[arg(long, default_value_t = 1e-4)]
    delta: f64,
    /// Convergence target on |f - f*|.
    #[arg(long, default_value_t = 1e-6)]
    fval_tol: f64,
    /// Outer iteration cap (defaults: 1500 for A-C, 500 for D-G).
    #[arg(long)]
    iter_cap: Option<usize>,
    /// Sufficient-decrease coefficient.
    #[arg(long, default_value_t = 1e-4)]
    c1: f64,
    /// Curvature coefficient.
    #[arg(long, default_value_t = 1e-2)]
    c2: f64,
    /// f/g evaluation budget per line search.
    #[arg(long, default_value_t = 20)]
    ls_budget: usize,
    /// Use the strong curvature condition |g'| <= c2|g0'|.
    #[arg(long)]
    strong_wolfe: bool,
    /// L-BFGS memory.
    #[arg(long, default_value_t = 5)]
    memory: usize,
    /// Exit nonzero if any trial fails numerically.
    #[arg(long)]
    strict: bool,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn settings(&self) -> TrialSettings {
        TrialSettings {
            window_w: self.window,
            delta: self.delta,
            fval_tol: self.fval_tol,
            iter_cap: self.iter_cap,
            wolfe: WolfeParams {
                c1: self.c1,
                c2: self.c2,
                max_fg_evals: self.ls_budget,
                curvature: if self.strong_wolfe { CurvatureRule::Strong } else { CurvatureRule::Standard },
                ..WolfeParams::default()
            },
            lbfgs_memory: self.memory,
        }
    }

    fn writer(&self) -> io::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    problem: ProblemTag,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "ngmres-sdls")]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TableArgs {
    /// Row set to run; ignored when --rows is given.
    #[arg(long, value_enum, default_value_t = Preset::All)]
    preset: Preset,
    /// Explicit rows as TAG:N, comma separated (e.g. A:100,D:500).
    #[arg(long, value_delimiter = ',')]
    rows: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "ngmres-sdls,ngmres-sd,ncg,lbfgs,sdls")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// First trial seed; trial k uses seed + k.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value = "A")]
    problem: ProblemTag,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value = "ngmres-sdls")]
    method: Method,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,5,10,20,30")]
    windows: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Problems to check; all when omitted.
    #[arg(long, value_delimiter = ',')]
    problem: Vec<ProblemTag>,
    #[arg(long, value_delimiter = ',', default_value = "4,10")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    h: f64,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

#[derive(Args)]
struct EquivArgs {
    #[arg(long, value_delimiter = ',', default_value = "4,8,10")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    cutoff: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

fn parse_rows(rows: &[String], preset: Preset) -> Result<Vec<(ProblemTag, usize)>, String> {
    if rows.is_empty() {
        return Ok(match preset {
            Preset::Quadratic => QUADRATIC_ROWS.to_vec(),
            Preset::LeastSquares => LEAST_SQUARES_ROWS.to_vec(),
            Preset::All => QUADRATIC_ROWS.iter().chain(&LEAST_SQUARES_ROWS).copied().collect(),
        });
    }
    rows.iter()
        .map(|r| {
            let (t, n) = r.split_once(':').ok_or_else(|| format!("row {r:?} is not TAG:N"))?;
            let tag = t.parse::<ProblemTag>().map_err(|e| e.to_string())?;
            let n = n.parse::<usize>().map_err(|e| format!("row {r:?}: {e}"))?;
            Ok((tag, n))
        })
        .collect()
}

fn emit_report(
    summaries: Vec<RunSummary>,
    seeds: Vec<u64>,
    format: Format,
    common: &Common,
) -> Result<bool, Box<dyn std::error::Error>> {
    let failed = summaries.iter().flat_map(|s| &s.details).any(|d| d.status == SolveStatus::Failed);
    let mut w = common.writer()?;
    match format {
        Format::Table => write!(w, "{}", format_table(&summaries))?,
        Format::Json => {
            let report = Report { manifest: Manifest::new(&summaries, seeds, &common.settings()), summaries };
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
        }
        Format::Csv => {
            writeln!(w, "problem,n,window,method,trials,dnf,mean_fg_evals,mean_fg_evals_lower_bound")?;
            for s in &summaries {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    s.tag,
                    s.n,
                    s.window_w,
                    s.method.cli_name(),
                    s.trials,
                    s.dnf_count,
                    s.mean_fg_evals_to_tol.map_or(String::new(), |m| format!("{m}")),
                    s.mean_fg_evals_lower_bound
                )?;
            }
        }
    }
    w.flush()?;
    Ok(!(common.strict && failed))
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run(a) => {
            let cfg = TrialConfig { tag: a.problem, n: a.n, method: a.method, seed: a.seed, settings: a.common.settings() };
            let out = run_trial(&cfg)?;
            let mut w = a.common.writer()?;
            match a.format {
                Format::Csv => write_history_csv(&mut w, out.history(), Some(out.f_star))?,
                Format::Json => {
                    serde_json::to_writer_pretty(&mut w, &serde_json::json!({
                        "config": cfg,
                        "f_star": out.f_star,
                        "summary": out.summary(),
                    }))?;
                    writeln!(w)?;
                }
                Format::Table => {
                    let s = out.summary();
                    writeln!(w, "problem      {} n={}", cfg.tag, cfg.n)?;
                    writeln!(w, "method       {}", cfg.method)?;
                    writeln!(w, "seed         {}", cfg.seed)?;
                    writeln!(w, "status       {:?}", s.status)?;
                    writeln!(w, "converged    {}", s.converged)?;
                    writeln!(w, "fg to tol    {}", s.fg_evals_to_tol.map_or("-".into(), |v| v.to_string()))?;
                    writeln!(w, "fg total     {}", s.total_fg_evals)?;
                    writeln!(w, "iterations   {}", s.iterations)?;
                    writeln!(w, "f            {:e}", s.final_f)?;
                    writeln!(w, "|g|          {:e}", s.final_grad_norm)?;
                }
            }
            w.flush()?;
            Ok(!(a.common.strict && out.result.status == SolveStatus::Failed))
        }
        Command::Table(a) => {
            let rows = parse_rows(&a.rows, a.preset)?;
            let summaries = run_table(&rows, &a.methods, a.trials, a.seed, &a.common.settings())?;
            emit_report(summaries, trial_seeds(a.seed, a.trials), a.format, &a.common)
        }
        Command::SweepWindow(a) => {
            let summaries =
                run_window_sweep(a.problem, a.n, a.method, &a.windows, a.trials, a.seed, &a.common.settings())?;
            emit_report(summaries, trial_seeds(a.seed, a.trials), a.format, &a.common)
        }
        Command::Gradcheck(a) => {
            let tags = if a.problem.is_empty() { ProblemTag::ALL.to_vec() } else { a.problem };
            let mut ok = true;
            for tag in tags {
                for &n in &a.n {
                    let n = if tag == ProblemTag::D && n % 2 == 1 { n + 1 } else { n };
                    let err = gradient_check_report(tag, n, a.points, a.seed, a.h)?;
                    let pass = err <= a.tol;
                    ok &= pass;
                    println!("{tag} n={n:<5} max_rel_err={err:.3e} {}", if pass { "ok" } else { "FAIL" });
                }
            }
            Ok(ok)
        }
        Command::GmresEquiv(a) => {
            let mut ok = true;
            for &n in &a.n {
                let r = gmres_equivalence(n, a.seed, a.cutoff)?;
                let pass = r.max_rel_diff <= a.tol && r.compared > 0;
                ok &= pass;
                println!(
                    "n={n:<3} compared={:<3} max_rel_diff={:.3e} restarts={} {}",
                    r.compared,
                    r.max_rel_diff,
                    r.restarts,
                    if pass { "ok" } else { "FAIL" }
                );
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
