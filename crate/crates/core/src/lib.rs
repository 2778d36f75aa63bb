//! Nonlinear GMRES (N-GMRES) optimization with steepest-descent preconditioning.
//!
//! The crate is organised bottom-up:
//!
//! * [`objective`]: the f/g evaluation contract, evaluation counting and run telemetry.
//! * [`linesearch`]: a Moré-Thuente style search returning Wolfe steps.
//! * [`leastsq`]: the small regularized least-squares solve for recombination coefficients.
//! * [`ngmres`]: the three-step driver, preconditioners and the iterate window.
//! * [`baselines`]: steepest descent, Polak-Ribière N-CG and two-loop L-BFGS.
//! * [`problems`]: benchmark objectives A-G, finite differences and a linear GMRES oracle.
//! * [`harness`]: seeded trials, tables, window sweeps and output formats.

// `!(a < b)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod harness;
pub mod leastsq;
pub mod linesearch;
pub mod ngmres;
pub mod objective;
pub mod problems;
pub mod vecops;

pub use error::{Error, Result};
pub use objective::{
    evaluate, ConvergenceHistory, EvalCounter, IterationRecord, LineSearchLog, Objective,
    SearchRole, SolveResult, SolveStatus, StepKind,
};
