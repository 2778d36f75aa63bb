//! Benchmark objectives A-G and verification oracles.
//!
//! | tag | objective |
//! |-----|-----------|
//! | A | `½(u−1)ᵀD(u−1) + 1`, `D = diag(1..n)` |
//! | B | A composed with the paraboloid map `y₁ = x₁`, `yᵢ = xᵢ − 10x₁²` |
//! | C | B with `D` replaced by `QDQᵀ`, `Q` a seeded random orthogonal matrix |
//! | D | extended Rosenbrock (n even) |
//! | E | Brown almost-linear |
//! | F | trigonometric |
//! | G | penalty function I |
//!
//! D-G are written as `½ Σ tⱼ²` and their gradients as `Σ tⱼ ∂tⱼ/∂u`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::vecops::norm2;

/// PRNG used for every seeded quantity in the crate.
pub const PRNG_ID: &str = "ChaCha8Rng(rand_chacha 0.3) seed_from_u64; stream 0 = initial guess, stream 1 = problem C matrix";

pub(crate) const STREAM_INITIAL_GUESS: u64 = 0;
pub(crate) const STREAM_PROBLEM_MATRIX: u64 = 1;

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProblemTag {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl ProblemTag {
    pub const ALL: [ProblemTag; 7] =
        [ProblemTag::A, ProblemTag::B, ProblemTag::C, ProblemTag::D, ProblemTag::E, ProblemTag::F, ProblemTag::G];

    pub fn needs_seed(self) -> bool {
        self == ProblemTag::C
    }
}

impl fmt::Display for ProblemTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

impl FromStr for ProblemTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(ProblemTag::A),
            "B" => Ok(ProblemTag::B),
            "C" => Ok(ProblemTag::C),
            "D" => Ok(ProblemTag::D),
            "E" => Ok(ProblemTag::E),
            "F" => Ok(ProblemTag::F),
            "G" => Ok(ProblemTag::G),
            other => Err(Error::InvalidProblem(format!("unknown problem tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemKind {
    pub tag: ProblemTag,
    pub n: usize,
    pub seed: Option<u64>,
}

impl ProblemKind {
    pub fn new(tag: ProblemTag, n: usize) -> Self {
        Self { tag, n, seed: None }
    }

    pub fn with_seed(tag: ProblemTag, n: usize, seed: u64) -> Self {
        Self { tag, n, seed: Some(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidProblem("dimension must be positive".into()));
        }
        if self.tag == ProblemTag::D && !self.n.is_multiple_of(2) {
            return Err(Error::InvalidProblem(format!("problem D needs even n, got {}", self.n)));
        }
        if self.tag.needs_seed() && self.seed.is_none() {
            return Err(Error::InvalidProblem("problem C needs a seed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Body {
    Diagonal,
    /// Paraboloid transform over `diag(1..n)` (`None`) or a dense SPD matrix (row-major).
    Paraboloid(Option<Vec<f64>>),
    Rosenbrock,
    BrownAlmostLinear,
    Trigonometric,
    PenaltyI,
}

/// A benchmark objective; immutable after construction.
#[derive(Debug, Clone)]
pub struct Problem {
    kind: ProblemKind,
    body: Body,
}

pub fn make_problem(kind: &ProblemKind) -> Result<Problem> {
    kind.validate()?;
    let body = match kind.tag {
        ProblemTag::A => Body::Diagonal,
        ProblemTag::B => Body::Paraboloid(None),
        ProblemTag::C => Body::Paraboloid(Some(random_spd_matrix(kind.n, kind.seed.unwrap_or_default()))),
        ProblemTag::D => Body::Rosenbrock,
        ProblemTag::E => Body::BrownAlmostLinear,
        ProblemTag::F => Body::Trigonometric,
        ProblemTag::G => Body::PenaltyI,
    };
    Ok(Problem { kind: *kind, body })
}

/// Seeded random orthogonal matrix: the Q factor of a QR factorization of
/// an `n×n` matrix with entries uniform on `[0, 1)`, with column signs
/// chosen so that `R` has a nonnegative diagonal.
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded_rng(seed, STREAM_PROBLEM_MATRIX);
    let mut entries = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        entries.push(rng.gen::<f64>());
    }
    let m = DMatrix::from_row_slice(n, n, &entries);
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q diag(1..n) Qᵀ`, row-major, exactly symmetric.
fn random_spd_matrix(n: usize, seed: u64) -> Vec<f64> {
    let q = random_orthogonal(n, seed);
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| (i + 1) as f64));
    let t = &q * d * q.transpose();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = 0.5 * (t[(i, j)] + t[(j, i)]);
        }
    }
    out
}

impl Problem {
    pub fn kind(&self) -> &ProblemKind {
        &self.kind
    }

    /// The dense operator of problem C (row-major), if any.
    pub fn matrix(&self) -> Option<&[f64]> {
        match &self.body {
            Body::Paraboloid(Some(t)) => Some(t),
            _ => None,
        }
    }
}

impl Objective for Problem {
    fn dim(&self) -> usize {
        self.kind.n
    }

    fn value_and_gradient(&self, u: &[f64], g: &mut [f64]) -> f64 {
        let n = self.kind.n;
        match &self.body {
            Body::Diagonal => {
                let mut f = 1.0;
                for i in 0..n {
                    let d = (i + 1) as f64;
                    let x = u[i] - 1.0;
                    g[i] = d * x;
                    f += 0.5 * d * x * x;
                }
                f
            }
            Body::Paraboloid(matrix) => {
                let x1 = u[0] - 1.0;
                let y: Vec<f64> = (0..n).map(|i| if i == 0 { x1 } else { u[i] - 1.0 - 10.0 * x1 * x1 }).collect();
                let ty: Vec<f64> = match matrix {
                    None => (0..n).map(|i| (i + 1) as f64 * y[i]).collect(),
                    Some(t) => (0..n).map(|i| t[i * n..(i + 1) * n].iter().zip(&y).map(|(a, b)| a * b).sum()).collect(),
                };
                let f = 0.5 * y.iter().zip(&ty).map(|(a, b)| a * b).sum::<f64>() + 1.0;
                g.copy_from_slice(&ty);
                let tail: f64 = ty[1..].iter().sum();
                g[0] -= 20.0 * x1 * tail;
                f
            }
            Body::Rosenbrock => {
                let mut f = 0.0;
                for k in (0..n).step_by(2) {
                    let t_odd = 10.0 * (u[k + 1] - u[k] * u[k]);
                    let t_even = 1.0 - u[k];
                    f += 0.5 * (t_odd * t_odd + t_even * t_even);
                    g[k] = -20.0 * u[k] * t_odd - t_even;
                    g[k + 1] = 10.0 * t_odd;
                }
                f
            }
            Body::BrownAlmostLinear => {
                let sum: f64 = u.iter().sum();
                let nf = n as f64;
                // Products of all entries but one, without division.
                let mut prefix = vec![1.0; n + 1];
                for i in 0..n {
                    prefix[i + 1] = prefix[i] * u[i];
                }
                let mut suffix = vec![1.0; n + 1];
                for i in (0..n).rev() {
                    suffix[i] = suffix[i + 1] * u[i];
                }
                let t_last = prefix[n] - 1.0;
                let mut f = 0.5 * t_last * t_last;
                let mut t_sum = 0.0;
                let mut t = vec![0.0; n];
                for j in 0..n.saturating_sub(1) {
                    t[j] = u[j] + sum - (nf + 1.0);
                    t_sum += t[j];
                    f += 0.5 * t[j] * t[j];
                }
                for k in 0..n {
                    g[k] = t_sum + t[k] + t_last * prefix[k] * suffix[k + 1];
                }
                f
            }
            Body::Trigonometric => {
                let nf = n as f64;
                let cos_sum: f64 = u.iter().map(|v| v.cos()).sum();
                let mut t = vec![0.0; n];
                let mut f = 0.0;
                for j in 0..n {
                    let jf = (j + 1) as f64;
                    t[j] = nf - cos_sum - jf * (1.0 - u[j].cos()) - u[j].sin();
                    f += 0.5 * t[j] * t[j];
                }
                let t_sum: f64 = t.iter().sum();
                for k in 0..n {
                    let kf = (k + 1) as f64;
                    let (s, c) = u[k].sin_cos();
                    g[k] = s * t_sum + t[k] * (-kf * s - c);
                }
                f
            }
            Body::PenaltyI => {
                let a = 1e-5;
                let sq: f64 = u.iter().map(|v| v * v).sum();
                let t_last = sq - 0.25;
                let mut f = 0.5 * t_last * t_last;
                for k in 0..n {
                    let d = u[k] - 1.0;
                    f += 0.5 * a * d * d;
                    g[k] = a * d + 2.0 * t_last * u[k];
                }
                f
            }
        }
    }

    fn known_optimum(&self) -> Option<(Vec<f64>, f64)> {
        let n = self.kind.n;
        match self.kind.tag {
            ProblemTag::A | ProblemTag::B | ProblemTag::C => Some((vec![1.0; n], 1.0)),
            ProblemTag::D | ProblemTag::E => Some((vec![1.0; n], 0.0)),
            ProblemTag::F => Some((vec![0.0; n], 0.0)),
            ProblemTag::G => None,
        }
    }
}

/// Central-difference gradient `(f(x+heₖ) − f(x−heₖ)) / 2h`. Not counted.
pub fn finite_difference_gradient(obj: &dyn Objective, x: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(1e-8..=1e-3).contains(&h) {
        return Err(Error::InvalidConfig(format!("finite difference step must lie in [1e-8, 1e-3], got {h}")));
    }
    let n = obj.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let mut scratch = vec![0.0; n];
    let mut xp = x.to_vec();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        xp[k] = x[k] + h;
        let fp = obj.value_and_gradient(&xp, &mut scratch);
        xp[k] = x[k] - h;
        let fm = obj.value_and_gradient(&xp, &mut scratch);
        xp[k] = x[k];
        let d = (fp - fm) / (2.0 * h);
        if !d.is_finite() {
            return Err(Error::NumericalFailure { context: "finite difference", value: d, point: x.to_vec() });
        }
        out.push(d);
    }
    Ok(out)
}

/// `f(u) = ½uᵀAu − bᵀu` with a symmetric positive definite `A` (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpec {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl QuadraticSpec {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = b.len();
        if a.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: a.len() });
        }
        for i in 0..n {
            if !(a[i * n + i] > 0.0) {
                return Err(Error::InvalidProblem(format!("diagonal entry {i} is not positive")));
            }
            for j in 0..i {
                if (a[i * n + j] - a[j * n + i]).abs() > 1e-12 {
                    return Err(Error::InvalidProblem(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, a, b })
    }

    pub fn diagonal(d: &[f64], b: Vec<f64>) -> Result<Self> {
        let n = d.len();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = d[i];
        }
        Self::new(a, b)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.a[i * self.n..(i + 1) * self.n].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// `b − A x`
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.matvec(x).iter().zip(&self.b).map(|(ax, b)| b - ax).collect()
    }
}

impl Objective for QuadraticSpec {
    fn dim(&self) -> usize {
        self.n
    }

    fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let ax = self.matvec(x);
        let mut f = 0.0;
        for i in 0..self.n {
            g[i] = ax[i] - self.b[i];
            f += 0.5 * x[i] * ax[i] - self.b[i] * x[i];
        }
        f
    }
}

/// Residual norms of non-preconditioned linear GMRES for `A x = b`.
///
/// Entry `i-1` is `min ‖b − A x‖₂` over `x ∈ x0 + K_i(A, r0)`, computed from
/// an explicitly orthonormalized Krylov basis and a dense SVD least-squares
/// solve. The list stops early once the residual vanishes or the Krylov
/// space becomes invariant.
pub fn linear_gmres_oracle(spec: &QuadraticSpec, x0: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = spec.n;
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("Krylov order must be in 1..={n}, got {k}")));
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    let a = DMatrix::from_row_slice(n, n, &spec.a);
    let r0 = DVector::from_vec(spec.residual(x0));
    let r0_norm = r0.norm();
    let mut norms = Vec::with_capacity(k);
    if r0_norm == 0.0 {
        return Ok(norms);
    }

    let mut basis: Vec<DVector<f64>> = vec![&r0 / r0_norm];
    loop {
        let v = DMatrix::from_columns(&basis);
        let av = &a * &v;
        let y = av.clone().svd(true, true).solve(&r0, 1e-14).map_err(|e| Error::InvalidProblem(e.to_string()))?;
        let res = (&r0 - &av * y).norm();
        norms.push(res);
        if norms.len() == k || res <= 1e-14 * r0_norm {
            break;
        }
        let mut w = &a * basis.last().expect("basis is nonempty");
        let w_norm0 = w.norm();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w -= q * c;
            }
        }
        let w_norm = w.norm();
        if w_norm <= 1e-13 * w_norm0 {
            break;
        }
        basis.push(w / w_norm);
    }
    Ok(norms)
}

/// Uniform `[0, 1)ⁿ` initial guess for a trial seed.
pub fn initial_guess(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed, STREAM_INITIAL_GUESS);
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// Relative gradient error `‖g − g_fd‖∞ / max(‖g‖∞, 1)`.
pub fn gradient_check(obj: &dyn Objective, x: &[f64], h: f64) -> Result<f64> {
    let mut g = vec![0.0; obj.dim()];
    obj.value_and_gradient(x, &mut g);
    let fd = finite_difference_gradient(obj, x, h)?;
    let scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let err = g.iter().zip(&fd).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(err / scale)
}

/// Two-norm of `∇f` at `x`.
pub fn grad_norm(obj: &dyn Objective, x: &[f64]) -> f64 {
    let mut g = vec![0.0; obj.dim()];
    obj.value_and_gradient(x, &mut g);
    norm2(&g)
}
