//! Least-squares solve for the recombination coefficients.
//!
//! Minimizes `‖r + Σⱼ αⱼ cⱼ‖₂` over `α ∈ Rᵏ` through the normal equations.
//! Columns are first scaled to unit length (zero columns get `αⱼ = 0`), then
//! `(ĈᵀĈ + λI) y = -Ĉᵀr` is solved by Cholesky with `λ = 1e-12 · max diag`,
//! and `αⱼ = yⱼ / ‖cⱼ‖`. Two iterated-Tikhonov corrections against the
//! unregularized equations then remove the bias along well-determined
//! directions while leaving directions with `σ² ≪ λ` damped. Both steps are scale invariant, so scaling the system
//! leaves `α` unchanged, and columns of very different lengths are
//! regularized evenly.
//! If the factorization breaks down, or the regularized solution would do
//! worse than `α = 0`, the zero vector is returned instead.

use crate::error::{Error, Result};
use crate::vecops::{axpy, dot, norm2};

pub const TIKHONOV_SCALE: f64 = 1e-12;
/// Iterated-Tikhonov corrections applied after the regularized solve.
pub const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RecombinationSystem {
    /// The residual at the preliminary iterate.
    pub base_residual: Vec<f64>,
    /// Residual differences, one per window entry.
    pub columns: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recombination {
    pub alphas: Vec<f64>,
    pub residual_norm: f64,
}

impl RecombinationSystem {
    pub fn new(base_residual: Vec<f64>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let sys = Self { base_residual, columns };
        sys.validate()?;
        Ok(sys)
    }

    fn validate(&self) -> Result<()> {
        let n = self.base_residual.len();
        if self.columns.is_empty() {
            return Err(Error::InvalidConfig("recombination system needs at least one column".into()));
        }
        for c in &self.columns {
            if c.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: c.len() });
            }
        }
        let bad = self.base_residual.iter().chain(self.columns.iter().flatten()).find(|v| !v.is_finite());
        if let Some(v) = bad {
            return Err(Error::NumericalFailure { context: "recombination system", value: *v, point: Vec::new() });
        }
        Ok(())
    }

    /// `‖base + Σ alphasⱼ columnsⱼ‖₂`
    pub fn residual_norm(&self, alphas: &[f64]) -> f64 {
        let mut r = self.base_residual.clone();
        for (a, c) in alphas.iter().zip(&self.columns) {
            axpy(*a, c, &mut r);
        }
        norm2(&r)
    }
}

pub fn solve_recombination(sys: &RecombinationSystem) -> Result<Recombination> {
    sys.validate()?;
    let k = sys.columns.len();
    let base_norm = norm2(&sys.base_residual);
    let zero = || Recombination { alphas: vec![0.0; k], residual_norm: base_norm };

    // Equilibrate: solve for yⱼ = ‖cⱼ‖ αⱼ over the nonzero columns only.
    let scales: Vec<f64> = sys.columns.iter().map(|c| norm2(c)).collect();
    let active: Vec<usize> = (0..k).filter(|&j| scales[j] > 0.0 && scales[j].is_finite()).collect();
    let m = active.len();
    if m == 0 {
        return Ok(zero());
    }
    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate().take(a + 1) {
            let v = dot(&sys.columns[i], &sys.columns[j]) / (scales[i] * scales[j]);
            gram[a * m + b] = v;
            gram[b * m + a] = v;
        }
        rhs[a] = -dot(&sys.columns[i], &sys.base_residual) / scales[i];
    }
    let max_diag = (0..m).map(|i| gram[i * m + i]).fold(0.0_f64, f64::max);
    let lambda = TIKHONOV_SCALE * max_diag;
    let mut factor = gram.clone();
    for i in 0..m {
        factor[i * m + i] += lambda;
    }
    if !cholesky_factor(&mut factor, m) {
        return Ok(zero());
    }

    let to_alphas = |y: &[f64]| {
        let mut alphas = vec![0.0; k];
        for (a, &j) in active.iter().enumerate() {
            alphas[j] = y[a] / scales[j];
        }
        alphas
    };
    let mut best: Option<Recombination> = None;
    let mut y = vec![0.0; m];
    let mut target = rhs.clone();
    for _ in 0..=REFINEMENT_STEPS {
        let dy = cholesky_solve(&factor, m, &target);
        for (yi, d) in y.iter_mut().zip(&dy) {
            *yi += d;
        }
        let alphas = to_alphas(&y);
        if !alphas.iter().all(|v| v.is_finite()) {
            break;
        }
        let residual_norm = sys.residual_norm(&alphas);
        if best.as_ref().is_none_or(|b| residual_norm < b.residual_norm) {
            best = Some(Recombination { alphas, residual_norm });
        }
        // Next correction targets the unregularized normal equations.
        for i in 0..m {
            target[i] = rhs[i] - (0..m).map(|j| gram[i * m + j] * y[j]).sum::<f64>();
        }
    }
    match best {
        Some(r) if r.residual_norm <= base_norm => Ok(r),
        _ => Ok(zero()),
    }
}

/// In-place Cholesky factorization of a row-major `k×k` SPD matrix (lower
/// triangle). Returns `false` on a non-positive pivot.
fn cholesky_factor(a: &mut [f64], k: usize) -> bool {
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], k: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            y[i] -= l[i * k + p] * y[p];
        }
        y[i] /= l[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            y[i] -= l[p * k + i] * y[p];
        }
        y[i] /= l[i * k + i];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn solve(base: &[f64], cols: &[&[f64]]) -> Recombination {
        let sys = RecombinationSystem::new(base.to_vec(), cols.iter().map(|c| c.to_vec()).collect()).unwrap();
        solve_recombination(&sys).unwrap()
    }

    #[test]
    fn exact_cancellation_single_column() {
        let r = solve(&[1.0, 0.0], &[&[-1.0, 0.0]]);
        assert_abs_diff_eq!(r.alphas[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.residual_norm, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn two_column_hand_solution() {
        let r = solve(&[1.0, 1.0], &[&[-1.0, 0.0], &[0.0, -1.0]]);
        assert_abs_diff_eq!(r.alphas[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.alphas[1], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.residual_norm, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_right_hand_side_gives_zero_alphas() {
        let r = solve(&[0.0, 0.0], &[&[3.0, 1.0], &[-2.0, 5.0]]);
        assert_eq!(r.alphas, vec![0.0, 0.0]);
        assert_eq!(r.residual_norm, 0.0);
    }

    #[test]
    fn zero_column_is_harmless() {
        let r = solve(&[1.0, 2.0], &[&[0.0, 0.0]]);
        assert_eq!(r.alphas, vec![0.0]);
        assert_abs_diff_eq!(r.residual_norm, 5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn duplicate_columns_are_regularized() {
        let r = solve(&[1.0, 1.0], &[&[-1.0, -1.0], &[-1.0, -1.0]]);
        assert!(r.residual_norm < 1e-6);
        assert!(r.alphas.iter().all(|a| a.is_finite()));
    }

    #[test]
    fn non_finite_input_rejected() {
        let sys = RecombinationSystem { base_residual: vec![f64::NAN], columns: vec![vec![1.0]] };
        assert!(matches!(solve_recombination(&sys), Err(Error::NumericalFailure { .. })));
    }

    fn system() -> impl Strategy<Value = RecombinationSystem> {
        (1usize..=8, 1usize..=4).prop_flat_map(|(n, k)| {
            (prop::collection::vec(-1.0f64..1.0, n), prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), k))
                .prop_map(|(b, c)| RecombinationSystem { base_residual: b, columns: c })
        })
    }

    fn gram_condition(sys: &RecombinationSystem) -> f64 {
        let k = sys.columns.len();
        let g = nalgebra::DMatrix::from_fn(k, k, |i, j| dot(&sys.columns[i], &sys.columns[j]));
        let ev = g.symmetric_eigenvalues();
        let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if lo <= 0.0 { f64::INFINITY } else { hi / lo }
    }

    proptest! {
        #[test]
        fn never_worse_than_zero(sys in system()) {
            let r = solve_recombination(&sys).unwrap();
            prop_assert!(r.residual_norm <= norm2(&sys.base_residual) + 1e-12);
        }

        #[test]
        fn scale_equivariant(sys in system(), exp in prop::sample::select(vec![-6i32, 6])) {
            let gamma = 10f64.powi(exp);
            let scaled = RecombinationSystem {
                base_residual: sys.base_residual.iter().map(|v| v * gamma).collect(),
                columns: sys.columns.iter().map(|c| c.iter().map(|v| v * gamma).collect()).collect(),
            };
            let a = solve_recombination(&sys).unwrap();
            let b = solve_recombination(&scaled).unwrap();
            let tol = 1e-9 * (1.0 + norm2(&sys.base_residual));
            prop_assert!((b.residual_norm - gamma * a.residual_norm).abs() <= gamma * tol);
            // α is only unique (and stable) when the columns are well conditioned.
            if gram_condition(&sys) < 1e6 {
                for (x, y) in a.alphas.iter().zip(&b.alphas) {
                    prop_assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()));
                }
            }
        }
    }
}
