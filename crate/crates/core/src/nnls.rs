//! Non-negative least squares by the Lawson-Hanson active-set method.
//!
//! The solver works on the normal equations: it minimises
//! `0.5 b' G b - h' b` subject to `b >= 0`, where `G = A'A + ridge I` and
//! `h = A'y`. Spline design matrices are narrow (tens of columns), so the Gram
//! form is cheap and lets a ridge term be added without augmenting `A`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, cholesky_solve};

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub coefficients: Vec<f64>,
    /// `G b - h` at the solution.
    pub gradient: Vec<f64>,
    pub iterations: usize,
}

impl NnlsSolution {
    /// Largest KKT violation relative to `scale`: `|g_j|` on the free set and
    /// `max(-g_j, 0)` on the bound set.
    pub fn kkt_violation(&self) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.gradient)
            .map(|(&b, &g)| if b > 0.0 { g.abs() } else { (-g).max(0.0) })
            .fold(0.0, f64::max)
    }
}

/// Solves the Gram-form problem. `gram` is row-major `n x n`.
pub fn nnls_gram(gram: &[f64], rhs: &[f64], max_iter: usize) -> Result<NnlsSolution> {
    let n = rhs.len();
    if gram.len() != n * n {
        return Err(invalid(format!("Gram matrix has {} entries for {n} unknowns", gram.len())));
    }
    if gram.iter().chain(rhs).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite entries in least squares problem"));
    }
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;

    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    // Variables that failed to enter since `x` last changed.
    let mut blocked = vec![false; n];
    let mut iterations = 0;

    let gradient = |x: &[f64]| -> Vec<f64> {
        (0..n).map(|i| (0..n).map(|j| gram[i * n + j] * x[j]).sum::<f64>() - rhs[i]).collect()
    };

    loop {
        let g = gradient(&x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !blocked[j])
            .map(|j| (j, -g[j]))
            .fold(None, |best: Option<(usize, f64)>, c| match best {
                Some(b) if b.1 >= c.1 => Some(b),
                _ => Some(c),
            });
        let Some((enter, push)) = candidate else { break };
        if push <= tol {
            break;
        }
        passive[enter] = true;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::NnlsNotConverged { iterations: max_iter });
            }
            let z = solve_passive(gram, rhs, &passive);
            if (0..n).filter(|&j| passive[j]).all(|j| z[j] > 0.0) {
                x = z;
                blocked.iter_mut().for_each(|b| *b = false);
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut blocking = n;
            for j in (0..n).filter(|&j| passive[j] && z[j] <= 0.0) {
                let ratio = x[j] / (x[j] - z[j]);
                if ratio < alpha {
                    alpha = ratio;
                    blocking = j;
                }
            }
            if alpha == 0.0 && (0..n).all(|j| j == enter || !passive[j] || z[j] > 0.0) {
                // Only the entering variable is infeasible: rounding noise.
                passive[enter] = false;
                blocked[enter] = true;
                break;
            }
            for j in 0..n {
                if passive[j] {
                    x[j] += alpha * (z[j] - x[j]);
                    if j == blocking || x[j] <= 0.0 {
                        x[j] = 0.0;
                        passive[j] = false;
                    }
                }
            }
            blocked.iter_mut().for_each(|b| *b = false);
        }
    }

    let gradient = gradient(&x);
    Ok(NnlsSolution { coefficients: x, gradient, iterations })
}

/// Unconstrained solution on the passive set, zero elsewhere.
fn solve_passive(gram: &[f64], rhs: &[f64], passive: &[bool]) -> Vec<f64> {
    let n = rhs.len();
    let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
    let m = idx.len();
    let mut sub = vec![0.0; m * m];
    let mut b = vec![0.0; m];
    for (a, &i) in idx.iter().enumerate() {
        b[a] = rhs[i];
        for (c, &j) in idx.iter().enumerate() {
            sub[a * m + c] = gram[i * n + j];
        }
    }
    let l = cholesky(&sub, m).or_else(|| {
        let trace: f64 = (0..m).map(|a| sub[a * m + a]).sum();
        let jitter = 1e-12 * (trace / m as f64).max(f64::MIN_POSITIVE);
        for a in 0..m {
            sub[a * m + a] += jitter;
        }
        cholesky(&sub, m)
    });
    let mut out = vec![0.0; n];
    if let Some(l) = l {
        for (a, v) in cholesky_solve(&l, m, &b).into_iter().enumerate() {
            out[idx[a]] = v;
        }
    }
    out
}

/// `min ||A b - y||^2 + ridge ||b||^2` subject to `b >= 0`, with `A` row-major `m x n`.
pub fn nnls(a: &[f64], rows: usize, cols: usize, y: &[f64], ridge: f64, max_iter: usize) -> Result<NnlsSolution> {
    if a.len() != rows * cols || y.len() != rows {
        return Err(invalid(format!("design is {} entries for {rows}x{cols}, response has {}", a.len(), y.len())));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(invalid(format!("ridge must be non-negative, got {ridge}")));
    }
    let mut gram = vec![0.0; cols * cols];
    let mut rhs = vec![0.0; cols];
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        accumulate_row(&mut gram, &mut rhs, row, y[r]);
    }
    for j in 0..cols {
        gram[j * cols + j] += ridge;
    }
    nnls_gram(&gram, &rhs, max_iter)
}

/// Adds `row' row` to `gram` and `row * y` to `rhs`, skipping zero entries.
pub(crate) fn accumulate_row(gram: &mut [f64], rhs: &mut [f64], row: &[f64], y: f64) {
    let cols = row.len();
    for (i, &ri) in row.iter().enumerate() {
        if ri == 0.0 {
            continue;
        }
        rhs[i] += ri * y;
        for (j, &rj) in row.iter().enumerate() {
            if rj != 0.0 {
                gram[i * cols + j] += ri * rj;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unconstrained_optimum_is_feasible() {
        // A = I, y >= 0: the solution is y.
        let a = [1.0, 0.0, 0.0, 1.0];
        let s = nnls(&a, 2, 2, &[3.0, 4.0], 0.0, 20).unwrap();
        assert!((s.coefficients[0] - 3.0).abs() < 1e-12 && (s.coefficients[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn negative_target_clamps_to_zero() {
        let a = [1.0, 0.0, 0.0, 1.0];
        let s = nnls(&a, 2, 2, &[3.0, -4.0], 0.0, 20).unwrap();
        assert_eq!(s.coefficients, vec![3.0, 0.0]);
        assert!(s.kkt_violation() < 1e-12);
    }

    #[test]
    fn zero_response_gives_zero() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let s = nnls(&a, 3, 2, &[0.0; 3], 0.0, 20).unwrap();
        assert_eq!(s.coefficients, vec![0.0, 0.0]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn bad_inputs() {
        assert!(nnls(&[1.0], 1, 1, &[1.0, 2.0], 0.0, 10).is_err());
        assert!(nnls(&[1.0], 1, 1, &[1.0], -1.0, 10).is_err());
        assert!(nnls_gram(&[1.0, 0.0], &[1.0], 10).is_err());
    }

    fn brute_force(a: &[f64], rows: usize, cols: usize, y: &[f64]) -> f64 {
        // Enumerate every support set, solve unconstrained on it, keep feasible minima.
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << cols) {
            let passive: Vec<bool> = (0..cols).map(|j| mask & (1 << j) != 0).collect();
            let mut gram = vec![0.0; cols * cols];
            let mut rhs = vec![0.0; cols];
            for r in 0..rows {
                accumulate_row(&mut gram, &mut rhs, &a[r * cols..(r + 1) * cols], y[r]);
            }
            let z = solve_passive(&gram, &rhs, &passive);
            if z.iter().any(|&v| v < 0.0) {
                continue;
            }
            let obj: f64 = (0..rows)
                .map(|r| {
                    let fit: f64 = (0..cols).map(|j| a[r * cols + j] * z[j]).sum();
                    (fit - y[r]).powi(2)
                })
                .sum();
            best = best.min(obj);
        }
        best
    }

    proptest! {
        #[test]
        fn kkt_and_enumeration(
            (rows, cols, a, y) in (4usize..9, 1usize..5).prop_flat_map(|(r, c)| (
                Just(r), Just(c),
                prop::collection::vec(-2.0f64..2.0, r * c),
                prop::collection::vec(-5.0f64..5.0, r),
            ))
        ) {
            let s = nnls(&a, rows, cols, &y, 0.0, 10 * cols).unwrap();
            let scale = s.gradient.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            prop_assert!(s.coefficients.iter().all(|&b| b >= 0.0));
            prop_assert!(s.kkt_violation() <= 1e-8 * scale, "violation {}", s.kkt_violation());
            let obj: f64 = (0..rows)
                .map(|r| ((0..cols).map(|j| a[r * cols + j] * s.coefficients[j]).sum::<f64>() - y[r]).powi(2))
                .sum();
            let best = brute_force(&a, rows, cols, &y);
            prop_assert!(obj <= best + 1e-9 * (1.0 + best));
        }
    }
}
