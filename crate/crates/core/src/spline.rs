//! M-spline bases.
//!
//! M-splines are B-splines rescaled so each basis function integrates to one.
//! They are non-negative, so non-negative coefficients give non-negative curves.
//! Evaluation uses the recursion
//!
//! ```text
//! M_{i,1}(x) = 1 / (t_{i+1} - t_i)                  on [t_i, t_{i+1})
//! M_{i,k}(x) = k [(x - t_i) M_{i,k-1}(x) + (t_{i+k} - x) M_{i+1,k-1}(x)]
//!              / [(k - 1)(t_{i+k} - t_i)]
//! ```
//!
//! where `k` is the order (degree + 1).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// M-spline basis evaluated at a fixed set of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    knots: Vec<f64>,
    degree: usize,
    eval_points: Vec<f64>,
    /// Row-major `eval_points x n_basis`.
    values: Vec<f64>,
    n_basis: usize,
}

impl SplineBasis {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn eval_points(&self) -> &[f64] {
        &self.eval_points
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn n_points(&self) -> usize {
        self.eval_points.len()
    }

    pub fn row(&self, point: usize) -> &[f64] {
        &self.values[point * self.n_basis..(point + 1) * self.n_basis]
    }

    pub fn value(&self, point: usize, basis: usize) -> f64 {
        self.values[point * self.n_basis + basis]
    }

    /// `B beta` at every evaluation point.
    pub fn evaluate(&self, coefficients: &[f64]) -> Vec<f64> {
        assert_eq!(coefficients.len(), self.n_basis);
        (0..self.n_points())
            .map(|r| self.row(r).iter().zip(coefficients).map(|(b, c)| b * c).sum())
            .collect()
    }
}

/// Clamped knot vector on `[start, end]` with interior knots every `spacing`
/// and both boundary knots repeated `degree + 1` times.
pub fn clamped_uniform_knots(start: f64, end: f64, spacing: f64, degree: usize) -> Result<Vec<f64>> {
    if !(start.is_finite() && end.is_finite() && end > start) {
        return Err(invalid(format!("knot range [{start}, {end}] is empty or not finite")));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(invalid(format!("knot spacing must be positive, got {spacing}")));
    }
    let intervals = libm::round((end - start) / spacing) as usize;
    if intervals == 0 || (start + intervals as f64 * spacing - end).abs() > 1e-9 * (end - start) {
        return Err(invalid(format!("spacing {spacing} does not divide [{start}, {end}]")));
    }
    let mut knots = vec![start; degree + 1];
    knots.extend((1..intervals).map(|j| start + j as f64 * spacing));
    knots.extend(core::iter::repeat_n(end, degree + 1));
    Ok(knots)
}

/// Evaluates every M-spline basis function of the given degree at `eval_points`.
///
/// Points outside `[t_0, t_last]` get a row of zeros. The last knot itself is
/// included in the final non-empty interval.
pub fn mspline_basis(knots: &[f64], degree: usize, eval_points: &[f64]) -> Result<SplineBasis> {
    let order = degree + 1;
    if knots.len() < degree + 2 {
        return Err(invalid(format!("degree {degree} needs at least {} knots, got {}", degree + 2, knots.len())));
    }
    if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("knots must be finite and non-decreasing"));
    }
    if knots[0] == knots[knots.len() - 1] {
        return Err(invalid("knot range has zero width"));
    }
    if eval_points.iter().any(|x| !x.is_finite()) {
        return Err(invalid("evaluation points must be finite"));
    }
    let n_basis = knots.len() - order;
    let mut values = Vec::with_capacity(eval_points.len() * n_basis);
    let mut work = vec![0.0; knots.len()];
    for &x in eval_points {
        eval_all(knots, order, x, &mut work);
        values.extend_from_slice(&work[..n_basis]);
    }
    Ok(SplineBasis { knots: knots.to_vec(), degree, eval_points: eval_points.to_vec(), values, n_basis })
}

/// Index `j` of the knot interval `[t_j, t_{j+1})` holding `x`, with the last
/// non-empty interval closed on the right.
fn locate(knots: &[f64], x: f64) -> Option<usize> {
    let last = knots.len() - 1;
    if x < knots[0] || x > knots[last] {
        return None;
    }
    if x == knots[last] {
        return (0..last).rev().find(|&j| knots[j] < knots[j + 1]);
    }
    (0..last).find(|&j| knots[j] <= x && x < knots[j + 1])
}

/// Fills `out[i]` with `M_{i,order}(x)` for every `i < knots.len() - order`.
fn eval_all(knots: &[f64], order: usize, x: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let Some(j) = locate(knots, x) else { return };
    out[j] = 1.0 / (knots[j + 1] - knots[j]);
    for k in 2..=order {
        let kf = k as f64;
        let count = knots.len() - k;
        for i in 0..count {
            let width = knots[i + k] - knots[i];
            out[i] = if width > 0.0 {
                kf * ((x - knots[i]) * out[i] + (knots[i + k] - x) * out[i + 1]) / ((kf - 1.0) * width)
            } else {
                0.0
            };
        }
        out[count] = 0.0;
    }
}

/// Single basis function `M_{i}` of the given degree at `x`.
pub fn mspline_value(knots: &[f64], degree: usize, i: usize, x: f64) -> f64 {
    let mut work = vec![0.0; knots.len()];
    eval_all(knots, degree + 1, x, &mut work);
    work.get(i).copied().unwrap_or(0.0)
}
