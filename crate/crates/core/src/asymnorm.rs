//! Asymmetric norms, sample expectiles and the `tau`-variance.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default iteration cap for [`expectile`].
pub const DEFAULT_EXPECTILE_MAX_ITER: usize = 100;

/// An expectile level `tau`, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ExpectileLevel(f64);

impl ExpectileLevel {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(invalid(alloc::format!("expectile level must lie in (0, 1), got {tau}")))
        }
    }

    /// The symmetric level, at which expectiles are means.
    pub const HALF: Self = Self(0.5);

    #[inline]
    pub fn tau(self) -> f64 {
        self.0
    }

    /// Weight given to observations strictly above the expectile.
    #[inline]
    pub fn upper_weight(self) -> f64 {
        self.0
    }

    /// Weight given to observations at or below the expectile.
    #[inline]
    pub fn lower_weight(self) -> f64 {
        1.0 - self.0
    }

    #[inline]
    pub fn weight(self, above: bool) -> f64 {
        if above {
            self.upper_weight()
        } else {
            self.lower_weight()
        }
    }
}

impl TryFrom<f64> for ExpectileLevel {
    type Error = Error;
    fn try_from(tau: f64) -> Result<Self> {
        Self::new(tau)
    }
}

impl From<ExpectileLevel> for f64 {
    fn from(level: ExpectileLevel) -> f64 {
        level.0
    }
}

/// A non-empty, finite univariate sample.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a>(&'a [f64]);

impl<'a> Sample<'a> {
    pub fn new(values: &'a [f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("sample must not be empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(alloc::format!("sample value {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &'a [f64] {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Outcome of the asymmetric weighted least squares iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectileResult {
    pub value: f64,
    pub level: ExpectileLevel,
    /// `above[i]` is true iff element `i` carries weight `tau` (strictly above `value`).
    pub above: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
}

impl ExpectileResult {
    pub fn weight(&self, i: usize) -> f64 {
        self.level.weight(self.above[i])
    }

    pub fn weights(&self) -> Vec<f64> {
        self.above.iter().map(|&a| self.level.weight(a)).collect()
    }

    pub fn n_above(&self) -> usize {
        self.above.iter().filter(|&&a| a).count()
    }
}

/// `|x|^alpha` weighted by `tau` for `x >= 0` and `1 - tau` otherwise. `alpha` must be 1 or 2.
pub fn asym_norm(x: f64, level: ExpectileLevel, alpha: u32) -> Result<f64> {
    let mag = match alpha {
        1 => x.abs(),
        2 => x * x,
        _ => return Err(invalid(alloc::format!("alpha must be 1 or 2, got {alpha}"))),
    };
    Ok(mag * if x >= 0.0 { level.upper_weight() } else { level.lower_weight() })
}

#[inline]
pub(crate) fn asym_sq(x: f64, level: ExpectileLevel) -> f64 {
    x * x * if x >= 0.0 { level.upper_weight() } else { level.lower_weight() }
}

/// Mean asymmetric squared deviation of `values` from `e`.
pub fn asym_loss(values: &[f64], level: ExpectileLevel, e: f64) -> f64 {
    values.iter().map(|&x| asym_sq(x - e, level)).sum::<f64>() / values.len() as f64
}

/// Sample `tau`-expectile by asymmetric weighted least squares.
///
/// Weights start at `tau` for every element, so the first iterate is the mean.
/// The iteration stops once the weight vector repeats. A two-cycle returns the
/// iterate with the smaller loss and `converged = false`; running out of
/// iterations is an error carrying the last iterate.
pub fn expectile(sample: Sample<'_>, level: ExpectileLevel, max_iter: usize) -> Result<ExpectileResult> {
    expectile_of(sample.values(), level, max_iter)
}

pub(crate) fn expectile_of(x: &[f64], level: ExpectileLevel, max_iter: usize) -> Result<ExpectileResult> {
    let n = x.len();
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return Ok(ExpectileResult { value: lo, level, above: vec![false; n], iterations: 0, converged: true });
    }

    let (wp, wm) = (level.upper_weight(), level.lower_weight());
    let mut above = vec![true; n];
    let mut previous: Option<(Vec<bool>, f64)> = None;
    let mut e = f64::NAN;

    for t in 0..max_iter {
        let (mut num, mut den) = (0.0, 0.0);
        for (&v, &a) in x.iter().zip(&above) {
            let w = if a { wp } else { wm };
            num += w * v;
            den += w;
        }
        e = (num / den).clamp(lo, hi);

        let next: Vec<bool> = x.iter().map(|&v| v > e).collect();
        if next == above {
            return Ok(ExpectileResult { value: e, level, above, iterations: t + 1, converged: true });
        }
        if let Some((prev_above, prev_e)) = &previous {
            if *prev_above == next {
                // Two-cycle between `prev_e` and `e`.
                let value = if asym_loss(x, level, *prev_e) < asym_loss(x, level, e) { *prev_e } else { e };
                let above = x.iter().map(|&v| v > value).collect();
                return Ok(ExpectileResult { value, level, above, iterations: t + 1, converged: false });
            }
        }
        previous = Some((core::mem::replace(&mut above, next), e));
    }
    Err(Error::ExpectileNotConverged { iterations: max_iter, last: e })
}

/// Sample `tau`-variance: `(1/n) sum ||x_i - e_tau||^2_{tau,2}`.
pub fn tau_variance(sample: Sample<'_>, level: ExpectileLevel) -> Result<f64> {
    let e = expectile(sample, level, DEFAULT_EXPECTILE_MAX_ITER)?;
    Ok(asym_loss(sample.values(), level, e.value))
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// `L(a) - L(b)` for the summed asymmetric squared loss, written so the
    /// shared parts cancel exactly instead of subtracting two large sums.
    fn loss_diff(x: &[f64], level: ExpectileLevel, a: f64, b: f64) -> f64 {
        x.iter()
            .map(|&v| {
                let (ra, rb) = (v - a, v - b);
                let (wa, wb) = (level.weight(ra >= 0.0), level.weight(rb >= 0.0));
                if wa == wb {
                    wa * (b - a) * (ra + rb)
                } else {
                    wa * ra * ra - wb * rb * rb
                }
            })
            .sum()
    }

    /// Golden-section minimiser of the asymmetric `l2` loss on `[min, max]`.
    pub fn golden_expectile(x: &[f64], level: ExpectileLevel, tol: f64) -> f64 {
        let inv_phi = (libm::sqrt(5.0) - 1.0) / 2.0;
        let mut a = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut b = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        while b - a > tol {
            if loss_diff(x, level, c, d) < 0.0 {
                b = d;
            } else {
                a = c;
            }
            c = b - inv_phi * (b - a);
            d = a + inv_phi * (b - a);
        }
        0.5 * (a + b)
    }
}
