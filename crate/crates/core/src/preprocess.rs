//! Raw per-minute detector counts to smoothed flow profiles.
//!
//! A detector-day goes through three steps:
//!
//! 1. per-minute counts become hourly equivalents (`count * 3600 / interval`);
//! 2. days with a run of zero counts longer than the threshold are dropped;
//! 3. the remaining series is fitted with a cubic M-spline under non-negative
//!    coefficients (a ridge-stabilised NNLS problem over the present minutes)
//!    and the fit is evaluated on a coarse grid.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::num::NonZeroU32;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nnls::{accumulate_row, nnls_gram, NnlsSolution};
use crate::pec::{ProfileId, ProfileMatrix};
use crate::spline::{clamped_uniform_knots, mspline_basis, SplineBasis};

pub const MINUTES_PER_DAY: usize = 1440;

/// One detector-day of per-minute counts; `None` marks a missing minute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCountSeries {
    pub day: NaiveDate,
    pub location: String,
    counts: Vec<Option<u32>>,
}

impl RawCountSeries {
    pub fn new(day: NaiveDate, location: impl Into<String>, counts: Vec<Option<u32>>) -> Result<Self> {
        if counts.len() != MINUTES_PER_DAY {
            return Err(invalid(format!("a day has {MINUTES_PER_DAY} minutes, got {} counts", counts.len())));
        }
        Ok(Self { day, location: location.into(), counts })
    }

    pub fn counts(&self) -> &[Option<u32>] {
        &self.counts
    }

    pub fn id(&self) -> ProfileId {
        ProfileId::new(self.day, self.location.clone())
    }

    pub fn present(&self) -> usize {
        self.counts.iter().filter(|c| c.is_some()).count()
    }

    /// Hourly-equivalent values, keeping missing minutes missing.
    pub fn hourly(&self, interval_seconds: NonZeroU32) -> Vec<Option<f64>> {
        self.counts.iter().map(|c| c.map(|c| hourly_equivalent(c, interval_seconds))).collect()
    }
}

#[inline]
pub fn hourly_equivalent(count: u32, interval_seconds: NonZeroU32) -> f64 {
    f64::from(count) * 3600.0 / f64::from(interval_seconds.get())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroRunDecision {
    Keep,
    Drop,
}

/// Longest run of consecutive zero counts. Missing minutes end a run.
pub fn longest_zero_run(counts: &[Option<u32>]) -> usize {
    let mut longest = 0;
    let mut run = 0;
    for c in counts {
        if *c == Some(0) {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    longest
}

/// Drops the day iff its longest zero run is strictly longer than `max_zero_minutes`.
pub fn filter_zero_runs(series: &RawCountSeries, max_zero_minutes: usize) -> ZeroRunDecision {
    if longest_zero_run(series.counts()) > max_zero_minutes {
        ZeroRunDecision::Drop
    } else {
        ZeroRunDecision::Keep
    }
}

/// A smoothed hourly-equivalent flow curve on the output grid (vehicles/hour).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowProfile {
    pub day: NaiveDate,
    pub location: String,
    /// Grid labels in minutes since midnight.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl FlowProfile {
    pub fn id(&self) -> ProfileId {
        ProfileId::new(self.day, self.location.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Output grid spacing; the grid sits at left edges `0, g, 2g, ..`.
    pub grid_minutes: u32,
    /// Interior knot spacing.
    pub knot_minutes: u32,
    pub degree: usize,
    /// Ridge weight relative to the mean diagonal of the Gram matrix.
    pub ridge: f64,
    /// Minimum share of present minutes needed to fit.
    pub min_present_fraction: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { grid_minutes: 10, knot_minutes: 60, degree: 3, ridge: 1e-6, min_present_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothFit {
    pub solution: NnlsSolution,
    /// The fitted curve on the output grid.
    pub values: Vec<f64>,
}

/// Fits M-splines with non-negative coefficients and evaluates them on a grid.
#[derive(Debug, Clone)]
pub struct Smoother {
    config: SmoothingConfig,
    fit_basis: SplineBasis,
    grid_basis: SplineBasis,
}

impl Smoother {
    pub fn new(config: SmoothingConfig) -> Result<Self> {
        let day = MINUTES_PER_DAY as u32;
        if config.grid_minutes == 0 || !day.is_multiple_of(config.grid_minutes) {
            return Err(invalid(format!("grid spacing {} must divide {day} minutes", config.grid_minutes)));
        }
        if config.knot_minutes == 0 || !day.is_multiple_of(config.knot_minutes) {
            return Err(invalid(format!("knot spacing {} must divide {day} minutes", config.knot_minutes)));
        }
        if !(config.ridge >= 0.0 && config.ridge.is_finite()) {
            return Err(invalid(format!("ridge must be non-negative, got {}", config.ridge)));
        }
        if !(0.0..=1.0).contains(&config.min_present_fraction) {
            return Err(invalid("minimum present fraction must lie in [0, 1]"));
        }
        let knots = clamped_uniform_knots(0.0, f64::from(day), f64::from(config.knot_minutes), config.degree)?;
        let minutes: Vec<f64> = (0..MINUTES_PER_DAY).map(|t| t as f64).collect();
        let grid: Vec<f64> = (0..day / config.grid_minutes).map(|t| f64::from(t * config.grid_minutes)).collect();
        Ok(Self {
            config,
            fit_basis: mspline_basis(&knots, config.degree, &minutes)?,
            grid_basis: mspline_basis(&knots, config.degree, &grid)?,
        })
    }

    pub fn config(&self) -> &SmoothingConfig {
        &self.config
    }

    /// Basis at minutes `0..1440`.
    pub fn fit_basis(&self) -> &SplineBasis {
        &self.fit_basis
    }

    /// Basis at the output grid.
    pub fn grid_basis(&self) -> &SplineBasis {
        &self.grid_basis
    }

    pub fn grid(&self) -> &[f64] {
        self.grid_basis.eval_points()
    }

    pub fn fit(&self, values: &[Option<f64>]) -> Result<SmoothFit> {
        smooth_profile(values, &self.fit_basis, &self.grid_basis, self.config.ridge, self.config.min_present_fraction)
    }

    pub fn smooth(&self, day: NaiveDate, location: impl Into<String>, values: &[Option<f64>]) -> Result<FlowProfile> {
        let fit = self.fit(values)?;
        Ok(FlowProfile { day, location: location.into(), grid: self.grid().to_vec(), values: fit.values })
    }
}

/// Ridge-penalised NNLS fit of `values` (one entry per row of `basis`, `None`
/// for missing) evaluated through `eval_basis`.
///
/// The effective ridge weight is `ridge` times the mean diagonal of the Gram
/// matrix over present rows, so it does not depend on the basis scaling.
pub fn smooth_profile(
    values: &[Option<f64>],
    basis: &SplineBasis,
    eval_basis: &SplineBasis,
    ridge: f64,
    min_present_fraction: f64,
) -> Result<SmoothFit> {
    if values.len() != basis.n_points() {
        return Err(invalid(format!("{} values for a basis with {} points", values.len(), basis.n_points())));
    }
    if eval_basis.n_basis() != basis.n_basis() {
        return Err(invalid("fit and evaluation bases differ in size"));
    }
    if let Some((i, v)) = values.iter().enumerate().find_map(|(i, v)| v.filter(|v| !(v.is_finite() && *v >= 0.0)).map(|v| (i, v))) {
        return Err(invalid(format!("value {v} at position {i} is negative or not finite")));
    }
    let present = values.iter().filter(|v| v.is_some()).count();
    if (present as f64) < min_present_fraction * values.len() as f64 || present == 0 {
        return Err(Error::InsufficientData(format!("{present} of {} points present", values.len())));
    }

    let m = basis.n_basis();
    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for (r, v) in values.iter().enumerate() {
        if let Some(y) = v {
            accumulate_row(&mut gram, &mut rhs, basis.row(r), *y);
        }
    }
    let mean_diag = (0..m).map(|j| gram[j * m + j]).sum::<f64>() / m as f64;
    for j in 0..m {
        gram[j * m + j] += ridge * mean_diag;
    }
    let solution = nnls_gram(&gram, &rhs, 10 * m)?;
    let values = eval_basis.evaluate(&solution.coefficients);
    Ok(SmoothFit { solution, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum DropReason {
    ZeroRun { longest: usize },
    TooManyMissing { present: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Kept(FlowProfile),
    Dropped(DropReason),
}

/// Zero-run filter, hourly conversion and smoothing for one series.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub interval_seconds: NonZeroU32,
    pub max_zero_minutes: usize,
    pub smoother: Smoother,
}

impl Preprocessor {
    pub fn new(smoothing: SmoothingConfig, max_zero_minutes: usize) -> Result<Self> {
        Ok(Self {
            interval_seconds: NonZeroU32::new(60).expect("non-zero"),
            max_zero_minutes,
            smoother: Smoother::new(smoothing)?,
        })
    }

    pub fn process(&self, series: &RawCountSeries) -> Result<Outcome> {
        if filter_zero_runs(series, self.max_zero_minutes) == ZeroRunDecision::Drop {
            return Ok(Outcome::Dropped(DropReason::ZeroRun { longest: longest_zero_run(series.counts()) }));
        }
        match self.smoother.smooth(series.day, series.location.clone(), &series.hourly(self.interval_seconds)) {
            Ok(profile) => Ok(Outcome::Kept(profile)),
            Err(Error::InsufficientData(_)) => Ok(Outcome::Dropped(DropReason::TooManyMissing { present: series.present() })),
            Err(e) => Err(e),
        }
    }
}

/// Stacks profiles as the columns of a `p x n` matrix, in input order.
pub fn build_matrix(profiles: &[FlowProfile]) -> Result<ProfileMatrix> {
    let first = profiles.first().ok_or_else(|| invalid("no profiles to stack"))?;
    let p = first.grid.len();
    let mut data = Vec::with_capacity(p * profiles.len());
    for (i, prof) in profiles.iter().enumerate() {
        if prof.grid != first.grid || prof.values.len() != p {
            return Err(invalid(format!("profile {i} ({} {}) is on a different grid", prof.day, prof.location)));
        }
        data.extend_from_slice(&prof.values);
    }
    let ids = profiles.iter().map(FlowProfile::id).collect();
    ProfileMatrix::new(p, profiles.len(), data, first.grid.clone(), ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2018, 3, 5).unwrap()
    }

    fn series_with_zero_run(len: usize) -> RawCountSeries {
        let counts = (0..MINUTES_PER_DAY).map(|t| Some(if (100..100 + len).contains(&t) { 0 } else { 7 })).collect();
        RawCountSeries::new(day(), "L1", counts).unwrap()
    }

    #[test]
    fn hourly_examples() {
        let sixty = NonZeroU32::new(60).unwrap();
        assert_eq!(hourly_equivalent(5, sixty), 300.0);
        assert_eq!(hourly_equivalent(0, sixty), 0.0);
        assert_eq!(hourly_equivalent(1, sixty), 60.0);
    }

    #[test]
    fn zero_run_boundary() {
        assert_eq!(filter_zero_runs(&series_with_zero_run(361), 360), ZeroRunDecision::Drop);
        assert_eq!(filter_zero_runs(&series_with_zero_run(360), 360), ZeroRunDecision::Keep);
        assert_eq!(filter_zero_runs(&series_with_zero_run(0), 360), ZeroRunDecision::Keep);
    }

    #[test]
    fn missing_minutes_break_zero_runs() {
        let mut counts = vec![Some(0); MINUTES_PER_DAY];
        for c in counts.iter_mut().step_by(300) {
            *c = None;
        }
        assert_eq!(longest_zero_run(&counts), 299);
    }

    #[test]
    fn series_length_is_checked() {
        assert!(RawCountSeries::new(day(), "L1", vec![Some(1); 1439]).is_err());
    }

    #[test]
    fn zero_series_smooths_to_zero() {
        let s = Smoother::new(SmoothingConfig::default()).unwrap();
        let fit = s.fit(&vec![Some(0.0); MINUTES_PER_DAY]).unwrap();
        assert!(fit.solution.coefficients.iter().all(|&c| c == 0.0));
        assert!(fit.values.iter().all(|&v| v == 0.0));
        assert_eq!(fit.values.len(), 144);
    }

    #[test]
    fn exact_spline_is_recovered() {
        let cfg = SmoothingConfig { ridge: 0.0, ..Default::default() };
        let s = Smoother::new(cfg).unwrap();
        let m = s.fit_basis().n_basis();
        let beta: Vec<f64> = (0..m).map(|j| if j % 5 == 3 { 0.0 } else { 1000.0 + 500.0 * (j as f64 * 0.7).sin() }).collect();
        let y = s.fit_basis().evaluate(&beta);
        let fit = s.fit(&y.iter().map(|&v| Some(v)).collect::<Vec<_>>()).unwrap();
        let grid_truth = s.grid_basis().evaluate(&beta);
        for (a, b) in fit.values.iter().zip(&grid_truth) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let refit = s.fit_basis().evaluate(&fit.solution.coefficients);
        for (a, b) in refit.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn negative_or_sparse_input_is_rejected() {
        let s = Smoother::new(SmoothingConfig::default()).unwrap();
        let mut y = vec![Some(10.0); MINUTES_PER_DAY];
        y[7] = Some(-1.0);
        assert!(matches!(s.fit(&y), Err(Error::InvalidArgument(_))));

        let sparse: Vec<Option<f64>> = (0..MINUTES_PER_DAY).map(|t| if t < 719 { Some(5.0) } else { None }).collect();
        assert!(matches!(s.fit(&sparse), Err(Error::InsufficientData(_))));
        let half: Vec<Option<f64>> = (0..MINUTES_PER_DAY).map(|t| if t < 720 { Some(5.0) } else { None }).collect();
        assert!(s.fit(&half).is_ok());
    }

    #[test]
    fn noisy_fit_satisfies_kkt_and_is_non_negative() {
        let s = Smoother::new(SmoothingConfig::default()).unwrap();
        // Spiky signal with long zero stretches forces active bounds.
        let y: Vec<Option<f64>> = (0..MINUTES_PER_DAY)
            .map(|t| {
                let base = if (300..500).contains(&t) || t > 1300 { 0.0 } else { 600.0 };
                let jitter = ((t * 7919) % 13) as f64 * 60.0;
                if t % 97 == 0 { None } else { Some(base + jitter * (base > 0.0) as u8 as f64) }
            })
            .collect();
        let fit = s.fit(&y).unwrap();
        let scale = fit.solution.gradient.iter().fold(1.0f64, |m, g| m.max(g.abs()));
        assert!(fit.solution.kkt_violation() <= 1e-8 * scale);
        assert!(fit.solution.coefficients.contains(&0.0));
        assert!(fit.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn preprocessor_outcomes() {
        let pre = Preprocessor::new(SmoothingConfig::default(), 360).unwrap();
        assert_eq!(pre.process(&series_with_zero_run(400)).unwrap(), Outcome::Dropped(DropReason::ZeroRun { longest: 400 }));
        let Outcome::Kept(p) = pre.process(&series_with_zero_run(30)).unwrap() else { panic!("dropped") };
        assert_eq!(p.grid.len(), 144);
        assert_eq!(p.grid[1], 10.0);

        let sparse = RawCountSeries::new(day(), "L2", (0..MINUTES_PER_DAY).map(|t| (t % 3 == 0).then_some(4)).collect()).unwrap();
        assert_eq!(pre.process(&sparse).unwrap(), Outcome::Dropped(DropReason::TooManyMissing { present: 480 }));
    }

    #[test]
    fn build_matrix_shapes() {
        let grid: Vec<f64> = (0..144).map(|t| t as f64 * 10.0).collect();
        let prof = |loc: &str, v: f64| FlowProfile { day: day(), location: loc.into(), grid: grid.clone(), values: vec![v; 144] };
        let q = build_matrix(&[prof("L1", 1.0), prof("L2", 2.0)]).unwrap();
        assert_eq!((q.p(), q.n()), (144, 2));
        assert_eq!(q.column(1)[0], 2.0);
        assert_eq!(q.column_ids()[1].location, "L2");
        assert!(build_matrix(&[]).is_err());
        let mut odd = prof("L3", 1.0);
        odd.grid[3] = 31.0;
        assert!(build_matrix(&[prof("L1", 1.0), odd]).is_err());
    }
}
