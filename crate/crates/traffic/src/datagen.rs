//! Seeded synthetic detector counts.
//!
//! Each location-day gets a smooth intensity in vehicles per hour,
//!
//! ```text
//! amplitude * day_level * (floor + sum_b height_b * exp(-((t - center_b) / width_b)^2 / 2))
//! ```
//!
//! and per-minute counts are Poisson with mean `intensity / 60`. A chosen
//! fraction of days per location carries an extra pattern (morning peak,
//! evening peak or a raised daytime plateau); those days are returned as
//! ground truth. With `noise = 0` there is no randomness in the counts at all:
//! day-level jitter is off and counts are the rounded intensity.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use pec_core::preprocess::{RawCountSeries, MINUTES_PER_DAY};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    /// Minute of day of the peak.
    pub center: f64,
    /// Standard deviation of the Gaussian shape, minutes.
    pub width: f64,
    /// Peak height above the floor, veh/h.
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    MorningPeak,
    EveningPeak,
    FlatHigh,
}

impl Pattern {
    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::MorningPeak => "morning-peak",
            Pattern::EveningPeak => "evening-peak",
            Pattern::FlatHigh => "flat-high",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pattern {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "morning-peak" => Ok(Pattern::MorningPeak),
            "evening-peak" => Ok(Pattern::EveningPeak),
            "flat-high" => Ok(Pattern::FlatHigh),
            _ => Err(format!("unknown pattern `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtremeSpec {
    /// Fraction of days per affected location that carry the pattern.
    pub fraction: f64,
    pub pattern: Pattern,
    /// Extra bump for the peak patterns; for `flat-high` only `height` is
    /// used, as a plateau between 06:00 and 22:00.
    pub bump: Bump,
    /// Location indices (0-based) that receive extremes; `None` means all.
    pub locations: Option<Vec<usize>>,
}

impl Default for ExtremeSpec {
    fn default() -> Self {
        Self {
            fraction: 0.05,
            pattern: Pattern::EveningPeak,
            bump: Bump { center: 1110.0, width: 60.0, height: 1200.0 },
            locations: None,
        }
    }
}

impl ExtremeSpec {
    fn bump_for(&self) -> Bump {
        match self.pattern {
            Pattern::MorningPeak => Bump { center: 450.0, ..self.bump },
            Pattern::EveningPeak | Pattern::FlatHigh => self.bump,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_days: usize,
    pub n_locations: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Per-location multiplier; defaults to an even spread over [0.6, 1.4].
    pub amplitudes: Option<Vec<f64>>,
    /// Night-time level, veh/h.
    pub floor: f64,
    pub bumps: Vec<Bump>,
    /// Multiplier on bump heights on Saturdays and Sundays.
    pub weekend_factor: f64,
    /// Log-scale standard deviation of day-to-day jitter; 0 disables all noise.
    pub noise: f64,
    /// Fraction of ordinary days per location with a detector outage
    /// (zero counts for eight hours overnight).
    pub outage_fraction: f64,
    pub extremes: ExtremeSpec,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_days: 60,
            n_locations: 14,
            seed: 1,
            start_date: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
            amplitudes: None,
            floor: 60.0,
            bumps: vec![
                Bump { center: 480.0, width: 75.0, height: 900.0 },
                Bump { center: 780.0, width: 180.0, height: 450.0 },
                Bump { center: 1020.0, width: 100.0, height: 800.0 },
            ],
            weekend_factor: 0.5,
            noise: 0.1,
            outage_fraction: 0.0,
            extremes: ExtremeSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InjectedDay {
    pub day: NaiveDate,
    pub location: String,
    pub pattern: Pattern,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    /// Location-major: all days of `L1`, then `L2`, ...
    pub series: Vec<RawCountSeries>,
    pub truth: Vec<InjectedDay>,
}

pub fn location_name(index: usize) -> String {
    format!("L{}", index + 1)
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("synthetic spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_days == 0 || self.n_locations == 0 {
            return bad("n_days and n_locations must be positive".into());
        }
        if let Some(a) = &self.amplitudes {
            if a.len() != self.n_locations {
                return bad(format!("{} amplitudes for {} locations", a.len(), self.n_locations));
            }
            if a.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return bad("amplitudes must be positive".into());
            }
        }
        let all_bumps = self.bumps.iter().chain(std::iter::once(&self.extremes.bump));
        for b in all_bumps {
            if !(b.width.is_finite() && b.width > 0.0 && b.height.is_finite() && b.height > 0.0 && b.center.is_finite()) {
                return bad(format!("bump widths and heights must be positive: {b:?}"));
            }
        }
        if !(self.floor.is_finite() && self.floor >= 0.0) {
            return bad(format!("floor must be non-negative, got {}", self.floor));
        }
        if !(self.weekend_factor.is_finite() && self.weekend_factor >= 0.0) {
            return bad(format!("weekend_factor must be non-negative, got {}", self.weekend_factor));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        for (name, f) in [("extremes.fraction", self.extremes.fraction), ("outage_fraction", self.outage_fraction)] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("{name} must be in [0, 1], got {f}"));
            }
        }
        if let Some(locs) = &self.extremes.locations {
            if let Some(l) = locs.iter().find(|&&l| l >= self.n_locations) {
                return bad(format!("extreme location {l} out of range"));
            }
        }
        Ok(())
    }

    fn amplitude(&self, loc: usize) -> f64 {
        match &self.amplitudes {
            Some(a) => a[loc],
            None if self.n_locations == 1 => 1.0,
            None => 0.6 + 0.8 * loc as f64 / (self.n_locations - 1) as f64,
        }
    }

    pub fn extreme_days_per_location(&self) -> usize {
        (self.extremes.fraction * self.n_days as f64).ceil() as usize
    }
}

/// Intensity in veh/h at minute `t` for the given bumps.
fn intensity(t: f64, floor: f64, bumps: &[Bump]) -> f64 {
    floor + bumps.iter().map(|b| b.height * (-0.5 * ((t - b.center) / b.width).powi(2)).exp()).sum::<f64>()
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_extreme = spec.extreme_days_per_location().min(spec.n_days);
    let affected: Vec<usize> = match &spec.extremes.locations {
        Some(l) => l.clone(),
        None => (0..spec.n_locations).collect(),
    };

    // Day selections first, so they do not depend on the count draws.
    let mut extreme = vec![vec![false; spec.n_days]; spec.n_locations];
    for &loc in &affected {
        for d in sample(&mut rng, spec.n_days, n_extreme) {
            extreme[loc][d] = true;
        }
    }
    let mut outage = vec![vec![false; spec.n_days]; spec.n_locations];
    for loc in 0..spec.n_locations {
        let ordinary: Vec<usize> = (0..spec.n_days).filter(|&d| !extreme[loc][d]).collect();
        let k = (spec.outage_fraction * ordinary.len() as f64).round() as usize;
        for i in sample(&mut rng, ordinary.len(), k) {
            outage[loc][ordinary[i]] = true;
        }
    }

    let jitter = LogNormal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut series = Vec::with_capacity(spec.n_days * spec.n_locations);
    let mut truth = Vec::new();
    for loc in 0..spec.n_locations {
        let name = location_name(loc);
        for d in 0..spec.n_days {
            let day = spec.start_date + Duration::days(d as i64);
            let weekend = matches!(day.weekday(), Weekday::Sat | Weekday::Sun);
            let draw = |rng: &mut ChaCha8Rng| if spec.noise > 0.0 { jitter.sample(rng) } else { 1.0 };

            let level = spec.amplitude(loc) * draw(&mut rng);
            let scale = if weekend { spec.weekend_factor } else { 1.0 };
            let mut bumps: Vec<Bump> =
                spec.bumps.iter().map(|b| Bump { height: b.height * scale * draw(&mut rng), ..*b }).collect();
            let mut plateau = 0.0;
            if extreme[loc][d] {
                let pattern = spec.extremes.pattern;
                match pattern {
                    Pattern::FlatHigh => plateau = spec.extremes.bump.height * draw(&mut rng),
                    _ => {
                        let b = spec.extremes.bump_for();
                        bumps.push(Bump { height: b.height * draw(&mut rng), ..b });
                    }
                }
                truth.push(InjectedDay { day, location: name.clone(), pattern });
            }

            let counts = (0..MINUTES_PER_DAY)
                .map(|t| {
                    if outage[loc][d] && t < 480 {
                        return Some(0);
                    }
                    let tf = t as f64;
                    let lift = if (360.0..1320.0).contains(&tf) { plateau } else { 0.0 };
                    let mean = level * (intensity(tf, spec.floor, &bumps) + lift) / 60.0;
                    let c = if spec.noise > 0.0 && mean > 0.0 {
                        Poisson::new(mean).map(|p| p.sample(&mut rng)).unwrap_or(mean.round())
                    } else {
                        mean.round()
                    };
                    Some(c.clamp(0.0, u32::MAX as f64) as u32)
                })
                .collect();
            series.push(RawCountSeries::new(day, name.clone(), counts)?);
        }
    }
    truth.sort();
    Ok(SynthData { series, truth })
}

pub fn write_truth<W: std::io::Write>(writer: W, truth: &[InjectedDay]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "location", "pattern"])?;
    for t in truth {
        w.write_record([t.day.format("%Y-%m-%d").to_string().as_str(), &t.location, t.pattern.as_str()])?;
    }
    w.flush().map_err(|e| Error::io("<truth>", e))?;
    Ok(())
}
