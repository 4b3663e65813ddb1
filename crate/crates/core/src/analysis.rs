//! Post-fit analytics: directional-extreme labels, membership proportions,
//! plus/minus effect curves and weekday x time-of-day summaries.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::num::NonZeroU32;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pec::{PecModel, ProfileId};
use crate::preprocess::{hourly_equivalent, RawCountSeries, MINUTES_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Plus => "plus",
            Side::Minus => "minus",
        })
    }
}

/// The high-weight side at level `tau`. `tau = 0.5` has none; plus is used by convention.
pub fn extreme_side(tau: f64) -> Side {
    if tau >= 0.5 {
        Side::Plus
    } else {
        Side::Minus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeLabel {
    pub profile: ProfileId,
    pub component: usize,
    pub tau: f64,
    pub side: Side,
    pub is_extreme: bool,
}

/// One label per (component, profile), ordered by component then column.
pub fn label_extremes(model: &PecModel) -> Vec<ExtremeLabel> {
    let tau = model.level.tau();
    let extreme = extreme_side(tau);
    let mut out = Vec::with_capacity(model.k() * model.n);
    for comp in &model.components {
        let mut plus = vec![false; model.n];
        for &i in &comp.partition.plus_set {
            plus[i] = true;
        }
        for (i, id) in model.column_ids.iter().enumerate() {
            let side = if plus[i] { Side::Plus } else { Side::Minus };
            out.push(ExtremeLabel { profile: id.clone(), component: comp.order, tau, side, is_extreme: side == extreme });
        }
    }
    out
}

/// Day of week, Monday first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DayOfWeek(u8);

impl DayOfWeek {
    pub const NAMES: [&'static str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

    pub fn of(day: chrono::NaiveDate) -> Self {
        Self(day.weekday().num_days_from_monday() as u8)
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }
}

impl fmt::Display for DayOfWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(Self::NAMES[self.index()])
    }
}

pub fn group_by_location(ids: &[ProfileId]) -> BTreeMap<ProfileId, alloc::string::String> {
    ids.iter().map(|id| (id.clone(), id.location.clone())).collect()
}

pub fn group_by_weekday(ids: &[ProfileId]) -> BTreeMap<ProfileId, DayOfWeek> {
    ids.iter().map(|id| (id.clone(), DayOfWeek::of(id.day))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionRow<G> {
    pub group: G,
    pub component: usize,
    pub tau: f64,
    pub n: usize,
    pub n_plus: usize,
    pub n_minus: usize,
    pub plus_share: f64,
    pub minus_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionTable<G> {
    /// Sorted by group, then `tau`, then component.
    pub rows: Vec<ProportionRow<G>>,
}

impl<G: Ord> ProportionTable<G> {
    pub fn get(&self, group: &G, component: usize, tau: f64) -> Option<&ProportionRow<G>> {
        self.rows.iter().find(|r| &r.group == group && r.component == component && r.tau == tau)
    }
}

/// Share of each group's profiles in the plus and minus sets, per (component, tau).
pub fn membership_proportions<G: Ord + Clone>(
    labels: &[ExtremeLabel],
    groups: &BTreeMap<ProfileId, G>,
) -> Result<ProportionTable<G>> {
    // Keyed on the bit pattern of tau so the map stays Ord; tau is always finite.
    let mut counts: BTreeMap<(G, u64, usize), (usize, usize)> = BTreeMap::new();
    for l in labels {
        let g = groups
            .get(&l.profile)
            .ok_or_else(|| invalid(format!("profile {} {} has no group", l.profile.day, l.profile.location)))?;
        let e = counts.entry((g.clone(), l.tau.to_bits(), l.component)).or_default();
        match l.side {
            Side::Plus => e.0 += 1,
            Side::Minus => e.1 += 1,
        }
    }
    let mut rows: Vec<ProportionRow<G>> = counts
        .into_iter()
        .map(|((group, tau_bits, component), (n_plus, n_minus))| {
            let n = n_plus + n_minus;
            ProportionRow {
                group,
                component,
                tau: f64::from_bits(tau_bits),
                n,
                n_plus,
                n_minus,
                plus_share: n_plus as f64 / n as f64,
                minus_share: n_minus as f64 / n as f64,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.group.cmp(&b.group).then(a.tau.total_cmp(&b.tau)).then(a.component.cmp(&b.component)));
    Ok(ProportionTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurves {
    pub component: usize,
    pub tau: f64,
    pub scale: f64,
    pub grid: Vec<f64>,
    pub center: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

/// Twice the (population) standard deviation of component `k`'s scores.
pub fn default_effect_scale(model: &PecModel, k: usize) -> Result<f64> {
    let comp = model.component(k).ok_or_else(|| invalid(format!("component {k} not in 1..={}", model.k())))?;
    let n = comp.scores.len() as f64;
    let mean = comp.scores.iter().sum::<f64>() / n;
    let var = comp.scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    Ok(2.0 * libm::sqrt(var))
}

/// `center +- c * phi_k`, with `center` the component's weighted centering vector.
pub fn effect_curves(model: &PecModel, k: usize, c: f64) -> Result<EffectCurves> {
    let comp = model.component(k).ok_or_else(|| invalid(format!("component {k} not in 1..={}", model.k())))?;
    if !(c >= 0.0 && c.is_finite()) {
        return Err(invalid(format!("effect scale must be non-negative, got {c}")));
    }
    let plus = comp.center.iter().zip(&comp.direction).map(|(m, phi)| m + c * phi).collect();
    let minus = comp.center.iter().zip(&comp.direction).map(|(m, phi)| m - c * phi).collect();
    Ok(EffectCurves {
        component: k,
        tau: model.level.tau(),
        scale: c,
        grid: model.row_grid.clone(),
        center: comp.center.clone(),
        plus,
        minus,
    })
}

pub const BLOCK_MINUTES: usize = 240;
pub const BLOCKS_PER_DAY: usize = MINUTES_PER_DAY / BLOCK_MINUTES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub weekday: DayOfWeek,
    /// Block index; block `b` covers minutes `[240 b, 240 (b + 1))`.
    pub block: usize,
    pub count: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation (`n - 1` denominator).
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    /// Row-major `7 x 6`, Monday first.
    pub cells: Vec<SummaryCell>,
}

impl SummaryTable {
    pub fn cell(&self, weekday: usize, block: usize) -> &SummaryCell {
        &self.cells[weekday * BLOCKS_PER_DAY + block]
    }

    pub fn block_label(block: usize) -> alloc::string::String {
        let start = block * BLOCK_MINUTES;
        let end = start + BLOCK_MINUTES - 1;
        format!("{:02}:{:02}-{:02}:{:02}", start / 60, start % 60, end / 60, end % 60)
    }
}

/// Mean and standard deviation of hourly-equivalent per-minute counts for each
/// weekday and 4-hour block, pooled over all series. Missing minutes are skipped.
pub fn summary_table(series: &[RawCountSeries], interval_seconds: NonZeroU32) -> SummaryTable {
    // Welford accumulators: (count, mean, m2).
    let mut acc = vec![(0usize, 0.0f64, 0.0f64); 7 * BLOCKS_PER_DAY];
    for s in series {
        let wd = DayOfWeek::of(s.day).index();
        for (t, c) in s.counts().iter().enumerate() {
            let Some(c) = c else { continue };
            let x = hourly_equivalent(*c, interval_seconds);
            let (n, mean, m2) = &mut acc[wd * BLOCKS_PER_DAY + t / BLOCK_MINUTES];
            *n += 1;
            let d = x - *mean;
            *mean += d / *n as f64;
            *m2 += d * (x - *mean);
        }
    }
    let cells = acc
        .into_iter()
        .enumerate()
        .map(|(i, (n, mean, m2))| SummaryCell {
            weekday: DayOfWeek((i / BLOCKS_PER_DAY) as u8),
            block: i % BLOCKS_PER_DAY,
            count: n,
            mean: (n > 0).then_some(mean),
            sd: match n {
                0 => None,
                1 => Some(0.0),
                _ => Some(libm::sqrt(m2 / (n - 1) as f64)),
            },
        })
        .collect();
    SummaryTable { cells }
}
