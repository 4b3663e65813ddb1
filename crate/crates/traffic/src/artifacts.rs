//! Rendering of fitted models and analyses as CSV and JSON, plus the
//! in-memory file set that becomes the run manifest.

use std::path::Path;

use pec_core::analysis::{EffectCurves, ExtremeLabel, ProportionTable, Side, SummaryTable, BLOCKS_PER_DAY};
use pec_core::analysis::DayOfWeek;
use pec_core::preprocess::DropReason;
use pec_core::{PecModel, ProfileId, ProfileMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    /// Data rows, excluding the header, for CSV files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
}

/// Files produced by a run, kept in memory until everything has succeeded.
#[derive(Debug, Default)]
pub struct ArtifactSet {
    files: Vec<(String, Vec<u8>, Option<usize>)>,
}

impl ArtifactSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_csv(&mut self, path: impl Into<String>, csv: Csv) {
        self.files.push((path.into(), csv.bytes, Some(csv.rows)));
    }

    pub fn add_json<T: Serialize>(&mut self, path: impl Into<String>, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.files.push((path.into(), bytes, None));
        Ok(())
    }

    pub fn add_raw(&mut self, path: impl Into<String>, bytes: Vec<u8>, rows: Option<usize>) {
        self.files.push((path.into(), bytes, rows));
    }

    pub fn entries(&self) -> Vec<FileEntry> {
        self.files
            .iter()
            .map(|(path, bytes, rows)| FileEntry {
                path: path.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
                rows: *rows,
            })
            .collect()
    }

    pub fn write_all(&self, dir: &Path) -> Result<()> {
        for (rel, bytes, _) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A rendered CSV with its data-row count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csv {
    pub bytes: Vec<u8>,
    pub rows: usize,
}

struct CsvBuilder {
    w: csv::Writer<Vec<u8>>,
    rows: usize,
}

impl CsvBuilder {
    fn new<I, S>(header: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        Ok(Self { w, rows: 0 })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields)?;
        self.rows += 1;
        Ok(())
    }

    fn finish(self) -> Result<Csv> {
        let bytes = self.w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
        Ok(Csv { bytes, rows: self.rows })
    }
}

fn date(id: &ProfileId) -> String {
    id.day.format("%Y-%m-%d").to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `p x K` loadings: `minute,pec_1,...,pec_K`.
pub fn components_csv(model: &PecModel) -> Result<Csv> {
    let mut header = vec!["minute".to_string()];
    header.extend((1..=model.k()).map(|k| format!("pec_{k}")));
    let mut b = CsvBuilder::new(header)?;
    for (r, t) in model.row_grid.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(model.components.iter().map(|c| c.direction[r].to_string()));
        b.row(row)?;
    }
    b.finish()
}

/// `n x K` scores. Component `k`'s score is taken on the data it was fitted on,
/// i.e. after the previous deflations.
pub fn scores_csv(model: &PecModel) -> Result<Csv> {
    let mut header = vec!["date".to_string(), "location".to_string()];
    header.extend((1..=model.k()).map(|k| format!("score_{k}")));
    let mut b = CsvBuilder::new(header)?;
    for (i, id) in model.column_ids.iter().enumerate() {
        let mut row = vec![date(id), id.location.clone()];
        row.extend(model.components.iter().map(|c| c.scores[i].to_string()));
        b.row(row)?;
    }
    b.finish()
}

pub fn labels_csv(labels: &[ExtremeLabel]) -> Result<Csv> {
    let mut b = CsvBuilder::new(["date", "location", "component", "tau", "side", "is_extreme"])?;
    for l in labels {
        let side = match l.side {
            Side::Plus => "plus",
            Side::Minus => "minus",
        };
        b.row([
            date(&l.profile),
            l.profile.location.clone(),
            l.component.to_string(),
            l.tau.to_string(),
            side.to_string(),
            l.is_extreme.to_string(),
        ])?;
    }
    b.finish()
}

pub fn proportions_csv(by_location: &ProportionTable<String>, by_weekday: &ProportionTable<DayOfWeek>) -> Result<Csv> {
    let mut b = CsvBuilder::new([
        "grouping",
        "group",
        "component",
        "tau",
        "n",
        "n_plus",
        "n_minus",
        "plus_share",
        "minus_share",
    ])?;
    let rows = by_location
        .rows
        .iter()
        .map(|r| ("location", r.group.clone(), r.component, r.tau, r.n, r.n_plus, r.n_minus, r.plus_share, r.minus_share))
        .chain(by_weekday.rows.iter().map(|r| {
            ("weekday", r.group.to_string(), r.component, r.tau, r.n, r.n_plus, r.n_minus, r.plus_share, r.minus_share)
        }));
    for (grouping, group, k, tau, n, np, nm, ps, ms) in rows {
        b.row([
            grouping.to_string(),
            group,
            k.to_string(),
            tau.to_string(),
            n.to_string(),
            np.to_string(),
            nm.to_string(),
            ps.to_string(),
            ms.to_string(),
        ])?;
    }
    b.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectsDoc<'a> {
    pub tau: f64,
    pub components: &'a [EffectCurves],
}

pub fn summary_csv(table: &SummaryTable) -> Result<Csv> {
    let mut b = CsvBuilder::new(["weekday", "block", "count", "mean", "sd"])?;
    for wd in 0..7 {
        for block in 0..BLOCKS_PER_DAY {
            let c = table.cell(wd, block);
            b.row([
                c.weekday.to_string(),
                SummaryTable::block_label(block),
                c.count.to_string(),
                opt(c.mean),
                opt(c.sd),
            ])?;
        }
    }
    b.finish()
}

/// Smoothed profiles, one row per location-day: `date,location,<grid minutes>`.
pub fn profiles_csv(q: &ProfileMatrix) -> Result<Csv> {
    let mut header = vec!["date".to_string(), "location".to_string()];
    header.extend(q.row_grid().iter().map(|t| t.to_string()));
    let mut b = CsvBuilder::new(header)?;
    for (id, col) in q.column_ids().iter().zip(q.columns()) {
        let mut row = vec![date(id), id.location.clone()];
        row.extend(col.iter().map(|v| v.to_string()));
        b.row(row)?;
    }
    b.finish()
}

pub fn dropped_csv(dropped: &[(ProfileId, DropReason)]) -> Result<Csv> {
    let mut b = CsvBuilder::new(["date", "location", "reason", "detail"])?;
    for (id, reason) in dropped {
        let (name, detail) = match reason {
            DropReason::ZeroRun { longest } => ("zero-run", format!("longest zero run {longest} min")),
            DropReason::TooManyMissing { present } => ("too-many-missing", format!("{present} minutes present")),
        };
        b.row([date(id), id.location.clone(), name.to_string(), detail])?;
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_are_hex_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn artifact_set_writes_nested_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = ArtifactSet::new();
        set.add_raw("a/b.txt", b"hi".to_vec(), None);
        set.add_json("c.json", &vec![1, 2]).unwrap();
        set.write_all(dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join("a/b.txt")).unwrap(), b"hi");
        let entries = set.entries();
        assert_eq!(entries[0].bytes, 2);
        assert_eq!(entries[1].path, "c.json");
    }
}
