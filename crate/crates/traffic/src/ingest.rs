//! Strict reader for per-minute detector counts.
//!
//! Expected layout, one row per detector-minute:
//!
//! ```text
//! date,location,minute,count
//! 2018-03-05,L1,0,4
//! 2018-03-05,L1,1,
//! ```
//!
//! `minute` is the minute of day (0..1440). An empty `count` marks a missing
//! minute; minutes with no row at all are missing too. Series come back in
//! order of first appearance.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use pec_core::preprocess::{RawCountSeries, MINUTES_PER_DAY};

use crate::error::{Error, Result};

pub const HEADER: [&str; 4] = ["date", "location", "minute", "count"];

struct Pending {
    day: NaiveDate,
    location: String,
    counts: Vec<Option<u32>>,
    seen: Vec<bool>,
}

/// Reads counts from any reader. `source_name` only labels error messages.
pub fn read_counts<R: Read>(reader: R, source_name: &str) -> Result<Vec<RawCountSeries>> {
    let schema = |line: u64, message: String| Error::Schema { source_name: source_name.to_string(), line, message };

    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        None => return Err(schema(1, "empty file, expected header `date,location,minute,count`".into())),
        Some(r) => r.map_err(|e| csv_error(source_name, e))?,
    };
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != HEADER {
        return Err(schema(1, format!("expected header `{}`, found `{}`", HEADER.join(","), got.join(","))));
    }

    let mut order: Vec<Pending> = Vec::new();
    let mut index: HashMap<(NaiveDate, String), usize> = HashMap::new();

    for rec in records {
        let rec = rec.map_err(|e| csv_error(source_name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != 4 {
            return Err(schema(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let day = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d")
            .map_err(|e| schema(line, format!("bad date `{}`: {e}", &rec[0])))?;
        let location = rec[1].trim();
        if location.is_empty() {
            return Err(schema(line, "empty location".into()));
        }
        let minute: usize =
            rec[2].trim().parse().map_err(|_| schema(line, format!("bad minute `{}`", &rec[2])))?;
        if minute >= MINUTES_PER_DAY {
            return Err(schema(line, format!("minute {minute} outside 0..{MINUTES_PER_DAY}")));
        }
        let count = match rec[3].trim() {
            "" => None,
            s => Some(s.parse::<u32>().map_err(|_| schema(line, format!("bad count `{s}`")))?),
        };

        let slot = *index.entry((day, location.to_string())).or_insert_with(|| {
            order.push(Pending {
                day,
                location: location.to_string(),
                counts: vec![None; MINUTES_PER_DAY],
                seen: vec![false; MINUTES_PER_DAY],
            });
            order.len() - 1
        });
        let p = &mut order[slot];
        if p.seen[minute] {
            return Err(schema(line, format!("duplicate row for {day} {location} minute {minute}")));
        }
        p.seen[minute] = true;
        p.counts[minute] = count;
    }

    order
        .into_iter()
        .map(|p| RawCountSeries::new(p.day, p.location, p.counts).map_err(Error::from))
        .collect()
}

pub fn read_counts_path(path: &Path) -> Result<Vec<RawCountSeries>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_counts(std::io::BufReader::new(file), &path.display().to_string())
}

fn csv_error(source_name: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Schema { source_name: source_name.to_string(), line, message: e.to_string() }
}

/// Writes series in the layout [`read_counts`] accepts, every minute present
/// as a row.
pub fn write_counts<W: std::io::Write>(writer: W, series: &[RawCountSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for s in series {
        let day = s.day.format("%Y-%m-%d").to_string();
        for (minute, c) in s.counts().iter().enumerate() {
            let count = c.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([day.as_str(), s.location.as_str(), &minute.to_string(), &count])?;
        }
    }
    w.flush().map_err(|e| Error::io("<counts>", e))?;
    Ok(())
}
