use std::io::Read;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};

pub const SESSIONS_HEADER: [&str; 4] = ["session_id", "start_time", "end_time", "energy_kwh"];

/// One charging session.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionRecord {
    pub session_id: String,
    pub start_time: DateTime<Utc>,
    pub end_time: DateTime<Utc>,
    pub energy_kwh: f64,
}

impl SessionRecord {
    pub fn new(
        session_id: impl Into<String>,
        start_time: DateTime<Utc>,
        end_time: DateTime<Utc>,
        energy_kwh: f64,
    ) -> Result<Self> {
        if end_time <= start_time {
            return Err(Error::DataIntegrity(format!(
                "end {end_time} is not after start {start_time}"
            )));
        }
        if !(energy_kwh >= 0.0 && energy_kwh.is_finite()) {
            return Err(Error::DataIntegrity(format!("invalid energy {energy_kwh}")));
        }
        Ok(SessionRecord {
            session_id: session_id.into(),
            start_time,
            end_time,
            energy_kwh,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct IngestReport {
    pub records: Vec<SessionRecord>,
    pub rejected: Vec<RejectedRow>,
}

pub(crate) fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp {s:?}: {e}"))
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<SessionRecord, String> {
    if row.len() != SESSIONS_HEADER.len() {
        return Err(format!("expected 4 fields, found {}", row.len()));
    }
    let start = parse_timestamp(&row[1])?;
    let end = parse_timestamp(&row[2])?;
    let energy: f64 = row[3]
        .trim()
        .parse()
        .map_err(|_| format!("bad energy {:?}", &row[3]))?;
    SessionRecord::new(row[0].trim(), start, end, energy).map_err(|e| match e {
        Error::DataIntegrity(msg) => msg,
        other => other.to_string(),
    })
}

/// Parse a sessions CSV. Malformed rows are collected with their line numbers
/// instead of aborting the whole file.
pub fn ingest_sessions<R: Read>(input: R) -> Result<IngestReport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().map(str::trim).ne(SESSIONS_HEADER) {
        return Err(Error::Format(format!(
            "sessions header must be `{}`, found `{}`",
            SESSIONS_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut report = IngestReport::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row) {
            Ok(rec) => report.records.push(rec),
            Err(reason) => report.rejected.push(RejectedRow { line, reason }),
        }
    }
    Ok(report)
}
