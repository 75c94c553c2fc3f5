use std::io::{Read, Write};

use chrono::{DateTime, Duration, DurationRound, Utc};

use super::sessions::{parse_timestamp, SessionRecord};
use crate::error::{Error, Result};

pub const HOURLY_HEADER: [&str; 2] = ["timestamp", "load_kwh"];

/// Gap-free hourly load series starting at an hour boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct HourlySeries {
    start: DateTime<Utc>,
    values: Vec<f64>,
}

impl HourlySeries {
    pub fn new(start: DateTime<Utc>, values: Vec<f64>) -> Result<Self> {
        if start.duration_trunc(Duration::hours(1)).ok() != Some(start) {
            return Err(Error::DataIntegrity(format!("series start {start} is not on the hour")));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::DataIntegrity(format!("invalid load {v} at hour {i}")));
        }
        Ok(HourlySeries { start, values })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::hours(index as i64)
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.len().saturating_sub(1))
    }

    /// Hours `range` as a new series.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.len() {
            return Err(Error::Contract(format!(
                "slice {from}..{to} outside series of length {}",
                self.len()
            )));
        }
        Ok(HourlySeries {
            start: self.timestamp(from),
            values: self.values[from..to].to_vec(),
        })
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = reader.headers()?.clone();
        if header.iter().map(str::trim).ne(HOURLY_HEADER) {
            return Err(Error::Format(format!(
                "hourly header must be `{}`",
                HOURLY_HEADER.join(",")
            )));
        }
        let mut start = None;
        let mut prev: Option<DateTime<Utc>> = None;
        let mut values = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let ts = parse_timestamp(&row[0])
                .map_err(|e| Error::DataIntegrity(format!("line {line}: {e}")))?;
            let load: f64 = row[1]
                .trim()
                .parse()
                .map_err(|_| Error::DataIntegrity(format!("line {line}: bad load {:?}", &row[1])))?;
            if let Some(p) = prev {
                if ts - p != Duration::hours(1) {
                    return Err(Error::DataIntegrity(format!(
                        "line {line}: timestamp {ts} does not follow {p} by exactly one hour"
                    )));
                }
            }
            start.get_or_insert(ts);
            prev = Some(ts);
            values.push(load);
        }
        let start = start.ok_or_else(|| Error::DataIntegrity("hourly file has no rows".into()))?;
        HourlySeries::new(start, values)
    }

    pub fn write_csv<W: Write>(&self, output: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(output);
        writer.write_record(HOURLY_HEADER)?;
        for (i, v) in self.values.iter().enumerate() {
            writer.write_record([format_timestamp(self.timestamp(i)), v.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn seconds(t: DateTime<Utc>) -> f64 {
    t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9
}

/// Spread each session's energy uniformly over its duration and sum per hour.
/// Hours between the first and last touched hour with no charging are zero.
pub fn aggregate_to_hourly(sessions: &[SessionRecord]) -> Result<HourlySeries> {
    let hour = Duration::hours(1);
    let first = sessions
        .iter()
        .map(|s| s.start_time)
        .min()
        .ok_or_else(|| Error::Contract("cannot aggregate zero sessions".into()))?;
    let first = first.duration_trunc(hour).expect("hour truncation");
    // The hour containing the last instant of charging; an end exactly on a
    // boundary does not touch the following hour.
    let last_touched = |s: &SessionRecord| {
        let t = s.end_time.duration_trunc(hour).expect("hour truncation");
        if t == s.end_time {
            t - hour
        } else {
            t
        }
    };
    let last = sessions.iter().map(last_touched).max().expect("non-empty");
    let n = ((last - first).num_hours() + 1) as usize;
    let mut values = vec![0.0; n];

    for s in sessions {
        let (start, end) = (seconds(s.start_time), seconds(s.end_time));
        let rate = s.energy_kwh / (end - start);
        let from = (s.start_time.duration_trunc(hour).expect("hour truncation") - first).num_hours() as usize;
        let to = (last_touched(s) - first).num_hours() as usize;
        for (h, slot) in values.iter_mut().enumerate().take(to + 1).skip(from) {
            let h0 = seconds(first) + 3600.0 * h as f64;
            let overlap = (end.min(h0 + 3600.0) - start.max(h0)).max(0.0);
            *slot += rate * overlap;
        }
    }
    HourlySeries::new(first, values)
}
