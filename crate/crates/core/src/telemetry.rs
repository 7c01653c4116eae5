//! Time-stamped building telemetry and its CSV form.
//!
//! The CSV schema starts with the seven ingestion columns
//! `timestamp, t_in, t_out, q_cool_kw, p_kw, rh_in, rh_out`; simulator
//! output appends `t_wb_return, setpoint, q_latent_kw, shr_realized`.
//! Humidity cells and the trailing columns may be empty.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

const REQUIRED_COLUMNS: [&str; 7] = ["timestamp", "t_in", "t_out", "q_cool_kw", "p_kw", "rh_in", "rh_out"];
const OPTIONAL_COLUMNS: [&str; 4] = ["t_wb_return", "setpoint", "q_latent_kw", "shr_realized"];

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}, column `{column}`: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },
    #[error("no records")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub timestamp: NaiveDateTime,
    pub t_in: f64,
    pub t_out: f64,
    /// Sensible cooling rate, positive when extracting heat (kW).
    pub q_cool_kw: f64,
    /// Heat pump electrical power (kW).
    pub p_kw: f64,
    pub rh_in: Option<f64>,
    pub rh_out: Option<f64>,
    pub t_wb_return: Option<f64>,
    pub setpoint: Option<f64>,
    pub q_latent_kw: Option<f64>,
    pub shr_realized: Option<f64>,
}

impl TelemetryRecord {
    pub fn new(timestamp: NaiveDateTime, t_in: f64, t_out: f64, q_cool_kw: f64, p_kw: f64) -> Self {
        Self {
            timestamp,
            t_in,
            t_out,
            q_cool_kw,
            p_kw,
            rh_in: None,
            rh_out: None,
            t_wb_return: None,
            setpoint: None,
            q_latent_kw: None,
            shr_realized: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TelemetryLog {
    pub records: Vec<TelemetryRecord>,
}

impl TelemetryLog {
    pub fn new(records: Vec<TelemetryRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Step length in hours, or the index of the first record that breaks uniformity.
    ///
    /// A single-record log is treated as one hour long.
    pub fn uniform_step_hours(&self) -> Result<f64, usize> {
        if self.records.len() < 2 {
            return Ok(1.0);
        }
        let first = self.records[1].timestamp - self.records[0].timestamp;
        if first.num_seconds() <= 0 {
            return Err(1);
        }
        for (i, w) in self.records.windows(2).enumerate() {
            if w[1].timestamp - w[0].timestamp != first {
                return Err(i + 1);
            }
        }
        Ok(first.num_seconds() as f64 / 3600.0)
    }

    /// Aggregates sub-hourly records into hourly ones.
    ///
    /// Each output record carries the indoor temperature at the start of the
    /// hour and the mean of every other channel over the hour. Hours not fully
    /// covered by the log are dropped.
    pub fn to_hourly(&self) -> Result<TelemetryLog, TelemetryError> {
        let dt = self.uniform_step_hours().map_err(|row| TelemetryError::Schema {
            row,
            column: "timestamp".into(),
            message: "non-uniform time step".into(),
        })?;
        if (dt - 1.0).abs() < 1e-9 {
            return Ok(self.clone());
        }
        let per_hour = (1.0 / dt).round() as usize;
        if per_hour == 0 || ((per_hour as f64) * dt - 1.0).abs() > 1e-9 {
            return Err(TelemetryError::Schema {
                row: 1,
                column: "timestamp".into(),
                message: format!("step of {dt} h does not divide an hour"),
            });
        }
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.records.len() {
            let ts = self.records[i].timestamp;
            if ts.minute() != 0 || ts.second() != 0 || i + per_hour > self.records.len() {
                i += 1;
                continue;
            }
            let chunk = &self.records[i..i + per_hour];
            let mean = |f: &dyn Fn(&TelemetryRecord) -> f64| chunk.iter().map(f).sum::<f64>() / per_hour as f64;
            let mean_opt = |f: &dyn Fn(&TelemetryRecord) -> Option<f64>| {
                let vals: Option<Vec<f64>> = chunk.iter().map(f).collect();
                vals.map(|v| v.iter().sum::<f64>() / per_hour as f64)
            };
            out.push(TelemetryRecord {
                timestamp: ts,
                t_in: chunk[0].t_in,
                t_out: mean(&|r| r.t_out),
                q_cool_kw: mean(&|r| r.q_cool_kw),
                p_kw: mean(&|r| r.p_kw),
                rh_in: mean_opt(&|r| r.rh_in),
                rh_out: mean_opt(&|r| r.rh_out),
                t_wb_return: mean_opt(&|r| r.t_wb_return),
                setpoint: chunk[0].setpoint,
                q_latent_kw: mean_opt(&|r| r.q_latent_kw),
                shr_realized: mean_opt(&|r| r.shr_realized),
            });
            i += per_hour;
        }
        Ok(TelemetryLog::new(out))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TelemetryError> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<&str> = REQUIRED_COLUMNS.iter().chain(OPTIONAL_COLUMNS.iter()).copied().collect();
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.timestamp.format(TIMESTAMP_FORMAT).to_string(),
                r.t_in.to_string(),
                r.t_out.to_string(),
                r.q_cool_kw.to_string(),
                r.p_kw.to_string(),
                opt(r.rh_in),
                opt(r.rh_out),
                opt(r.t_wb_return),
                opt(r.setpoint),
                opt(r.q_latent_kw),
                opt(r.shr_realized),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, TelemetryError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let mut required = [0usize; 7];
        for (slot, name) in required.iter_mut().zip(REQUIRED_COLUMNS) {
            *slot = find(name).ok_or(TelemetryError::MissingColumn(name))?;
        }
        let optional: Vec<Option<usize>> = OPTIONAL_COLUMNS.iter().map(|n| find(n)).collect();

        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            // header is line 1
            let line = i + 2;
            let cell = |idx: usize| row.get(idx).unwrap_or("");
            let number = |idx: usize, name: &str| -> Result<f64, TelemetryError> {
                parse_number(cell(idx)).ok_or_else(|| TelemetryError::Schema {
                    row: line,
                    column: name.to_string(),
                    message: format!("expected a number, found `{}`", cell(idx)),
                })
            };
            let maybe = |idx: Option<usize>, name: &str| -> Result<Option<f64>, TelemetryError> {
                match idx.map(cell) {
                    None | Some("") => Ok(None),
                    Some(_) => number(idx.unwrap(), name).map(Some),
                }
            };
            let timestamp = parse_timestamp(cell(required[0])).ok_or_else(|| TelemetryError::Schema {
                row: line,
                column: "timestamp".into(),
                message: format!("expected an ISO-8601 timestamp, found `{}`", cell(required[0])),
            })?;
            records.push(TelemetryRecord {
                timestamp,
                t_in: number(required[1], "t_in")?,
                t_out: number(required[2], "t_out")?,
                q_cool_kw: number(required[3], "q_cool_kw")?,
                p_kw: number(required[4], "p_kw")?,
                rh_in: maybe(Some(required[5]), "rh_in")?,
                rh_out: maybe(Some(required[6]), "rh_out")?,
                t_wb_return: maybe(optional[0], "t_wb_return")?,
                setpoint: maybe(optional[1], "setpoint")?,
                q_latent_kw: maybe(optional[2], "q_latent_kw")?,
                shr_realized: maybe(optional[3], "shr_realized")?,
            });
        }
        if records.is_empty() {
            return Err(TelemetryError::Empty);
        }
        Ok(Self { records })
    }

    pub fn read_csv_path(path: &Path) -> Result<Self, TelemetryError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<(), TelemetryError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses `YYYY-MM-DDTHH:MM:SS`, optionally with fractional seconds or a UTC offset.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
}
