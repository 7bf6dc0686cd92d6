//! Observed movement tracks and their CSV representation.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{InchError, Result};

/// Unit of the time column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Seconds,
    #[default]
    Minutes,
    Hours,
}

impl TimeUnit {
    fn seconds(self) -> f64 {
        match self {
            TimeUnit::Seconds => 1.0,
            TimeUnit::Minutes => 60.0,
            TimeUnit::Hours => 3600.0,
        }
    }

    /// Multiplier converting a duration in `self` into `target`.
    pub fn factor_to(self, target: TimeUnit) -> f64 {
        self.seconds() / target.seconds()
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s" | "sec" | "seconds" => Some(TimeUnit::Seconds),
            "min" | "minutes" => Some(TimeUnit::Minutes),
            "h" | "hours" => Some(TimeUnit::Hours),
            _ => None,
        }
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeUnit::Seconds => "seconds",
            TimeUnit::Minutes => "minutes",
            TimeUnit::Hours => "hours",
        })
    }
}

/// Locations observed at strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTrack {
    times: Vec<f64>,
    locations: Vec<Vec<f64>>,
    unit: TimeUnit,
}

impl ObservationTrack {
    pub fn new(times: Vec<f64>, locations: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_unit(times, locations, TimeUnit::default())
    }

    pub fn with_unit(times: Vec<f64>, locations: Vec<Vec<f64>>, unit: TimeUnit) -> Result<Self> {
        if times.len() != locations.len() {
            return Err(InchError::PreconditionViolation(format!(
                "{} times but {} locations",
                times.len(),
                locations.len()
            )));
        }
        if times.is_empty() {
            return Err(InchError::PreconditionViolation("track is empty".into()));
        }
        let dim = locations[0].len();
        if dim == 0 || locations.iter().any(|x| x.len() != dim) {
            return Err(InchError::PreconditionViolation(
                "all locations must share a positive dimension".into(),
            ));
        }
        for (k, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(InchError::NonMonotoneTime {
                    row: k + 2,
                    time: w[1],
                    previous: w[0],
                });
            }
        }
        Ok(ObservationTrack {
            times,
            locations,
            unit,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        &self.locations
    }

    pub fn location(&self, c: usize) -> &[f64] {
        &self.locations[c]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_intervals(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn dim(&self) -> usize {
        self.locations[0].len()
    }

    pub fn unit(&self) -> TimeUnit {
        self.unit
    }

    pub fn intervals(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }

    /// Same track with times expressed in `unit`.
    pub fn to_unit(&self, unit: TimeUnit) -> ObservationTrack {
        let f = self.unit.factor_to(unit);
        ObservationTrack {
            times: self.times.iter().map(|t| t * f).collect(),
            locations: self.locations.clone(),
            unit,
        }
    }

    /// First `len` observations.
    pub fn truncated(&self, len: usize) -> ObservationTrack {
        let len = len.min(self.len()).max(1);
        ObservationTrack {
            times: self.times[..len].to_vec(),
            locations: self.locations[..len].to_vec(),
            unit: self.unit,
        }
    }

    /// Writes `# time_unit: ...` followed by `time,x,y` (2-d) or `time,x1..xd`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# time_unit: {}", self.unit)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend(coordinate_names(self.dim()));
        w.write_record(&header)?;
        for (t, x) in self.times.iter().zip(&self.locations) {
            let mut row = vec![format!("{t}")];
            row.extend(x.iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn coordinate_names(dim: usize) -> Vec<String> {
    if dim == 2 {
        vec!["x".into(), "y".into()]
    } else {
        (1..=dim).map(|k| format!("x{k}")).collect()
    }
}

/// Parsed track plus the data rows that were dropped for missing coordinates.
#[derive(Debug, Clone)]
pub struct IngestedTrack {
    pub track: ObservationTrack,
    pub dropped_rows: Vec<usize>,
}

/// Parses a track CSV. Rows with a blank coordinate are dropped (widening the interval);
/// non-numeric fields and non-increasing times are errors. Row numbers count data rows from 1.
pub fn read_track<R: Read>(mut input: R) -> Result<IngestedTrack> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut unit = TimeUnit::default();
    for line in text.lines().take_while(|l| l.trim_start().starts_with('#')) {
        let body = line.trim_start().trim_start_matches('#').trim();
        if let Some(v) = body.strip_prefix("time_unit").map(|r| r.trim_start_matches([':', '=', ' '])) {
            unit = TimeUnit::parse(v).ok_or_else(|| InchError::Parse {
                row: 0,
                msg: format!("unknown time unit `{v}`"),
            })?;
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("time") || headers.len() < 2 {
        return Err(InchError::Parse {
            row: 0,
            msg: "header must start with `time` followed by coordinate columns".into(),
        });
    }
    let dim = headers.len() - 1;
    let coords: Vec<&str> = headers.iter().skip(1).collect();
    let ok_names = coords == coordinate_names(dim) || coords.iter().enumerate().all(|(k, c)| *c == format!("x{}", k + 1));
    if !ok_names {
        return Err(InchError::Parse {
            row: 0,
            msg: format!("unexpected coordinate columns {coords:?}"),
        });
    }

    let mut times = Vec::new();
    let mut locations = Vec::new();
    let mut dropped_rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| InchError::Parse { row, msg: e.to_string() })?;
        if rec.len() != dim + 1 {
            return Err(InchError::Parse {
                row,
                msg: format!("expected {} fields, found {}", dim + 1, rec.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| InchError::Parse {
                    row,
                    msg: format!("`{s}` is not a finite number"),
                })
        };
        let t = parse(&rec[0])?;
        if rec.iter().skip(1).any(str::is_empty) {
            log::warn!("row {row} (time {t}) has a missing coordinate; dropped");
            dropped_rows.push(row);
            continue;
        }
        let x = rec.iter().skip(1).map(parse).collect::<Result<Vec<f64>>>()?;
        if let Some(&prev) = times.last() {
            if !(t > prev) {
                return Err(InchError::NonMonotoneTime { row, time: t, previous: prev });
            }
        }
        times.push(t);
        locations.push(x);
    }
    let track = ObservationTrack::with_unit(times, locations, unit)?;
    Ok(IngestedTrack { track, dropped_rows })
}

/// Reads and validates a track CSV from disk.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<ObservationTrack> {
    let f = std::fs::File::open(path)?;
    Ok(read_track(f)?.track)
}
