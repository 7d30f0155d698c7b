use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use super::{classify_weather, format_timestamp, parse_timestamp, RawSolarRecord, RawWeatherRecord};
use crate::error::{Error, Result};

/// Column names of the weather CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherSchema {
    pub timestamp: String,
    pub temperature: String,
    pub dew_point: String,
    pub humidity: String,
    pub wind_speed: String,
    pub condition: String,
}

impl Default for WeatherSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            temperature: "temperature".into(),
            dew_point: "dew_point".into(),
            humidity: "humidity".into(),
            wind_speed: "wind_speed".into(),
            condition: "condition".into(),
        }
    }
}

/// Column names of the solar CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolarSchema {
    pub timestamp: String,
    pub power_kw: String,
}

impl Default for SolarSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            power_kw: "power_kw".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherParse {
    pub records: Vec<RawWeatherRecord>,
    /// Rows dropped because a later row carried the same timestamp.
    pub duplicates: usize,
}

/// A missing 15-minute grid point inside a day's observed span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotGap {
    pub date: NaiveDate,
    pub time: NaiveTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolarParse {
    pub records: Vec<RawSolarRecord>,
    pub gaps: Vec<SlotGap>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub fn parse_weather_csv(path: &Path, schema: &WeatherSchema) -> Result<WeatherParse> {
    parse_weather_reader(open(path)?, path, schema)
}

pub fn parse_solar_csv(path: &Path, schema: &SolarSchema) -> Result<SolarParse> {
    parse_solar_reader(open(path)?, path, schema)
}

struct Columns<'a> {
    path: &'a Path,
    index: Vec<usize>,
    names: Vec<&'a str>,
}

impl<'a> Columns<'a> {
    fn resolve(path: &'a Path, headers: &csv::StringRecord, names: Vec<&'a str>) -> Result<Self> {
        let index = names
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h.trim() == *name)
                    .ok_or_else(|| Error::MissingColumn {
                        path: path.to_path_buf(),
                        column: name.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { path, index, names })
    }

    fn text<'r>(&self, record: &'r csv::StringRecord, line: u64, col: usize) -> Result<&'r str> {
        record
            .get(self.index[col])
            .ok_or_else(|| self.field_error(line, col, "missing value".into()))
    }

    fn number(&self, record: &csv::StringRecord, line: u64, col: usize) -> Result<f64> {
        let text = self.text(record, line, col)?;
        let value: f64 = text
            .trim()
            .parse()
            .map_err(|_| self.field_error(line, col, format!("not a number: `{text}`")))?;
        if !value.is_finite() {
            return Err(self.field_error(line, col, format!("non-finite value `{text}`")));
        }
        Ok(value)
    }

    fn timestamp(&self, record: &csv::StringRecord, line: u64, col: usize) -> Result<chrono::NaiveDateTime> {
        let text = self.text(record, line, col)?;
        parse_timestamp(text).ok_or_else(|| {
            self.field_error(
                line,
                col,
                format!("unparseable timestamp `{text}` (expected YYYY-MM-DD HH:MM)"),
            )
        })
    }

    fn field_error(&self, line: u64, col: usize, message: String) -> Error {
        Error::Field {
            path: self.path.to_path_buf(),
            line,
            column: self.names[col].to_string(),
            message,
        }
    }
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Parses weather rows. Output is sorted by timestamp; rows that share a
/// timestamp keep the last occurrence.
pub fn parse_weather_reader<R: Read>(reader: R, path: &Path, schema: &WeatherSchema) -> Result<WeatherParse> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = Columns::resolve(
        path,
        &headers,
        vec![
            &schema.timestamp,
            &schema.temperature,
            &schema.dew_point,
            &schema.humidity,
            &schema.wind_speed,
            &schema.condition,
        ],
    )?;

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Row {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&row);
        let timestamp = cols.timestamp(&row, line, 0)?;
        let temperature = cols.number(&row, line, 1)?;
        let dew_point = cols.number(&row, line, 2)?;
        let humidity = cols.number(&row, line, 3)?;
        if !(0.0..=100.0).contains(&humidity) {
            return Err(cols.field_error(line, 3, format!("{humidity} outside [0, 100]")));
        }
        let wind_speed = cols.number(&row, line, 4)?;
        if wind_speed < 0.0 {
            return Err(cols.field_error(line, 4, format!("{wind_speed} is negative")));
        }
        let condition = cols.text(&row, line, 5)?.to_string();
        if classify_weather(&condition).is_err() {
            return Err(cols.field_error(line, 5, format!("unrecognized condition `{condition}`")));
        }
        records.push(RawWeatherRecord {
            timestamp,
            temperature,
            dew_point,
            humidity,
            wind_speed,
            condition,
        });
    }

    // Stable sort keeps file order within equal timestamps, so the last
    // element of each run is the latest row.
    records.sort_by_key(|r| r.timestamp);
    let before = records.len();
    let mut deduped: Vec<RawWeatherRecord> = Vec::with_capacity(before);
    for record in records {
        match deduped.last_mut() {
            Some(last) if last.timestamp == record.timestamp => *last = record,
            _ => deduped.push(record),
        }
    }
    let duplicates = before - deduped.len();
    if duplicates > 0 {
        log::warn!(
            "{}: {duplicates} duplicate weather timestamps (kept last)",
            path.display()
        );
    }
    Ok(WeatherParse {
        records: deduped,
        duplicates,
    })
}

/// Parses solar rows, verifies the 15-minute grid and lists in-day gaps.
pub fn parse_solar_reader<R: Read>(reader: R, path: &Path, schema: &SolarSchema) -> Result<SolarParse> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = Columns::resolve(path, &headers, vec![&schema.timestamp, &schema.power_kw])?;

    let mut lines = BTreeMap::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Row {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&row);
        let timestamp = cols.timestamp(&row, line, 0)?;
        if timestamp.minute() % 15 != 0 || timestamp.second() != 0 {
            return Err(cols.field_error(
                line,
                0,
                format!("{} is off the 15-minute grid", format_timestamp(&timestamp)),
            ));
        }
        let power_kw = cols.number(&row, line, 1)?;
        if power_kw < 0.0 {
            return Err(cols.field_error(line, 1, format!("negative power {power_kw}")));
        }
        if let Some(first) = lines.insert(timestamp, line) {
            return Err(Error::Row {
                path: path.to_path_buf(),
                line,
                message: format!(
                    "duplicate timestamp {} (first seen on line {first})",
                    format_timestamp(&timestamp)
                ),
            });
        }
        records.push(RawSolarRecord { timestamp, power_kw });
    }
    records.sort_by_key(|r| r.timestamp);

    let mut gaps = Vec::new();
    for pair in records.windows(2) {
        let (a, b) = (pair[0].timestamp, pair[1].timestamp);
        if a.date() != b.date() {
            continue;
        }
        let mut t = a + chrono::Duration::minutes(15);
        while t < b {
            gaps.push(SlotGap {
                date: t.date(),
                time: t.time(),
            });
            t += chrono::Duration::minutes(15);
        }
    }
    Ok(SolarParse { records, gaps })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

/// Writes weather records with the default column names.
pub fn write_weather_csv(path: &Path, records: &[RawWeatherRecord]) -> Result<()> {
    let mut file = create(path)?;
    write_weather(&mut file, records).map_err(|e| Error::io(path, e))
}

fn write_weather<W: Write>(out: &mut W, records: &[RawWeatherRecord]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "timestamp",
        "temperature",
        "dew_point",
        "humidity",
        "wind_speed",
        "condition",
    ])?;
    for r in records {
        wtr.write_record([
            format_timestamp(&r.timestamp),
            r.temperature.to_string(),
            r.dew_point.to_string(),
            r.humidity.to_string(),
            r.wind_speed.to_string(),
            r.condition.clone(),
        ])?;
    }
    wtr.flush()
}

/// Writes solar records with the default column names.
pub fn write_solar_csv(path: &Path, records: &[RawSolarRecord]) -> Result<()> {
    let mut file = create(path)?;
    write_solar(&mut file, records).map_err(|e| Error::io(path, e))
}

fn write_solar<W: Write>(out: &mut W, records: &[RawSolarRecord]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["timestamp", "power_kw"])?;
    for r in records {
        wtr.write_record([format_timestamp(&r.timestamp), r.power_kw.to_string()])?;
    }
    wtr.flush()
}
