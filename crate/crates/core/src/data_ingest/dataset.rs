//! Canonical aligned-dataset file: one row per aligned sample, tagged with
//! the split it belongs to.

use std::fs::File;
use std::path::Path;

use super::{
    clock_index, format_timestamp, parse_timestamp, AlignedSample, CloudSubtype, SplitKind, Splits, WeatherType,
};
use crate::error::{Error, Result};

pub const ALIGNED_COLUMNS: [&str; 11] = [
    "timestamp",
    "split",
    "power_kw",
    "temperature",
    "dew_point",
    "humidity",
    "wind_speed",
    "u5",
    "weather_type",
    "cloud_subtype",
    "alignment_gap_min",
];

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRow {
    pub split: SplitKind,
    pub sample: AlignedSample,
}

pub fn write_aligned_csv(path: &Path, splits: &Splits) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record(ALIGNED_COLUMNS)?;
    for kind in [SplitKind::Train, SplitKind::Validation, SplitKind::Test] {
        for s in splits.get(kind) {
            wtr.write_record([
                format_timestamp(&s.timestamp),
                kind.as_str().to_string(),
                s.power_kw.to_string(),
                s.temperature.to_string(),
                s.dew_point.to_string(),
                s.humidity.to_string(),
                s.wind_speed.to_string(),
                s.u5.to_string(),
                s.weather_type.as_str().to_string(),
                s.cloud_subtype.as_str().to_string(),
                s.alignment_gap_min.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn read_aligned_csv(path: &Path) -> Result<Splits> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ALIGNED_COLUMNS {
        return Err(Error::Row {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header; expected {}", ALIGNED_COLUMNS.join(",")),
        });
    }
    let mut splits = Splits::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field_err = |col: usize, text: &str| Error::Field {
            path: path.to_path_buf(),
            line,
            column: ALIGNED_COLUMNS[col].to_string(),
            message: format!("invalid value `{text}`"),
        };
        let get = |col: usize| row.get(col).unwrap_or("");
        let num = |col: usize| -> Result<f64> { get(col).parse::<f64>().map_err(|_| field_err(col, get(col))) };
        let timestamp = parse_timestamp(get(0)).ok_or_else(|| field_err(0, get(0)))?;
        let split = SplitKind::parse(get(1)).ok_or_else(|| field_err(1, get(1)))?;
        let sample = AlignedSample {
            k: clock_index(&timestamp),
            timestamp,
            power_kw: num(2)?,
            temperature: num(3)?,
            dew_point: num(4)?,
            humidity: num(5)?,
            wind_speed: num(6)?,
            u5: num(7)?,
            weather_type: WeatherType::parse(get(8)).ok_or_else(|| field_err(8, get(8)))?,
            cloud_subtype: CloudSubtype::parse(get(9)).ok_or_else(|| field_err(9, get(9)))?,
            alignment_gap_min: get(10).parse().map_err(|_| field_err(10, get(10)))?,
        };
        match split {
            SplitKind::Train => splits.train.push(sample),
            SplitKind::Validation => splits.validation.push(sample),
            SplitKind::Test => splits.test.push(sample),
        }
    }
    Ok(splits)
}
