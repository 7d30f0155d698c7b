//! Raw solar and weather records, condition grouping, nearest-timestamp
//! alignment and chronological splits.

mod align;
mod dataset;
mod readers;
mod split;

use std::fmt;

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use align::{align_series, Alignment, AlignmentWarning, DEFAULT_MAX_ALIGNMENT_GAP_MIN};
pub use dataset::{read_aligned_csv, write_aligned_csv, AlignedRow};
pub use readers::{
    parse_solar_csv, parse_solar_reader, parse_weather_csv, parse_weather_reader, write_solar_csv, write_weather_csv,
    SlotGap, SolarParse, SolarSchema, WeatherParse, WeatherSchema,
};
pub use split::{split_dataset, DateRange, SplitKind, SplitSpec, Splits};

/// Timestamp layout shared by every CSV dialect in this crate.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";

/// Number of 15-minute slots in a day.
pub const SLOTS_PER_DAY: usize = 96;

pub fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(text.trim(), TIMESTAMP_FORMAT).ok()
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Time-of-day slot index in `0..96`.
pub fn slot_of(ts: &NaiveDateTime) -> usize {
    (ts.hour() as usize * 60 + ts.minute() as usize) / 15
}

/// Global 15-minute clock index; consecutive grid points differ by one.
pub fn clock_index(ts: &NaiveDateTime) -> i64 {
    ts.and_utc().timestamp().div_euclid(900)
}

/// Fractional hours since midnight.
pub fn hours_of_day(ts: &NaiveDateTime) -> f64 {
    ts.hour() as f64 + ts.minute() as f64 / 60.0 + ts.second() as f64 / 3600.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherType {
    Cloudy,
    Fair,
    Haze,
}

impl WeatherType {
    /// Fixed processing order used wherever the three models are visited.
    pub const ALL: [WeatherType; 3] = [WeatherType::Cloudy, WeatherType::Fair, WeatherType::Haze];

    pub fn index(self) -> usize {
        match self {
            WeatherType::Cloudy => 0,
            WeatherType::Fair => 1,
            WeatherType::Haze => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WeatherType::Cloudy => "cloudy",
            WeatherType::Fair => "fair",
            WeatherType::Haze => "haze",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "cloudy" => Some(WeatherType::Cloudy),
            "fair" => Some(WeatherType::Fair),
            "haze" => Some(WeatherType::Haze),
            _ => None,
        }
    }
}

impl fmt::Display for WeatherType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cloud kind behind the one-hot cloud inputs. Only `Cloudy` weather carries
/// a subtype other than `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudSubtype {
    CloudyProper,
    MostlyCloudy,
    PartlyCloudy,
    None,
}

impl CloudSubtype {
    pub fn as_str(self) -> &'static str {
        match self {
            CloudSubtype::CloudyProper => "cloudy_proper",
            CloudSubtype::MostlyCloudy => "mostly_cloudy",
            CloudSubtype::PartlyCloudy => "partly_cloudy",
            CloudSubtype::None => "none",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "cloudy_proper" => Some(CloudSubtype::CloudyProper),
            "mostly_cloudy" => Some(CloudSubtype::MostlyCloudy),
            "partly_cloudy" => Some(CloudSubtype::PartlyCloudy),
            "none" => Some(CloudSubtype::None),
            _ => None,
        }
    }

    /// One-hot cloud inputs `[cloudy, mostly cloudy, partly cloudy]`.
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            CloudSubtype::CloudyProper => [1.0, 0.0, 0.0],
            CloudSubtype::MostlyCloudy => [0.0, 1.0, 0.0],
            CloudSubtype::PartlyCloudy => [0.0, 0.0, 1.0],
            CloudSubtype::None => [0.0, 0.0, 0.0],
        }
    }
}

/// Grouping table: every accepted label maps to exactly one pair.
const CONDITION_TABLE: [(&str, WeatherType, CloudSubtype); 7] = [
    ("cloudy", WeatherType::Cloudy, CloudSubtype::CloudyProper),
    ("mostly cloudy", WeatherType::Cloudy, CloudSubtype::MostlyCloudy),
    ("partly cloudy", WeatherType::Cloudy, CloudSubtype::PartlyCloudy),
    ("fair", WeatherType::Fair, CloudSubtype::None),
    ("haze", WeatherType::Haze, CloudSubtype::None),
    ("fog", WeatherType::Haze, CloudSubtype::None),
    ("blowing dust", WeatherType::Haze, CloudSubtype::None),
];

/// Case-insensitive lookup of a free-text condition label. Internal runs of
/// whitespace are collapsed; anything outside the table (rain included) is
/// rejected.
pub fn classify_weather(condition: &str) -> Result<(WeatherType, CloudSubtype)> {
    let normalized = condition
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    CONDITION_TABLE
        .iter()
        .find(|(label, _, _)| *label == normalized)
        .map(|&(_, weather, subtype)| (weather, subtype))
        .ok_or_else(|| Error::UnknownCondition(condition.to_string()))
}

/// Labels accepted by [`classify_weather`], in canonical spelling.
pub fn known_conditions() -> impl Iterator<Item = &'static str> {
    CONDITION_TABLE.iter().map(|(label, _, _)| *label)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawWeatherRecord {
    pub timestamp: NaiveDateTime,
    /// Degrees F.
    pub temperature: f64,
    /// Degrees F.
    pub dew_point: f64,
    /// Percent in `[0, 100]`.
    pub humidity: f64,
    /// mph, non-negative.
    pub wind_speed: f64,
    pub condition: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSolarRecord {
    pub timestamp: NaiveDateTime,
    pub power_kw: f64,
}

/// One solar reading joined to its nearest weather record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedSample {
    /// 15-minute clock index (see [`clock_index`]).
    pub k: i64,
    pub timestamp: NaiveDateTime,
    pub power_kw: f64,
    pub temperature: f64,
    pub dew_point: f64,
    pub humidity: f64,
    pub wind_speed: f64,
    /// Hours since midnight in `[0, 24)`.
    pub u5: f64,
    pub weather_type: WeatherType,
    pub cloud_subtype: CloudSubtype,
    /// Minutes between the solar timestamp and the matched weather record.
    pub alignment_gap_min: i64,
}

impl AlignedSample {
    pub fn slot(&self) -> usize {
        slot_of(&self.timestamp)
    }

    pub fn date(&self) -> chrono::NaiveDate {
        self.timestamp.date()
    }

    /// True when `next` is the grid point immediately after `self` on the same day.
    pub fn is_followed_by(&self, next: &AlignedSample) -> bool {
        next.k == self.k + 1 && next.date() == self.date()
    }
}
