use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{classify_weather, clock_index, hours_of_day, AlignedSample, RawSolarRecord, RawWeatherRecord};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ALIGNMENT_GAP_MIN: i64 = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentWarning {
    pub timestamp: NaiveDateTime,
    pub gap_min: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub samples: Vec<AlignedSample>,
    /// Samples whose matched weather record is further away than the threshold.
    pub warnings: Vec<AlignmentWarning>,
    pub max_gap_min: i64,
}

/// Joins every solar record with its nearest weather record. Equidistant
/// candidates resolve to the earlier record.
///
/// Both inputs must be sorted by timestamp (the parsers guarantee this).
pub fn align_series(solar: &[RawSolarRecord], weather: &[RawWeatherRecord], warn_gap_min: i64) -> Result<Alignment> {
    if weather.is_empty() {
        return Err(Error::Empty("weather record list".into()));
    }
    if solar.is_empty() {
        return Err(Error::Empty("solar record list".into()));
    }
    debug_assert!(weather.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));

    let mut samples = Vec::with_capacity(solar.len());
    let mut warnings = Vec::new();
    let mut max_gap_min = 0;
    for rec in solar {
        let after = weather.partition_point(|w| w.timestamp <= rec.timestamp);
        let gap = |i: usize| (weather[i].timestamp - rec.timestamp).num_seconds().abs();
        let chosen = match (after.checked_sub(1), (after < weather.len()).then_some(after)) {
            (Some(before), Some(next)) => {
                if gap(next) < gap(before) {
                    next
                } else {
                    before
                }
            }
            (Some(before), None) => before,
            (None, Some(next)) => next,
            (None, None) => unreachable!("weather list is non-empty"),
        };
        let w = &weather[chosen];
        let gap_min = gap(chosen) / 60;
        let (weather_type, cloud_subtype) = classify_weather(&w.condition)?;
        if gap_min > warn_gap_min {
            warnings.push(AlignmentWarning {
                timestamp: rec.timestamp,
                gap_min,
            });
        }
        max_gap_min = max_gap_min.max(gap_min);
        samples.push(AlignedSample {
            k: clock_index(&rec.timestamp),
            timestamp: rec.timestamp,
            power_kw: rec.power_kw,
            temperature: w.temperature,
            dew_point: w.dew_point,
            humidity: w.humidity,
            wind_speed: w.wind_speed,
            u5: hours_of_day(&rec.timestamp),
            weather_type,
            cloud_subtype,
            alignment_gap_min: gap_min,
        });
    }
    if !warnings.is_empty() {
        log::warn!(
            "{} samples matched a weather record more than {warn_gap_min} min away",
            warnings.len()
        );
    }
    Ok(Alignment {
        samples,
        warnings,
        max_gap_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_ingest::parse_timestamp;

    fn w(ts: &str, temp: f64) -> RawWeatherRecord {
        RawWeatherRecord {
            timestamp: parse_timestamp(ts).unwrap(),
            temperature: temp,
            dew_point: 40.0,
            humidity: 50.0,
            wind_speed: 3.0,
            condition: "Fair".into(),
        }
    }

    fn s(ts: &str) -> RawSolarRecord {
        RawSolarRecord {
            timestamp: parse_timestamp(ts).unwrap(),
            power_kw: 1.0,
        }
    }

    #[test]
    fn nearest_record_wins() {
        let out = align_series(
            &[s("2014-01-01 12:00")],
            &[w("2014-01-01 11:50", 1.0), w("2014-01-01 12:20", 2.0)],
            120,
        )
        .unwrap();
        assert_eq!(out.samples[0].temperature, 1.0);
        assert_eq!(out.samples[0].alignment_gap_min, 10);
    }

    #[test]
    fn ties_go_to_the_earlier_record() {
        let out = align_series(
            &[s("2014-01-01 12:00")],
            &[w("2014-01-01 11:50", 1.0), w("2014-01-01 12:10", 2.0)],
            120,
        )
        .unwrap();
        assert_eq!(out.samples[0].temperature, 1.0);
    }

    #[test]
    fn hourly_weather_against_a_full_day_matches_brute_force() {
        let base = parse_timestamp("2014-01-01 00:00").unwrap();
        let solar: Vec<_> = (0..96)
            .map(|i| RawSolarRecord {
                timestamp: base + chrono::Duration::minutes(15 * i),
                power_kw: 0.0,
            })
            .collect();
        let weather: Vec<_> = (0..24)
            .map(|h| RawWeatherRecord {
                timestamp: base + chrono::Duration::minutes(60 * h + 7),
                temperature: h as f64,
                dew_point: 0.0,
                humidity: 0.0,
                wind_speed: 0.0,
                condition: "Haze".into(),
            })
            .collect();
        let out = align_series(&solar, &weather, 120).unwrap();
        assert_eq!(out.samples.len(), 96);
        for (rec, sample) in solar.iter().zip(&out.samples) {
            // exhaustive scan
            let best = weather
                .iter()
                .map(|wr| (wr.timestamp - rec.timestamp).num_minutes().abs())
                .min()
                .unwrap();
            assert_eq!(sample.alignment_gap_min, best);
            assert!(sample.alignment_gap_min <= 38);
        }
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn stale_weather_is_a_warning_not_an_error() {
        let out = align_series(&[s("2014-01-01 12:00")], &[w("2014-01-01 08:00", 1.0)], 120).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.max_gap_min, 240);
    }

    #[test]
    fn empty_weather_is_an_error() {
        assert!(matches!(
            align_series(&[s("2014-01-01 12:00")], &[], 120),
            Err(Error::Empty(_))
        ));
    }
}
