//! Synthetic solar and weather data with a known generating model.
//!
//! Power is a clear-sky bell scaled by a per-weather cloud factor, plus a
//! deviation series that follows an optional planted feature-space model.
//! Weather inputs are sinusoids whose daily phase steps evenly through the
//! training days; combined with a "balanced" constant term this makes the
//! training mean of the deviation exactly zero in every slot, so detrending
//! with the training profile recovers the planted deviations.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_ingest::{
    align_series, classify_weather, AlignedSample, CloudSubtype, RawSolarRecord, RawWeatherRecord, SplitSpec,
    WeatherType, SLOTS_PER_DAY,
};
use crate::data_ingest::{write_solar_csv, write_weather_csv};
use crate::error::{Error, Result};
use crate::features::{build_regressor, normalize, FeatureIndex, NormalizationVector, RegressorVector, AR_COLUMN};

/// Weather label that applies from `start_slot` until the next segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start_slot: usize,
    pub condition: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedTerm {
    pub feature: FeatureIndex,
    pub coefficient: f64,
}

/// Sparse coefficient maps per weather type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedModel {
    pub cloudy: Vec<PlantedTerm>,
    pub fair: Vec<PlantedTerm>,
    pub haze: Vec<PlantedTerm>,
}

impl PlantedModel {
    pub fn get(&self, weather: WeatherType) -> &[PlantedTerm] {
        match weather {
            WeatherType::Cloudy => &self.cloudy,
            WeatherType::Fair => &self.fair,
            WeatherType::Haze => &self.haze,
        }
    }

    fn get_mut(&mut self, weather: WeatherType) -> &mut Vec<PlantedTerm> {
        match weather {
            WeatherType::Cloudy => &mut self.cloudy,
            WeatherType::Fair => &mut self.fair,
            WeatherType::Haze => &mut self.haze,
        }
    }

    pub fn l1_norm(&self, weather: WeatherType) -> f64 {
        self.get(weather).iter().map(|t| t.coefficient.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dataset_id: String,
    pub start_date: NaiveDate,
    pub train_days: usize,
    pub validation_days: usize,
    pub test_days: usize,
    /// Power is zero at and before this slot.
    pub sunrise_slot: usize,
    /// Power is zero at and after this slot.
    pub sunset_slot: usize,
    /// Bell amplitude in kW.
    pub amplitude_kw: f64,
    /// Same segments every day, sorted by start slot.
    pub segments: Vec<Segment>,
    /// Standard deviation of the deviation noise, in scaled units.
    pub sigma: f64,
    pub planted: Option<PlantedModel>,
    pub seed: u64,
    pub weather_interval_min: i64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dataset_id: "synthetic".into(),
            start_date: NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date"),
            train_days: 25,
            validation_days: 5,
            test_days: 5,
            sunrise_slot: 24,
            sunset_slot: 76,
            amplitude_kw: 5.0,
            segments: vec![Segment {
                start_slot: 0,
                condition: "Fair".into(),
            }],
            sigma: 0.0,
            planted: None,
            seed: 0,
            weather_interval_min: 20,
        }
    }
}

/// Sinusoidal weather input `level + swing * sin(theta_d + omega t + psi)`
/// with `psi` chosen so that the peak falls at noon of the first day.
struct Input {
    level: f64,
    swing: f64,
    period_h: f64,
}

const INPUTS: [Input; 4] = [
    Input {
        level: 62.0,
        swing: 12.0,
        period_h: 24.0,
    },
    Input {
        level: 45.0,
        swing: 6.0,
        period_h: 17.0,
    },
    Input {
        level: 60.0,
        swing: 30.0,
        period_h: 13.0,
    },
    Input {
        level: 8.0,
        swing: 6.0,
        period_h: 9.0,
    },
];

const PEAK_HOUR: f64 = 12.0;
const VALIDATION_PHASE_OFFSET: f64 = 0.37;

pub fn cloud_factor(weather: WeatherType, subtype: CloudSubtype) -> f64 {
    match (weather, subtype) {
        (_, CloudSubtype::CloudyProper) => 0.45,
        (_, CloudSubtype::MostlyCloudy) => 0.65,
        (_, CloudSubtype::PartlyCloudy) => 0.85,
        (WeatherType::Haze, _) => 0.9,
        _ => 1.0,
    }
}

impl SyntheticSpec {
    pub fn days(&self) -> usize {
        self.train_days + self.validation_days + self.test_days
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec::consecutive(
            self.start_date,
            self.train_days as i64,
            self.validation_days as i64,
            self.test_days as i64,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic spec: {m}")));
        if self.days() == 0 || self.train_days == 0 {
            return bad("needs at least one training day");
        }
        if !(self.sunrise_slot + 2 < self.sunset_slot && self.sunset_slot < SLOTS_PER_DAY) {
            return bad("sunrise must precede sunset by at least three slots");
        }
        if !(self.amplitude_kw.is_finite() && self.amplitude_kw > 0.0) {
            return bad("amplitude must be positive");
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad("sigma must be non-negative");
        }
        if self.weather_interval_min <= 0 || 1440 % self.weather_interval_min != 0 {
            return bad("weather interval must divide a day");
        }
        if self.segments.is_empty() || self.segments[0].start_slot != 0 {
            return bad("segments must start at slot 0");
        }
        if self.segments.windows(2).any(|w| w[0].start_slot >= w[1].start_slot) {
            return bad("segments must be sorted by start slot");
        }
        for s in &self.segments {
            classify_weather(&s.condition)?;
        }
        if let Some(planted) = &self.planted {
            for w in WeatherType::ALL {
                if planted.l1_norm(w) > 1.0 + 1e-12 {
                    return bad(&format!("planted {w} model has sum |a| > 1"));
                }
                if planted.get(w).iter().any(|t| !t.coefficient.is_finite()) {
                    return bad("planted coefficients must be finite");
                }
            }
        }
        Ok(())
    }

    fn condition_at(&self, slot: usize) -> &str {
        let i = self.segments.partition_point(|s| s.start_slot <= slot);
        &self.segments[i - 1].condition
    }

    fn day_phase(&self, day: usize) -> f64 {
        let period = self.train_days as f64;
        let d = day as f64;
        if day < self.train_days {
            2.0 * PI * d / period
        } else {
            2.0 * PI * (d + VALIDATION_PHASE_OFFSET) / period
        }
    }

    fn input_value(&self, input: &Input, day: usize, hours: f64) -> f64 {
        let omega = 2.0 * PI / input.period_h;
        let psi = PI / 2.0 - omega * PEAK_HOUR;
        input.level + input.swing * (self.day_phase(day) + omega * hours + psi).sin()
    }

    fn is_daylight(&self, slot: usize) -> bool {
        self.sunrise_slot < slot && slot < self.sunset_slot
    }

    fn bell(&self, slot: usize) -> f64 {
        if !self.is_daylight(slot) {
            return 0.0;
        }
        let span = (self.sunset_slot - self.sunrise_slot) as f64;
        (PI * (slot - self.sunrise_slot) as f64 / span).sin()
    }

    /// Haze mornings, fair middays and partly cloudy afternoons, each with a
    /// five-term planted model (constant included).
    pub fn recovery(sigma: f64, seed: u64) -> Self {
        let term = |w, j, a| PlantedTerm {
            feature: FeatureIndex::polynomial(w, j),
            coefficient: a,
        };
        let planted = PlantedModel {
            haze: vec![
                term(1, 0, 0.45),
                term(1, 1, 0.012),
                term(2, 3, -0.01),
                term(1, 4, 0.008),
            ],
            fair: vec![
                term(1, 0, 0.5),
                term(2, 3, 0.012),
                term(3, 4, -0.008),
                term(1, 1, -0.01),
            ],
            cloudy: vec![term(1, 0, 0.8), term(1, 3, -0.02), term(2, 4, 0.02), term(3, 1, 0.01)],
        };
        let spec = Self {
            dataset_id: "synthetic-recovery".into(),
            segments: vec![
                Segment {
                    start_slot: 0,
                    condition: "Haze".into(),
                },
                Segment {
                    start_slot: 40,
                    condition: "Fair".into(),
                },
                Segment {
                    start_slot: 56,
                    condition: "Partly Cloudy".into(),
                },
            ],
            sigma,
            seed,
            ..Self::default()
        };
        let balanced = balance(&spec, planted).expect("preset planted model is balanceable");
        Self {
            planted: Some(balanced),
            ..spec
        }
    }

    /// Fair weather all day with an autoregressive planted model.
    pub fn fair_only(sigma: f64, seed: u64) -> Self {
        let spec = Self {
            dataset_id: "synthetic-fair".into(),
            sigma,
            seed,
            ..Self::default()
        };
        let planted = PlantedModel {
            fair: vec![
                PlantedTerm {
                    feature: FeatureIndex::polynomial(1, AR_COLUMN),
                    coefficient: 0.7,
                },
                PlantedTerm {
                    feature: FeatureIndex::polynomial(1, 3),
                    coefficient: 0.01,
                },
            ],
            ..PlantedModel::default()
        };
        let balanced = balance(&spec, planted).expect("preset planted model is balanceable");
        Self {
            planted: Some(balanced),
            ..spec
        }
    }
}

/// The generated series together with the quantities it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub weather: Vec<RawWeatherRecord>,
    pub solar: Vec<RawSolarRecord>,
    /// Aligned samples, with power filled in.
    pub samples: Vec<AlignedSample>,
    /// Planted deviation per sample, in scaled units, before the floor at zero.
    pub deviation: Vec<f64>,
    /// Reference curve per sample (bell times cloud factor), scaled units.
    pub reference: Vec<f64>,
    /// Normalization the planted model was evaluated with.
    pub norm: NormalizationVector,
    /// Samples whose power had to be floored at zero.
    pub floored: usize,
}

fn weather_records(spec: &SyntheticSpec) -> Vec<RawWeatherRecord> {
    let mut out = Vec::new();
    let per_day = 1440 / spec.weather_interval_min;
    for day in 0..spec.days() {
        let date = spec.start_date + Duration::days(day as i64);
        let midnight = date.and_hms_opt(0, 0, 0).expect("midnight");
        for i in 0..per_day {
            let minutes = i * spec.weather_interval_min;
            let hours = minutes as f64 / 60.0;
            let slot = (minutes / 15) as usize;
            let v: Vec<f64> = INPUTS.iter().map(|inp| spec.input_value(inp, day, hours)).collect();
            out.push(RawWeatherRecord {
                timestamp: midnight + Duration::minutes(minutes),
                temperature: v[0],
                dew_point: v[1],
                humidity: v[2],
                wind_speed: v[3],
                condition: spec.condition_at(slot).to_string(),
            });
        }
    }
    out
}

fn aligned_skeleton(spec: &SyntheticSpec, weather: &[RawWeatherRecord]) -> Result<Vec<AlignedSample>> {
    let mut solar = Vec::with_capacity(spec.days() * SLOTS_PER_DAY);
    for day in 0..spec.days() {
        let midnight = (spec.start_date + Duration::days(day as i64))
            .and_hms_opt(0, 0, 0)
            .expect("midnight");
        for slot in 0..SLOTS_PER_DAY {
            solar.push(RawSolarRecord {
                timestamp: midnight + Duration::minutes(15 * slot as i64),
                power_kw: 0.0,
            });
        }
    }
    Ok(align_series(&solar, weather, i64::MAX)?.samples)
}

/// Normalization over training daylight samples, which is what the library
/// computes on this data with daytime filtering on.
fn daylight_norm(spec: &SyntheticSpec, samples: &[AlignedSample]) -> NormalizationVector {
    let regs: Vec<RegressorVector> = samples
        .iter()
        .enumerate()
        .filter(|(i, s)| i / SLOTS_PER_DAY < spec.train_days && spec.is_daylight(s.slot()))
        .map(|(_, s)| build_regressor(s, 0.0))
        .collect();
    NormalizationVector::fit(&regs)
}

fn planted_value(terms: &[PlantedTerm], sample: &AlignedSample, yprime: f64, norm: &NormalizationVector) -> f64 {
    let (phi, _) = normalize(&build_regressor(sample, yprime), norm);
    terms
        .iter()
        .map(|t| t.coefficient * t.feature.evaluate(&phi, sample.u5, sample.cloud_subtype))
        .sum()
}

/// Replaces the constant term of each weather model so that the training
/// mean of the planted deviation is zero in every slot. Only linear
/// autoregressive terms and Chebyshev terms of the four weather inputs keep
/// that mean independent of the slot, so other terms are rejected.
pub fn balance(spec: &SyntheticSpec, mut planted: PlantedModel) -> Result<PlantedModel> {
    let weather = weather_records(spec);
    let samples = aligned_skeleton(spec, &weather)?;
    let norm = daylight_norm(spec, &samples);
    let noon = (PEAK_HOUR * 4.0) as usize;
    for w in WeatherType::ALL {
        let terms = planted.get_mut(w);
        terms.retain(|t| t.feature != FeatureIndex::CONSTANT);
        for t in terms.iter() {
            let f = t.feature;
            let exogenous = (1..=10).contains(&f.w()) && (1..=4).contains(&(f.j() as usize));
            let linear_ar = f.w() == 1 && f.j() as usize == AR_COLUMN;
            if !exogenous && !linear_ar {
                return Err(Error::InvalidArgument(format!(
                    "cannot balance a planted model using {f}"
                )));
            }
        }
        let exogenous: Vec<PlantedTerm> = terms.iter().copied().filter(|t| !t.feature.uses_yprime()).collect();
        if exogenous.is_empty() {
            continue;
        }
        let mean = (0..spec.train_days)
            .map(|d| planted_value(&exogenous, &samples[d * SLOTS_PER_DAY + noon], 0.0, &norm))
            .sum::<f64>()
            / spec.train_days as f64;
        terms.insert(
            0,
            PlantedTerm {
                feature: FeatureIndex::CONSTANT,
                coefficient: -mean,
            },
        );
    }
    Ok(planted)
}

pub fn generate_series(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let weather = weather_records(spec);
    let mut samples = aligned_skeleton(spec, &weather)?;
    let norm = daylight_norm(spec, &samples);
    let planted = spec.planted.clone().unwrap_or_default();
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n = samples.len();
    let mut deviation = vec![0.0; n];
    let mut reference = vec![0.0; n];
    for day in 0..spec.days() {
        let base = day * SLOTS_PER_DAY;
        for slot in spec.sunrise_slot..spec.sunset_slot - 1 {
            let s = &samples[base + slot];
            let mut next = planted_value(planted.get(s.weather_type), s, deviation[base + slot], &norm);
            if spec.sigma > 0.0 {
                next += noise.sample(&mut rng);
            }
            deviation[base + slot + 1] = next;
        }
        for slot in 0..SLOTS_PER_DAY {
            let s = &samples[base + slot];
            reference[base + slot] = spec.bell(slot) * cloud_factor(s.weather_type, s.cloud_subtype);
        }
    }

    // Scale the reference so the training maximum of reference + deviation is 1.
    let mut c = f64::INFINITY;
    for i in 0..spec.train_days * SLOTS_PER_DAY {
        if reference[i] > 0.0 {
            c = c.min((1.0 - deviation[i]) / reference[i]);
        }
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidArgument(
            "planted deviations leave no room for the bell".into(),
        ));
    }
    let mut floored = 0;
    for i in 0..n {
        reference[i] *= c;
        let slot = i % SLOTS_PER_DAY;
        let scaled = if spec.is_daylight(slot) {
            reference[i] + deviation[i]
        } else {
            deviation[i] = 0.0;
            0.0
        };
        if scaled < 0.0 {
            floored += 1;
        }
        samples[i].power_kw = spec.amplitude_kw * scaled.max(0.0);
    }
    let solar = samples
        .iter()
        .map(|s| RawSolarRecord {
            timestamp: s.timestamp,
            power_kw: s.power_kw,
        })
        .collect();
    Ok(SyntheticData {
        weather,
        solar,
        samples,
        deviation,
        reference,
        norm,
        floored,
    })
}

/// Writes `solar.csv` and `weather.csv` into `dir`.
pub fn generate(spec: &SyntheticSpec, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let data = generate_series(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let solar = dir.join("solar.csv");
    let weather = dir.join("weather.csv");
    write_solar_csv(&solar, &data.solar)?;
    write_weather_csv(&weather, &data.weather)?;
    Ok((solar, weather))
}

/// Irreducible one-step error of the planted model, in scaled units.
pub fn ground_truth_mse(spec: &SyntheticSpec) -> f64 {
    spec.sigma * spec.sigma
}
