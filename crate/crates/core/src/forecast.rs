//! Weather-switched predictor: one-step and recursive multi-step forecasts,
//! the model file, and the combined multi-step error metric.

use std::fmt;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::cls_solver::Coefficients;
use crate::data_ingest::{AlignedSample, WeatherType};
use crate::detrend::{detrend, DeviationSeries, MeanDailyProfile, PowerScale};
use crate::error::{Error, Result};
use crate::features::{build_regressor, normalize, FeatureIndex, NormalizationVector, CATALOG_VERSION};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_HORIZON: usize = 4;

/// `F_i(phi) = sum_f a_f C_f(phi)` for one weather type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherModel {
    pub weather_type: WeatherType,
    pub features: Vec<FeatureIndex>,
    pub coefficients: Vec<f64>,
    /// Set when there was no data to fit; the model then predicts the profile.
    #[serde(default)]
    pub fallback: bool,
}

impl WeatherModel {
    pub fn empty(weather_type: WeatherType) -> Self {
        Self {
            weather_type,
            features: Vec::new(),
            coefficients: Vec::new(),
            fallback: false,
        }
    }

    pub fn from_coefficients(weather_type: WeatherType, coeffs: &Coefficients) -> Self {
        Self {
            weather_type,
            features: coeffs.features.clone(),
            coefficients: coeffs.values.clone(),
            fallback: false,
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|a| a.abs()).sum()
    }

    /// Predicted next-step deviation from the current sample and deviation.
    /// Returns the prediction and whether the regressor had to be clamped.
    pub fn predict(&self, sample: &AlignedSample, yprime: f64, norm: &NormalizationVector) -> (f64, bool) {
        let (phi, clamps) = normalize(&build_regressor(sample, yprime), norm);
        let value = self
            .features
            .iter()
            .zip(&self.coefficients)
            .map(|(f, a)| a * f.evaluate(&phi, sample.u5, sample.cloud_subtype))
            .sum();
        (value, clamps > 0)
    }

    pub fn validate(&self, l1_mode: bool) -> Result<()> {
        if self.features.len() != self.coefficients.len() {
            return Err(Error::Model(format!(
                "{} model has {} features but {} coefficients",
                self.weather_type,
                self.features.len(),
                self.coefficients.len()
            )));
        }
        let mut sorted = self.features.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.features.len() {
            return Err(Error::Model(format!("{} model repeats a feature", self.weather_type)));
        }
        if self.coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::Model(format!(
                "{} model has non-finite coefficients",
                self.weather_type
            )));
        }
        if l1_mode && self.l1_norm() > 1.0 + 1e-8 {
            return Err(Error::Model(format!(
                "{} model violates the L1 bound (sum |a| = {})",
                self.weather_type,
                self.l1_norm()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherModels {
    pub cloudy: WeatherModel,
    pub fair: WeatherModel,
    pub haze: WeatherModel,
}

impl WeatherModels {
    pub fn empty() -> Self {
        Self {
            cloudy: WeatherModel::empty(WeatherType::Cloudy),
            fair: WeatherModel::empty(WeatherType::Fair),
            haze: WeatherModel::empty(WeatherType::Haze),
        }
    }

    pub fn get(&self, weather: WeatherType) -> &WeatherModel {
        match weather {
            WeatherType::Cloudy => &self.cloudy,
            WeatherType::Fair => &self.fair,
            WeatherType::Haze => &self.haze,
        }
    }

    pub fn get_mut(&mut self, weather: WeatherType) -> &mut WeatherModel {
        match weather {
            WeatherType::Cloudy => &mut self.cloudy,
            WeatherType::Fair => &mut self.fair,
            WeatherType::Haze => &mut self.haze,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &WeatherModel> {
        [&self.cloudy, &self.fair, &self.haze].into_iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub dataset_id: String,
    /// RFC 3339 creation time; informational only.
    pub created_at: String,
    pub catalog_version: u32,
}

/// Everything needed to forecast, frozen after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastModel {
    pub format_version: u32,
    pub metadata: ModelMetadata,
    pub scale: PowerScale,
    pub profile: MeanDailyProfile,
    pub norm: NormalizationVector,
    pub l1_mode: bool,
    pub models: WeatherModels,
}

impl ForecastModel {
    pub fn new(
        dataset_id: impl Into<String>,
        scale: PowerScale,
        profile: MeanDailyProfile,
        norm: NormalizationVector,
        l1_mode: bool,
        models: WeatherModels,
    ) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            metadata: ModelMetadata {
                dataset_id: dataset_id.into(),
                created_at: String::new(),
                catalog_version: CATALOG_VERSION,
            },
            scale,
            profile,
            norm,
            l1_mode,
            models,
        }
    }

    pub fn model(&self, weather: WeatherType) -> &WeatherModel {
        self.models.get(weather)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.metadata.catalog_version != CATALOG_VERSION {
            return Err(Error::Model(format!(
                "model uses feature catalog version {} (expected {CATALOG_VERSION})",
                self.metadata.catalog_version
            )));
        }
        if !(self.scale.y_max.is_finite() && self.scale.y_max > 0.0) {
            return Err(Error::Model("y_max must be positive".into()));
        }
        self.profile.validate()?;
        self.norm.validate()?;
        for (m, w) in self.models.iter().zip(WeatherType::ALL) {
            if m.weather_type != w {
                return Err(Error::Model(format!("model slot {w} holds a {} model", m.weather_type)));
            }
            m.validate(self.l1_mode)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // Check the version before the full schema so old files get a clear message.
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Model(format!(
                    "unsupported model format version {v} (expected {MODEL_FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Model("missing format_version".into())),
        }
        let model: ForecastModel = serde_json::from_value(value)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// A contiguous run of samples with their deviations, ready for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSplit {
    pub samples: Vec<AlignedSample>,
    pub deviations: DeviationSeries,
}

impl PreparedSplit {
    pub fn new(samples: Vec<AlignedSample>, scale: &PowerScale, profile: &MeanDailyProfile) -> Self {
        let deviations = detrend(&samples, scale, profile);
        Self { samples, deviations }
    }

    pub fn for_model(samples: Vec<AlignedSample>, model: &ForecastModel) -> Self {
        Self::new(samples, &model.scale, &model.profile)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn position(&self, timestamp: NaiveDateTime) -> Option<usize> {
        self.samples.binary_search_by(|s| s.timestamp.cmp(&timestamp)).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    EndOfData,
    DataGap,
    DayBoundary,
}

impl fmt::Display for Truncation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Truncation::EndOfData => "end_of_data",
            Truncation::DataGap => "data_gap",
            Truncation::DayBoundary => "day_boundary",
        })
    }
}

/// Why step `h` from `origin` cannot be scored, if it cannot.
pub fn step_blocker(samples: &[AlignedSample], origin: usize, h: usize) -> Option<Truncation> {
    let prev = &samples[origin + h - 1];
    match samples.get(origin + h) {
        None => Some(Truncation::EndOfData),
        Some(next) if next.date() != prev.date() => Some(Truncation::DayBoundary),
        Some(next) if next.k != prev.k + 1 => Some(Truncation::DataGap),
        Some(_) => None,
    }
}

/// First blocked step in the window `1..=horizon`, if any.
pub fn window_blocker(samples: &[AlignedSample], origin: usize, horizon: usize) -> Option<Truncation> {
    (1..=horizon).find_map(|h| step_blocker(samples, origin, h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneStep {
    pub yprime: f64,
    pub kw: f64,
    pub weather_type: WeatherType,
}

/// `y'(k+1|k)` from sample `k`, retrended at `next_slot`.
pub fn predict_one_step(model: &ForecastModel, sample: &AlignedSample, yprime: f64, next_slot: usize) -> OneStep {
    let (yhat, _) = model.model(sample.weather_type).predict(sample, yprime, &model.norm);
    OneStep {
        yprime: yhat,
        kw: model.scale.kw(yhat + model.profile.value(next_slot)),
        weather_type: sample.weather_type,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionStep {
    pub horizon: usize,
    pub timestamp: NaiveDateTime,
    /// Weather type of the model used for this step.
    pub weather_type: WeatherType,
    pub yprime: f64,
    /// Retrended scaled prediction (before any clipping).
    pub scaled: f64,
    pub kw: f64,
    /// The regressor fed to this step needed clamping.
    pub input_clamped: bool,
    pub actual_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    pub origin_index: usize,
    pub origin_timestamp: NaiveDateTime,
    pub steps: Vec<PredictionStep>,
    pub truncated: Option<Truncation>,
}

/// Recursive forecast from `data.samples[origin]`. Step `h` feeds the step
/// `h - 1` prediction into the autoregressive slot and switches model on the
/// recorded weather type of sample `origin + h - 1`. Stops early when the
/// next grid point is missing.
pub fn predict_multi_step(
    model: &ForecastModel,
    data: &PreparedSplit,
    origin: usize,
    horizon: usize,
) -> PredictionTrace {
    let samples = &data.samples;
    let mut steps = Vec::with_capacity(horizon);
    let mut truncated = None;
    let mut yprime = data.deviations.values[origin];
    for h in 1..=horizon {
        if let Some(reason) = step_blocker(samples, origin, h) {
            truncated = Some(reason);
            break;
        }
        let input = &samples[origin + h - 1];
        let target = &samples[origin + h];
        let (yhat, input_clamped) = model.model(input.weather_type).predict(input, yprime, &model.norm);
        let scaled = yhat + model.profile.value(target.slot());
        steps.push(PredictionStep {
            horizon: h,
            timestamp: target.timestamp,
            weather_type: input.weather_type,
            yprime: yhat,
            scaled,
            kw: model.scale.kw(scaled),
            input_clamped,
            actual_kw: target.power_kw,
        });
        yprime = yhat;
    }
    PredictionTrace {
        origin_index: origin,
        origin_timestamp: samples[origin].timestamp,
        steps,
        truncated,
    }
}

/// Mean squared errors per origin weather type; `None` when no origin had
/// that weather.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerWeather {
    pub cloudy: Option<f64>,
    pub fair: Option<f64>,
    pub haze: Option<f64>,
}

impl PerWeather {
    pub fn get(&self, weather: WeatherType) -> Option<f64> {
        match weather {
            WeatherType::Cloudy => self.cloudy,
            WeatherType::Fair => self.fair,
            WeatherType::Haze => self.haze,
        }
    }

    fn set(&mut self, weather: WeatherType, value: Option<f64>) {
        match weather {
            WeatherType::Cloudy => self.cloudy = value,
            WeatherType::Fair => self.fair = value,
            WeatherType::Haze => self.haze = value,
        }
    }
}

/// Combined multi-step error over every origin whose full window is present,
/// in scaled power units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub horizon: usize,
    pub combined_mse: f64,
    pub per_horizon: Vec<f64>,
    pub per_weather: PerWeather,
    pub n_origins: usize,
    pub truncated_origins: usize,
    pub negative_prediction_count: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalOptions {
    /// Floor retrended predictions at zero before scoring.
    pub clip_predictions: bool,
}

/// Scores scaled predictions supplied by `predict(origin)` (one value per
/// horizon) against the recorded scaled power.
pub fn score_predictions<F>(
    samples: &[AlignedSample],
    scale: &PowerScale,
    horizon: usize,
    mut predict: F,
) -> Result<MetricReport>
where
    F: FnMut(usize) -> Vec<f64>,
{
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut per_h = vec![0.0; horizon];
    let mut weather_sum = [0.0; 3];
    let mut weather_count = [0usize; 3];
    let mut n_origins = 0;
    let mut truncated = 0;
    let mut negative = 0;
    for origin in 0..samples.len() {
        if window_blocker(samples, origin, horizon).is_some() {
            truncated += 1;
            continue;
        }
        let preds = predict(origin);
        let mut origin_sum = 0.0;
        for h in 1..=horizon {
            let pred = preds[h - 1];
            if pred < 0.0 {
                negative += 1;
            }
            let err = (pred - scale.scaled(samples[origin + h].power_kw)).powi(2);
            per_h[h - 1] += err;
            origin_sum += err;
        }
        let w = samples[origin].weather_type.index();
        weather_sum[w] += origin_sum / horizon as f64;
        weather_count[w] += 1;
        n_origins += 1;
    }
    if n_origins == 0 {
        return Err(Error::Empty(format!("no origin has a complete {horizon}-step window")));
    }
    let n = n_origins as f64;
    let per_horizon: Vec<f64> = per_h.iter().map(|s| s / n).collect();
    let combined_mse = per_h.iter().sum::<f64>() / (horizon as f64 * n);
    let mut per_weather = PerWeather::default();
    for w in WeatherType::ALL {
        let i = w.index();
        per_weather.set(
            w,
            (weather_count[i] > 0).then(|| weather_sum[i] / weather_count[i] as f64),
        );
    }
    Ok(MetricReport {
        horizon,
        combined_mse,
        per_horizon,
        per_weather,
        n_origins,
        truncated_origins: truncated,
        negative_prediction_count: negative,
    })
}

/// Combined multi-step metric of the model on a prepared split.
pub fn evaluate(
    model: &ForecastModel,
    data: &PreparedSplit,
    horizon: usize,
    options: EvalOptions,
) -> Result<MetricReport> {
    score_predictions(&data.samples, &model.scale, horizon, |origin| {
        predict_multi_step(model, data, origin, horizon)
            .steps
            .iter()
            .map(|s| {
                if options.clip_predictions {
                    s.scaled.max(0.0)
                } else {
                    s.scaled
                }
            })
            .collect()
    })
}

pub fn combined_mse(model: &ForecastModel, data: &PreparedSplit, horizon: usize) -> Result<f64> {
    evaluate(model, data, horizon, EvalOptions::default()).map(|r| r.combined_mse)
}

/// Persistence: every horizon repeats the measurement at the origin.
pub fn evaluate_persistence(data: &PreparedSplit, scale: &PowerScale, horizon: usize) -> Result<MetricReport> {
    score_predictions(&data.samples, scale, horizon, |origin| {
        vec![scale.scaled(data.samples[origin].power_kw); horizon]
    })
}

/// Measured power next to the one-step and `horizon`-step predictions that
/// target the same timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub timestamp: NaiveDateTime,
    pub measured_kw: f64,
    pub pred_1step_kw: Option<f64>,
    pub pred_last_kw: Option<f64>,
    pub weather_type: WeatherType,
}

pub fn plot_rows(model: &ForecastModel, data: &PreparedSplit, horizon: usize, options: EvalOptions) -> Vec<PlotRow> {
    let clip = |kw: f64| if options.clip_predictions { kw.max(0.0) } else { kw };
    let mut rows: Vec<PlotRow> = data
        .samples
        .iter()
        .map(|s| PlotRow {
            timestamp: s.timestamp,
            measured_kw: s.power_kw,
            pred_1step_kw: None,
            pred_last_kw: None,
            weather_type: s.weather_type,
        })
        .collect();
    for origin in 0..data.len() {
        let trace = predict_multi_step(model, data, origin, horizon);
        if let Some(first) = trace.steps.first() {
            rows[origin + 1].pred_1step_kw = Some(clip(first.kw));
        }
        if trace.steps.len() == horizon {
            rows[origin + horizon].pred_last_kw = Some(clip(trace.steps[horizon - 1].kw));
        }
    }
    rows
}
