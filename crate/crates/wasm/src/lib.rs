//! Browser bindings for the demo page. Each export returns a JSON string.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use pvcheb::data_ingest::{
    clock_index, format_timestamp, hours_of_day, split_dataset, AlignedSample, CloudSubtype, WeatherType,
};
use pvcheb::detrend::{MeanDailyProfile, PowerScale};
use pvcheb::features::{chebyshev_all, FeatureIndex, NormalizationVector, CATALOG_SIZE, MAX_DEGREE};
use pvcheb::forecast::{
    evaluate, evaluate_persistence, plot_rows, predict_multi_step, window_blocker, EvalOptions, ForecastModel,
    PreparedSplit, WeatherModel, WeatherModels,
};
use pvcheb::pipeline::{train_select, usable_samples, TrainOptions};
use pvcheb::selection::SelectionConfig;
use pvcheb::synthetic::{generate_series, SyntheticSpec};

#[derive(Debug, Serialize)]
pub struct Curves {
    pub x: Vec<f64>,
    /// `curves[n][i] = T_n(x[i])`.
    pub curves: Vec<Vec<f64>>,
}

pub fn curves(max_degree: usize, points: usize) -> Result<Curves, String> {
    if max_degree > MAX_DEGREE {
        return Err(format!("degree is at most {MAX_DEGREE}"));
    }
    if points < 2 {
        return Err("need at least two points".into());
    }
    let x: Vec<f64> = (0..points)
        .map(|i| -1.0 + 2.0 * i as f64 / (points - 1) as f64)
        .collect();
    let all: Vec<_> = x.iter().map(|&v| chebyshev_all(v)).collect();
    let curves = (0..=max_degree).map(|n| all.iter().map(|t| t[n]).collect()).collect();
    Ok(Curves { x, curves })
}

#[derive(Debug, Serialize)]
pub struct SeriesPoint {
    pub timestamp: String,
    pub measured_kw: f64,
    pub one_step_kw: Option<f64>,
    pub last_step_kw: Option<f64>,
    pub persistence_kw: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ForecastDemo {
    pub horizon: usize,
    pub model_mse: f64,
    pub persistence_mse: f64,
    pub features: Vec<(String, Vec<String>)>,
    pub series: Vec<SeriesPoint>,
}

/// Trains on a synthetic dataset and forecasts its test days.
pub fn forecast(preset: &str, sigma: f64, seed: u64, horizon: usize, joint: bool) -> Result<ForecastDemo, String> {
    let spec = match preset {
        "fair" => SyntheticSpec::fair_only(sigma, seed),
        "mixed" => SyntheticSpec::recovery(sigma, seed),
        other => return Err(format!("unknown preset `{other}`")),
    };
    let data = generate_series(&spec).map_err(|e| e.to_string())?;
    let splits = split_dataset(&data.samples, &spec.split_spec()).map_err(|e| e.to_string())?;
    let options = TrainOptions {
        dataset_id: spec.dataset_id.clone(),
        horizon,
        selection: SelectionConfig {
            algorithm2: joint,
            ..SelectionConfig::default()
        },
        ..TrainOptions::default()
    };
    let trained = train_select(&splits, &options).map_err(|e| e.to_string())?;
    let model = &trained.model;
    let test = PreparedSplit::for_model(usable_samples(&splits.test, &model.profile, true), model);
    let report = evaluate(model, &test, horizon, EvalOptions::default()).map_err(|e| e.to_string())?;
    let pss = evaluate_persistence(&test, &model.scale, horizon).map_err(|e| e.to_string())?;
    let rows = plot_rows(model, &test, horizon, EvalOptions::default());
    let series = rows
        .iter()
        .enumerate()
        .map(|(i, r)| SeriesPoint {
            timestamp: format_timestamp(&r.timestamp),
            measured_kw: r.measured_kw,
            one_step_kw: r.pred_1step_kw,
            last_step_kw: r.pred_last_kw,
            persistence_kw: (i >= horizon && window_blocker(&test.samples, i - horizon, horizon).is_none())
                .then(|| test.samples[i - horizon].power_kw),
        })
        .collect();
    let features = model
        .models
        .iter()
        .map(|m| {
            (
                m.weather_type.to_string(),
                m.features.iter().map(|f| f.to_string()).collect(),
            )
        })
        .collect();
    Ok(ForecastDemo {
        horizon,
        model_mse: report.combined_mse,
        persistence_mse: pss.combined_mse,
        features,
        series,
    })
}

#[derive(Debug, Serialize)]
pub struct Recursion {
    pub l1_norm: f64,
    /// One predicted deviation path per random model.
    pub paths: Vec<Vec<f64>>,
    pub max_abs: f64,
}

/// Random models with coefficient magnitudes summing to `l1_norm`, run
/// recursively over random inputs.
pub fn recursion(l1_norm: f64, horizon: usize, paths: usize, seed: u64) -> Result<Recursion, String> {
    if !(l1_norm >= 0.0 && l1_norm.is_finite()) {
        return Err("l1 norm must be finite and non-negative".into());
    }
    if horizon == 0 || horizon > 40 {
        return Err("horizon must be in 1..=40".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = chrono::NaiveDate::from_ymd_opt(2014, 3, 1)
        .and_then(|d| d.and_hms_opt(8, 0, 0))
        .ok_or("bad start date")?;
    let mut out = Vec::with_capacity(paths);
    let mut max_abs = 0.0f64;
    for _ in 0..paths {
        let mut models = WeatherModels::empty();
        for w in WeatherType::ALL {
            // Every model feeds back its own prediction through C1(y').
            let mut positions = vec![FeatureIndex::polynomial(1, 0).position()];
            let extra = rng.random_range(0..5);
            while positions.len() < 1 + extra {
                let p = rng.random_range(0..CATALOG_SIZE);
                if !positions.contains(&p) {
                    positions.push(p);
                }
            }
            positions.sort_unstable();
            let raw: Vec<f64> = positions.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let total: f64 = raw.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
            *models.get_mut(w) = WeatherModel {
                weather_type: w,
                features: positions
                    .iter()
                    .filter_map(|&p| FeatureIndex::from_position(p))
                    .collect(),
                coefficients: raw.iter().map(|v| v * l1_norm / total).collect(),
                fallback: false,
            };
        }
        let profile = MeanDailyProfile {
            values: vec![0.5; 96],
            support: vec![1; 96],
        };
        let model = ForecastModel::new(
            "demo",
            PowerScale { y_max: 1.0 },
            profile,
            NormalizationVector([1.0, 100.0, 100.0, 100.0, 30.0, 24.0, 1.0, 1.0]),
            l1_norm <= 1.0,
            models,
        );
        let samples: Vec<AlignedSample> = (0..=horizon)
            .map(|i| {
                let ts = start + chrono::Duration::minutes(15 * i as i64);
                let w = WeatherType::ALL[rng.random_range(0..3)];
                AlignedSample {
                    k: clock_index(&ts),
                    timestamp: ts,
                    power_kw: rng.random_range(0.0..1.5),
                    temperature: rng.random_range(30.0..110.0),
                    dew_point: rng.random_range(20.0..80.0),
                    humidity: rng.random_range(0.0..100.0),
                    wind_speed: rng.random_range(0.0..40.0),
                    u5: hours_of_day(&ts),
                    weather_type: w,
                    cloud_subtype: if w == WeatherType::Cloudy {
                        CloudSubtype::MostlyCloudy
                    } else {
                        CloudSubtype::None
                    },
                    alignment_gap_min: 0,
                }
            })
            .collect();
        let data = PreparedSplit::for_model(samples, &model);
        let trace = predict_multi_step(&model, &data, 0, horizon);
        let path: Vec<f64> = trace.steps.iter().map(|s| s.yprime).collect();
        max_abs = path.iter().fold(max_abs, |m, v| m.max(v.abs()));
        out.push(path);
    }
    Ok(Recursion {
        l1_norm,
        paths: out,
        max_abs,
    })
}

fn to_js<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// `{x, curves}` for `T_0..T_max_degree` on an even grid over `[-1, 1]`.
#[wasm_bindgen]
pub fn chebyshev_curves(max_degree: usize, points: usize) -> Result<String, JsError> {
    to_js(curves(max_degree, points))
}

/// Train on a synthetic dataset (`"fair"` or `"mixed"`) and forecast its
/// test days next to the persistence baseline.
#[wasm_bindgen]
pub fn forecast_demo(preset: &str, sigma: f64, seed: u32, horizon: usize, joint: bool) -> Result<String, JsError> {
    to_js(forecast(preset, sigma, seed.into(), horizon, joint))
}

/// Recursive predictions of random models with a chosen coefficient L1 norm.
#[wasm_bindgen]
pub fn recursion_demo(l1_norm: f64, horizon: usize, paths: usize, seed: u32) -> Result<String, JsError> {
    to_js(recursion(l1_norm, horizon, paths, seed.into()))
}
