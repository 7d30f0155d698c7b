//! End-to-end runs: ingest raw files, train and select, evaluate, predict.
//! The CLI is a thin shell over these functions.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cls_solver::{Coefficients, SolverConfig};
use crate::data_ingest::{
    align_series, format_timestamp, parse_solar_csv, parse_weather_csv, split_dataset, AlignedSample, AlignmentWarning,
    SlotGap, SolarSchema, SplitKind, SplitSpec, Splits, WeatherSchema, WeatherType, DEFAULT_MAX_ALIGNMENT_GAP_MIN,
};
use crate::detrend::{compute_mean_profile, compute_scale, daytime_filter, detrend, MeanDailyProfile};
use crate::error::{Error, Result};
use crate::features::{build_feature_matrix, NormalizationVector};
use crate::forecast::{
    evaluate, evaluate_persistence, plot_rows, predict_multi_step, EvalOptions, ForecastModel, MetricReport,
    PerWeather, PlotRow, PredictionTrace, PreparedSplit, WeatherModel, WeatherModels, DEFAULT_HORIZON,
};
use crate::selection::{algorithm1, algorithm2, SelectionConfig, SelectionReport, SelectionState, Timings};

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub solar_schema: SolarSchema,
    pub weather_schema: WeatherSchema,
    pub split: SplitSpec,
    /// Alignment gaps above this many minutes are reported as warnings.
    pub max_alignment_gap_min: i64,
}

impl IngestOptions {
    pub fn new(split: SplitSpec) -> Self {
        Self {
            solar_schema: SolarSchema::default(),
            weather_schema: WeatherSchema::default(),
            split,
            max_alignment_gap_min: DEFAULT_MAX_ALIGNMENT_GAP_MIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub solar_rows: usize,
    pub weather_rows: usize,
    pub duplicate_weather_rows: usize,
    pub solar_gaps: Vec<SlotGap>,
    pub aligned_rows: usize,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub test_rows: usize,
    /// Aligned rows whose date falls outside every split range.
    pub unassigned_rows: usize,
    pub max_alignment_gap_min: i64,
    pub alignment_warnings: Vec<AlignmentWarning>,
}

pub fn ingest(solar: &Path, weather: &Path, options: &IngestOptions) -> Result<(Splits, IngestReport)> {
    options.split.validate()?;
    let weather_parse = parse_weather_csv(weather, &options.weather_schema)?;
    let solar_parse = parse_solar_csv(solar, &options.solar_schema)?;
    let alignment = align_series(
        &solar_parse.records,
        &weather_parse.records,
        options.max_alignment_gap_min,
    )?;
    for w in &alignment.warnings {
        log::warn!(
            "{}: nearest weather record is {} min away",
            format_timestamp(&w.timestamp),
            w.gap_min
        );
    }
    let splits = split_dataset(&alignment.samples, &options.split)?;
    let assigned = splits.train.len() + splits.validation.len() + splits.test.len();
    let report = IngestReport {
        solar_rows: solar_parse.records.len(),
        weather_rows: weather_parse.records.len(),
        duplicate_weather_rows: weather_parse.duplicates,
        solar_gaps: solar_parse.gaps,
        aligned_rows: alignment.samples.len(),
        train_rows: splits.train.len(),
        validation_rows: splits.validation.len(),
        test_rows: splits.test.len(),
        unassigned_rows: alignment.samples.len() - assigned,
        max_alignment_gap_min: alignment.max_gap_min,
        alignment_warnings: alignment.warnings,
    };
    Ok((splits, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub dataset_id: String,
    pub l1_mode: bool,
    pub daytime_filter: bool,
    pub horizon: usize,
    pub solver: SolverConfig,
    pub selection: SelectionConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            dataset_id: String::new(),
            l1_mode: true,
            daytime_filter: true,
            horizon: DEFAULT_HORIZON,
            solver: SolverConfig::default(),
            selection: SelectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: ForecastModel,
    pub report: SelectionReport,
}

/// Samples used for fitting and scoring: daylight slots only when the filter is on.
pub fn usable_samples(samples: &[AlignedSample], profile: &MeanDailyProfile, filter: bool) -> Vec<AlignedSample> {
    if filter {
        daytime_filter(samples, profile)
    } else {
        samples.to_vec()
    }
}

#[cfg(not(target_arch = "wasm32"))]
fn stopwatch() -> impl Fn() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}

/// Fits scale, profile and normalization on the training split, runs the
/// per-weather search and then the joint refinement on validation.
pub fn train_select(splits: &Splits, options: &TrainOptions) -> Result<Trained> {
    options
        .solver
        .validate()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    options.selection.validate()?;
    if options.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let scale = compute_scale(&splits.train)?;
    let profile = compute_mean_profile(&splits.train, &scale)?;
    let train = usable_samples(&splits.train, &profile, options.daytime_filter);
    let validation = usable_samples(&splits.validation, &profile, options.daytime_filter);
    if train.is_empty() {
        return Err(Error::Empty("training split has no usable samples".into()));
    }
    let train_dev = detrend(&train, &scale, &profile);
    let norm = NormalizationVector::fit_samples(&train, &train_dev);
    let train_matrix = build_feature_matrix(&train, &train_dev, &norm, &profile, None);
    let val_dev = detrend(&validation, &scale, &profile);
    let val_matrix = build_feature_matrix(&validation, &val_dev, &norm, &profile, None);

    let mut warnings = Vec::new();
    if val_dev.clamp_count > 0 {
        warnings.push(format!(
            "{} validation deviations clamped to [-1, 1]",
            val_dev.clamp_count
        ));
    }
    if val_matrix.clamp_count > 0 {
        warnings.push(format!(
            "{} validation regressor entries clamped",
            val_matrix.clamp_count
        ));
    }

    let l1_bound = options.l1_mode.then_some(1.0);
    let mut state = SelectionState::default();
    let mut models = WeatherModels::empty();
    let mut weather = Vec::new();
    let elapsed = stopwatch();
    for w in WeatherType::ALL {
        let (sel, coeffs): (_, Coefficients) = algorithm1(
            &train_matrix,
            &val_matrix,
            w,
            l1_bound,
            &options.solver,
            &options.selection,
            &mut state,
        )?;
        let mut m = WeatherModel::from_coefficients(w, &coeffs);
        m.fallback = sel.fallback;
        if let Some(reason) = &sel.fallback_reason {
            warnings.push(format!("{w} model falls back to the mean profile: {reason}"));
        }
        *models.get_mut(w) = m;
        weather.push(sel);
    }
    let per_weather_s = elapsed();

    let mut model = ForecastModel::new(
        options.dataset_id.clone(),
        scale,
        profile,
        norm,
        options.l1_mode,
        models,
    );
    let elapsed = stopwatch();
    let mut joint = None;
    if options.selection.algorithm2 {
        let val_split = PreparedSplit::new(validation, &model.scale, &model.profile);
        match algorithm2(
            &mut model,
            &train_matrix,
            &val_split,
            options.horizon,
            &options.solver,
            &options.selection,
            &mut state,
        ) {
            Ok(report) => {
                if !report.converged {
                    warnings.push(format!(
                        "joint refinement hit the {}-pass cap",
                        options.selection.max_passes
                    ));
                }
                joint = Some(report);
            }
            Err(Error::Empty(msg)) => warnings.push(format!("joint refinement skipped: {msg}")),
            Err(e) => return Err(e),
        }
    }
    let joint_s = elapsed();
    model.validate()?;

    let report = SelectionReport {
        dataset_id: options.dataset_id.clone(),
        horizon: options.horizon,
        weather,
        joint,
        history: state.history,
        qp_solves: state.qp_solves,
        solver_failures: state.solver_failures,
        warnings,
        timings: Timings { per_weather_s, joint_s },
    };
    Ok(Trained { model, report })
}

/// One method's scores in the metrics schema shared with external baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub dataset_id: String,
    pub split: String,
    pub method: String,
    pub combined_mse_scaled: f64,
    pub per_horizon: Vec<f64>,
    pub per_weather: PerWeather,
    pub negative_prediction_count: usize,
    pub n_origins: usize,
    pub horizon: usize,
    pub truncated_origins: usize,
    /// `combined_mse_scaled * y_max^2`.
    pub combined_mse_kw2: f64,
}

impl MetricsRecord {
    pub fn new(dataset_id: &str, split: SplitKind, method: &str, report: &MetricReport, y_max: f64) -> Self {
        Self {
            dataset_id: dataset_id.to_string(),
            split: split.as_str().to_string(),
            method: method.to_string(),
            combined_mse_scaled: report.combined_mse,
            per_horizon: report.per_horizon.clone(),
            per_weather: report.per_weather,
            negative_prediction_count: report.negative_prediction_count,
            n_origins: report.n_origins,
            horizon: report.horizon,
            truncated_origins: report.truncated_origins,
            combined_mse_kw2: report.combined_mse * y_max * y_max,
        }
    }
}

/// Model scores with the persistence baseline alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    #[serde(flatten)]
    pub model: MetricsRecord,
    pub persistence: MetricsRecord,
}

pub const MODEL_METHOD: &str = "chebyshev_cls";
pub const PERSISTENCE_METHOD: &str = "persistence";

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricsDocument,
    pub plot: Vec<PlotRow>,
}

pub fn evaluate_split(
    model: &ForecastModel,
    samples: &[AlignedSample],
    split: SplitKind,
    horizon: usize,
    daytime_filter: bool,
    options: EvalOptions,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Empty(format!("{} split", split.as_str())));
    }
    let data = PreparedSplit::for_model(usable_samples(samples, &model.profile, daytime_filter), model);
    let id = &model.metadata.dataset_id;
    let y_max = model.scale.y_max;
    let report = evaluate(model, &data, horizon, options)?;
    let persistence = evaluate_persistence(&data, &model.scale, horizon)?;
    Ok(Evaluation {
        metrics: MetricsDocument {
            model: MetricsRecord::new(id, split, MODEL_METHOD, &report, y_max),
            persistence: MetricsRecord::new(id, split, PERSISTENCE_METHOD, &persistence, y_max),
        },
        plot: plot_rows(model, &data, horizon, options),
    })
}

/// Recursive forecast from the sample recorded at `origin`.
pub fn predict_at(
    model: &ForecastModel,
    samples: &[AlignedSample],
    origin: chrono::NaiveDateTime,
    horizon: usize,
    daytime_filter: bool,
) -> Result<PredictionTrace> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let data = PreparedSplit::for_model(usable_samples(samples, &model.profile, daytime_filter), model);
    let index = data.position(origin).ok_or_else(|| {
        Error::InvalidArgument(format!("origin {} is not a usable sample", format_timestamp(&origin)))
    })?;
    Ok(predict_multi_step(model, &data, index, horizon))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_plot_csv(path: &Path, rows: &[PlotRow], horizon: usize) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    let last = format!("pred_{horizon}step_kw");
    wtr.write_record([
        "timestamp",
        "measured_kw",
        "pred_1step_kw",
        last.as_str(),
        "weather_type",
    ])?;
    for r in rows {
        wtr.write_record([
            format_timestamp(&r.timestamp),
            r.measured_kw.to_string(),
            opt(r.pred_1step_kw),
            opt(r.pred_last_kw),
            r.weather_type.as_str().to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub const TRACE_COLUMNS: [&str; 5] = [
    "origin_timestamp",
    "horizon_steps",
    "predicted_kw",
    "actual_kw",
    "weather_type",
];

pub fn write_trace_csv(path: &Path, trace: &PredictionTrace) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record(TRACE_COLUMNS)?;
    let origin = format_timestamp(&trace.origin_timestamp);
    for s in &trace.steps {
        wtr.write_record([
            origin.clone(),
            s.horizon.to_string(),
            s.kw.to_string(),
            s.actual_kw.to_string(),
            s.weather_type.as_str().to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}
