use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use pvcheb::data_ingest::{
    parse_timestamp, read_aligned_csv, write_aligned_csv, AlignedSample, SplitKind, Splits, WeatherType,
};
use pvcheb::forecast::{EvalOptions, ForecastModel};
use pvcheb::pipeline::{
    evaluate_split, ingest as run_ingest, predict_at, train_select as run_train_select, write_plot_csv,
    write_trace_csv, IngestOptions, MetricsDocument, TrainOptions,
};
use pvcheb::selection::SelectionReport;
use pvcheb::synthetic::{generate, SyntheticSpec};
use pvcheb::Error;

use crate::config::{Paths, RunConfig};
use crate::{Failure, Preset};

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn required<'a>(path: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, Failure> {
    path.as_deref()
        .ok_or_else(|| usage(format!("no {name} file configured (set paths.{name} or --{name})")))
}

pub fn ingest(config: &RunConfig) -> Result<(), Failure> {
    let solar = required(&config.paths.solar, "solar")?;
    let weather = required(&config.paths.weather, "weather")?;
    let split = config
        .split
        .ok_or_else(|| usage("no split configured (add a [split] table)"))?;
    let options = IngestOptions {
        solar_schema: config.solar_columns.clone(),
        weather_schema: config.weather_columns.clone(),
        split,
        max_alignment_gap_min: config.max_alignment_gap_min,
    };
    let (splits, report) = run_ingest(solar, weather, &options)?;
    create_dir(&config.paths.output_dir)?;
    let aligned = config.aligned_path();
    write_aligned_csv(&aligned, &splits)?;
    write_json(&config.paths.output_dir.join("ingest_report.json"), &report)?;
    println!(
        "aligned {} rows (train {}, validation {}, test {}) -> {}",
        report.aligned_rows,
        report.train_rows,
        report.validation_rows,
        report.test_rows,
        aligned.display()
    );
    if !report.solar_gaps.is_empty() {
        log::warn!("{} missing solar grid points", report.solar_gaps.len());
    }
    Ok(())
}

fn load_splits(config: &RunConfig) -> Result<Splits, Failure> {
    Ok(read_aligned_csv(&config.aligned_path())?)
}

pub fn train_select(config: &RunConfig) -> Result<(), Failure> {
    let splits = load_splits(config)?;
    let options = TrainOptions {
        dataset_id: config.dataset_id.clone(),
        l1_mode: config.flags.l1_mode,
        daytime_filter: config.flags.daytime_filter,
        horizon: config.horizon,
        solver: config.solver,
        selection: config.selection,
    };
    let mut trained = run_train_select(&splits, &options)?;
    trained.model.metadata.created_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    create_dir(&config.paths.output_dir)?;
    let model_path = config.model_path();
    trained.model.save(&model_path)?;
    write_json(&config.report_path(), &trained.report)?;
    for m in trained.model.models.iter() {
        let names: Vec<String> = m.features.iter().map(|f| f.to_string()).collect();
        println!("{:<6} {:>2} features: {}", m.weather_type, names.len(), names.join(" "));
    }
    for warning in &trained.report.warnings {
        log::warn!("{warning}");
    }
    println!("model -> {}", model_path.display());
    Ok(())
}

pub fn evaluate(config: &RunConfig, split: &str) -> Result<(), Failure> {
    let kind = SplitKind::parse(split).ok_or_else(|| usage(format!("unknown split `{split}`")))?;
    let model = ForecastModel::load(&config.model_path())?;
    let splits = load_splits(config)?;
    let options = EvalOptions {
        clip_predictions: config.flags.clip_predictions,
    };
    let eval = evaluate_split(
        &model,
        splits.get(kind),
        kind,
        config.horizon,
        config.flags.daytime_filter,
        options,
    )?;
    let dir = &config.paths.output_dir;
    create_dir(dir)?;
    let name = kind.as_str();
    write_json(&dir.join(format!("metrics_{name}.json")), &eval.metrics)?;
    write_plot_csv(&dir.join(format!("plot_{name}.csv")), &eval.plot, config.horizon)?;
    let m = &eval.metrics;
    println!(
        "{name}: combined MSE {:.4e} (persistence {:.4e}) over {} origins",
        m.model.combined_mse_scaled, m.persistence.combined_mse_scaled, m.model.n_origins
    );
    if m.model.negative_prediction_count > 0 {
        log::warn!("{} negative predictions", m.model.negative_prediction_count);
    }
    Ok(())
}

fn all_samples(splits: Splits) -> Vec<AlignedSample> {
    let mut samples = splits.train;
    samples.extend(splits.validation);
    samples.extend(splits.test);
    samples.sort_by_key(|s| s.timestamp);
    samples
}

pub fn predict(config: &RunConfig, origin: &str) -> Result<(), Failure> {
    let ts = parse_timestamp(origin).ok_or_else(|| usage(format!("origin `{origin}` is not YYYY-MM-DD HH:MM")))?;
    let model = ForecastModel::load(&config.model_path())?;
    let samples = all_samples(load_splits(config)?);
    let trace = predict_at(&model, &samples, ts, config.horizon, config.flags.daytime_filter)?;
    let dir = &config.paths.output_dir;
    create_dir(dir)?;
    let stem = format!("trace_{}", ts.format("%Y%m%d_%H%M"));
    write_trace_csv(&dir.join(format!("{stem}.csv")), &trace)?;
    write_json(&dir.join(format!("{stem}.json")), &trace)?;
    for s in &trace.steps {
        println!(
            "h={} {} {:.4} kW (actual {:.4})",
            s.horizon, s.weather_type, s.kw, s.actual_kw
        );
    }
    if let Some(reason) = trace.truncated {
        println!("truncated after {} steps: {reason}", trace.steps.len());
    }
    Ok(())
}

fn preset_spec(preset: Preset, sigma: f64, seed: u64) -> SyntheticSpec {
    match preset {
        Preset::Recovery => SyntheticSpec::recovery(sigma, seed),
        Preset::FairOnly => SyntheticSpec::fair_only(sigma, seed),
        Preset::Clear => SyntheticSpec {
            dataset_id: "synthetic-clear".into(),
            sigma,
            seed,
            ..SyntheticSpec::default()
        },
    }
}

pub fn synth(config: &RunConfig, preset: Preset, sigma: f64, spec_path: Option<&Path>) -> Result<(), Failure> {
    let spec = match spec_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => preset_spec(preset, sigma, config.seed),
    };
    let dir = &config.paths.output_dir;
    let (solar, weather) = generate(&spec, dir)?;
    let run = RunConfig {
        dataset_id: spec.dataset_id.clone(),
        seed: spec.seed,
        paths: Paths {
            solar: Some("solar.csv".into()),
            weather: Some("weather.csv".into()),
            output_dir: ".".into(),
            model: None,
            aligned: None,
        },
        split: Some(spec.split_spec()),
        ..RunConfig::default()
    };
    write_text(&dir.join("run.toml"), &run.to_toml())?;
    let spec_text = toml::to_string_pretty(&spec).map_err(|e| usage(format!("synthetic spec: {e}")))?;
    write_text(&dir.join("synthetic.toml"), &spec_text)?;
    println!("{} and {} ({} days)", solar.display(), weather.display(), spec.days());
    println!("run config -> {}", dir.join("run.toml").display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"))
}

pub fn report(config: &RunConfig) -> Result<(), Failure> {
    let model = ForecastModel::load(&config.model_path())?;
    let mut out = String::new();
    let _ = writeln!(out, "# {}\n", model.metadata.dataset_id);
    let _ = writeln!(
        out,
        "y_max {:.4} kW, L1 bound {}\n",
        model.scale.y_max,
        if model.l1_mode { "on" } else { "off" }
    );
    let _ = writeln!(out, "| weather | features | sum abs coeff | selected |");
    let _ = writeln!(out, "|---|---|---|---|");
    for w in WeatherType::ALL {
        let m = model.model(w);
        let names: Vec<String> = m.features.iter().map(|f| f.to_string()).collect();
        let selected = if m.fallback {
            "mean profile".to_string()
        } else {
            names.join(" ")
        };
        let _ = writeln!(out, "| {w} | {} | {:.4} | {selected} |", m.features.len(), m.l1_norm());
    }
    let report_path = config.report_path();
    if report_path.exists() {
        let report: SelectionReport = read_json(&report_path)?;
        let _ = writeln!(
            out,
            "\n{} QP solves, {} solver failures",
            report.qp_solves, report.solver_failures
        );
        if let Some(joint) = &report.joint {
            let _ = writeln!(
                out,
                "joint refinement: {} passes, combined validation MSE {:.4e} -> {:.4e}",
                joint.passes,
                joint.scores[0],
                joint.scores[joint.scores.len() - 1]
            );
        }
        for w in &report.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
    }
    let mut header = false;
    for kind in [SplitKind::Train, SplitKind::Validation, SplitKind::Test] {
        let path = config.paths.output_dir.join(format!("metrics_{}.json", kind.as_str()));
        if !path.exists() {
            continue;
        }
        if !header {
            let _ = writeln!(
                out,
                "\n| split | model | persistence | cloudy | fair | haze | origins |"
            );
            let _ = writeln!(out, "|---|---|---|---|---|---|---|");
            header = true;
        }
        let doc: MetricsDocument = read_json(&path)?;
        let m = &doc.model;
        let _ = writeln!(
            out,
            "| {} | {:.4e} | {:.4e} | {} | {} | {} | {} |",
            m.split,
            m.combined_mse_scaled,
            doc.persistence.combined_mse_scaled,
            fmt_opt(m.per_weather.cloudy),
            fmt_opt(m.per_weather.fair),
            fmt_opt(m.per_weather.haze),
            m.n_origins
        );
    }
    create_dir(&config.paths.output_dir)?;
    write_text(&config.paths.output_dir.join("report.md"), &out)?;
    print!("{out}");
    Ok(())
}
