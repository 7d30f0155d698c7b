mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;
use pvcheb::cls_solver::Backend;
use pvcheb::ErrorKind;

#[derive(Debug, Parser)]
#[command(name = "pvcheb", version, about = "Short-horizon PV power forecasting")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Switches that override the matching config entries.
#[derive(Debug, Args)]
struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    dataset_id: Option<String>,
    #[arg(long, global = true)]
    solar: Option<PathBuf>,
    #[arg(long, global = true)]
    weather: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true)]
    aligned: Option<PathBuf>,
    #[arg(long, global = true, value_name = "BOOL")]
    l1_mode: Option<bool>,
    #[arg(long, global = true, value_name = "BOOL")]
    daytime_filter: Option<bool>,
    #[arg(long, global = true, value_name = "BOOL")]
    clip_predictions: Option<bool>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    max_passes: Option<usize>,
    #[arg(long, global = true)]
    max_features: Option<usize>,
    #[arg(long, global = true, value_name = "BOOL")]
    algorithm2: Option<bool>,
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    /// Worker threads for candidate evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    ActiveSet,
    ProjectedSplitting,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, align and split the raw files; write the aligned dataset.
    Ingest,
    /// Fit and select the three weather models; write the model file.
    TrainSelect,
    /// Score the model and the persistence baseline on one split.
    Evaluate {
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Recursive forecast from one origin timestamp.
    Predict {
        /// Origin as "YYYY-MM-DD HH:MM".
        #[arg(long)]
        origin: String,
    },
    /// Write a synthetic solar/weather pair and a matching run config.
    Synth {
        #[arg(long, value_enum, default_value = "recovery")]
        preset: Preset,
        /// Noise standard deviation in scaled units.
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
        /// Full synthetic spec in TOML; replaces the preset.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Summarize the model, selection report and metrics in the output directory.
    Report,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Haze, fair and cloudy segments with planted models.
    Recovery,
    /// Fair weather only with a planted autoregressive model.
    FairOnly,
    /// Fair weather, no planted model.
    Clear,
}

/// A failed command and the exit status it maps to.
pub enum Failure {
    Usage(String),
    Core(pvcheb::Error),
}

impl From<pvcheb::Error> for Failure {
    fn from(e: pvcheb::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) => match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) => f.write_str(msg),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

fn resolve(o: &Overrides) -> Result<RunConfig, Failure> {
    let mut c = match &o.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Usage)?,
        None => RunConfig::default(),
    };
    let set = |dst: &mut Option<PathBuf>, src: &Option<PathBuf>| {
        if src.is_some() {
            dst.clone_from(src);
        }
    };
    set(&mut c.paths.solar, &o.solar);
    set(&mut c.paths.weather, &o.weather);
    set(&mut c.paths.model, &o.model);
    set(&mut c.paths.aligned, &o.aligned);
    if let Some(v) = &o.output_dir {
        c.paths.output_dir.clone_from(v);
    }
    if let Some(v) = &o.dataset_id {
        c.dataset_id.clone_from(v);
    }
    if let Some(v) = o.l1_mode {
        c.flags.l1_mode = v;
    }
    if let Some(v) = o.daytime_filter {
        c.flags.daytime_filter = v;
    }
    if let Some(v) = o.clip_predictions {
        c.flags.clip_predictions = v;
    }
    if let Some(v) = o.horizon {
        c.horizon = v;
    }
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if let Some(v) = o.max_passes {
        c.selection.max_passes = v;
    }
    if let Some(v) = o.max_features {
        c.selection.max_features = v;
    }
    if let Some(v) = o.algorithm2 {
        c.selection.algorithm2 = v;
    }
    if let Some(v) = o.max_iterations {
        c.solver.max_iterations = v;
    }
    if let Some(v) = o.backend {
        c.solver.backend = match v {
            BackendArg::ActiveSet => Backend::ActiveSet,
            BackendArg::ProjectedSplitting => Backend::ProjectedSplitting,
        };
    }
    if c.horizon == 0 {
        return Err(Failure::Usage("horizon must be at least 1".into()));
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.overrides.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("--threads: {e}")))?;
    }
    let config = resolve(&cli.overrides)?;
    match cli.command {
        Command::Ingest => commands::ingest(&config),
        Command::TrainSelect => commands::train_select(&config),
        Command::Evaluate { split } => commands::evaluate(&config, &split),
        Command::Predict { origin } => commands::predict(&config, &origin),
        Command::Synth { preset, sigma, spec } => commands::synth(&config, preset, sigma, spec.as_deref()),
        Command::Report => commands::report(&config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
