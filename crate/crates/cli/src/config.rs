use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pvcheb::cls_solver::SolverConfig;
use pvcheb::data_ingest::{SolarSchema, SplitSpec, WeatherSchema, DEFAULT_MAX_ALIGNMENT_GAP_MIN};
use pvcheb::forecast::DEFAULT_HORIZON;
use pvcheb::selection::SelectionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solar: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weather: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Defaults to `model.json` in the output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Defaults to `aligned.csv` in the output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aligned: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            solar: None,
            weather: None,
            output_dir: PathBuf::from("out"),
            model: None,
            aligned: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    pub l1_mode: bool,
    pub daytime_filter: bool,
    pub clip_predictions: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Self {
            l1_mode: true,
            daytime_filter: true,
            clip_predictions: false,
        }
    }
}

/// Everything a run needs, loaded from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_id: String,
    pub seed: u64,
    pub horizon: usize,
    pub max_alignment_gap_min: i64,
    pub paths: Paths,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    pub flags: Flags,
    pub solver: SolverConfig,
    pub selection: SelectionConfig,
    pub solar_columns: SolarSchema,
    pub weather_columns: WeatherSchema,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_id: "dataset".into(),
            seed: 0,
            horizon: DEFAULT_HORIZON,
            max_alignment_gap_min: DEFAULT_MAX_ALIGNMENT_GAP_MIN,
            paths: Paths::default(),
            split: None,
            flags: Flags::default(),
            solver: SolverConfig::default(),
            selection: SelectionConfig::default(),
            solar_columns: SolarSchema::default(),
            weather_columns: WeatherSchema::default(),
        }
    }
}

impl RunConfig {
    /// Parses `path`; relative paths inside are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.as_os_str() == "." {
                *p = base.to_path_buf();
            } else if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut config.paths;
        rebase(&mut paths.output_dir);
        for p in [
            &mut paths.solar,
            &mut paths.weather,
            &mut paths.model,
            &mut paths.aligned,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths
            .model
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("model.json"))
    }

    pub fn aligned_path(&self) -> PathBuf {
        self.paths
            .aligned
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("aligned.csv"))
    }

    pub fn report_path(&self) -> PathBuf {
        self.paths.output_dir.join("selection_report.json")
    }
}
