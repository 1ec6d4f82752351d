use std::path::{Path, PathBuf};

use autotune_core::autotune::{Mode, TuneConfig};
use autotune_core::frf::{FrequencyGrid, OperatingPoint};
use autotune_core::plant::points_on_line;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Log-spaced frequency grid given in Hz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min_hz: f64,
    pub max_hz: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { min_hz: 0.5, max_hz: 500.0, points: 400 }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<FrequencyGrid, CliError> {
        let two_pi = 2.0 * std::f64::consts::PI;
        Ok(FrequencyGrid::log_spaced(two_pi * self.min_hz, two_pi * self.max_hz, self.points)?)
    }
}

/// Operating points: `count` evenly spaced points on the diagonal of the
/// scheduling box, or an explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointsSpec {
    Line { count: usize },
    List { values: Vec<Vec<f64>> },
}

impl Default for PointsSpec {
    fn default() -> Self {
        PointsSpec::Line { count: 11 }
    }
}

impl PointsSpec {
    pub fn build(&self, bounds: &[(f64, f64)]) -> Vec<OperatingPoint> {
        match self {
            PointsSpec::Line { count } => {
                let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
                let hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
                points_on_line(&lo, &hi, *count)
            }
            PointsSpec::List { values } => values.iter().cloned().map(OperatingPoint).collect(),
        }
    }
}

/// One run of any subcommand. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Plant description; the built-in demonstration plant when absent.
    pub plant: Option<PathBuf>,
    pub grid: GridSpec,
    pub points: PointsSpec,
    /// Recompute the rigid-body decoupling at every operating point.
    pub decouple_per_point: Option<bool>,
    /// FRF set; synthesized from `plant` when absent.
    pub frf: Option<PathBuf>,
    /// Controller structure to tune.
    pub structure: Option<PathBuf>,
    /// Controller to analyze: a `controller.json` written by `tune` or a
    /// structure file whose values are taken as-is.
    pub controller: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Sampling time for discrete-time mode, seconds.
    pub ts: Option<f64>,
    /// Tustin prewarping frequency for the exported controller, rad/s.
    pub prewarp_at: Option<f64>,
    pub tune: TuneConfig,
}

/// Command-line settings that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub ts: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.plant, &mut self.frf, &mut self.structure, &mut self.controller, &mut self.out] {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = o.seed {
            self.tune.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(mode) = o.mode {
            self.tune.mode = mode;
        }
        if let Some(ts) = o.ts {
            self.ts = Some(ts);
        }
        if let Some(ts) = self.ts {
            if !(ts > 0.0 && ts.is_finite()) {
                return Err(CliError::Input(format!("sampling time {ts} s must be positive")));
            }
        }
        if self.tune.mode == Mode::Dt && self.ts.is_none() && self.frf.is_none() {
            return Err(CliError::Input("discrete-time mode needs --ts or a sampled FRF file".into()));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}
