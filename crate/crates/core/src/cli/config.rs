use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthgen::GeneratorConfig;
use crate::tensornet::{AugmentRanges, TrainSchedule};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";
pub const SEED_ENV: &str = "FUNDASCREEN_SEED";

/// Fully merged run configuration. Every section takes its defaults when the
/// config file omits it, so files stay as small as the overrides they carry;
/// command-line flags are applied after the file, last writer wins. The
/// resolved result is serialized into each output directory, which makes a
/// run directory self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Root seed; every random stream (generation, splitting, member
    /// training, bootstrap, ablation arms) derives from it by name. Resolved
    /// from, in order: `--seed`, this field, the environment fallback, the
    /// generator seed.
    pub seed: Option<u64>,
    pub generator: GeneratorConfig,
    pub schedule: TrainSchedule,
    pub augment: AugmentRanges,
    /// Task tokens; the first is the default task for train and ablate.
    pub tasks: Vec<String>,
    /// Ensemble members per trained model or ablation arm.
    pub ensemble: usize,
    /// Comma-separated ablation arm tokens, e.g. `center_stripe:0.2`.
    pub ablation_grid: String,
    /// Train/tune/validation fractions; must sum to 1.
    pub split_fractions: [f64; 3],
    /// Bootstrap resamples for confidence intervals.
    pub bootstrap: usize,
    /// Worker threads for internal parallelism; 0 means all available cores.
    pub jobs: usize,
    /// Stamped at write time so outputs record what produced them.
    pub tool_version: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            generator: GeneratorConfig::default(),
            schedule: TrainSchedule::default(),
            augment: AugmentRanges::default(),
            tasks: vec!["anemia".to_string()],
            ensemble: 3,
            ablation_grid: String::new(),
            split_fractions: [0.7, 0.1, 0.2],
            bootstrap: 2000,
            jobs: 0,
            tool_version: String::new(),
        }
    }
}

impl RunConfig {
    /// Base configuration for a command: an explicit `--config` file wins;
    /// otherwise a `resolved_config.json` already present in `implicit_dir`
    /// (the data or output directory) carries the settings of the commands
    /// run before this one; otherwise defaults.
    pub fn load_base(explicit: Option<&Path>, implicit_dir: &Path) -> Result<RunConfig> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let p = implicit_dir.join(RESOLVED_CONFIG_FILE);
                if !p.exists() {
                    return Ok(RunConfig::default());
                }
                p
            }
        };
        let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&body).map_err(|e| Error::json(&path, e))
    }

    /// Resolve the root seed: flag, then config field, then the
    /// `FUNDASCREEN_SEED` environment fallback, then the generator seed.
    /// Stores the result so the serialized config records it.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64> {
        let seed = match (flag, self.seed) {
            (Some(s), _) => s,
            (None, Some(s)) => s,
            (None, None) => match std::env::var(SEED_ENV) {
                Ok(raw) => raw.trim().parse::<u64>().map_err(|_| {
                    Error::InvalidConfig(format!("{SEED_ENV}={raw:?} is not a valid seed"))
                })?,
                Err(_) => self.generator.seed,
            },
        };
        self.seed = Some(seed);
        Ok(seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.schedule.validate()?;
        if self.ensemble == 0 {
            return Err(Error::InvalidConfig("ensemble must be at least 1".into()));
        }
        if self.bootstrap == 0 {
            return Err(Error::InvalidConfig("bootstrap must be at least 1".into()));
        }
        let [a, b, c] = self.split_fractions;
        if !(a >= 0.0 && b >= 0.0 && c >= 0.0 && ((a + b + c) - 1.0).abs() <= 1e-9) {
            return Err(Error::InvalidConfig(format!(
                "split fractions {:?} must be non-negative and sum to 1",
                self.split_fractions
            )));
        }
        if self.tasks.is_empty() {
            return Err(Error::InvalidConfig("tasks must name at least one task".into()));
        }
        Ok(())
    }

    /// Serialize into `dir/resolved_config.json`, stamping the tool version.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut stamped = self.clone();
        stamped.tool_version = env!("CARGO_PKG_VERSION").to_string();
        let path = dir.join(RESOLVED_CONFIG_FILE);
        let mut body =
            serde_json::to_string_pretty(&stamped).map_err(|e| Error::json(&path, e))?;
        body.push('\n');
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    }
}
