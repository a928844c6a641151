//! Benchmark run configuration, loadable from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::ModelTarget;
use crate::prompt::{default_eval_pds, default_few_shot_pds, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Live,
    Replay,
}

/// Everything a benchmark run needs. Unset fields fall back to the bundled
/// system, the default demand sets, both strategies, and a `out/` directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Path to a system file; the bundled IEEE-118 set when omitted.
    #[serde(default)]
    pub system: Option<PathBuf>,
    #[serde(default = "default_few_shot_pds")]
    pub few_shot_pds: Vec<f64>,
    #[serde(default = "default_eval_pds")]
    pub eval_pds: Vec<f64>,
    pub models: Vec<ModelTarget>,
    #[serde(default = "both_strategies")]
    pub strategies: Vec<Strategy>,
    pub backend: BackendKind,
    /// Replay source (replay backend) or recording target (live backend).
    #[serde(default)]
    pub replay_path: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Score with constant cost terms included.
    #[serde(default)]
    pub include_constants: bool,
}

fn both_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_concurrency() -> usize {
    2
}

impl RunConfig {
    /// Read a config file; `.json` parses as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        let config: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("config `{}`: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("config `{}`: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("config lists no models".into()));
        }
        for m in &self.models {
            m.validate()?;
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("config lists no strategies".into()));
        }
        if self.backend == BackendKind::Replay && self.replay_path.is_none() {
            return Err(Error::Config(
                "replay backend needs `replay_path` in the config".into(),
            ));
        }
        Ok(())
    }
}
