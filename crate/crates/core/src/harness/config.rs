use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{CemConfig, Td3Hyper};
use crate::error::{Error, Result};
use crate::rlur::RlurHyper;
use crate::simenv::SimConfig;

/// Environment variable naming the directory under which runs without an
/// explicit output directory are written.
pub const OUTPUT_ROOT_ENV: &str = "RLUR_OUTPUT_ROOT";

/// One training run: which algorithm, its seed, the episode budget, and every
/// nested configuration. Serialized as TOML for config files and snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: String,
    pub seed: u64,
    pub episodes: usize,
    /// Final episodes averaged into the result row.
    pub eval_window: usize,
    /// Seed of the evaluation episodes; shared by all runs so every
    /// algorithm is scored on the same simulated users.
    pub eval_seed: u64,
    /// Where artifacts go; nothing is written when unset.
    pub output_dir: Option<PathBuf>,
    /// Write a parameter checkpoint at the end of the run.
    pub checkpoint: bool,
    pub sim: SimConfig,
    pub rlur: RlurHyper,
    pub td3: Td3Hyper,
    pub cem: CemConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: "rlur".into(),
            seed: 1,
            episodes: 80,
            eval_window: 25,
            eval_seed: 0,
            output_dir: None,
            checkpoint: true,
            sim: SimConfig::default(),
            rlur: RlurHyper::default(),
            td3: Td3Hyper::default(),
            cem: CemConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidConfig("episodes must be positive".into()));
        }
        if self.eval_window == 0 || self.eval_window > self.episodes {
            return Err(Error::InvalidConfig(format!(
                "eval window {} must be in 1..={}",
                self.eval_window, self.episodes
            )));
        }
        self.sim.validate()?;
        self.rlur.validate()?;
        self.td3.validate()?;
        self.cem.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigFormat(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigFormat(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Applies a `dotted.key=value` override. The value is parsed as a TOML
    /// value, falling back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::ConfigFormat(format!("override '{assignment}' is not key=value")))?;
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::ConfigFormat(e.to_string()))?;
        let mut node = &mut root;
        let parts: Vec<&str> = key.trim().split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::ConfigFormat(format!("'{key}' does not name a config field")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            node = table
                .get_mut(*part)
                .ok_or_else(|| Error::ConfigFormat(format!("unknown config section '{part}'")))?;
        }
        *self = root.try_into().map_err(|e: toml::de::Error| Error::ConfigFormat(e.to_string()))?;
        Ok(())
    }

    /// The output directory, or `$RLUR_OUTPUT_ROOT/<algorithm>-seed<seed>`
    /// when only the root is configured.
    pub fn resolved_output_dir(&self) -> Option<PathBuf> {
        self.output_dir.clone().or_else(|| {
            std::env::var_os(OUTPUT_ROOT_ENV)
                .map(|root| PathBuf::from(root).join(format!("{}-seed{}", self.algorithm, self.seed)))
        })
    }
}
