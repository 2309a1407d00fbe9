//! Experiment configuration file: environment source, dataset parameters,
//! training setup, output directory and an optional beta grid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use prefcal_core::data::{Labeling, OracleMode};
use prefcal_core::trainer::TrainConfig;
use prefcal_core::{Environment, PreferenceDataset};

use crate::error::{CliError, CliResult};
use crate::gen::{generate_environment, EnvGenSpec};

/// Where the environment comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvSource {
    /// Load a serialized environment file.
    Path(PathBuf),
    /// Generate one inline from a seeded spec.
    Generate(EnvGenSpec),
}

/// Dataset generation parameters used when no file is given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetGenSpec {
    pub n_pairs: usize,
    pub seed: u64,
    pub labeling: Labeling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleMode>,
}

/// Where the preference dataset comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Path(PathBuf),
    Generate(DatasetGenSpec),
}

/// One experiment: environment + dataset + training + outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSource>,
    pub train: TrainConfig,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_grid: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?;
        Ok(config)
    }

    /// Resolves the environment, loading or generating as configured.
    pub fn resolve_environment(&self, base: &Path) -> CliResult<Environment> {
        match &self.environment {
            EnvSource::Path(p) => {
                let path = resolve_relative(base, p);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    CliError::Config(format!("cannot read environment {}: {e}", path.display()))
                })?;
                Ok(Environment::load_json(&text)?)
            }
            EnvSource::Generate(spec) => Ok(generate_environment(spec)?),
        }
    }

    /// Resolves the dataset against an already-resolved environment.
    pub fn resolve_dataset(
        &self,
        env: &Environment,
        base: &Path,
    ) -> CliResult<Option<PreferenceDataset>> {
        let Some(source) = &self.dataset else {
            return Ok(None);
        };
        let dataset = match source {
            DatasetSource::Path(p) => {
                let path = resolve_relative(base, p);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    CliError::Config(format!("cannot read dataset {}: {e}", path.display()))
                })?;
                PreferenceDataset::from_ndjson(&text)?
            }
            DatasetSource::Generate(spec) => {
                let ds = prefcal_core::sample_dataset(env, spec.n_pairs, spec.seed, spec.labeling)?;
                match spec.oracle {
                    Some(mode) => prefcal_core::attach_oracle_rewards(&ds, env, mode)?,
                    None => ds,
                }
            }
        };
        dataset.validate(env)?;
        Ok(Some(dataset))
    }
}

/// Paths inside a config are taken relative to the config file's directory.
fn resolve_relative(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
