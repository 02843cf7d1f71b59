//! Pipeline configuration: a TOML file selected explicitly or through the
//! `FORGE_CONFIG` environment variable, with every field defaulted so a
//! missing file or empty table still yields a working pipeline. Callers
//! apply flag overrides after loading.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assemble::AssemblyPolicy;
use crate::chunk::SplitPolicy;
use crate::clean::CleanPolicy;
use crate::tokencount::{CountError, CounterSpec};

pub const CONFIG_ENV: &str = "FORGE_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Counter(#[from] CountError),
}

/// Declarative form of [`AssemblyPolicy`]; the counter is a buildable spec
/// so external count files load lazily at use time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssemblySettings {
    pub max_tokens: u64,
    pub counter: CounterSpec,
    pub eot_token: String,
    pub boundary_chars: Vec<char>,
}

impl Default for AssemblySettings {
    fn default() -> Self {
        let policy = AssemblyPolicy::default();
        AssemblySettings {
            max_tokens: policy.max_tokens,
            counter: CounterSpec::CharHeuristic {
                chars_per_token: 4.0,
            },
            eot_token: policy.eot_token,
            boundary_chars: policy.boundary_chars,
        }
    }
}

impl AssemblySettings {
    pub fn build(&self) -> Result<AssemblyPolicy, CountError> {
        Ok(AssemblyPolicy {
            max_tokens: self.max_tokens,
            counter: self.counter.build()?,
            eot_token: self.eot_token.clone(),
            boundary_chars: self.boundary_chars.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input_root: PathBuf,
    pub output_root: PathBuf,
    pub cache_dir: PathBuf,
    pub clean: CleanPolicy,
    pub split: SplitPolicy,
    pub assembly: AssemblySettings,
    pub worker_count: usize,
    pub shard_size_records: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input_root: PathBuf::from("."),
            output_root: PathBuf::from("out"),
            cache_dir: PathBuf::from(".forge-cache"),
            clean: CleanPolicy::default(),
            split: SplitPolicy::default(),
            assembly: AssemblySettings::default(),
            worker_count: 4,
            shard_size_records: 10_000,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.worker_count < 1 {
            return Err(ConfigError::Invalid("worker_count must be >= 1".into()));
        }
        if self.shard_size_records < 1 {
            return Err(ConfigError::Invalid(
                "shard_size_records must be >= 1".into(),
            ));
        }
        self.clean
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.split
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: PipelineConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

/// Resolves a config from an explicit path, falling back to the
/// `FORGE_CONFIG` environment variable, then to defaults.
pub fn load(explicit: Option<&Path>) -> Result<PipelineConfig, ConfigError> {
    resolve(explicit, std::env::var_os(CONFIG_ENV))
}

/// Same as [`load`] with the environment value injected, so resolution is
/// testable without mutating process state.
pub fn resolve(
    explicit: Option<&Path>,
    env_value: Option<std::ffi::OsString>,
) -> Result<PipelineConfig, ConfigError> {
    let path = explicit
        .map(Path::to_path_buf)
        .or_else(|| env_value.map(PathBuf::from));
    match path {
        Some(path) => PipelineConfig::load_file(&path),
        None => Ok(PipelineConfig::default()),
    }
}
