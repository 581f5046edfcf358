use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use steermine::cover::MetricParams;
use steermine::miner::MinerConfig;
use steermine::session::SessionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub alpha: f64,
    pub beta: f64,
    pub miner: MinerConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("steermine-data"),
            alpha: 1.0,
            beta: 1.0,
            miner: MinerConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid value for {var}: {value:?}")]
    Env { var: &'static str, value: String },
    #[error(transparent)]
    Params(#[from] steermine::Error),
}

fn parse_env<T: std::str::FromStr>(var: &'static str, value: String) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Env { var, value })
}

impl ServiceConfig {
    /// Reads the optional TOML file, then applies `STEERMINE_*` overrides
    /// looked up through `env`.
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                toml::from_str(&text)?
            }
            None => ServiceConfig::default(),
        };
        if let Some(v) = env("STEERMINE_LISTEN") {
            cfg.listen = parse_env("STEERMINE_LISTEN", v)?;
        }
        if let Some(v) = env("STEERMINE_DATA_DIR") {
            cfg.data_dir = PathBuf::from(v);
        }
        if let Some(v) = env("STEERMINE_ALPHA") {
            cfg.alpha = parse_env("STEERMINE_ALPHA", v)?;
        }
        if let Some(v) = env("STEERMINE_BETA") {
            cfg.beta = parse_env("STEERMINE_BETA", v)?;
        }
        if let Some(v) = env("STEERMINE_SEED") {
            cfg.miner.seed = parse_env("STEERMINE_SEED", v)?;
        }
        if let Some(v) = env("STEERMINE_MAX_ITERATIONS") {
            cfg.miner.max_iterations = parse_env("STEERMINE_MAX_ITERATIONS", v)?;
        }
        if let Some(v) = env("STEERMINE_CANDIDATES") {
            cfg.miner.candidates_per_iteration = parse_env("STEERMINE_CANDIDATES", v)?;
        }
        if let Some(v) = env("STEERMINE_MAX_TACTIC_LENGTH") {
            cfg.miner.max_tactic_length = parse_env("STEERMINE_MAX_TACTIC_LENGTH", v)?;
        }
        cfg.session_defaults().validate()?;
        Ok(cfg)
    }

    pub fn from_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(path, |k| std::env::var(k).ok())
    }

    pub fn session_defaults(&self) -> SessionConfig {
        SessionConfig {
            params: MetricParams::with_weights(self.alpha, self.beta),
            miner: self.miner.clone(),
            ..SessionConfig::default()
        }
    }
}
