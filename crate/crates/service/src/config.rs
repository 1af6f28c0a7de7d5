use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::ServiceError;

/// Service settings: a TOML file, then `PATEXPAND_*` environment overrides.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub model_dir: PathBuf,
    /// Without a log, votes live in memory only.
    pub vote_log: Option<PathBuf>,
    pub default_k: usize,
    /// Directory of static UI assets served for non-API paths.
    pub static_dir: Option<PathBuf>,
    /// Seconds between model directory rescans; 0 disables polling.
    pub rescan_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            model_dir: PathBuf::from("models"),
            vote_log: None,
            default_k: patexpand_core::expansion::DEFAULT_K,
            static_dir: None,
            rescan_secs: 0,
        }
    }
}

pub const ENV_LISTEN: &str = "PATEXPAND_LISTEN";
pub const ENV_MODEL_DIR: &str = "PATEXPAND_MODEL_DIR";
pub const ENV_VOTE_LOG: &str = "PATEXPAND_VOTE_LOG";
pub const ENV_DEFAULT_K: &str = "PATEXPAND_DEFAULT_K";

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let config: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` (or defaults) and applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ServiceError::Config(format!("cannot read {}: {e}", path.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        config.apply_env(|key| std::env::var(key).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(listen) = var(ENV_LISTEN) {
            self.listen = listen
                .parse()
                .map_err(|_| ServiceError::Config(format!("{ENV_LISTEN}: bad address `{listen}`")))?;
        }
        if let Some(dir) = var(ENV_MODEL_DIR) {
            self.model_dir = dir.into();
        }
        if let Some(log) = var(ENV_VOTE_LOG) {
            self.vote_log = Some(log.into());
        }
        if let Some(k) = var(ENV_DEFAULT_K) {
            self.default_k = k
                .parse()
                .map_err(|_| ServiceError::Config(format!("{ENV_DEFAULT_K}: bad integer `{k}`")))?;
        }
        self.validate()
    }

    fn validate(&self) -> Result<(), ServiceError> {
        if self.default_k == 0 {
            return Err(ServiceError::Config("default_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn parses_file_and_env() {
        let mut config = ServiceConfig::from_toml(
            "listen = \"0.0.0.0:9000\"\nmodel_dir = \"/srv/models\"\nvote_log = \"votes.jsonl\"\ndefault_k = 10\n",
        )
        .unwrap();
        assert_eq!(config.listen.port(), 9000);
        assert_eq!(config.default_k, 10);
        let env = HashMap::from([(ENV_DEFAULT_K, "7"), (ENV_MODEL_DIR, "m")]);
        config.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!((config.default_k, config.model_dir.as_path()), (7, Path::new("m")));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(ServiceConfig::from_toml("listen = 3").is_err());
        assert!(ServiceConfig::from_toml("default_k = 0").is_err());
        assert!(ServiceConfig::from_toml("unknown = 1").is_err());
        let mut config = ServiceConfig::default();
        assert!(config.apply_env(|_| Some("nope".into())).is_err());
    }
}
