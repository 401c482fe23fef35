//! Run configuration: a TOML file of defaults that command-line flags
//! override.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("config file {0} does not exist")]
    Missing(PathBuf),
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("referenced path {0} does not exist")]
    PathMissing(PathBuf),
}

/// Optional defaults for every tunable. Unset fields fall back to built-in
/// defaults; explicit command-line flags win over the file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub architecture: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub classes: Option<Vec<usize>>,
    pub tau: Option<f64>,
    pub per_milp_secs: Option<f64>,
    pub total_secs: Option<f64>,
    pub workers: Option<usize>,
    pub epsilon: Option<f64>,
    pub backend: Option<String>,
    pub seed: Option<u64>,
    pub memo_capacity: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        if !path.exists() {
            return Err(ConfigError::Missing(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("tau", self.tau),
            ("per_milp_secs", self.per_milp_secs),
            ("total_secs", self.total_secs),
            ("epsilon", self.epsilon),
            ("learning_rate", self.learning_rate),
        ] {
            if let Some(v) = value {
                if !v.is_finite() || v < 0.0 {
                    return Err(ConfigError::NonPositive { field, value: v });
                }
            }
        }
        for (field, value) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("workers", self.workers),
        ] {
            if let Some(0) = value {
                return Err(ConfigError::NonPositive { field, value: 0.0 });
            }
        }
        if let Some(p) = &self.dataset {
            if !p.exists() {
                return Err(ConfigError::PathMissing(p.clone()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "tau = 0.02\nworkers = 8\nbackend = \"highs\"\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.tau, Some(0.02));
        assert_eq!(cfg.workers, Some(8));
        assert_eq!(cfg.backend.as_deref(), Some("highs"));

        std::fs::write(&path, "tau = -1.0\n").unwrap();
        assert!(matches!(
            RunConfig::load(&path),
            Err(ConfigError::NonPositive { field: "tau", .. })
        ));

        std::fs::write(&path, "unknown_key = 1\n").unwrap();
        assert!(RunConfig::load(&path).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.csv");
        std::fs::write(&data, "x1,label\n0.5,0\n0.5,1\n").unwrap();
        let config = RunConfig {
            dataset: Some(data),
            architecture: Some(vec![2, 8, 2]),
            epochs: Some(50),
            batch_size: Some(1024),
            learning_rate: Some(0.1),
            classes: Some(vec![0, 1]),
            tau: Some(0.01),
            per_milp_secs: Some(2400.0),
            total_secs: Some(28800.0),
            workers: Some(4),
            epsilon: Some(0.25),
            backend: Some("highs".into()),
            seed: Some(7),
            memo_capacity: Some(1_000_000),
            output_dir: Some(dir.path().join("out")),
        };
        let text = toml::to_string(&config).unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, &text).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(toml::to_string(&loaded).unwrap(), text);
    }
}
