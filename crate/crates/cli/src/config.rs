//! Config resolution: flags override the JSON file, which overrides defaults.

use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use momalign_core::objective::DiversityEstimator;
use momalign_core::pipeline::{Objective, TrainConfig};

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON file with any subset of the training config fields.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Instance/concept similarity blend in [0, 1].
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_parser = parse_estimator)]
    pub estimator: Option<DiversityEstimator>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub bank_capacity: Option<usize>,
    #[arg(long)]
    pub k_clusters: Option<usize>,
    /// full | triplet | instance_implicit | instance_explicit
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<Objective>,
}

fn parse_estimator(s: &str) -> Result<DiversityEstimator, String> {
    s.parse().map_err(|e: momalign_core::Error| e.to_string())
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse().map_err(|e: momalign_core::Error| e.to_string())
}

pub fn load_file(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
}

impl ConfigArgs {
    /// Applies the flag overrides on top of `base` without validating.
    pub fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.estimator {
            cfg.diversity_estimator = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.bank_capacity {
            cfg.bank_capacity = v;
        }
        if let Some(v) = self.k_clusters {
            cfg.k_clusters = v;
        }
        if let Some(v) = self.objective {
            cfg.objective = v;
        }
        cfg
    }

    /// Defaults, then the config file, then flags; validated before use.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let base = match &self.config {
            Some(path) => load_file(path)?,
            None => TrainConfig::default(),
        };
        let cfg = self.apply(base);
        cfg.validate().context("invalid config")?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"epochs": 3, "seed": 11, "beta": 0.5}"#).unwrap();
        let args = ConfigArgs {
            config: Some(path),
            seed: Some(5),
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.beta, 0.5);
        assert_eq!(cfg.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let args = ConfigArgs {
            beta: Some(1.5),
            ..Default::default()
        };
        let err = format!("{:#}", args.resolve().unwrap_err());
        assert!(
            err.contains("invalid config") && err.contains("beta"),
            "{err}"
        );
    }
}
