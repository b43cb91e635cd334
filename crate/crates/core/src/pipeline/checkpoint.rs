use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvalResult, Model, PairedDataset, TrainConfig};
use crate::error::{Error, Result};
use crate::knowledge::ConceptBasis;

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model with the config, seed and concept basis it was trained
/// with. Stored as JSON; floats round-trip exactly, so a loaded checkpoint
/// evaluates to the same bits as the original.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub seed: u64,
    /// 1-based epoch the parameters come from (0 = untrained).
    pub epoch: usize,
    pub model: Model,
    pub basis: ConceptBasis,
}

impl Checkpoint {
    /// Bundles `model` with `basis`, recording the trained concept
    /// representations in the basis.
    pub fn new(
        config: TrainConfig,
        epoch: usize,
        model: Model,
        mut basis: ConceptBasis,
    ) -> Result<Self> {
        basis.y = Some(model.concepts(&basis)?);
        Ok(Checkpoint {
            version: CHECKPOINT_VERSION,
            seed: config.seed,
            config,
            epoch,
            model,
            basis,
        })
    }

    pub fn evaluate(&self, data: &PairedDataset, beta: f64) -> Result<EvalResult> {
        evaluate(&self.model, &self.basis, data, beta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let version = serde_json::from_str::<serde_json::Value>(&text)?
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .unwrap_or(0) as u32;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(serde_json::from_str(&text)?)
    }
}
