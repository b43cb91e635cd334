use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::knowledge::GraphActivation;
use crate::objective::DiversityEstimator;

/// Which losses drive training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Instance DCL, memory-bank DCL, concept DCL and prototype classification.
    #[default]
    Full,
    /// Bidirectional max-margin loss on in-batch instance embeddings only.
    Triplet,
    /// In-batch instance contrastive loss without diversity weighting.
    InstanceImplicit,
    /// In-batch instance contrastive loss with diversity weighting.
    InstanceExplicit,
}

impl Objective {
    /// Whether the concept branch and memory banks take part in training.
    pub fn uses_concepts(self) -> bool {
        self == Objective::Full
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Objective::Full),
            "triplet" => Ok(Objective::Triplet),
            "instance_implicit" => Ok(Objective::InstanceImplicit),
            "instance_explicit" => Ok(Objective::InstanceExplicit),
            other => Err(invalid(format!(
                "unknown objective '{other}' (expected full|triplet|instance_implicit|instance_explicit)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Joint embedding dimension F.
    pub dim: usize,
    /// Positional encoding dimension of the pooling decoder.
    pub d_p: usize,
    /// Hidden width of the pooling decoder.
    pub pool_hidden: usize,
    pub mu: f64,
    pub gamma: f64,
    pub lambda_l: f64,
    pub beta: f64,
    pub bank_capacity: usize,
    pub momentum: f64,
    pub eps_div: f64,
    /// Softmax sharpness of the concept query.
    pub lambda_c: f64,
    pub k_clusters: usize,
    pub kmeans_iters: usize,
    pub g_concepts: usize,
    pub eps_t: f64,
    pub graph_activation: GraphActivation,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Learning rate is multiplied by `lr_decay` from this epoch on (0-based).
    pub lr_decay_epoch: usize,
    pub lr_decay: f64,
    pub seed: u64,
    pub diversity_estimator: DiversityEstimator,
    pub objective: Objective,
    pub triplet_margin: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 64,
            d_p: 64,
            pool_hidden: 64,
            mu: 0.1,
            gamma: 0.3,
            lambda_l: 3.0,
            beta: 0.9,
            bank_capacity: 512,
            momentum: 0.995,
            eps_div: 0.1,
            lambda_c: 10.0,
            k_clusters: 16,
            kmeans_iters: 50,
            g_concepts: 32,
            eps_t: 0.3,
            graph_activation: GraphActivation::Relu,
            batch_size: 32,
            epochs: 20,
            lr: 5e-3,
            lr_decay_epoch: 15,
            lr_decay: 0.1,
            seed: 7,
            diversity_estimator: DiversityEstimator::Std,
            objective: Objective::Full,
            triplet_margin: 0.2,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dim", self.dim),
            ("pool_hidden", self.pool_hidden),
            ("bank_capacity", self.bank_capacity),
            ("k_clusters", self.k_clusters),
            ("g_concepts", self.g_concepts),
        ] {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.d_p == 0 || !self.d_p.is_multiple_of(2) {
            return Err(invalid(format!(
                "d_p must be even and positive, got {}",
                self.d_p
            )));
        }
        if self.batch_size < 2 {
            return Err(invalid(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        positive("mu", self.mu)?;
        positive("eps_div", self.eps_div)?;
        positive("lambda_c", self.lambda_c)?;
        positive("lr", self.lr)?;
        if !(self.gamma.is_finite() && self.lambda_l >= 0.0 && self.lambda_l.is_finite()) {
            return Err(invalid("gamma must be finite and lambda_l non-negative"));
        }
        if !(self.triplet_margin >= 0.0 && self.triplet_margin.is_finite()) {
            return Err(invalid("triplet_margin must be non-negative"));
        }
        unit_interval("beta", self.beta)?;
        unit_interval("momentum", self.momentum)?;
        unit_interval("lr_decay", self.lr_decay)?;
        if !(self.eps_t > 0.0 && self.eps_t < 1.0) {
            return Err(invalid(format!(
                "eps_t must lie in (0, 1), got {}",
                self.eps_t
            )));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch >= self.lr_decay_epoch {
            self.lr * self.lr_decay
        } else {
            self.lr
        }
    }

    /// Blending weight used at evaluation: instance-only objectives never
    /// train the concept branch, so they are scored on instance similarity.
    pub fn eval_beta(&self) -> f64 {
        if self.objective.uses_concepts() {
            self.beta
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_partial_json_fills_in() {
        TrainConfig::default().validate().unwrap();
        let c: TrainConfig =
            serde_json::from_str(r#"{"epochs": 3, "diversity_estimator": "entropy"}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.diversity_estimator, DiversityEstimator::Entropy);
        assert_eq!(c.mu, 0.1);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn rejects_out_of_range_values() {
        let bad = [
            TrainConfig {
                mu: 0.0,
                ..Default::default()
            },
            TrainConfig {
                beta: 1.5,
                ..Default::default()
            },
            TrainConfig {
                momentum: -0.1,
                ..Default::default()
            },
            TrainConfig {
                eps_t: 1.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 1,
                ..Default::default()
            },
            TrainConfig {
                d_p: 3,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn schedule_and_eval_beta() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate(14), c.lr);
        assert!((c.learning_rate(15) - c.lr * 0.1).abs() < 1e-18);
        assert_eq!(c.eval_beta(), 0.9);
        let t = TrainConfig {
            objective: Objective::Triplet,
            ..Default::default()
        };
        assert_eq!(t.eval_beta(), 1.0);
        assert_eq!(
            "instance_explicit".parse::<Objective>().unwrap(),
            Objective::InstanceExplicit
        );
    }
}
