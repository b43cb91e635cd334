use serde::{Deserialize, Serialize};

use super::FeatureAggregator;
use crate::error::{invalid, Error, Result};
use crate::numerics::Matrix;

/// A bundle of parameter matrices that can be mirrored by a momentum copy.
pub trait ParameterSet {
    fn parameters(&self) -> Vec<&Matrix>;
    fn parameters_mut(&mut self) -> Vec<&mut Matrix>;
}

/// The instance-level encoders of both modalities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceEncoders {
    pub visual: FeatureAggregator,
    pub textual: FeatureAggregator,
}

impl ParameterSet for InstanceEncoders {
    fn parameters(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.visual.parameters().into();
        out.extend(self.textual.parameters());
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.visual.parameters_mut().into();
        out.extend(self.textual.parameters_mut());
        out
    }
}

impl ParameterSet for Matrix {
    fn parameters(&self) -> Vec<&Matrix> {
        vec![self]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        vec![self]
    }
}

/// A trainable encoder and its gradient-free exponential-moving-average copy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderPair<P> {
    pub main: P,
    momentum: P,
}

impl<P: ParameterSet + Clone> EncoderPair<P> {
    /// Starts the momentum copy equal to the main parameters.
    pub fn new(main: P) -> Self {
        let momentum = main.clone();
        EncoderPair { main, momentum }
    }

    pub fn with_momentum(main: P, momentum: P) -> Result<Self> {
        let (a, b) = (main.parameters(), momentum.parameters());
        if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.shape() != y.shape()) {
            return Err(invalid(
                "momentum parameters must mirror main parameter shapes",
            ));
        }
        Ok(EncoderPair { main, momentum })
    }

    pub fn momentum(&self) -> &P {
        &self.momentum
    }

    /// `momentum <- m * momentum + (1 - m) * main` for every parameter.
    pub fn momentum_update(&mut self, m: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&m) {
            return Err(invalid(format!(
                "momentum coefficient must lie in [0, 1], got {m}"
            )));
        }
        let main = self.main.parameters();
        for (target, source) in self.momentum.parameters_mut().into_iter().zip(main) {
            if target.shape() != source.shape() {
                return Err(Error::DimensionMismatch {
                    op: "momentum_update",
                    left: target.shape(),
                    right: source.shape(),
                });
            }
            for (t, s) in target.data_mut().iter_mut().zip(source.data()) {
                *t = m * *t + (1.0 - m) * s;
            }
        }
        Ok(())
    }
}
