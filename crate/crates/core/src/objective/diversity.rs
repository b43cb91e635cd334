//! Per-anchor diversity of negative similarities.
//!
//! A spread statistic `s` of an anchor's negative similarities (standard
//! deviation, or entropy in bits of their softmax) is mapped to
//! `1 / sigmoid(eps / s) = 1 + exp(-eps / s)`, which lies in `[1, 2)` and
//! grows with the spread. Zero spread takes the limit value 1. Scores are
//! then divided by the batch maximum, so the most diverse anchor gets exactly
//! 1. Diversity is used as a constant weight and never differentiated.

use serde::{Deserialize, Serialize};

use super::SimilarityMatrix;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversityEstimator {
    #[default]
    Std,
    Entropy,
}

impl std::str::FromStr for DiversityEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std" => Ok(DiversityEstimator::Std),
            "entropy" => Ok(DiversityEstimator::Entropy),
            other => Err(invalid(format!(
                "unknown diversity estimator '{other}' (expected std|entropy)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiversityScores {
    pub estimator: DiversityEstimator,
    /// SD, or entropy in bits, per anchor.
    pub spread: Vec<f64>,
    /// `1 + exp(-eps / spread)` before batch normalisation.
    pub raw: Vec<f64>,
    /// `raw / max(raw)`, in (0, 1].
    pub normalized: Vec<f64>,
}

/// `1 / sigmoid(eps / spread)`, with the zero-spread limit 1.
pub fn raw_diversity(spread: f64, eps: f64) -> f64 {
    if spread <= 0.0 {
        1.0
    } else {
        1.0 + (-eps / spread).exp()
    }
}

/// Population standard deviation (two-pass).
pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Entropy in bits of `softmax(values)`.
pub fn softmax_entropy_bits(values: &[f64]) -> f64 {
    let max = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let h: f64 = exps
        .iter()
        .map(|e| e / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    h.max(0.0)
}

fn scores(
    s: &SimilarityMatrix,
    eps: f64,
    estimator: DiversityEstimator,
    spread_fn: impl Fn(&[f64]) -> f64,
) -> Result<DiversityScores> {
    if !(eps > 0.0) {
        return Err(invalid(format!(
            "diversity eps must be positive, got {eps}"
        )));
    }
    if s.anchors() == 0 {
        return Err(Error::EmptyInput("diversity of zero anchors".into()));
    }
    let mut spread = Vec::with_capacity(s.anchors());
    for i in 0..s.anchors() {
        let neg = s.negatives(i);
        if neg.is_empty() {
            return Err(Error::EmptyInput(format!("anchor {i} has no negatives")));
        }
        spread.push(spread_fn(&neg));
    }
    let raw: Vec<f64> = spread.iter().map(|&sp| raw_diversity(sp, eps)).collect();
    let max = raw.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let normalized = raw.iter().map(|r| r / max).collect();
    Ok(DiversityScores {
        estimator,
        spread,
        raw,
        normalized,
    })
}

pub fn diversity_std(s: &SimilarityMatrix, eps: f64) -> Result<DiversityScores> {
    scores(s, eps, DiversityEstimator::Std, population_std)
}

pub fn diversity_entropy(s: &SimilarityMatrix, eps: f64) -> Result<DiversityScores> {
    scores(s, eps, DiversityEstimator::Entropy, softmax_entropy_bits)
}

pub fn diversity(
    s: &SimilarityMatrix,
    estimator: DiversityEstimator,
    eps: f64,
) -> Result<DiversityScores> {
    match estimator {
        DiversityEstimator::Std => diversity_std(s, eps),
        DiversityEstimator::Entropy => diversity_entropy(s, eps),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Matrix, SeededRng};

    fn two_anchor_batch() -> SimilarityMatrix {
        // Column 0 is each anchor's positive.
        let s = Matrix::from_rows(&[vec![0.9, 0.5, 0.5], vec![0.9, 0.5, 0.7]]).unwrap();
        SimilarityMatrix::with_positives(s, vec![Some(0), Some(0)]).unwrap()
    }

    #[test]
    fn std_examples() {
        let d = diversity_std(&two_anchor_batch(), 0.1).unwrap();
        assert_eq!(d.spread[0], 0.0);
        assert_eq!(d.raw[0], 1.0);
        assert!((d.spread[1] - 0.1).abs() < 1e-12);
        assert!((d.raw[1] - 1.367879).abs() < 1e-6);
        assert!((d.normalized[0] - 0.731059).abs() < 1e-6);
        assert_eq!(d.normalized[1], 1.0);
    }

    #[test]
    fn entropy_examples() {
        let eq = SimilarityMatrix::unpaired(Matrix::from_rows(&[vec![0.3, 0.3]]).unwrap());
        let d = diversity_entropy(&eq, 0.1).unwrap();
        assert!((d.spread[0] - 1.0).abs() < 1e-12);

        let one = SimilarityMatrix::unpaired(Matrix::from_rows(&[vec![0.3]]).unwrap());
        let d = diversity_entropy(&one, 0.1).unwrap();
        assert_eq!(d.spread[0], 0.0);
        assert_eq!(d.raw[0], 1.0);

        let skew = SimilarityMatrix::unpaired(Matrix::from_rows(&[vec![2.0, 0.0]]).unwrap());
        let d = diversity_entropy(&skew, 0.1).unwrap();
        assert!((d.spread[0] - 0.527065).abs() < 1e-6);
    }

    #[test]
    fn zero_negatives_is_an_error() {
        let s = SimilarityMatrix::paired(Matrix::scalar(1.0)).unwrap();
        assert!(diversity_std(&s, 0.1).is_err());
        assert!(diversity_entropy(&s, 0.1).is_err());
        assert!(diversity_std(&two_anchor_batch(), 0.0).is_err());
    }

    #[test]
    fn closed_form_and_normalisation() {
        let mut rng = SeededRng::new(17);
        let s = SimilarityMatrix::paired(rng.uniform_matrix(40, 40, -1.0, 1.0)).unwrap();
        let d = diversity_std(&s, 0.1).unwrap();
        for i in 0..40 {
            let sd = population_std(&s.negatives(i));
            assert!((d.raw[i] - (1.0 + (-0.1 / sd).exp())).abs() <= 1e-12);
            assert!(d.raw[i] >= 1.0 && d.raw[i] < 2.0);
            assert!(d.normalized[i] > 0.0 && d.normalized[i] <= 1.0);
        }
        assert_eq!(d.normalized.iter().cloned().fold(0.0, f64::max), 1.0);
    }

    #[test]
    fn larger_spread_means_larger_diversity() {
        // Same mean 0.2, different spread.
        let s = Matrix::from_rows(&[vec![0.1, 0.3], vec![-0.3, 0.7]]).unwrap();
        let d = diversity_std(&SimilarityMatrix::unpaired(s), 0.1).unwrap();
        assert!(d.raw[1] >= d.raw[0]);
    }

    #[test]
    fn parses_estimator_names() {
        assert_eq!(
            "std".parse::<DiversityEstimator>().unwrap(),
            DiversityEstimator::Std
        );
        assert_eq!(
            "entropy".parse::<DiversityEstimator>().unwrap(),
            DiversityEstimator::Entropy
        );
        assert!("max".parse::<DiversityEstimator>().is_err());
    }
}
