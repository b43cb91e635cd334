use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    binarize, build_cooccurrence, build_vocabulary, normalized_adjacency, ConceptVocabulary,
    CooccurrenceStats,
};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const CONCEPT_BASIS_VERSION: u32 = 1;

/// Function words excluded from concept selection by default.
pub const DEFAULT_STOPLIST: &[&str] = &[
    "a", "an", "the", "of", "with", "and", "in", "on", "at", "is", "are", "to", "for", "by", "its",
    "near",
];

pub fn default_stoplist() -> BTreeSet<String> {
    DEFAULT_STOPLIST.iter().map(|s| s.to_string()).collect()
}

/// Everything the concept branch derives from the caption corpus.
///
/// Serialised as the versioned concept-basis JSON file; `y` is filled in
/// after training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptBasis {
    pub version: u32,
    pub vocabulary: ConceptVocabulary,
    pub stats: CooccurrenceStats,
    pub eps_t: f64,
    pub hsc: Matrix,
    pub a_tilde: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Matrix>,
}

impl ConceptBasis {
    pub fn build(
        corpus: &[Vec<String>],
        g: usize,
        stoplist: &BTreeSet<String>,
        dim: usize,
        seed: u64,
        eps_t: f64,
    ) -> Result<Self> {
        let vocabulary = build_vocabulary(corpus, g, stoplist, dim, seed)?;
        let stats = build_cooccurrence(corpus, &vocabulary);
        let hsc = binarize(&stats.p, eps_t)?;
        let a_tilde = normalized_adjacency(&hsc)?;
        Ok(ConceptBasis {
            version: CONCEPT_BASIS_VERSION,
            vocabulary,
            stats,
            eps_t,
            hsc,
            a_tilde,
            y: None,
        })
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let basis: ConceptBasis = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if basis.version != CONCEPT_BASIS_VERSION {
            return Err(Error::Version {
                found: basis.version,
                expected: CONCEPT_BASIS_VERSION,
            });
        }
        Ok(basis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let corpus: Vec<Vec<String>> = ["a red cube", "a red ball", "blue ball"]
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect();
        let mut basis = ConceptBasis::build(&corpus, 3, &default_stoplist(), 4, 7, 0.3).unwrap();
        basis.y = Some(Matrix::filled(3, 2, 0.25));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.json");
        basis.save(&path).unwrap();
        assert_eq!(ConceptBasis::load(&path).unwrap(), basis);
    }
}
