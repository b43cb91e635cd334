use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{Matrix, SeededRng};

/// Ordered concept list with frozen initial embeddings `X` (g x d_c, unit rows).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptVocabulary {
    concepts: Vec<String>,
    embeddings: Matrix,
    embedding_seed: u64,
}

impl ConceptVocabulary {
    /// Wraps an explicit concept list, drawing seeded random unit embeddings.
    pub fn new(concepts: Vec<String>, dim: usize, seed: u64) -> Result<Self> {
        if concepts.is_empty() {
            return Err(Error::EmptyInput(
                "concept vocabulary must not be empty".into(),
            ));
        }
        let unique: BTreeSet<&String> = concepts.iter().collect();
        if unique.len() != concepts.len() {
            return Err(invalid("concepts must be unique"));
        }
        if dim == 0 {
            return Err(invalid("concept embedding dimension must be positive"));
        }
        let embeddings = SeededRng::new(seed).unit_rows(concepts.len(), dim);
        Ok(ConceptVocabulary {
            concepts,
            embeddings,
            embedding_seed: seed,
        })
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn embedding_seed(&self) -> u64 {
        self.embedding_seed
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.concepts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect()
    }
}

/// Picks the `g` most frequent tokens outside `stoplist`, ties broken
/// lexicographically.
pub fn build_vocabulary(
    corpus: &[Vec<String>],
    g: usize,
    stoplist: &BTreeSet<String>,
    dim: usize,
    seed: u64,
) -> Result<ConceptVocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus has no captions".into()));
    }
    if g == 0 {
        return Err(invalid("concept count g must be positive"));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tok in corpus.iter().flatten() {
        if !stoplist.contains(tok) {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    if g > counts.len() {
        return Err(invalid(format!(
            "requested {g} concepts but the corpus has only {} distinct non-stop tokens",
            counts.len()
        )));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let concepts = ranked
        .into_iter()
        .take(g)
        .map(|(t, _)| t.to_string())
        .collect();
    ConceptVocabulary::new(concepts, dim, seed)
}
