//! The concept branch: vocabulary, co-occurrence graph, one-layer graph
//! convolution and softmax concept queries.

mod basis;
mod graph;
mod query;
mod vocab;

pub use basis::{default_stoplist, ConceptBasis, CONCEPT_BASIS_VERSION, DEFAULT_STOPLIST};
pub use graph::{
    binarize, build_cooccurrence, gcn_forward, gcn_value, normalized_adjacency, CooccurrenceStats,
    GraphActivation,
};
pub use query::{concept_query, ConceptQueryHead, Modality};
pub use vocab::{build_vocabulary, ConceptVocabulary};
