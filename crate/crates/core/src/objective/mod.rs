//! Similarities, diversity estimates, contrastive losses and prototype
//! clustering.

mod diversity;
mod kmeans;
mod losses;
mod similarity;

pub use diversity::{
    diversity, diversity_entropy, diversity_std, population_std, raw_diversity,
    softmax_entropy_bits, DiversityEstimator, DiversityScores,
};
pub use kmeans::{kmeans, KMeansResult, PrototypeState};
pub use losses::{
    anchor_diversity, bank_diversity, dcl_direction, dcl_i_loss, dcl_i_loss_value, dcl_loss,
    dcl_loss_value, m_dcl_direction, m_dcl_loss, m_dcl_term, paired_diversity, pgc_loss,
    total_loss, BankSide, LossReport, LossTerms,
};
pub use similarity::{cosine_matrix, SimilarityMatrix};
