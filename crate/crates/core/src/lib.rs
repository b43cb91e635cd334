//! Cross-modal contrastive alignment with diversity-sensitive losses,
//! coupled momentum memory banks, a co-occurrence concept branch and
//! prototype-guided pseudo-label classification.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: matrices, the gradient tape, Adam, seeded RNG.
//! - [`representation`]: pooling aggregators, momentum encoders, memory banks.
//! - [`knowledge`]: concept vocabulary, co-occurrence graph, GCN, concept query.
//! - [`objective`]: diversity scores, contrastive losses, k-means, PGC loss.
//! - [`pipeline`]: datasets, the trainer, evaluation and checkpoints.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod knowledge;
pub mod numerics;
pub mod objective;
pub mod pipeline;
pub mod representation;

pub use error::{Error, Result};
pub use numerics::{Matrix, SeededRng, Tape, Var};
