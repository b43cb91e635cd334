//! Datasets, synthetic data, the training loop, evaluation and checkpoints.

mod baseline;
mod checkpoint;
mod config;
mod dataset;
mod eval;
mod model;
mod synthetic;
mod train;

pub use baseline::{triplet_baseline_loss, triplet_loss_value};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{Objective, TrainConfig};
pub use dataset::{PairRecord, PairedDataset, Split};
pub use eval::{
    blended_similarity, blended_similarity_matrix, evaluate, recall_at_k, similarity_matrix,
    EvalResult,
};
pub use model::{Model, ModelVars, SideEmbeddings};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticData};
pub use train::{
    compute_prototypes, epoch_batches, instance_embeddings, metrics_csv, train, train_epoch,
    train_step, write_metrics_csv, EpochMetrics, TrainOutcome, TrainState, METRICS_HEADER,
};
