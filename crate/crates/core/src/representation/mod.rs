//! Instance-level feature aggregation, momentum encoders and memory banks.

mod aggregator;
mod bank;
mod momentum;

pub use aggregator::{
    aggregate, aggregate_batch, pool, pooling_weights, positional_encoding, AggregatorVars,
    FeatureAggregator, FeatureSequence,
};
pub use bank::MemoryBank;
pub use momentum::{EncoderPair, InstanceEncoders, ParameterSet};
