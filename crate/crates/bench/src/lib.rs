//! Shared inputs for the kernel benchmarks.

use debias_contrast::corpus::{build_batches, ByteTokenizer};
use debias_contrast::{fixtures, AugmentedSample, Batch, BatchConstraints, Model, ModelConfig, TrainConfig};

/// A desk-preset model with fixed weights.
pub fn desk_model() -> Model {
    Model::init(&ModelConfig { seed: 1, ..ModelConfig::desk() }).expect("desk preset is valid")
}

/// The first batch of a small augmented corpus under the desk constraints.
pub fn desk_batch(groups: usize) -> (Batch, TrainConfig) {
    let config = TrainConfig::desk();
    let samples = fixtures::augmented_corpus(groups.max(1) * 2, 3).expect("builtin suite is healthy");
    let constraints = BatchConstraints {
        batch_groups: groups,
        ..config.batch_constraints.clone()
    };
    let build = build_batches(&samples, &constraints, &ByteTokenizer, 0).expect("valid constraints");
    let batch = build.batches.into_iter().next().expect("at least one batch");
    (batch, config)
}

/// Unaugmented pairs for the augmentation benchmark.
pub fn raw_pairs(n: usize) -> Vec<AugmentedSample> {
    fixtures::synthetic_pairs(n, 5)
}
