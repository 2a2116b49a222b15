//! Contrastive debiasing for text generators.
//!
//! The crate is organised along the life cycle of a run:
//!
//! * [`corpus`]: the augmented dataset model, JSON Lines persistence,
//!   entity annotation, statistics, and batch construction.
//! * [`backends`]: capability traits for every external model (translation,
//!   generation, NER, mask filling, scoring) plus deterministic builtins.
//! * [`augment`]: the five augmentation strategies and the filtering pipeline.
//! * [`model`]: a small causal transformer with a token-level contrastive
//!   projection head, with hand-written backward passes.
//! * [`loss`]: entity-weighted pooling, temperature-scaled contrastive loss
//!   with toxic scaling, label-smoothed cross-entropy.
//! * [`train`]: the optimisation loop, learning-rate schedule and the
//!   alpha ablation harness.
//! * [`eval`]: generation, toxicity/faithfulness scoring, degenerate
//!   generation pattern analysis and size/degradation correlation.

pub mod augment;
pub mod backends;
pub mod corpus;
mod error;
pub mod eval;
pub mod fixtures;
pub mod loss;
pub mod model;
mod rng;
pub mod text;
pub mod train;

pub use error::{Error, Result};

pub use augment::{augment_dataset, AugmentConfig, RejectionReason, RejectionRecord};
pub use backends::{BackendSuite, GenParams, ScoredSequence};
pub use corpus::{
    AugmentedSample, Batch, BatchConstraints, ByteTokenizer, DatasetStats, EntitySpan, Negative,
    NegativeStrategy, Positive, PositiveStrategy, Role,
};
pub use eval::{EvalReport, PatternFlags, PatternRules};
pub use loss::LossBreakdown;
pub use model::{Model, ModelConfig, Precision, ProjectionHead};
pub use train::{RunHistory, TrainConfig};
