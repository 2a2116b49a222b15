//! Positive and negative variant generation.
//!
//! Positives come from multi-pivot backtranslation. Negatives come from four
//! strategies: few-shot toxic rewriting, inverse beam search (the candidate
//! with the *lowest* beam score), same-label entity swapping and masked
//! regeneration. Every rejected candidate is reported as a
//! [`RejectionRecord`].

mod pipeline;
mod strategies;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use pipeline::{augment_dataset, EntityFrequencies, EntityPool};
pub use strategies::{
    backtranslate, beam_score, entity_swap, generate_toxic, low_confidence_generate, mask_regenerate,
    strip_prompt_artifacts, toxic_prompt, Backtranslation, Paraphrase,
};

/// Few-shot prompt for toxic rewriting; `[Input text]` is the input slot.
pub const TOXIC_PROMPT_TEMPLATE: &str = include_str!("../../data/toxic_prompt.txt");

/// Marker line after which a toxic generation starts.
pub const TOXIC_REWRITE_MARKER: &str = "Toxic rewrite:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub pivots: Vec<String>,
    pub bt_beam_width: usize,
    pub bt_temperature: f64,
    pub lc_num_beams: usize,
    /// λ in `log P(s) + λ·length(s)`.
    pub lc_lambda: f64,
    pub lc_max_input: usize,
    pub lc_max_output: usize,
    /// Candidates whose mean token probability exceeds this are skipped.
    pub lc_confidence_threshold: f64,
    pub lc_confidence_gate: bool,
    pub lc_return_sequences: usize,
    pub toxic_temperature: f64,
    pub toxic_top_p: f64,
    pub toxic_repetition_penalty: f64,
    pub toxic_max_new_tokens: usize,
    /// Inclusive lower bound on the toxicity of an accepted toxic rewrite.
    pub toxicity_threshold: f64,
    pub min_words: usize,
    pub swap_max_variations: usize,
    pub swap_max_per_sample: usize,
    pub mask_ratio: f64,
    pub mask_top_k: usize,
    pub mask_temperature: f64,
    pub mask_marker: String,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            pivots: vec!["de".into(), "fr".into(), "es".into()],
            bt_beam_width: 5,
            bt_temperature: 0.8,
            lc_num_beams: 8,
            lc_lambda: 2.0,
            lc_max_input: 512,
            lc_max_output: 128,
            lc_confidence_threshold: 0.21,
            lc_confidence_gate: true,
            lc_return_sequences: 3,
            toxic_temperature: 1.0,
            toxic_top_p: 0.95,
            toxic_repetition_penalty: 1.2,
            toxic_max_new_tokens: 128,
            toxicity_threshold: 0.4,
            min_words: 3,
            swap_max_variations: 3,
            swap_max_per_sample: 2,
            mask_ratio: 0.15,
            mask_top_k: 5,
            mask_temperature: 0.7,
            mask_marker: "<mask>".into(),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pivots.is_empty() {
            return Err(Error::Config("at least one pivot language is required".into()));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::Config(format!("mask_ratio must lie in (0, 1), got {}", self.mask_ratio)));
        }
        if !(0.0..=1.0).contains(&self.toxicity_threshold) {
            return Err(Error::Config("toxicity_threshold must lie in [0, 1]".into()));
        }
        if self.lc_return_sequences > self.lc_num_beams {
            return Err(Error::Config("lc_return_sequences exceeds lc_num_beams".into()));
        }
        if self.mask_marker.is_empty() {
            return Err(Error::Config("mask_marker must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentStrategy {
    Original,
    Backtranslation,
    Toxic,
    LowConfidence,
    EntitySwap,
    MaskEntity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    TooShort,
    BelowToxicityThreshold,
    AboveConfidenceThreshold,
    DuplicateOfSource,
    BackendFailure,
    NoEntities,
}

/// Why a single candidate was rejected, before it is attributed to a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub reason: RejectionReason,
    pub detail: String,
}

impl Rejection {
    pub fn new(reason: RejectionReason, detail: impl Into<String>) -> Self {
        Self {
            reason,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRecord {
    pub sample_id: String,
    pub strategy: AugmentStrategy,
    pub reason: RejectionReason,
    pub detail: String,
}

impl RejectionRecord {
    pub fn new(sample_id: &str, strategy: AugmentStrategy, rejection: Rejection) -> Self {
        Self {
            sample_id: sample_id.to_owned(),
            strategy,
            reason: rejection.reason,
            detail: rejection.detail,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_settings() {
        let c = AugmentConfig::default();
        assert_eq!(c.pivots, ["de", "fr", "es"]);
        assert_eq!((c.bt_beam_width, c.bt_temperature), (5, 0.8));
        assert_eq!((c.lc_num_beams, c.lc_lambda, c.lc_max_input, c.lc_max_output), (8, 2.0, 512, 128));
        assert_eq!((c.lc_confidence_threshold, c.lc_return_sequences), (0.21, 3));
        assert_eq!((c.toxic_temperature, c.toxic_top_p, c.toxic_repetition_penalty, c.toxic_max_new_tokens), (1.0, 0.95, 1.2, 128));
        assert_eq!((c.toxicity_threshold, c.min_words), (0.4, 3));
        assert_eq!((c.swap_max_variations, c.swap_max_per_sample), (3, 2));
        assert_eq!((c.mask_ratio, c.mask_top_k, c.mask_temperature), (0.15, 5, 0.7));
        c.validate().unwrap();
    }

    #[test]
    fn template_has_three_exemplars_and_slot() {
        assert_eq!(TOXIC_PROMPT_TEMPLATE.matches("Original text:").count(), 4);
        assert_eq!(TOXIC_PROMPT_TEMPLATE.matches(TOXIC_REWRITE_MARKER).count(), 4);
        assert!(TOXIC_PROMPT_TEMPLATE.contains("[Input text]"));
        assert!(TOXIC_PROMPT_TEMPLATE.trim_end().ends_with(TOXIC_REWRITE_MARKER));
    }
}
