//! Capability interfaces for every external model used by the pipeline,
//! plus deterministic builtin implementations.
//!
//! Builtins are pure functions of their inputs (and seed, where one is
//! taken), so repeated calls are byte-identical.

mod builtin;
mod faithfulness;
mod ner;
mod registry;
mod toxicity;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::EntitySpan;
use crate::{Error, Result};

pub use builtin::{LexicalMaskFiller, PivotParaphraser, TemplateGenerator};
pub use faithfulness::EntityOverlapFaithfulness;
pub use ner::HeuristicNer;
pub use registry::{BackendRegistry, BackendSelection};
pub use toxicity::{LexiconToxicity, BUILTIN_LEXICON};

/// Decoding parameters for a generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub temperature: f64,
    pub top_p: f64,
    pub repetition_penalty: f64,
    pub num_beams: usize,
    pub length_penalty: f64,
    pub max_new_tokens: usize,
    pub max_input_length: usize,
    pub num_return_sequences: usize,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 1.0,
            repetition_penalty: 1.0,
            num_beams: 1,
            length_penalty: 0.0,
            max_new_tokens: 128,
            max_input_length: 512,
            num_return_sequences: 1,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top_p must lie in (0, 1], got {}", self.top_p)));
        }
        if self.repetition_penalty < 1.0 {
            return Err(Error::Config("repetition_penalty must be >= 1".into()));
        }
        if self.num_beams > 1 && self.num_return_sequences > self.num_beams {
            return Err(Error::Config(format!(
                "num_return_sequences {} exceeds num_beams {}",
                self.num_return_sequences, self.num_beams
            )));
        }
        Ok(())
    }
}

/// A generated candidate with its total log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub text: String,
    /// Sum of token log-probabilities; never positive.
    pub log_prob: f64,
    /// Token count.
    pub length: usize,
}

impl ScoredSequence {
    pub fn new(text: impl Into<String>, log_prob: f64, length: usize) -> Self {
        Self {
            text: text.into(),
            log_prob,
            length,
        }
    }

    /// Geometric mean of the per-token probabilities.
    pub fn mean_token_prob(&self) -> f64 {
        if self.length == 0 {
            return 1.0;
        }
        (self.log_prob / self.length as f64).exp()
    }
}

pub trait GenerationBackend: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, prompt: &str, params: &GenParams) -> Result<Vec<ScoredSequence>>;
    fn health_check(&self) -> Result<()> {
        let params = GenParams::default();
        self.generate("health check probe", &params).map(|_| ())
    }
}

pub trait TranslationBackend: Send + Sync {
    fn name(&self) -> &str;
    fn translate(&self, text: &str, src_lang: &str, tgt_lang: &str) -> Result<String>;
    fn health_check(&self) -> Result<()> {
        self.translate("health check probe", "en", "en").map(|_| ())
    }
}

pub trait NerBackend: Send + Sync {
    fn name(&self) -> &str;
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>>;
    fn health_check(&self) -> Result<()> {
        self.tag("Health check probe").map(|_| ())
    }
}

/// A mask-filling request: every occurrence of `marker` in `text` is to be
/// replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct FillRequest<'a> {
    pub text: &'a str,
    pub marker: &'a str,
    pub top_k: usize,
    pub temperature: f64,
    pub seed: u64,
}

pub trait MaskFillBackend: Send + Sync {
    fn name(&self) -> &str;
    fn fill(&self, request: &FillRequest<'_>) -> Result<String>;
    fn health_check(&self) -> Result<()> {
        self.fill(&FillRequest {
            text: "health <mask> probe",
            marker: "<mask>",
            top_k: 1,
            temperature: 1.0,
            seed: 0,
        })
        .map(|_| ())
    }
}

pub trait ToxicityScorer: Send + Sync {
    fn name(&self) -> &str;
    /// Toxicity in `[0, 1]`.
    fn score(&self, text: &str) -> Result<f64>;
    fn health_check(&self) -> Result<()> {
        check_unit(self.name(), self.score("health check probe")?)
    }
}

pub trait FaithfulnessScorer: Send + Sync {
    fn name(&self) -> &str;
    /// Faithfulness of `summary` to `source` in `[0, 1]`; higher is better.
    fn score(&self, source: &str, summary: &str) -> Result<f64>;
    fn health_check(&self) -> Result<()> {
        check_unit(self.name(), self.score("health check probe", "health check")?)
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::backend(name, format!("probe score {v} outside [0, 1]")))
    }
}

/// One instance of every backend the pipeline needs.
#[derive(Clone)]
pub struct BackendSuite {
    pub generator: Arc<dyn GenerationBackend>,
    pub translator: Arc<dyn TranslationBackend>,
    pub ner: Arc<dyn NerBackend>,
    pub mask_filler: Arc<dyn MaskFillBackend>,
    pub toxicity: Arc<dyn ToxicityScorer>,
    pub faithfulness: Arc<dyn FaithfulnessScorer>,
}

impl BackendSuite {
    /// The deterministic builtin suite.
    pub fn builtin() -> Self {
        let ner: Arc<dyn NerBackend> = Arc::new(HeuristicNer::new());
        Self {
            generator: Arc::new(TemplateGenerator::new()),
            translator: Arc::new(PivotParaphraser::new()),
            faithfulness: Arc::new(EntityOverlapFaithfulness::new(ner.clone())),
            ner,
            mask_filler: Arc::new(LexicalMaskFiller::new()),
            toxicity: Arc::new(LexiconToxicity::builtin()),
        }
    }

    /// Probes every member; the first failure is returned.
    pub fn health_check(&self) -> Result<()> {
        self.generator.health_check()?;
        self.translator.health_check()?;
        self.ner.health_check()?;
        self.mask_filler.health_check()?;
        self.toxicity.health_check()?;
        self.faithfulness.health_check()
    }
}

impl std::fmt::Debug for BackendSuite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendSuite")
            .field("generator", &self.generator.name())
            .field("translator", &self.translator.name())
            .field("ner", &self.ner.name())
            .field("mask_filler", &self.mask_filler.name())
            .field("toxicity", &self.toxicity.name())
            .field("faithfulness", &self.faithfulness.name())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_suite_is_healthy() {
        BackendSuite::builtin().health_check().unwrap();
    }

    #[test]
    fn gen_params_reject_bad_values() {
        let mut p = GenParams::default();
        p.top_p = 0.0;
        assert!(p.validate().is_err());
        let p = GenParams { num_beams: 2, num_return_sequences: 3, ..GenParams::default() };
        assert!(p.validate().is_err());
    }
}
