//! Augmented dataset model, persistence, annotation and batching.

mod batch;
mod io;
mod stats;
mod tokenizer;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::backends::NerBackend;
use crate::text;
use crate::{Error, Result};

pub use batch::{build_batches, Batch, BatchBuild, BatchConstraints, Role, SkipRecord};
pub use io::{load_dataset, load_dataset_with, save_dataset, ValidationOptions};
pub use stats::{compute_stats, compute_stats_with, DatasetStats, EntityBasis};
pub use tokenizer::{ByteTokenizer, Encoding, Tokenizer};

/// A labelled entity mention, in character offsets of its owning text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
    pub text: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
            text: text.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositiveStrategy {
    Original,
    Backtranslation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeStrategy {
    Toxic,
    LowConfidence,
    EntitySwap,
    MaskEntity,
}

impl NegativeStrategy {
    pub const ALL: [NegativeStrategy; 4] = [
        NegativeStrategy::Toxic,
        NegativeStrategy::LowConfidence,
        NegativeStrategy::EntitySwap,
        NegativeStrategy::MaskEntity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NegativeStrategy::Toxic => "toxic",
            NegativeStrategy::LowConfidence => "low_confidence",
            NegativeStrategy::EntitySwap => "entity_swap",
            NegativeStrategy::MaskEntity => "mask_entity",
        }
    }
}

impl std::fmt::Display for NegativeStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Positive {
    pub text: String,
    pub strategy: PositiveStrategy,
    #[serde(default)]
    pub meta: Map<String, Value>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Positive {
    pub fn new(text: impl Into<String>, strategy: PositiveStrategy) -> Self {
        Self {
            text: text.into(),
            strategy,
            meta: Map::new(),
            extra: Map::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.to_owned(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Negative {
    pub text: String,
    pub strategy: NegativeStrategy,
    pub toxic: bool,
    pub toxicity_score: f64,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Negative {
    pub fn new(text: impl Into<String>, strategy: NegativeStrategy, toxic: bool, score: f64) -> Self {
        Self {
            text: text.into(),
            strategy,
            toxic,
            toxicity_score: score,
            extra: Map::new(),
        }
    }
}

/// One source document with its reference summary and augmented variants.
///
/// Fields that this crate does not know about are kept in `extra` and
/// written back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSample {
    pub id: String,
    pub source: String,
    pub summary: String,
    #[serde(default)]
    pub entities: Vec<EntitySpan>,
    #[serde(default)]
    pub positives: Vec<Positive>,
    #[serde(default)]
    pub negatives: Vec<Negative>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl AugmentedSample {
    /// A bare source/summary pair with no annotations.
    pub fn new(id: impl Into<String>, source: impl Into<String>, summary: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            summary: summary.into(),
            entities: Vec::new(),
            positives: Vec::new(),
            negatives: Vec::new(),
            extra: Map::new(),
        }
    }

    /// Paraphrase positives, i.e. every positive except the reference itself.
    pub fn paraphrases(&self) -> impl Iterator<Item = &Positive> {
        self.positives
            .iter()
            .filter(|p| p.strategy != PositiveStrategy::Original)
    }
}

/// Sorts spans by start and drops overlaps. On overlap the longer span wins,
/// then the one starting earlier.
pub fn normalize_spans(mut spans: Vec<EntitySpan>) -> Vec<EntitySpan> {
    spans.retain(|s| !s.is_empty());
    spans.sort_by(|a, b| b.len().cmp(&a.len()).then(a.start.cmp(&b.start)));
    let mut kept: Vec<EntitySpan> = Vec::with_capacity(spans.len());
    for span in spans {
        if !kept.iter().any(|k| k.overlaps(&span)) {
            kept.push(span);
        }
    }
    kept.sort_by_key(|s| s.start);
    kept
}

/// Checks the span invariants against the owning text.
pub fn validate_spans(id: &str, text: &str, spans: &[EntitySpan]) -> Result<()> {
    let len = text::char_len(text);
    let mut prev_end = 0;
    for (i, span) in spans.iter().enumerate() {
        if span.start >= span.end || span.end > len {
            return Err(Error::InvalidSample {
                id: id.to_owned(),
                field: "entities",
                message: format!(
                    "span {i} [{}, {}) out of bounds for text of length {len}",
                    span.start, span.end
                ),
            });
        }
        if i > 0 && span.start < prev_end {
            return Err(Error::InvalidSample {
                id: id.to_owned(),
                field: "entities",
                message: format!("span {i} overlaps or is out of order"),
            });
        }
        let covered = text::char_slice(text, span.start, span.end).unwrap_or_default();
        if covered != span.text {
            return Err(Error::InvalidSample {
                id: id.to_owned(),
                field: "entities",
                message: format!("span {i} text {:?} does not match {:?}", span.text, covered),
            });
        }
        prev_end = span.end;
    }
    Ok(())
}

/// Replaces `sample.entities` with the backend's spans over the summary,
/// normalised to sorted, non-overlapping order.
pub fn annotate_entities(sample: &AugmentedSample, ner: &dyn NerBackend) -> Result<AugmentedSample> {
    if sample.summary.trim().is_empty() {
        return Err(Error::InvalidSample {
            id: sample.id.clone(),
            field: "summary",
            message: "cannot annotate an empty summary".into(),
        });
    }
    let raw = ner.tag(&sample.summary)?;
    let len = text::char_len(&sample.summary);
    let mut spans = Vec::with_capacity(raw.len());
    for span in raw {
        if span.start >= span.end || span.end > len {
            return Err(Error::backend(
                ner.name(),
                format!("span [{}, {}) outside summary of length {len}", span.start, span.end),
            ));
        }
        // Trust offsets over the backend's copy of the text.
        let covered = text::char_slice(&sample.summary, span.start, span.end)
            .unwrap_or_default()
            .to_owned();
        spans.push(EntitySpan { text: covered, ..span });
    }
    let mut out = sample.clone();
    out.entities = normalize_spans(spans);
    Ok(out)
}

/// Annotates every sample in parallel. Output order matches input order.
pub fn annotate_all(samples: &[AugmentedSample], ner: &(dyn NerBackend + Sync)) -> Result<Vec<AugmentedSample>> {
    use rayon::prelude::*;
    samples
        .par_iter()
        .map(|s| annotate_entities(s, ner))
        .collect()
}
