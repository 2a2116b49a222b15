use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use super::strategies::{backtranslate, entity_swap, generate_toxic, low_confidence_generate, mask_regenerate};
use super::{AugmentConfig, AugmentStrategy, Rejection, RejectionReason, RejectionRecord};
use crate::backends::BackendSuite;
use crate::corpus::{normalize_spans, AugmentedSample, EntitySpan, Negative, NegativeStrategy, Positive, PositiveStrategy};
use crate::{rng, text, Result};

/// Corpus-wide replacement candidates keyed by entity label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityPool {
    by_label: BTreeMap<String, BTreeSet<String>>,
}

impl EntityPool {
    pub fn from_spans<'a>(spans: impl IntoIterator<Item = &'a EntitySpan>) -> Self {
        let mut pool = Self::default();
        for s in spans {
            pool.insert(&s.label, &s.text);
        }
        pool
    }

    pub fn insert(&mut self, label: &str, text: &str) {
        self.by_label.entry(label.to_owned()).or_default().insert(text.to_owned());
    }

    /// Same-label entries other than `original`, in sorted order.
    pub fn alternatives(&self, label: &str, original: &str) -> Vec<&str> {
        self.by_label
            .get(label)
            .map(|set| set.iter().map(String::as_str).filter(|t| *t != original).collect())
            .unwrap_or_default()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.by_label.keys().map(String::as_str)
    }
}

/// How often each entity text occurs across the corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityFrequencies {
    counts: HashMap<String, u64>,
}

impl EntityFrequencies {
    pub fn from_spans<'a>(spans: impl IntoIterator<Item = &'a EntitySpan>) -> Self {
        let mut counts = HashMap::new();
        for s in spans {
            *counts.entry(s.text.clone()).or_insert(0) += 1;
        }
        Self { counts }
    }

    pub fn count(&self, text: &str) -> u64 {
        self.counts.get(text).copied().unwrap_or(0)
    }
}

struct SampleOutcome {
    sample: Option<AugmentedSample>,
    records: Vec<RejectionRecord>,
}

/// Runs every strategy over every sample.
///
/// Entities are (re)annotated on the summary first so the swap pool and
/// frequency table cover the whole corpus. Backend failures inside a sample
/// become rejection records; only a failed health check aborts. Output is
/// sorted by sample id.
pub fn augment_dataset(
    samples: &[AugmentedSample],
    config: &AugmentConfig,
    suite: &BackendSuite,
) -> Result<(Vec<AugmentedSample>, Vec<RejectionRecord>)> {
    if samples.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    config.validate()?;
    suite.health_check()?;

    let tagged: Vec<(Vec<EntitySpan>, Option<Rejection>)> = samples
        .par_iter()
        .map(|s| match suite.ner.tag(&s.summary) {
            Ok(spans) => (normalize_spans(spans), None),
            Err(e) => (Vec::new(), Some(Rejection::new(RejectionReason::BackendFailure, e.to_string()))),
        })
        .collect();
    let all_spans = tagged.iter().flat_map(|(spans, _)| spans.iter());
    let pool = EntityPool::from_spans(all_spans.clone());
    let frequencies = EntityFrequencies::from_spans(all_spans);

    let mut outcomes: Vec<SampleOutcome> = samples
        .par_iter()
        .zip(tagged.into_par_iter())
        .map(|(s, (spans, ner_failure))| augment_one(s, spans, ner_failure, config, suite, &pool, &frequencies))
        .collect();
    outcomes.sort_by(|a, b| first_id(a).cmp(first_id(b)));

    let mut out = Vec::with_capacity(outcomes.len());
    let mut records = Vec::new();
    for o in outcomes {
        out.extend(o.sample);
        records.extend(o.records);
    }
    Ok((out, records))
}

fn first_id(o: &SampleOutcome) -> &str {
    o.sample
        .as_ref()
        .map(|s| s.id.as_str())
        .or_else(|| o.records.first().map(|r| r.sample_id.as_str()))
        .unwrap_or("")
}

fn augment_one(
    sample: &AugmentedSample,
    spans: Vec<EntitySpan>,
    ner_failure: Option<Rejection>,
    config: &AugmentConfig,
    suite: &BackendSuite,
    pool: &EntityPool,
    frequencies: &EntityFrequencies,
) -> SampleOutcome {
    let id = sample.id.as_str();
    let mut records = Vec::new();
    let mut reject = |strategy, r: Rejection| records.push(RejectionRecord::new(id, strategy, r));

    if text::word_count(&sample.summary) < config.min_words {
        reject(AugmentStrategy::Original, Rejection::new(RejectionReason::TooShort, "reference summary"));
        return SampleOutcome { sample: None, records };
    }

    let mut out = AugmentedSample::new(id, sample.source.clone(), sample.summary.clone());
    out.extra = sample.extra.clone();
    out.entities = spans;
    out.positives.push(Positive::new(sample.summary.clone(), PositiveStrategy::Original));

    match backtranslate(&sample.summary, config, suite.translator.as_ref()) {
        Ok(bt) => {
            for p in bt.paraphrases {
                out.positives
                    .push(Positive::new(p.text, PositiveStrategy::Backtranslation).with_meta("pivot", p.pivot));
            }
            for r in bt.rejected {
                reject(AugmentStrategy::Backtranslation, r);
            }
        }
        Err(e) => reject(
            AugmentStrategy::Backtranslation,
            Rejection::new(RejectionReason::BackendFailure, e.to_string()),
        ),
    }

    let seeded = |stream: &str| AugmentConfig {
        seed: rng::derive(config.seed, id, stream),
        ..config.clone()
    };

    match generate_toxic(&sample.summary, &seeded("toxic"), suite.generator.as_ref(), suite.toxicity.as_ref()) {
        Ok(neg) => out.negatives.push(neg),
        Err(r) => reject(AugmentStrategy::Toxic, r),
    }

    let mut candidates: Vec<(AugmentStrategy, NegativeStrategy, String)> = Vec::new();
    let prompt = format!("{}\nTL;DR:", sample.source.trim());
    match low_confidence_generate(&prompt, &seeded("low_confidence"), suite.generator.as_ref()) {
        Ok(t) => candidates.push((AugmentStrategy::LowConfidence, NegativeStrategy::LowConfidence, t)),
        Err(r) => reject(AugmentStrategy::LowConfidence, r),
    }

    if let Some(r) = ner_failure {
        reject(AugmentStrategy::EntitySwap, r.clone());
        reject(AugmentStrategy::MaskEntity, r);
    } else {
        let swap_seed = rng::derive(config.seed, id, "entity_swap");
        match entity_swap(&sample.summary, &out.entities, pool, config, swap_seed) {
            Ok(vs) => candidates.extend(vs.into_iter().map(|t| (AugmentStrategy::EntitySwap, NegativeStrategy::EntitySwap, t))),
            Err(r) => reject(AugmentStrategy::EntitySwap, r),
        }
        let mask_seed = rng::derive(config.seed, id, "mask_entity");
        match mask_regenerate(&sample.summary, &out.entities, config, suite.mask_filler.as_ref(), mask_seed, frequencies) {
            Ok(t) => candidates.push((AugmentStrategy::MaskEntity, NegativeStrategy::MaskEntity, t)),
            Err(r) => reject(AugmentStrategy::MaskEntity, r),
        }
    }

    for (strategy, tag, candidate) in candidates {
        if text::word_count(&candidate) < config.min_words {
            reject(strategy, Rejection::new(RejectionReason::TooShort, candidate));
            continue;
        }
        if text::normalize_whitespace(&candidate) == text::normalize_whitespace(&sample.summary) {
            reject(strategy, Rejection::new(RejectionReason::DuplicateOfSource, candidate));
            continue;
        }
        match suite.toxicity.score(&candidate) {
            Ok(score) => {
                let toxic = score >= config.toxicity_threshold;
                out.negatives.push(Negative::new(candidate, tag, toxic, score));
            }
            Err(e) => reject(strategy, Rejection::new(RejectionReason::BackendFailure, e.to_string())),
        }
    }

    SampleOutcome { sample: Some(out), records }
}
