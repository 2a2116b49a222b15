use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AugmentedSample, EntitySpan, Tokenizer};
use crate::{rng, text, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Anchor,
    Positive,
    Negative,
}

/// Per-model limits on batch composition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConstraints {
    /// `None` means unlimited.
    #[serde(with = "cap", default)]
    pub max_positives: Option<usize>,
    #[serde(with = "cap", default)]
    pub max_negatives: Option<usize>,
    pub max_length: usize,
    pub batch_groups: usize,
}

impl Default for BatchConstraints {
    fn default() -> Self {
        Self {
            max_positives: None,
            max_negatives: None,
            max_length: 512,
            batch_groups: 4,
        }
    }
}

impl BatchConstraints {
    pub fn validate(&self) -> Result<()> {
        if self.max_length == 0 {
            return Err(Error::Config("max_length must be positive".into()));
        }
        if self.batch_groups == 0 {
            return Err(Error::Config("batch_groups must be positive".into()));
        }
        if self.max_positives == Some(0) || self.max_negatives == Some(0) {
            return Err(Error::Config("bounded positive/negative caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Serialises `Option<usize>` as an integer or the string `"unlimited"`.
mod cap {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => s.serialize_u64(*n as u64),
            None => s.serialize_str("unlimited"),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Count(u64),
        Word(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(Some(n as usize)),
            Raw::Word(w) if w.eq_ignore_ascii_case("unlimited") => Ok(None),
            Raw::Word(w) => Err(de::Error::custom(format!("expected a count or \"unlimited\", got {w:?}"))),
        }
    }
}

/// A batch of tokenised `source ⧺ SEP ⧺ variant` sequences.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub sequences: Vec<Vec<u32>>,
    pub roles: Vec<Role>,
    pub group_ids: Vec<String>,
    /// 1 on summary-region tokens that overlap an entity mention.
    pub entity_mask: Vec<Vec<bool>>,
    pub toxic_flags: Vec<bool>,
    /// 1 on summary-region tokens (including the end token): the targets of
    /// the language-modelling loss.
    pub ce_mask: Vec<Vec<bool>>,
    /// Unordered pairs `(i, j)` with `i < j`.
    pub positive_pairs: Vec<(usize, usize)>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Exhaustive check of the structural invariants.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.sequences.len();
        if [self.roles.len(), self.group_ids.len(), self.entity_mask.len(), self.toxic_flags.len(), self.ce_mask.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::Shape("batch field lengths differ".into()));
        }
        for i in 0..n {
            let len = self.sequences[i].len();
            if self.entity_mask[i].len() != len || self.ce_mask[i].len() != len {
                return Err(Error::Shape(format!("mask length mismatch in sequence {i}")));
            }
            if !self.ce_mask[i].iter().any(|&m| m) {
                return Err(Error::Shape(format!("sequence {i} has no target tokens")));
            }
            if self.entity_mask[i].iter().zip(&self.ce_mask[i]).any(|(&e, &c)| e && !c) {
                return Err(Error::Shape(format!("entity token outside summary in sequence {i}")));
            }
        }
        for &(i, j) in &self.positive_pairs {
            if i >= j || j >= n {
                return Err(Error::Shape(format!("bad pair ({i}, {j})")));
            }
            if self.group_ids[i] != self.group_ids[j] {
                return Err(Error::Shape(format!("pair ({i}, {j}) spans groups")));
            }
            if self.roles[i] == Role::Negative || self.roles[j] == Role::Negative {
                return Err(Error::Shape(format!("pair ({i}, {j}) contains a negative")));
            }
        }
        Ok(())
    }
}

/// A variant or group dropped during batching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub sample_id: String,
    pub role: Role,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct BatchBuild {
    pub batches: Vec<Batch>,
    pub skipped: Vec<SkipRecord>,
}

/// Groups samples into batches under `constraints`.
///
/// Each sample contributes one group: the reference summary as anchor, its
/// paraphrase positives and its negatives (subsampled by seeded draw when
/// capped). Group order is a seeded permutation of the input. The result is
/// a pure function of `(samples, constraints, tokenizer, seed)`.
pub fn build_batches(
    samples: &[AugmentedSample],
    constraints: &BatchConstraints,
    tokenizer: &dyn Tokenizer,
    seed: u64,
) -> Result<BatchBuild> {
    constraints.validate()?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng::seeded(rng::mix(seed, 0xba7c)));

    let mut build = BatchBuild::default();
    let mut current = Batch::default();
    let mut groups_in_current = 0;
    for idx in order {
        let sample = &samples[idx];
        if append_group(&mut current, sample, constraints, tokenizer, seed, &mut build.skipped) {
            groups_in_current += 1;
            if groups_in_current == constraints.batch_groups {
                build.batches.push(std::mem::take(&mut current));
                groups_in_current = 0;
            }
        }
    }
    if groups_in_current > 0 {
        build.batches.push(current);
    }
    Ok(build)
}

/// Keeps at most `cap` items, chosen uniformly by seeded draw, in their
/// original order.
fn subsample<T>(items: Vec<T>, cap: Option<usize>, rng: &mut rng::Rng) -> Vec<T> {
    match cap {
        Some(k) if items.len() > k => {
            let mut idx: Vec<usize> = (0..items.len()).collect();
            idx.shuffle(rng);
            let mut keep = idx[..k].to_vec();
            keep.sort_unstable();
            let mut items: Vec<Option<T>> = items.into_iter().map(Some).collect();
            keep.into_iter().filter_map(|i| items[i].take()).collect()
        }
        _ => items,
    }
}

struct Encoded {
    ids: Vec<u32>,
    entity_mask: Vec<bool>,
    ce_mask: Vec<bool>,
}

fn encode_pair(
    source: &str,
    variant: &str,
    spans: &[(usize, usize)],
    max_length: usize,
    tokenizer: &dyn Tokenizer,
) -> Option<Encoded> {
    let summary = tokenizer.encode(variant);
    let fixed = summary.ids.len() + 3;
    if fixed > max_length {
        return None;
    }
    let source_ids = tokenizer.encode(source).ids;
    let keep_src = source_ids.len().min(max_length - fixed);

    let mut ids = Vec::with_capacity(keep_src + fixed);
    ids.push(tokenizer.bos());
    ids.extend_from_slice(&source_ids[..keep_src]);
    ids.push(tokenizer.sep());
    let prefix = ids.len();
    ids.extend_from_slice(&summary.ids);
    ids.push(tokenizer.eos());

    let mut entity_mask = vec![false; ids.len()];
    let mut ce_mask = vec![false; ids.len()];
    for (k, &(cs, ce)) in summary.offsets.iter().enumerate() {
        ce_mask[prefix + k] = true;
        entity_mask[prefix + k] = spans.iter().any(|&(s, e)| cs < e && s < ce);
    }
    *ce_mask.last_mut().expect("non-empty") = true;
    Some(Encoded { ids, entity_mask, ce_mask })
}

/// Character ranges of every occurrence of the anchor's entity mentions
/// inside `text`. Variants carry no annotations of their own; a swapped or
/// masked entity therefore drops out of the variant's mask.
fn variant_spans(text: &str, anchor_entities: &[EntitySpan]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for ent in anchor_entities {
        if ent.text.is_empty() {
            continue;
        }
        for (byte_pos, _) in text.match_indices(ent.text.as_str()) {
            let start = text[..byte_pos].chars().count();
            out.push((start, start + text::char_len(&ent.text)));
        }
    }
    out
}

fn append_group(
    batch: &mut Batch,
    sample: &AugmentedSample,
    constraints: &BatchConstraints,
    tokenizer: &dyn Tokenizer,
    seed: u64,
    skipped: &mut Vec<SkipRecord>,
) -> bool {
    let anchor_spans: Vec<(usize, usize)> = sample.entities.iter().map(|e| (e.start, e.end)).collect();
    let Some(anchor) = encode_pair(&sample.source, &sample.summary, &anchor_spans, constraints.max_length, tokenizer)
    else {
        log::warn!("skipping sample {}: anchor exceeds max_length {}", sample.id, constraints.max_length);
        skipped.push(SkipRecord {
            sample_id: sample.id.clone(),
            role: Role::Anchor,
            reason: format!("anchor exceeds max_length {}", constraints.max_length),
        });
        return false;
    };

    let mut draw = rng::seeded(rng::derive(seed, &sample.id, "batch-select"));
    let positives = subsample(sample.paraphrases().collect(), constraints.max_positives, &mut draw);
    let negatives = subsample(sample.negatives.iter().collect(), constraints.max_negatives, &mut draw);

    let mut members = vec![batch.len()];
    push(batch, anchor, Role::Anchor, &sample.id, false);
    let mut variants: Vec<(&str, Role, bool)> = positives.iter().map(|p| (p.text.as_str(), Role::Positive, false)).collect();
    variants.extend(negatives.iter().map(|n| (n.text.as_str(), Role::Negative, n.toxic)));
    for (text, role, toxic) in variants {
        let spans = variant_spans(text, &sample.entities);
        match encode_pair(&sample.source, text, &spans, constraints.max_length, tokenizer) {
            Some(enc) => {
                if role == Role::Positive {
                    members.push(batch.len());
                }
                push(batch, enc, role, &sample.id, toxic);
            }
            None => skipped.push(SkipRecord {
                sample_id: sample.id.clone(),
                role,
                reason: format!("variant exceeds max_length {}", constraints.max_length),
            }),
        }
    }
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            batch.positive_pairs.push((i, j));
        }
    }
    true
}

fn push(batch: &mut Batch, enc: Encoded, role: Role, group: &str, toxic: bool) {
    batch.sequences.push(enc.ids);
    batch.entity_mask.push(enc.entity_mask);
    batch.ce_mask.push(enc.ce_mask);
    batch.roles.push(role);
    batch.group_ids.push(group.to_owned());
    batch.toxic_flags.push(toxic);
}
