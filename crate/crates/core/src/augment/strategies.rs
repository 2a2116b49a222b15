use std::cmp::Reverse;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::pipeline::{EntityFrequencies, EntityPool};
use super::{AugmentConfig, Rejection, RejectionReason, TOXIC_PROMPT_TEMPLATE, TOXIC_REWRITE_MARKER};
use crate::backends::{FillRequest, GenParams, GenerationBackend, MaskFillBackend, ToxicityScorer, TranslationBackend};
use crate::corpus::{EntitySpan, Negative, NegativeStrategy};
use crate::{rng, text, Error, Result};

/// A round-trip paraphrase and the pivot it came through.
#[derive(Debug, Clone, PartialEq)]
pub struct Paraphrase {
    pub pivot: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Backtranslation {
    pub paraphrases: Vec<Paraphrase>,
    pub rejected: Vec<Rejection>,
}

/// Round-trips `text` through every pivot language.
///
/// Candidates equal to the input (after whitespace normalisation) or to an
/// earlier pivot's candidate are dropped. A failing pivot is skipped; if
/// every pivot fails the whole call fails.
pub fn backtranslate(text: &str, config: &AugmentConfig, translator: &dyn TranslationBackend) -> Result<Backtranslation> {
    let mut out = Backtranslation::default();
    let normalized_source = text::normalize_whitespace(text);
    let mut failures = 0;
    for pivot in &config.pivots {
        let round_trip = translator
            .translate(text, "en", pivot)
            .and_then(|mid| translator.translate(&mid, pivot, "en"));
        let candidate = match round_trip {
            Ok(c) => c,
            Err(e) => {
                failures += 1;
                out.rejected.push(Rejection::new(RejectionReason::BackendFailure, format!("pivot {pivot}: {e}")));
                continue;
            }
        };
        let normalized = text::normalize_whitespace(&candidate);
        if normalized == normalized_source {
            out.rejected.push(Rejection::new(RejectionReason::DuplicateOfSource, format!("pivot {pivot}")));
        } else if out.paraphrases.iter().any(|p| text::normalize_whitespace(&p.text) == normalized) {
            out.rejected.push(Rejection::new(
                RejectionReason::DuplicateOfSource,
                format!("pivot {pivot} repeats an earlier paraphrase"),
            ));
        } else if text::word_count(&normalized) < config.min_words {
            out.rejected.push(Rejection::new(RejectionReason::TooShort, format!("pivot {pivot}")));
        } else {
            out.paraphrases.push(Paraphrase {
                pivot: pivot.clone(),
                text: candidate.trim().to_owned(),
            });
        }
    }
    if failures == config.pivots.len() {
        return Err(Error::backend(translator.name(), "every pivot language failed"));
    }
    Ok(out)
}

/// Text after the last `Toxic rewrite:` marker, trimmed.
pub fn strip_prompt_artifacts(raw: &str) -> String {
    match raw.rfind(TOXIC_REWRITE_MARKER) {
        Some(pos) => raw[pos + TOXIC_REWRITE_MARKER.len()..].trim().to_owned(),
        None => raw.trim().to_owned(),
    }
}

pub fn toxic_prompt(text: &str) -> String {
    TOXIC_PROMPT_TEMPLATE.replace("[Input text]", text.trim())
}

/// One sampled toxic rewrite, kept only if it is long enough and scores at
/// least `toxicity_threshold`.
pub fn generate_toxic(
    text: &str,
    config: &AugmentConfig,
    generator: &dyn GenerationBackend,
    toxicity: &dyn ToxicityScorer,
) -> std::result::Result<Negative, Rejection> {
    let params = GenParams {
        temperature: config.toxic_temperature,
        top_p: config.toxic_top_p,
        repetition_penalty: config.toxic_repetition_penalty,
        num_beams: 1,
        length_penalty: 0.0,
        max_new_tokens: config.toxic_max_new_tokens,
        max_input_length: config.lc_max_input,
        num_return_sequences: 1,
        seed: config.seed,
    };
    let failure = |e: Error| Rejection::new(RejectionReason::BackendFailure, e.to_string());
    let raw = generator
        .generate(&toxic_prompt(text), &params)
        .map_err(failure)?
        .into_iter()
        .next()
        .ok_or_else(|| Rejection::new(RejectionReason::BackendFailure, "generator returned nothing"))?;
    log::debug!("toxic raw generation: {:?}", raw.text);
    let output = strip_prompt_artifacts(&raw.text);
    if text::word_count(&output) < config.min_words {
        return Err(Rejection::new(RejectionReason::TooShort, output));
    }
    let score = toxicity.score(&output).map_err(failure)?;
    if score < config.toxicity_threshold {
        return Err(Rejection::new(
            RejectionReason::BelowToxicityThreshold,
            format!("score {score} < {}", config.toxicity_threshold),
        ));
    }
    Ok(Negative::new(output, NegativeStrategy::Toxic, true, score))
}

/// `log_prob + λ·length`.
pub fn beam_score(log_prob: f64, length: usize, lambda: f64) -> f64 {
    log_prob + lambda * length as f64
}

/// Inverse beam search: returns the candidate with the lowest beam score.
///
/// Candidates are visited in ascending score order (ties by input order);
/// the first one that has at least `min_words` words and, when the
/// confidence gate is on, a mean token probability at most
/// `lc_confidence_threshold` wins.
pub fn low_confidence_generate(
    prompt: &str,
    config: &AugmentConfig,
    generator: &dyn GenerationBackend,
) -> std::result::Result<String, Rejection> {
    let words: Vec<&str> = prompt.split_whitespace().collect();
    let prompt = if words.len() > config.lc_max_input {
        words[words.len() - config.lc_max_input..].join(" ")
    } else {
        prompt.to_owned()
    };
    let params = GenParams {
        temperature: 1.0,
        top_p: 1.0,
        repetition_penalty: 1.0,
        num_beams: config.lc_num_beams,
        length_penalty: config.lc_lambda,
        max_new_tokens: config.lc_max_output,
        max_input_length: config.lc_max_input,
        num_return_sequences: config.lc_return_sequences,
        seed: config.seed,
    };
    let candidates = generator
        .generate(&prompt, &params)
        .map_err(|e| Rejection::new(RejectionReason::BackendFailure, e.to_string()))?;
    if candidates.is_empty() {
        return Err(Rejection::new(RejectionReason::BackendFailure, "no beam candidates"));
    }
    let mut order: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (i, beam_score(c.log_prob, c.length, config.lc_lambda)))
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let mut short = 0;
    let mut confident = 0;
    for (i, _) in order {
        let c = &candidates[i];
        if text::word_count(&c.text) < config.min_words {
            short += 1;
            continue;
        }
        if config.lc_confidence_gate && c.mean_token_prob() > config.lc_confidence_threshold {
            confident += 1;
            continue;
        }
        return Ok(c.text.trim().to_owned());
    }
    if confident > 0 {
        Err(Rejection::new(
            RejectionReason::AboveConfidenceThreshold,
            format!("{confident} candidates above confidence threshold, {short} too short"),
        ))
    } else {
        Err(Rejection::new(RejectionReason::TooShort, format!("all {short} candidates too short")))
    }
}

/// Replaces `[start, end)` character ranges (sorted, disjoint) with new text.
fn splice(text: &str, edits: &[(usize, usize, &str)]) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for &(s, e, repl) in edits {
        out.extend(&chars[pos..s]);
        out.push_str(repl);
        pos = e;
    }
    out.extend(&chars[pos..]);
    out
}

/// Swaps up to `swap_max_per_sample` entity mentions for same-label
/// alternatives from `pool`, producing up to `swap_max_variations` distinct
/// variants. Text outside the chosen spans is left untouched.
pub fn entity_swap(
    text: &str,
    spans: &[EntitySpan],
    pool: &EntityPool,
    config: &AugmentConfig,
    seed: u64,
) -> std::result::Result<Vec<String>, Rejection> {
    let eligible: Vec<(&EntitySpan, Vec<&str>)> = spans
        .iter()
        .filter_map(|s| {
            let alts = pool.alternatives(&s.label, &s.text);
            (!alts.is_empty()).then_some((s, alts))
        })
        .collect();
    if eligible.is_empty() {
        return Err(Rejection::new(
            RejectionReason::NoEntities,
            if spans.is_empty() { "text has no entities" } else { "pool has no same-label alternatives" },
        ));
    }
    let mut draw = rng::seeded(seed);
    let per_sample = config.swap_max_per_sample.min(eligible.len());
    let mut variants: Vec<String> = Vec::new();
    let max_attempts = 4 * config.swap_max_variations.max(1);
    for _ in 0..max_attempts {
        if variants.len() >= config.swap_max_variations {
            break;
        }
        let mut picked: Vec<usize> = (0..eligible.len()).collect();
        picked.shuffle(&mut draw);
        picked.truncate(per_sample);
        picked.sort_unstable();
        let edits: Vec<(usize, usize, &str)> = picked
            .iter()
            .map(|&k| {
                let (span, alts) = &eligible[k];
                (span.start, span.end, alts[draw.gen_range(0..alts.len())])
            })
            .collect();
        let variant = splice(text, &edits);
        if !variants.contains(&variant) {
            variants.push(variant);
        }
    }
    Ok(variants)
}

/// Masks `⌈mask_ratio · n⌉` of the `n` whitespace tokens and asks the
/// filler to regenerate them.
///
/// Tokens are ranked by importance: entity tokens first, then longer
/// mentions, then mentions that are rarer in the corpus; non-entity tokens
/// follow in seeded random order.
pub fn mask_regenerate(
    text: &str,
    spans: &[EntitySpan],
    config: &AugmentConfig,
    filler: &dyn MaskFillBackend,
    seed: u64,
    frequencies: &EntityFrequencies,
) -> std::result::Result<String, Rejection> {
    let tokens = text::tokens_with_char_offsets(text);
    if tokens.is_empty() {
        return Err(Rejection::new(RejectionReason::TooShort, "no tokens to mask"));
    }
    let n_mask = masked_count(tokens.len(), config.mask_ratio);

    let mut draw = rng::seeded(seed);
    let mut ranked: Vec<(usize, (bool, usize, Reverse<u64>, u64))> = tokens
        .iter()
        .enumerate()
        .map(|(i, &(s, e, _))| {
            let span = spans.iter().find(|sp| sp.start < e && s < sp.end);
            let key = match span {
                Some(sp) => (true, sp.len(), Reverse(frequencies.count(&sp.text)), u64::MAX - i as u64),
                None => (false, 0, Reverse(0), draw.gen::<u64>()),
            };
            (i, key)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    let mut chosen: Vec<usize> = ranked.iter().take(n_mask).map(|&(i, _)| i).collect();
    chosen.sort_unstable();

    let edits: Vec<(usize, usize, &str)> = chosen
        .iter()
        .map(|&i| (tokens[i].0, tokens[i].1, config.mask_marker.as_str()))
        .collect();
    let masked = splice(text, &edits);
    let filled = filler
        .fill(&FillRequest {
            text: &masked,
            marker: &config.mask_marker,
            top_k: config.mask_top_k,
            temperature: config.mask_temperature,
            seed,
        })
        .map_err(|e| Rejection::new(RejectionReason::BackendFailure, e.to_string()))?;
    if text::normalize_whitespace(&filled) == text::normalize_whitespace(text) {
        return Err(Rejection::new(RejectionReason::DuplicateOfSource, "filler restored the original"));
    }
    Ok(filled.trim().to_owned())
}

/// `⌈ratio · n⌉`, guarded against products like `0.15 · 20 = 3.0000000000000004`.
pub(crate) fn masked_count(n: usize, ratio: f64) -> usize {
    let raw = ratio * n as f64;
    let rounded = raw.round();
    let k = if (raw - rounded).abs() < 1e-9 { rounded } else { raw.ceil() };
    (k as usize).clamp(1, n)
}
