//! Seeded synthetic corpora for tests, benchmarks and smoke runs.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::augment::{augment_dataset, AugmentConfig};
use crate::backends::BackendSuite;
use crate::corpus::AugmentedSample;
use crate::{rng, Result};

const FIRST: &[&str] = &["Maria", "Omar", "Grace", "Tomas", "Aisha", "Lena", "Victor", "Priya", "Hugo", "Nadia"];
const LAST: &[&str] = &["Lopez", "Haddad", "Chen", "Novak", "Bello", "Park", "Stone", "Rao", "Weber", "Silva"];
const PLACES: &[&str] = &["Denver", "Lyon", "Osaka", "Lagos", "Quito", "Perth", "Oslo", "Tunis"];
const DAYS: &[&str] = &["Monday", "Friday", "Sunday", "Tuesday"];
const REASONS: &[&str] = &["a long wait", "a short call", "the meeting", "a late train", "the storm"];

/// `(verb, object)`; every verb has a paraphrase in the builtin pivot tables.
const EVENTS: &[(&str, &str)] = &[
    ("paid", "for the tickets"),
    ("bought", "a used bike"),
    ("lost", "the house keys"),
    ("won", "the chess match"),
    ("gave", "a short speech"),
    ("visited", "the old market"),
    ("met", "the new coach"),
    ("told", "the whole story"),
];

/// `n` source/summary pairs with no variants.
///
/// Roughly a third of the summaries name a person and an amount; the rest
/// are entity-free.
pub fn synthetic_pairs(n: usize, seed: u64) -> Vec<AugmentedSample> {
    let mut draw = rng::seeded(rng::mix(seed, 0xf1c7));
    (0..n)
        .map(|i| {
            let name = format!("{} {}", FIRST.choose(&mut draw).unwrap(), LAST.choose(&mut draw).unwrap());
            let (verb, object) = *EVENTS.choose(&mut draw).unwrap();
            let place = PLACES.choose(&mut draw).unwrap();
            let day = DAYS.choose(&mut draw).unwrap();
            let reason = REASONS.choose(&mut draw).unwrap();
            let amount = draw.gen_range(2..90);
            let source = format!("On {day} in {place}, {name} {verb} {object} with ${amount} after {reason}.");
            let summary = if draw.gen_bool(0.33) {
                format!("Then {name} {verb} {object} with ${amount}.")
            } else {
                format!("someone {verb} {object} after {reason}.")
            };
            AugmentedSample::new(format!("syn-{i:05}"), source, summary)
        })
        .collect()
}

/// [`synthetic_pairs`] run through the builtin augmentation pipeline.
pub fn augmented_corpus(n: usize, seed: u64) -> Result<Vec<AugmentedSample>> {
    let config = AugmentConfig {
        seed,
        ..AugmentConfig::default()
    };
    augment_dataset(&synthetic_pairs(n, seed), &config, &BackendSuite::builtin()).map(|(samples, _)| samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{NegativeStrategy, PositiveStrategy};

    #[test]
    fn pairs_are_seeded() {
        assert_eq!(synthetic_pairs(20, 3), synthetic_pairs(20, 3));
        assert_ne!(synthetic_pairs(20, 3), synthetic_pairs(20, 4));
        assert_eq!(synthetic_pairs(0, 3).len(), 0);
    }

    #[test]
    fn augmented_corpus_has_every_variant_kind() {
        let corpus = augmented_corpus(30, 1).unwrap();
        assert_eq!(corpus.len(), 30);
        assert!(corpus.iter().all(|s| s.positives.iter().any(|p| p.strategy == PositiveStrategy::Backtranslation)));
        for strategy in NegativeStrategy::ALL {
            assert!(
                corpus.iter().any(|s| s.negatives.iter().any(|n| n.strategy == strategy)),
                "{strategy}"
            );
        }
        assert!(corpus.iter().any(|s| s.entities.is_empty()));
        assert!(corpus.iter().any(|s| !s.entities.is_empty()));
    }
}
