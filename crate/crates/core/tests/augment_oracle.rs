//! Augmentation over scripted backends, checked against an outcome table
//! derived by hand from the scripts.

use std::collections::BTreeMap;
use std::sync::Arc;

use debias_contrast::augment::{augment_dataset, AugmentStrategy, TOXIC_REWRITE_MARKER};
use debias_contrast::backends::{
    FillRequest, GenerationBackend, MaskFillBackend, NerBackend, ToxicityScorer, TranslationBackend,
};
use debias_contrast::{
    AugmentConfig, AugmentedSample, BackendSuite, EntitySpan, GenParams, NegativeStrategy, PositiveStrategy,
    RejectionReason, Result, ScoredSequence,
};

const NAMES: [&str; 2] = ["Ann Lee", "Bob Stone"];

/// German swaps "paid" for "spent", French is the identity, Spanish
/// collapses everything to two words.
struct ScriptedTranslator;

impl TranslationBackend for ScriptedTranslator {
    fn name(&self) -> &str {
        "scripted-translator"
    }
    fn translate(&self, text: &str, src: &str, tgt: &str) -> Result<String> {
        Ok(match (src, tgt) {
            ("de", "en") => text.replace("paid", "spent"),
            ("es", "en") => "Too short.".to_owned(),
            _ => text.to_owned(),
        })
    }
}

/// Toxic prompts get `<first word> is an idiot`, echoed after the prompt.
/// Beam requests get fixed candidates; only prompts mentioning "paid" get
/// one that survives the length and confidence checks.
struct ScriptedGenerator;

impl GenerationBackend for ScriptedGenerator {
    fn name(&self) -> &str {
        "scripted-generator"
    }
    fn generate(&self, prompt: &str, params: &GenParams) -> Result<Vec<ScoredSequence>> {
        if let Some(pos) = prompt.rfind("Original text:") {
            assert_eq!(params.num_beams, 1);
            let input = &prompt[pos + "Original text:".len()..];
            let first = input.split_whitespace().next().unwrap();
            return Ok(vec![ScoredSequence::new(format!("{prompt} {first} is an idiot"), -3.0, 4)]);
        }
        if !prompt.ends_with("TL;DR:") {
            return Ok(vec![ScoredSequence::new("probe reply", -1.0, 2)]);
        }
        assert_eq!((params.num_beams, params.length_penalty, params.num_return_sequences), (8, 2.0, 3));
        // Beam scores with λ = 2: confident 11, plausible 0, short −4.
        let confident = ScoredSequence::new("a plain faithful restatement of events", -1.0, 6);
        let plausible = ScoredSequence::new("the market closed early that day", -12.0, 6);
        let short = ScoredSequence::new("nobody knows", -8.0, 2);
        Ok(if prompt.contains("paid") {
            vec![confident, plausible, short]
        } else {
            vec![confident, short]
        })
    }
}

/// Tags every occurrence of the two known names as PERSON.
struct ScriptedNer;

impl NerBackend for ScriptedNer {
    fn name(&self) -> &str {
        "scripted-ner"
    }
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>> {
        let mut spans = Vec::new();
        for name in NAMES {
            for (pos, _) in text.match_indices(name) {
                spans.push(EntitySpan::new(pos, pos + name.len(), "PERSON", name));
            }
        }
        Ok(spans)
    }
}

struct ZzzFiller;

impl MaskFillBackend for ZzzFiller {
    fn name(&self) -> &str {
        "zzz"
    }
    fn fill(&self, request: &FillRequest<'_>) -> Result<String> {
        Ok(request.text.replace(request.marker, "zzz"))
    }
}

/// Insults score by subject (Ann sits exactly on the threshold, Bob just
/// under it); filled masks score 0.5; everything else 0.1.
struct ScriptedToxicity;

impl ToxicityScorer for ScriptedToxicity {
    fn name(&self) -> &str {
        "scripted-toxicity"
    }
    fn score(&self, text: &str) -> Result<f64> {
        Ok(if text.contains("idiot") {
            match text.split_whitespace().next() {
                Some("Ann") => 0.4,
                Some("Bob") => 0.39,
                _ => 0.9,
            }
        } else if text.contains("zzz") {
            0.5
        } else {
            0.1
        })
    }
}

fn suite() -> BackendSuite {
    let mut suite = BackendSuite::builtin();
    suite.translator = Arc::new(ScriptedTranslator);
    suite.generator = Arc::new(ScriptedGenerator);
    suite.ner = Arc::new(ScriptedNer);
    suite.mask_filler = Arc::new(ZzzFiller);
    suite.toxicity = Arc::new(ScriptedToxicity);
    suite
}

fn corpus() -> Vec<AugmentedSample> {
    (0..50)
        .map(|i| {
            let summary = if i % 10 == 9 {
                "too short".to_owned()
            } else {
                let subject = [Some(NAMES[0]), Some(NAMES[1]), None][i % 3].unwrap_or("Someone");
                let verb = ["paid", "sold"][i % 2];
                format!("{subject} {verb} {} apples today", i + 2)
            };
            AugmentedSample::new(format!("s{i:02}"), format!("Long market story, where {summary}."), summary)
        })
        .collect()
}

#[derive(Debug, Default, PartialEq)]
struct Expected {
    positives: Vec<String>,
    negatives: Vec<(NegativeStrategy, String, bool, f64)>,
    rejections: Vec<(AugmentStrategy, RejectionReason)>,
}

fn expected(i: usize, summary: &str) -> Option<Expected> {
    use AugmentStrategy as S;
    use RejectionReason as R;
    if i % 10 == 9 {
        return None;
    }
    let mut e = Expected::default();
    let name = [Some(NAMES[0]), Some(NAMES[1]), None][i % 3];
    let paid = i % 2 == 0;

    e.positives.push(summary.to_owned());
    if paid {
        e.positives.push(summary.replace("paid", "spent"));
    } else {
        e.rejections.push((S::Backtranslation, R::DuplicateOfSource));
    }
    e.rejections.push((S::Backtranslation, R::DuplicateOfSource));
    e.rejections.push((S::Backtranslation, R::TooShort));

    match name {
        Some("Bob Stone") => e.rejections.push((S::Toxic, R::BelowToxicityThreshold)),
        Some(_) => e.negatives.push((NegativeStrategy::Toxic, "Ann is an idiot".into(), true, 0.4)),
        None => e.negatives.push((NegativeStrategy::Toxic, "Someone is an idiot".into(), true, 0.9)),
    }

    if paid {
        e.negatives
            .push((NegativeStrategy::LowConfidence, "the market closed early that day".into(), false, 0.1));
    } else {
        e.rejections.push((S::LowConfidence, R::AboveConfidenceThreshold));
    }

    match name {
        Some(n) => {
            let other = NAMES.iter().find(|&&o| o != n).unwrap();
            e.negatives
                .push((NegativeStrategy::EntitySwap, summary.replace(n, other), false, 0.1));
            // Six words mask one token; the first entity token outranks the rest.
            let first = n.split(' ').next().unwrap();
            e.negatives
                .push((NegativeStrategy::MaskEntity, summary.replacen(first, "zzz", 1), true, 0.5));
        }
        None => {
            e.rejections.push((S::EntitySwap, R::NoEntities));
            // The masked position is a seeded draw; checked separately.
        }
    }
    Some(e)
}

#[test]
fn outcomes_match_the_scripts() {
    let samples = corpus();
    let config = AugmentConfig { seed: 17, ..AugmentConfig::default() };
    let (out, records) = augment_dataset(&samples, &config, &suite()).unwrap();
    let by_id: BTreeMap<&str, &AugmentedSample> = out.iter().map(|s| (s.id.as_str(), s)).collect();

    let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let recs: Vec<(AugmentStrategy, RejectionReason)> = records
            .iter()
            .filter(|r| r.sample_id == s.id)
            .map(|r| (r.strategy, r.reason))
            .collect();
        let Some(mut want) = expected(i, &s.summary) else {
            assert!(!by_id.contains_key(s.id.as_str()));
            assert_eq!(recs, [(AugmentStrategy::Original, RejectionReason::TooShort)]);
            *tally.entry("dropped").or_default() += 1;
            continue;
        };
        let got = by_id[s.id.as_str()];
        assert_eq!(got.positives.iter().map(|p| p.text.clone()).collect::<Vec<_>>(), want.positives, "{}", s.id);
        assert_eq!(got.positives[0].strategy, PositiveStrategy::Original);
        assert!(got.positives[1..].iter().all(|p| p.strategy == PositiveStrategy::Backtranslation
            && p.meta.get("pivot").and_then(|v| v.as_str()) == Some("de")));

        let mut negs: Vec<(NegativeStrategy, String, bool, f64)> = got
            .negatives
            .iter()
            .map(|n| (n.strategy, n.text.clone(), n.toxic, n.toxicity_score))
            .collect();
        if got.entities.is_empty() {
            let masked = negs.pop().expect("mask negative");
            assert_eq!((masked.0, masked.2, masked.3), (NegativeStrategy::MaskEntity, true, 0.5));
            let before: Vec<&str> = s.summary.split(' ').collect();
            let after: Vec<&str> = masked.1.split(' ').collect();
            assert_eq!(before.len(), after.len());
            let diffs: Vec<usize> = (0..before.len()).filter(|&k| before[k] != after[k]).collect();
            assert_eq!(diffs.len(), 1, "{}", masked.1);
            assert_eq!(after[diffs[0]], "zzz");
        } else {
            let name = NAMES.iter().find(|n| s.summary.contains(**n)).unwrap();
            assert_eq!(got.entities, [EntitySpan::new(0, name.len(), "PERSON", *name)]);
        }
        assert_eq!(negs, want.negatives, "{}", s.id);
        want.rejections.sort_by_key(|r| format!("{r:?}"));
        let mut recs = recs;
        recs.sort_by_key(|r| format!("{r:?}"));
        assert_eq!(recs, want.rejections, "{}", s.id);

        for n in &got.negatives {
            *tally.entry(n.strategy.as_str()).or_default() += 1;
        }
    }
    // 50 samples: 5 dropped, 45 kept; 15 of each name, 15 anonymous.
    let want: BTreeMap<&str, usize> = [
        ("dropped", 5),
        ("toxic", 30),
        ("low_confidence", 25),
        ("entity_swap", 30),
        ("mask_entity", 45),
    ]
    .into_iter()
    .collect();
    assert_eq!(tally, want);
}

#[test]
fn filters_hold_and_runs_repeat() {
    let samples = corpus();
    let config = AugmentConfig { seed: 3, ..AugmentConfig::default() };
    let (one, r1) = augment_dataset(&samples, &config, &suite()).unwrap();
    let (two, r2) = augment_dataset(&samples, &config, &suite()).unwrap();
    assert_eq!(one, two);
    assert_eq!(r1, r2);
    let ids: Vec<&str> = one.iter().map(|s| s.id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);

    for s in &one {
        for n in &s.negatives {
            assert!(n.text.split_whitespace().count() >= config.min_words);
            assert_ne!(n.text, s.summary);
            assert_eq!(n.toxic, n.toxicity_score >= config.toxicity_threshold);
            assert!(!n.text.contains(TOXIC_REWRITE_MARKER));
        }
        // A swap only touches the entity mention.
        for n in s.negatives.iter().filter(|n| n.strategy == NegativeStrategy::EntitySwap) {
            let ent = &s.entities[0];
            let rest = &s.summary[ent.end..];
            let head = n.text.strip_suffix(rest).expect("suffix kept");
            assert!(NAMES.contains(&head) && head != ent.text, "{}", n.text);
        }
    }
}
