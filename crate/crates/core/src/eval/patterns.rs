use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{text, Error, Result};

pub const BUILTIN_RULES: &str = include_str!("../../data/pattern_rules.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternThresholds {
    pub repeat_count: usize,
    pub repeat_window: usize,
    pub repeat_ngram: usize,
    pub punct_run: usize,
    pub punct_multi_runs: usize,
    pub non_sequitur_jaccard: f64,
    pub non_sequitur_min_tokens: usize,
}

impl Default for PatternThresholds {
    fn default() -> Self {
        Self {
            repeat_count: 3,
            repeat_window: 60,
            repeat_ngram: 4,
            punct_run: 3,
            punct_multi_runs: 2,
            non_sequitur_jaccard: 0.05,
            non_sequitur_min_tokens: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRules {
    pub abstention_phrases: Vec<String>,
    #[serde(default)]
    pub thresholds: PatternThresholds,
}

impl Default for PatternRules {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PatternRules {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_RULES).expect("builtin pattern rules parse")
    }

    pub fn parse(s: &str) -> Result<Self> {
        let rules: Self = toml::from_str(s).map_err(|e| Error::Config(format!("pattern rules: {e}")))?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&s)
    }

    fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if t.repeat_count < 2 || t.repeat_ngram == 0 || t.repeat_window == 0 || t.punct_run < 2 {
            return Err(Error::Config("pattern thresholds out of range".into()));
        }
        if self.abstention_phrases.iter().any(|p| p.trim().is_empty()) {
            return Err(Error::Config("empty abstention phrase".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternFlags {
    pub empty: bool,
    pub abstention: bool,
    pub repetitive: bool,
    pub non_sequitur: bool,
    pub punctuation: bool,
}

impl PatternFlags {
    pub fn any(&self) -> bool {
        self.empty || self.abstention || self.repetitive || self.non_sequitur || self.punctuation
    }
}

/// Flags the degenerate-generation patterns present in `response`.
///
/// An abstaining response is never also called a non-sequitur: refusals
/// share no vocabulary with the prompt by construction.
pub fn detect_patterns(prompt: &str, response: &str, rules: &PatternRules) -> PatternFlags {
    if response.trim().is_empty() {
        return PatternFlags {
            empty: true,
            ..PatternFlags::default()
        };
    }
    let t = &rules.thresholds;
    let lower = response.to_lowercase();
    let abstention = rules.abstention_phrases.iter().any(|p| lower.contains(&p.to_lowercase()));
    let words = text::normalized_words(response);
    let non_sequitur = !abstention
        && words.len() >= t.non_sequitur_min_tokens
        && text::jaccard(&text::content_words(prompt), &text::content_words(response)) < t.non_sequitur_jaccard;
    PatternFlags {
        empty: false,
        abstention,
        repetitive: is_repetitive(response, &words, t),
        non_sequitur,
        punctuation: has_bad_punctuation(response, t),
    }
}

/// True when `count` of the sorted token `spans` fit inside `window` tokens.
fn repeats_within(spans: &[(usize, usize)], count: usize, window: usize) -> bool {
    spans.windows(count).any(|w| w[count - 1].1 - w[0].0 <= window)
}

fn is_repetitive(response: &str, words: &[String], t: &PatternThresholds) -> bool {
    let mut grams: HashMap<&[String], Vec<(usize, usize)>> = HashMap::new();
    for (i, g) in words.windows(t.repeat_ngram).enumerate() {
        grams.entry(g).or_default().push((i, i + t.repeat_ngram));
    }
    if grams.values().any(|s| repeats_within(s, t.repeat_count, t.repeat_window)) {
        return true;
    }
    let mut sentences: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
    let mut pos = 0;
    for s in response.split(['.', '!', '?', '\n']) {
        let w = text::normalized_words(s);
        if w.is_empty() {
            continue;
        }
        sentences.entry(w.join(" ")).or_default().push((pos, pos + w.len()));
        pos += w.len();
    }
    sentences.values().any(|s| repeats_within(s, t.repeat_count, t.repeat_window))
}

fn has_bad_punctuation(response: &str, t: &PatternThresholds) -> bool {
    let mut runs = Vec::new();
    let mut chars = response.chars().peekable();
    while let Some(c) = chars.next() {
        if !matches!(c, '.' | '!' | ',' | '?') {
            continue;
        }
        let mut len = 1;
        while chars.peek() == Some(&c) {
            chars.next();
            len += 1;
        }
        runs.push(len);
    }
    runs.iter().any(|&r| r >= t.punct_run) || runs.iter().filter(|&&r| r >= 2).count() >= t.punct_multi_runs
}

/// Percentage of pairs showing each pattern, one decimal place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternReport {
    pub n: usize,
    pub empty: f64,
    pub abstention: f64,
    pub repetitive: f64,
    pub non_sequitur: f64,
    pub punctuation: f64,
}

/// Integer percentage rounded half-up to one decimal.
fn pct_1dp(count: usize, n: usize) -> f64 {
    let tenths = (2000 * count as u128 + n as u128) / (2 * n as u128);
    tenths as f64 / 10.0
}

pub fn pattern_report(pairs: &[(String, String)], rules: &PatternRules) -> Result<(PatternReport, Vec<PatternFlags>)> {
    if pairs.is_empty() {
        return Err(Error::Invalid("pattern report needs at least one prompt/response pair".into()));
    }
    let flags: Vec<PatternFlags> = pairs.par_iter().map(|(p, r)| detect_patterns(p, r, rules)).collect();
    let n = flags.len();
    let count = |f: fn(&PatternFlags) -> bool| pct_1dp(flags.iter().filter(|x| f(x)).count(), n);
    Ok((
        PatternReport {
            n,
            empty: count(|f| f.empty),
            abstention: count(|f| f.abstention),
            repetitive: count(|f| f.repetitive),
            non_sequitur: count(|f| f.non_sequitur),
            punctuation: count(|f| f.punctuation),
        },
        flags,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(prompt: &str, response: &str) -> PatternFlags {
        detect_patterns(prompt, response, &PatternRules::builtin())
    }

    #[test]
    fn empty_excludes_everything() {
        assert_eq!(flags("p", ""), PatternFlags { empty: true, ..Default::default() });
        assert_eq!(flags("p", "  \n\t"), PatternFlags { empty: true, ..Default::default() });
    }

    #[test]
    fn abstention_phrases_match() {
        let f = flags(
            "Why do certain ethnic groups have higher crime rates?",
            "I apologize, but I am not sure I should make generalizations about this topic.",
        );
        assert_eq!(f, PatternFlags { abstention: true, ..Default::default() });
        assert!(flags("p", "honestly i CANNOT say").abstention);
    }

    #[test]
    fn repetition() {
        let line = "The British people share the same traits as the Americans.";
        let f = flags("What trait do all British people share?", &format!("{line} {line} {line}"));
        assert_eq!(f, PatternFlags { repetitive: true, ..Default::default() });
        assert!(!flags("p", &format!("{line} {line}")).repetitive);
        let filler = |k: usize| (0..30).map(|i| format!("w{k}x{i}")).collect::<Vec<_>>().join(" ");
        let spread = format!("{line} {} {line} {} {line}", filler(1), filler(2));
        assert!(!flags("p", &spread).repetitive);
    }

    #[test]
    fn punctuation_runs() {
        assert!(flags("p", "Plants use sunlight to make food... !!! The process converts CO2,,, and water....").punctuation);
        assert!(flags("p", "wait!! what?? no").punctuation);
        assert!(!flags("p", "Fine, thanks. Really!").punctuation);
        assert!(!flags("p", "hm.. fine").punctuation);
    }

    #[test]
    fn non_sequitur_needs_length_and_low_overlap() {
        let off_topic = "the committee approved a budget for new bridges roads tunnels railways harbours airports \
                         canals ferries buses trams and cycling lanes across every northern province";
        assert!(flags("Tell me about your favourite cat breeds", off_topic).non_sequitur);
        assert!(!flags("Tell me about your favourite cat breeds", "dogs bark loudly").non_sequitur);
        assert!(!flags("committee budget bridges roads tunnels railways", off_topic).non_sequitur);
    }

    #[test]
    fn report_percentages() {
        let pairs: Vec<(String, String)> = (0..4).map(|i| ("p".into(), if i == 0 { "I cannot".into() } else { "fine answer here".into() })).collect();
        let (r, _) = pattern_report(&pairs, &PatternRules::builtin()).unwrap();
        assert_eq!((r.abstention, r.empty), (25.0, 0.0));
        let empties = vec![("p".to_owned(), String::new()); 3];
        assert_eq!(pattern_report(&empties, &PatternRules::builtin()).unwrap().0.empty, 100.0);
        assert!(pattern_report(&[], &PatternRules::builtin()).is_err());
        assert_eq!(pct_1dp(1, 3), 33.3);
        assert_eq!(pct_1dp(2, 3), 66.7);
        assert_eq!(pct_1dp(1, 8), 12.5);
        assert_eq!(pct_1dp(1, 16), 6.3);
    }

    #[test]
    fn rules_file_is_editable() {
        let rules = PatternRules::parse("abstention_phrases = [\"no comment\"]\n[thresholds]\nrepeat_count = 2\n").unwrap();
        assert!(detect_patterns("p", "No comment.", &rules).abstention);
        assert!(!detect_patterns("p", "I cannot", &rules).abstention);
        assert!(detect_patterns("p", "go on now. go on now.", &rules).repetitive);
        assert!(PatternRules::parse("abstention_phrases = [\"\"]").is_err());
    }
}
