use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::ToxicityScorer;
use crate::{Error, Result};

/// The shipped severity lexicon.
pub const BUILTIN_LEXICON: &str = include_str!("../../data/toxicity_lexicon.tsv");

/// Product-rule lexicon scorer: `1 - Π (1 - severity)` over the distinct
/// lexicon words present (case-insensitive, whole words).
#[derive(Debug, Clone)]
pub struct LexiconToxicity {
    severities: HashMap<String, f64>,
}

impl LexiconToxicity {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_LEXICON).expect("shipped lexicon is well-formed")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw)
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        let mut severities = HashMap::new();
        for (word, sev) in entries {
            if !(sev > 0.0 && sev <= 1.0) {
                return Err(Error::Config(format!("severity for {word:?} must be in (0, 1], got {sev}")));
            }
            severities.insert(word.to_lowercase(), sev);
        }
        Ok(Self { severities })
    }

    /// Parses `word<TAB>severity` lines; `#` starts a comment line.
    pub fn parse(raw: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, sev) = line
                .split_once('\t')
                .ok_or_else(|| Error::Config(format!("lexicon line {}: expected word<TAB>severity", i + 1)))?;
            let sev: f64 = sev
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("lexicon line {}: bad severity {sev:?}", i + 1)))?;
            entries.push((word.trim(), sev));
        }
        Self::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.severities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.severities.is_empty()
    }

    /// Distinct lexicon words found in `text`.
    pub fn matches(&self, text: &str) -> BTreeSet<String> {
        crate::text::normalized_words(text)
            .into_iter()
            .filter(|w| self.severities.contains_key(w))
            .collect()
    }

    pub fn score_text(&self, text: &str) -> f64 {
        let keep: f64 = self
            .matches(text)
            .iter()
            .map(|w| 1.0 - self.severities[w])
            .product();
        (1.0 - keep).clamp(0.0, 1.0)
    }
}

impl ToxicityScorer for LexiconToxicity {
    fn name(&self) -> &str {
        "lexicon"
    }

    fn score(&self, text: &str) -> Result<f64> {
        Ok(self.score_text(text))
    }
}
