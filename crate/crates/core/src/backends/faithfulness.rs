use std::collections::BTreeSet;
use std::sync::Arc;

use super::{FaithfulnessScorer, NerBackend};
use crate::{text, Result};

/// Share of the summary's entity mentions that also occur in the source.
///
/// Entity texts are compared case-folded. A summary without entities falls
/// back to the content-word Jaccard overlap with the source.
#[derive(Clone)]
pub struct EntityOverlapFaithfulness {
    ner: Arc<dyn NerBackend>,
}

impl EntityOverlapFaithfulness {
    pub fn new(ner: Arc<dyn NerBackend>) -> Self {
        Self { ner }
    }

    fn entity_set(&self, text: &str) -> Result<BTreeSet<String>> {
        Ok(self
            .ner
            .tag(text)?
            .into_iter()
            .map(|s| s.text.to_lowercase())
            .collect())
    }
}

impl FaithfulnessScorer for EntityOverlapFaithfulness {
    fn name(&self) -> &str {
        "entity_overlap"
    }

    fn score(&self, source: &str, summary: &str) -> Result<f64> {
        let in_summary = self.entity_set(summary)?;
        if in_summary.is_empty() {
            return Ok(text::jaccard(&text::content_words(source), &text::content_words(summary)));
        }
        let in_source = self.entity_set(source)?;
        let shared = in_summary.intersection(&in_source).count();
        Ok(shared as f64 / in_summary.len() as f64)
    }
}
