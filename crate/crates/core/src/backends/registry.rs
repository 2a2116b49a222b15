use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::*;

/// Backend choice by name, as written in a run config. Builtins are named
/// directly; anything else is `external:<adapter-id>` and must have been
/// registered in a [`BackendRegistry`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSelection {
    pub generator: String,
    pub translator: String,
    pub ner: String,
    pub mask_filler: String,
    pub toxicity: String,
    pub faithfulness: String,
    /// Replaces the shipped severity lexicon when set.
    pub lexicon_path: Option<PathBuf>,
}

impl Default for BackendSelection {
    fn default() -> Self {
        Self {
            generator: "template".into(),
            translator: "pivot_paraphraser".into(),
            ner: "heuristic".into(),
            mask_filler: "lexical".into(),
            toxicity: "lexicon".into(),
            faithfulness: "entity_overlap".into(),
            lexicon_path: None,
        }
    }
}

/// Externally supplied adapters, keyed by adapter id.
#[derive(Default, Clone)]
pub struct BackendRegistry {
    generators: HashMap<String, Arc<dyn GenerationBackend>>,
    translators: HashMap<String, Arc<dyn TranslationBackend>>,
    ners: HashMap<String, Arc<dyn NerBackend>>,
    mask_fillers: HashMap<String, Arc<dyn MaskFillBackend>>,
    toxicity: HashMap<String, Arc<dyn ToxicityScorer>>,
    faithfulness: HashMap<String, Arc<dyn FaithfulnessScorer>>,
}

fn lookup<T: ?Sized>(
    kind: &str,
    name: &str,
    builtin: &[&str],
    make_builtin: impl FnOnce() -> Result<Arc<T>>,
    external: &HashMap<String, Arc<T>>,
) -> Result<Arc<T>> {
    if builtin.contains(&name) {
        return make_builtin();
    }
    if let Some(id) = name.strip_prefix("external:") {
        return external
            .get(id)
            .cloned()
            .ok_or_else(|| Error::Config(format!("{kind} adapter `{id}` is not registered")));
    }
    Err(Error::Config(format!(
        "unknown {kind} backend `{name}` (expected one of {builtin:?} or external:<id>)"
    )))
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_generator(&mut self, id: &str, b: Arc<dyn GenerationBackend>) {
        self.generators.insert(id.to_owned(), b);
    }

    pub fn register_translator(&mut self, id: &str, b: Arc<dyn TranslationBackend>) {
        self.translators.insert(id.to_owned(), b);
    }

    pub fn register_ner(&mut self, id: &str, b: Arc<dyn NerBackend>) {
        self.ners.insert(id.to_owned(), b);
    }

    pub fn register_mask_filler(&mut self, id: &str, b: Arc<dyn MaskFillBackend>) {
        self.mask_fillers.insert(id.to_owned(), b);
    }

    pub fn register_toxicity(&mut self, id: &str, b: Arc<dyn ToxicityScorer>) {
        self.toxicity.insert(id.to_owned(), b);
    }

    pub fn register_faithfulness(&mut self, id: &str, b: Arc<dyn FaithfulnessScorer>) {
        self.faithfulness.insert(id.to_owned(), b);
    }

    /// Resolves a selection into a suite.
    pub fn build(&self, sel: &BackendSelection) -> Result<BackendSuite> {
        let ner = lookup("ner", &sel.ner, &["heuristic"], || Ok(Arc::new(HeuristicNer::new()) as Arc<dyn NerBackend>), &self.ners)?;
        let generator = lookup(
            "generator",
            &sel.generator,
            &["template", "builtin"],
            || Ok(Arc::new(TemplateGenerator::new()) as Arc<dyn GenerationBackend>),
            &self.generators,
        )?;
        let translator = lookup(
            "translator",
            &sel.translator,
            &["pivot_paraphraser", "builtin"],
            || Ok(Arc::new(PivotParaphraser::new()) as Arc<dyn TranslationBackend>),
            &self.translators,
        )?;
        let mask_filler = lookup(
            "mask_filler",
            &sel.mask_filler,
            &["lexical", "builtin"],
            || Ok(Arc::new(LexicalMaskFiller::new()) as Arc<dyn MaskFillBackend>),
            &self.mask_fillers,
        )?;
        let toxicity = lookup(
            "toxicity",
            &sel.toxicity,
            &["lexicon"],
            || {
                let lex = match &sel.lexicon_path {
                    Some(p) => LexiconToxicity::from_path(p)?,
                    None => LexiconToxicity::builtin(),
                };
                Ok(Arc::new(lex) as Arc<dyn ToxicityScorer>)
            },
            &self.toxicity,
        )?;
        let ner_for_faith = ner.clone();
        let faithfulness = lookup(
            "faithfulness",
            &sel.faithfulness,
            &["entity_overlap"],
            || Ok(Arc::new(EntityOverlapFaithfulness::new(ner_for_faith)) as Arc<dyn FaithfulnessScorer>),
            &self.faithfulness,
        )?;
        Ok(BackendSuite {
            generator,
            translator,
            ner,
            mask_filler,
            toxicity,
            faithfulness,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ConstTox;
    impl ToxicityScorer for ConstTox {
        fn name(&self) -> &str {
            "const"
        }
        fn score(&self, _: &str) -> Result<f64> {
            Ok(0.5)
        }
    }

    #[test]
    fn default_selection_builds() {
        BackendRegistry::new().build(&BackendSelection::default()).unwrap().health_check().unwrap();
    }

    #[test]
    fn external_requires_registration() {
        let sel = BackendSelection { toxicity: "external:perspective".into(), ..Default::default() };
        assert!(BackendRegistry::new().build(&sel).is_err());
        let mut reg = BackendRegistry::new();
        reg.register_toxicity("perspective", Arc::new(ConstTox));
        let suite = reg.build(&sel).unwrap();
        assert_eq!(suite.toxicity.score("x").unwrap(), 0.5);
    }

    #[test]
    fn unknown_name_rejected() {
        let sel = BackendSelection { ner: "spacy".into(), ..Default::default() };
        let err = BackendRegistry::new().build(&sel).err().unwrap();
        assert!(err.to_string().contains("unknown ner backend"));
    }
}
