//! Deterministic stand-ins for the translation, generation and mask-filling
//! models. They produce plausible variants for desk-scale runs and tests.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;

use super::{FillRequest, GenParams, GenerationBackend, MaskFillBackend, NerBackend, ScoredSequence, TranslationBackend};
use crate::backends::HeuristicNer;
use crate::{rng, Error, Result};

/// Round-trip "translation" that rewrites verbs and a few common words with
/// a pivot-specific synonym table on the way back to English.
#[derive(Debug, Clone, Default)]
pub struct PivotParaphraser;

impl PivotParaphraser {
    pub fn new() -> Self {
        Self
    }

    fn table(lang: &str) -> &'static [(&'static str, &'static str)] {
        match lang {
            "de" => &[
                ("paid", "spent"),
                ("stole", "took"),
                ("met", "saw"),
                ("went", "traveled"),
                ("bought", "purchased"),
                ("said", "stated"),
                ("gave", "handed"),
                ("told", "informed"),
                ("lost", "misplaced"),
                ("won", "earned"),
                ("visited", "saw"),
                ("old", "aged"),
            ],
            "fr" => &[
                ("paid", "gave"),
                ("stole", "snatched"),
                ("met", "encountered"),
                ("went", "headed"),
                ("bought", "acquired"),
                ("said", "declared"),
                ("gave", "offered"),
                ("told", "warned"),
                ("lost", "dropped"),
                ("won", "secured"),
                ("visited", "toured"),
                ("today", "this day"),
            ],
            "es" => &[
                ("paid", "spent"),
                ("stole", "robbed"),
                ("met", "visited"),
                ("went", "walked"),
                ("bought", "got"),
                ("said", "mentioned"),
                ("gave", "passed"),
                ("told", "reminded"),
                ("lost", "forgot"),
                ("won", "gained"),
                ("visited", "called on"),
                ("year", "years"),
            ],
            _ => &[],
        }
    }

    fn rewrite(text: &str, lang: &str) -> String {
        let table = Self::table(lang);
        text.split(' ')
            .map(|tok| {
                let lead = tok.len() - tok.trim_start_matches(|c: char| !c.is_alphanumeric()).len();
                let trail = tok.len() - tok.trim_end_matches(|c: char| !c.is_alphanumeric()).len();
                if lead + trail >= tok.len() {
                    return tok.to_owned();
                }
                let core = &tok[lead..tok.len() - trail];
                let lower = core.to_lowercase();
                match table.iter().find(|(from, _)| *from == lower) {
                    Some((_, to)) => {
                        let mut replaced = (*to).to_owned();
                        if core.chars().next().is_some_and(char::is_uppercase) {
                            let mut chars = replaced.chars();
                            let first = chars.next().map(|c| c.to_uppercase().collect::<String>()).unwrap_or_default();
                            replaced = first + chars.as_str();
                        }
                        format!("{}{}{}", &tok[..lead], replaced, &tok[tok.len() - trail..])
                    }
                    None => tok.to_owned(),
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl TranslationBackend for PivotParaphraser {
    fn name(&self) -> &str {
        "pivot_paraphraser"
    }

    fn translate(&self, text: &str, src_lang: &str, tgt_lang: &str) -> Result<String> {
        if src_lang == tgt_lang {
            return Ok(text.to_owned());
        }
        if src_lang == "en" {
            return Ok(format!("[{tgt_lang}] {text}"));
        }
        if tgt_lang != "en" {
            return Err(Error::backend(self.name(), format!("unsupported direction {src_lang}->{tgt_lang}")));
        }
        let prefix = format!("[{src_lang}] ");
        let body = text.strip_prefix(&prefix).unwrap_or(text);
        Ok(Self::rewrite(body, src_lang))
    }
}

/// Template-driven generator.
///
/// Prompts ending in the toxic-rewrite few-shot format get a seeded insult
/// aimed at the input's first named subject, returned after the echoed
/// prompt the way a causal LM would. Any other prompt is treated as a
/// beam-search request and yields low-confidence continuations with
/// synthetic log-probabilities.
#[derive(Debug, Clone, Default)]
pub struct TemplateGenerator;

const TOXIC_TEMPLATES: &[&str] = &[
    "{S} is a useless idiot who ruins everything.",
    "Typical pathetic behavior from {S}, a worthless loser.",
    "{S} is so stupid and incompetent it is unbelievable.",
    "Nobody cares about {S}, what a disgusting moron.",
];

const HALLUCINATIONS: &[&str] = &[
    "{S} is a great guy. He's a good guy.",
    "{S} went to the store and never came back home.",
    "{LEAD} and then nothing else happened at all.",
    "{S} said the whole thing was a misunderstanding.",
];

impl TemplateGenerator {
    pub fn new() -> Self {
        Self
    }

    fn subject(text: &str) -> String {
        HeuristicNer
            .tag(text)
            .ok()
            .and_then(|spans| spans.into_iter().find(|s| s.label == "PERSON"))
            .map(|s| s.text)
            .unwrap_or_else(|| "This person".to_owned())
    }

    fn toxic_input(prompt: &str) -> Option<&str> {
        let marker = "Toxic rewrite:";
        let body = prompt.trim_end().strip_suffix(marker)?;
        let start = body.rfind("Original text:")? + "Original text:".len();
        Some(body[start..].trim())
    }
}

impl GenerationBackend for TemplateGenerator {
    fn name(&self) -> &str {
        "template"
    }

    fn generate(&self, prompt: &str, params: &GenParams) -> Result<Vec<ScoredSequence>> {
        params.validate()?;
        let n = params.num_return_sequences.max(1);
        if let Some(input) = Self::toxic_input(prompt) {
            let subject = Self::subject(input);
            let mut draw = rng::seeded(rng::derive(params.seed, input, "toxic"));
            return Ok((0..n)
                .map(|_| {
                    let t = TOXIC_TEMPLATES[draw.gen_range(0..TOXIC_TEMPLATES.len())];
                    let rewrite = t.replace("{S}", &subject);
                    let len = rewrite.split_whitespace().count();
                    ScoredSequence::new(format!("{prompt}\n{rewrite}"), -1.2 * len as f64, len)
                })
                .collect());
        }

        let body = prompt.trim_end().trim_end_matches("TL;DR:").trim();
        let subject = Self::subject(body);
        let lead = body.split_whitespace().take(6).collect::<Vec<_>>().join(" ");
        let n = n.min(HALLUCINATIONS.len()).min(params.num_beams.max(1));
        Ok(HALLUCINATIONS
            .iter()
            .take(n)
            .enumerate()
            .map(|(k, t)| {
                let text = t.replace("{S}", &subject).replace("{LEAD}", &lead);
                let len = text.split_whitespace().count().max(1);
                let jitter = (rng::derive(0, body, &k.to_string()) % 1000) as f64 / 10_000.0;
                let nll = 0.9 + 0.55 * k as f64 + jitter;
                ScoredSequence::new(text, -nll * len as f64, len)
            })
            .collect())
    }
}

/// Fills each mask marker with a seeded draw from a fixed vocabulary,
/// restricted to the top-k entries of a seeded ranking and weighted by
/// `exp(-rank / temperature)`.
#[derive(Debug, Clone, Default)]
pub struct LexicalMaskFiller;

const FILLS: &[&str] = &[
    "$100", "13", "someone", "London", "Bob", "yesterday", "nothing", "42", "Paris", "twice", "Carol Diaz", "$5",
];

impl LexicalMaskFiller {
    pub fn new() -> Self {
        Self
    }
}

impl MaskFillBackend for LexicalMaskFiller {
    fn name(&self) -> &str {
        "lexical"
    }

    fn fill(&self, req: &FillRequest<'_>) -> Result<String> {
        if req.marker.is_empty() {
            return Err(Error::backend(self.name(), "empty mask marker"));
        }
        if !(req.temperature > 0.0) {
            return Err(Error::backend(self.name(), "temperature must be positive"));
        }
        let k = req.top_k.clamp(1, FILLS.len());
        let weights: Vec<f64> = (0..k).map(|r| (-(r as f64) / req.temperature).exp()).collect();
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::backend(self.name(), e.to_string()))?;
        let mut draw = rng::seeded(rng::mix(req.seed, 0xf111));
        let offset = draw.gen_range(0..FILLS.len());
        let mut out = String::with_capacity(req.text.len());
        let mut rest = req.text;
        while let Some(pos) = rest.find(req.marker) {
            out.push_str(&rest[..pos]);
            let rank = dist.sample(&mut draw);
            out.push_str(FILLS[(offset + rank) % FILLS.len()]);
            rest = &rest[pos + req.marker.len()..];
        }
        out.push_str(rest);
        Ok(out)
    }
}
