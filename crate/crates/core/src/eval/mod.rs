//! Generation, scoring, degenerate-pattern analysis and size/degradation
//! correlation.

mod correlation;
mod patterns;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{FaithfulnessScorer, GenParams, ToxicityScorer};
use crate::corpus::Tokenizer;
use crate::model::LanguageModelAdapter;
use crate::{Error, Result};

pub use correlation::{
    degradation_correlation, mean, pearson, CorrelationResult, DegradationRow, DegradationTable, SizeTransform,
};
pub use patterns::{detect_patterns, pattern_report, PatternFlags, PatternReport, PatternRules, PatternThresholds, BUILTIN_RULES};

/// Greedy decoding of one summary per source.
///
/// The prompt is `BOS source SEP`; the source is cut from the end so that
/// prompt plus `max_new_tokens` fits the model's context. Decoding stops at
/// the end token or after `max_new_tokens` tokens. Ties in the argmax go to
/// the lowest token id.
pub fn generate_summaries(
    model: &dyn LanguageModelAdapter,
    tokenizer: &dyn Tokenizer,
    sources: &[String],
    params: &GenParams,
) -> Result<Vec<String>> {
    let budget = model.max_length().saturating_sub(params.max_new_tokens + 2);
    if budget == 0 {
        return Err(Error::Config(format!(
            "max_new_tokens {} leaves no room for a prompt in a context of {}",
            params.max_new_tokens,
            model.max_length()
        )));
    }
    sources
        .par_iter()
        .map(|source| {
            let mut ids = vec![tokenizer.bos()];
            let enc = tokenizer.encode(source);
            ids.extend(enc.ids.iter().take(budget));
            ids.push(tokenizer.sep());
            let prompt_len = ids.len();
            for _ in 0..params.max_new_tokens {
                let out = model.forward(&ids)?;
                let last = out.logits.row(out.logits.nrows() - 1);
                let next = last
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0 as u32;
                if next == tokenizer.eos() {
                    break;
                }
                ids.push(next);
            }
            Ok(tokenizer.decode(&ids[prompt_len..]))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    pub output_text: String,
    pub toxicity: Option<f64>,
    pub faithfulness: Option<f64>,
    /// Scorer diagnostic when the item could not be scored.
    pub error: Option<String>,
}

impl ItemScore {
    pub fn scored(&self) -> bool {
        self.toxicity.is_some() && self.faithfulness.is_some()
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: Vec<ItemScore>,
    pub toxicity: Option<Aggregate>,
    pub faithfulness: Option<Aggregate>,
    pub n_unscored: usize,
}

impl EvalReport {
    fn from_items(items: Vec<ItemScore>) -> Self {
        let scored: Vec<&ItemScore> = items.iter().filter(|i| i.scored()).collect();
        let tox: Vec<f64> = scored.iter().filter_map(|i| i.toxicity).collect();
        let faith: Vec<f64> = scored.iter().filter_map(|i| i.faithfulness).collect();
        Self {
            n_unscored: items.len() - scored.len(),
            toxicity: Aggregate::of(&tox),
            faithfulness: Aggregate::of(&faith),
            items,
        }
    }

    /// Per-item rows: `id,toxicity,faithfulness,status,output_text`.
    pub fn write_items_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        let io = |e: csv::Error| Error::Invalid(format!("{}: {e}", path.display()));
        w.write_record(["id", "toxicity", "faithfulness", "status", "output_text"]).map_err(io)?;
        for item in &self.items {
            let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let status = item.error.as_deref().map_or("ok".to_owned(), |e| format!("unscored: {e}"));
            w.write_record([item.id.as_str(), &num(item.toxicity), &num(item.faithfulness), &status, &item.output_text])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Aggregate table, optionally with deltas against `baseline`.
    pub fn to_markdown(&self, baseline: Option<&EvalReport>) -> String {
        let mut out = String::new();
        let cell = |a: Option<Aggregate>| a.map_or("n/a".to_owned(), |a| format!("{:.3} ± {:.3}", a.mean, a.std));
        if let Some(base) = baseline {
            out.push_str("| metric | baseline | model | delta |\n|---|---|---|---|\n");
            for (name, dir, b, m) in [
                ("toxicity ↓", Direction::LowerBetter, base.toxicity, self.toxicity),
                ("faithfulness ↑", Direction::HigherBetter, base.faithfulness, self.faithfulness),
            ] {
                let delta = match (b, m) {
                    (Some(b), Some(m)) => {
                        let d = delta_annotate(b.mean, m.mean, dir);
                        format!("{:+.3} ({})", d.delta, d.desirability.as_str())
                    }
                    _ => "n/a".to_owned(),
                };
                let _ = writeln!(out, "| {name} | {} | {} | {delta} |", cell(b), cell(m));
            }
        } else {
            out.push_str("| metric | model |\n|---|---|\n");
            let _ = writeln!(out, "| toxicity ↓ | {} |", cell(self.toxicity));
            let _ = writeln!(out, "| faithfulness ↑ | {} |", cell(self.faithfulness));
        }
        let _ = writeln!(out, "\n{} items, {} unscored", self.items.len(), self.n_unscored);
        out
    }
}

/// Scores each output against its source; ids are positions.
pub fn evaluate(
    sources: &[String],
    outputs: &[String],
    toxicity: &dyn ToxicityScorer,
    faithfulness: &dyn FaithfulnessScorer,
) -> Result<EvalReport> {
    let ids: Vec<String> = (0..sources.len()).map(|i| i.to_string()).collect();
    evaluate_with_ids(&ids, sources, outputs, toxicity, faithfulness)
}

pub fn evaluate_with_ids(
    ids: &[String],
    sources: &[String],
    outputs: &[String],
    toxicity: &dyn ToxicityScorer,
    faithfulness: &dyn FaithfulnessScorer,
) -> Result<EvalReport> {
    if sources.len() != outputs.len() || ids.len() != outputs.len() {
        return Err(Error::Invalid(format!(
            "{} ids, {} sources and {} outputs",
            ids.len(),
            sources.len(),
            outputs.len()
        )));
    }
    let items = (0..outputs.len())
        .into_par_iter()
        .map(|i| {
            let scores = toxicity
                .score(&outputs[i])
                .and_then(|t| faithfulness.score(&sources[i], &outputs[i]).map(|f| (t, f)));
            let (toxicity, faithfulness, error) = match scores {
                Ok((t, f)) => (Some(t), Some(f), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            ItemScore {
                id: ids[i].clone(),
                output_text: outputs[i].clone(),
                toxicity,
                faithfulness,
                error,
            }
        })
        .collect();
    Ok(EvalReport::from_items(items))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Desirability {
    Good,
    Bad,
    Neutral,
}

impl Desirability {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Good => "good",
            Self::Bad => "bad",
            Self::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub delta: f64,
    pub desirability: Desirability,
}

pub fn delta_annotate(baseline: f64, new: f64, direction: Direction) -> Delta {
    let delta = new - baseline;
    let desirability = if delta.abs() < 1e-12 {
        Desirability::Neutral
    } else if (delta < 0.0) == (direction == Direction::LowerBetter) {
        Desirability::Good
    } else {
        Desirability::Bad
    };
    Delta { delta, desirability }
}
