use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{validate_spans, AugmentedSample, NegativeStrategy};
use crate::{text, Error, Result};

/// Checks applied to every record on load.
#[derive(Debug, Clone)]
pub struct ValidationOptions {
    /// Minimum word count for every positive and negative variant.
    pub min_words: usize,
    /// Toxic-strategy negatives must score at least this much.
    pub toxicity_threshold: Option<f64>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            min_words: 3,
            toxicity_threshold: Some(0.4),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<AugmentedSample>> {
    load_dataset_with(path, &ValidationOptions::default())
}

pub fn load_dataset_with(path: impl AsRef<Path>, opts: &ValidationOptions) -> Result<Vec<AugmentedSample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: AugmentedSample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        validate_sample(&sample, opts)?;
        if !seen.insert(sample.id.clone()) {
            return Err(Error::InvalidSample {
                id: sample.id,
                field: "id",
                message: "duplicate id".into(),
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Writes one JSON object per line. Newlines inside strings are escaped by
/// the JSON encoder, so every record stays on its own line.
pub fn save_dataset(samples: &[AugmentedSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for sample in samples {
        let line = serde_json::to_string(sample)
            .map_err(|e| Error::Invalid(format!("cannot encode sample {}: {e}", sample.id)))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn validate_sample(sample: &AugmentedSample, opts: &ValidationOptions) -> Result<()> {
    let invalid = |field: &'static str, message: String| Error::InvalidSample {
        id: sample.id.clone(),
        field,
        message,
    };
    if sample.id.is_empty() {
        return Err(invalid("id", "empty id".into()));
    }
    if sample.summary.trim().is_empty() {
        return Err(invalid("summary", "empty summary".into()));
    }
    validate_spans(&sample.id, &sample.summary, &sample.entities)?;
    for (i, p) in sample.positives.iter().enumerate() {
        if text::word_count(&p.text) < opts.min_words {
            return Err(invalid(
                "positives",
                format!("positive {i} has fewer than {} words", opts.min_words),
            ));
        }
    }
    for (i, n) in sample.negatives.iter().enumerate() {
        if text::word_count(&n.text) < opts.min_words {
            return Err(invalid(
                "negatives",
                format!("negative {i} has fewer than {} words", opts.min_words),
            ));
        }
        if !(0.0..=1.0).contains(&n.toxicity_score) {
            return Err(invalid(
                "negatives",
                format!("negative {i} toxicity_score {} outside [0, 1]", n.toxicity_score),
            ));
        }
        if n.strategy == NegativeStrategy::Toxic {
            if !n.toxic {
                return Err(invalid("negatives", format!("negative {i} is toxic-strategy but not flagged")));
            }
            if let Some(t) = opts.toxicity_threshold {
                if n.toxicity_score < t {
                    return Err(invalid(
                        "negatives",
                        format!("toxic negative {i} scores {} below threshold {t}", n.toxicity_score),
                    ));
                }
            }
        }
    }
    Ok(())
}
