use serde::{Deserialize, Serialize};

use super::AugmentedSample;
use crate::backends::NerBackend;
use crate::Result;

/// Which text the "has entities" statistic is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityBasis {
    /// The stored `entities` of the reference summary.
    #[default]
    Summary,
    /// The source text, tagged on the fly.
    Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_samples: usize,
    pub pct_with_entities: f64,
    pub pct_toxic_negatives: f64,
    pub positives_per_sample: f64,
    /// Set when the dataset has no negatives and `pct_toxic_negatives` is a
    /// placeholder 0.
    pub no_negatives: bool,
    pub entity_basis: EntityBasis,
}

/// `100 * num / den` rounded half-up to 2 decimals, in integer arithmetic.
fn percent_2dp(num: u64, den: u64) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let scaled = (20_000 * num + den) / (2 * den);
    scaled as f64 / 100.0
}

fn ratio_2dp(num: u64, den: u64) -> f64 {
    if den == 0 {
        return 0.0;
    }
    ((200 * num + den) / (2 * den)) as f64 / 100.0
}

pub fn compute_stats(samples: &[AugmentedSample]) -> DatasetStats {
    compute_stats_with(samples, EntityBasis::Summary, None).expect("summary basis needs no backend")
}

/// Dataset statistics; `ner` is required only for [`EntityBasis::Source`].
pub fn compute_stats_with(
    samples: &[AugmentedSample],
    basis: EntityBasis,
    ner: Option<&dyn NerBackend>,
) -> Result<DatasetStats> {
    let n = samples.len() as u64;
    let mut with_entities = 0u64;
    for s in samples {
        let has = match basis {
            EntityBasis::Summary => !s.entities.is_empty(),
            EntityBasis::Source => {
                let ner = ner.ok_or_else(|| crate::Error::Config("source entity basis needs an NER backend".into()))?;
                !ner.tag(&s.source)?.is_empty()
            }
        };
        with_entities += u64::from(has);
    }
    let negatives: u64 = samples.iter().map(|s| s.negatives.len() as u64).sum();
    let toxic: u64 = samples
        .iter()
        .flat_map(|s| &s.negatives)
        .filter(|n| n.toxic)
        .count() as u64;
    let positives: u64 = samples.iter().map(|s| s.positives.len() as u64).sum();
    Ok(DatasetStats {
        n_samples: samples.len(),
        pct_with_entities: percent_2dp(with_entities, n),
        pct_toxic_negatives: percent_2dp(toxic, negatives),
        positives_per_sample: ratio_2dp(positives, n),
        no_negatives: negatives == 0,
        entity_basis: basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntitySpan;

    #[test]
    fn one_in_four_with_entities() {
        let mut samples: Vec<_> = (0..4)
            .map(|i| AugmentedSample::new(format!("{i}"), "s", "a b c"))
            .collect();
        samples[2].entities.push(EntitySpan::new(0, 1, "X", "a"));
        let st = compute_stats(&samples);
        assert_eq!(st.pct_with_entities, 25.0);
        assert_eq!(st.pct_toxic_negatives, 0.0);
        assert!(st.no_negatives);
    }

    #[test]
    fn empty_dataset() {
        let st = compute_stats(&[]);
        assert_eq!(st.n_samples, 0);
        assert_eq!(st.pct_with_entities, 0.0);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(percent_2dp(1, 3), 33.33);
        assert_eq!(percent_2dp(2, 3), 66.67);
        assert_eq!(percent_2dp(1, 8), 12.5);
        assert_eq!(percent_2dp(2319, 10_000), 23.19);
    }
}
