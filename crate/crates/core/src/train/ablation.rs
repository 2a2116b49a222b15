use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::backends::{BackendSuite, GenParams};
use crate::corpus::{AugmentedSample, ByteTokenizer};
use crate::eval::{evaluate_with_ids, generate_summaries};
use crate::{Error, Result};

pub const DEFAULT_ALPHAS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub alpha: f64,
    pub toxicity: Option<f64>,
    pub faithfulness: Option<f64>,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

/// Trains and evaluates once per α with otherwise identical settings.
///
/// Each run writes into `checkpoint_dir/alpha-<α>`. A failing run yields a
/// `failed` row and the sweep continues. Rows are sorted by α.
pub fn ablate_alpha(
    config: &TrainConfig,
    dataset: &[AugmentedSample],
    eval_set: &[AugmentedSample],
    values: &[f64],
    suite: &BackendSuite,
    gen: &GenParams,
) -> Result<AblationTable> {
    if values.is_empty() {
        return Err(Error::Invalid("no alpha values to sweep".into()));
    }
    let mut alphas = values.to_vec();
    alphas.sort_by(f64::total_cmp);
    let ids: Vec<String> = eval_set.iter().map(|s| s.id.clone()).collect();
    let sources: Vec<String> = eval_set.iter().map(|s| s.source.clone()).collect();

    let rows = alphas
        .into_iter()
        .map(|alpha| {
            let run = TrainConfig {
                alpha,
                checkpoint_dir: config.checkpoint_dir.join(format!("alpha-{alpha}")),
                ..config.clone()
            };
            let outcome = train(&run, dataset).and_then(|(ckpt, _)| {
                let outputs = generate_summaries(&ckpt.model, &ByteTokenizer, &sources, gen)?;
                evaluate_with_ids(&ids, &sources, &outputs, suite.toxicity.as_ref(), suite.faithfulness.as_ref())
            });
            match outcome {
                Ok(report) => AblationRow {
                    alpha,
                    toxicity: report.toxicity.map(|a| a.mean),
                    faithfulness: report.faithfulness.map(|a| a.mean),
                    status: "ok".into(),
                },
                Err(e) => {
                    log::error!("alpha {alpha}: {e}");
                    AblationRow {
                        alpha,
                        toxicity: None,
                        faithfulness: None,
                        status: format!("failed: {e}"),
                    }
                }
            }
        })
        .collect();
    Ok(AblationTable { rows })
}

/// CSV with header `alpha,toxicity,faithfulness,status`.
pub fn write_ablation_csv(table: &AblationTable, path: &Path) -> Result<()> {
    let io = |e: csv::Error| Error::Invalid(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["alpha", "toxicity", "faithfulness", "status"]).map_err(io)?;
    for r in &table.rows {
        let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([r.alpha.to_string(), num(r.toxicity), num(r.faithfulness), r.status.clone()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
