use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::step::{train_step, TrainState};
use super::{lr_at, TrainConfig};
use crate::corpus::{build_batches, AugmentedSample, Batch, BatchConstraints, ByteTokenizer, Role};
use crate::loss::{ne_pool, LossBreakdown};
use crate::model::{write_checkpoint, Checkpoint, Model};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

/// Mean cosine similarity of pooled representations over positive pairs
/// and over anchor/negative pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastStats {
    pub positive_cosine: f64,
    pub negative_cosine: f64,
    pub positive_pairs: usize,
    pub negative_pairs: usize,
}

impl ContrastStats {
    pub fn margin(&self) -> f64 {
        self.positive_cosine - self.negative_cosine
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_ce: f64,
    pub mean_cl: f64,
    pub mean_total: f64,
    pub wall_seconds: f64,
    pub held_out: Option<ContrastStats>,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochSummary>,
}

impl RunHistory {
    pub fn epoch_mean_total(&self, epoch: usize) -> Option<f64> {
        self.epochs.iter().find(|e| e.epoch == epoch).map(|e| e.mean_total)
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(dir, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

pub fn train(config: &TrainConfig, dataset: &[AugmentedSample]) -> Result<(Checkpoint, RunHistory)> {
    train_with_eval(config, dataset, None)
}

/// Trains from a fresh seeded initialisation.
///
/// Writes `run_log.jsonl` (one object per step) and `epoch-<n>.ckpt` after
/// every epoch into `checkpoint_dir`. When `held_out` is given, its contrast
/// statistics are recorded after each epoch.
pub fn train_with_eval(
    config: &TrainConfig,
    dataset: &[AugmentedSample],
    held_out: Option<&[AugmentedSample]>,
) -> Result<(Checkpoint, RunHistory)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Invalid("training dataset is empty".into()));
    }
    if config.model.vocab_size < ByteTokenizer::VOCAB_SIZE {
        return Err(Error::Config(format!(
            "vocab_size {} is smaller than the byte tokenizer's {}",
            config.model.vocab_size,
            ByteTokenizer::VOCAB_SIZE
        )));
    }
    let dir = &config.checkpoint_dir;
    prepare_dir(dir)?;

    let model = Model::init(&config.model)?;
    let mut state = TrainState { model, step: 0 };
    let mut history = RunHistory::default();
    if config.epochs == 0 {
        return Ok((Checkpoint { model: state.model, step: 0 }, history));
    }

    let tok = ByteTokenizer;
    let epoch_batches = |epoch: usize| -> Result<Vec<Batch>> {
        let build = build_batches(dataset, &config.batch_constraints, &tok, rng::mix(config.seed, epoch as u64))?;
        if epoch == 0 {
            for skip in &build.skipped {
                log::warn!("skipped {} {:?}: {}", skip.sample_id, skip.role, skip.reason);
            }
        }
        Ok(build.batches)
    };
    let first = epoch_batches(0)?;
    if first.is_empty() {
        return Err(Error::Invalid("no batch could be built from the dataset".into()));
    }
    let total_steps = config.epochs * first.len();
    let warmup = config.warmup_steps.min(total_steps - 1);
    if warmup != config.warmup_steps {
        log::warn!("warmup clipped to {warmup} for a run of {total_steps} steps");
    }

    let log_path = dir.join("run_log.jsonl");
    let mut run_log = BufWriter::new(fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let mut pending = Some(first);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let batches = match pending.take() {
            Some(b) => b,
            None => epoch_batches(epoch)?,
        };
        let (mut ce, mut cl, mut total) = (0.0, 0.0, 0.0);
        for batch in &batches {
            let lr = lr_at(state.step as usize + 1, config.learning_rate, warmup, total_steps)?;
            let loss = train_step(&mut state, batch, config, lr)?;
            ce += loss.ce;
            cl += loss.cl;
            total += loss.total;
            let record = StepRecord {
                step: state.step,
                epoch,
                lr,
                loss,
            };
            write_log(&mut run_log, &record).map_err(|e| Error::io(&log_path, e))?;
            history.steps.push(record);
        }
        let checkpoint = dir.join(format!("epoch-{}.ckpt", epoch + 1));
        write_checkpoint(&checkpoint, &state.model, state.step)?;
        let held_out = match held_out {
            Some(h) => Some(contrast_stats(&state.model, h, &config.batch_constraints, config.seed)?),
            None => None,
        };
        let n = batches.len() as f64;
        let summary = EpochSummary {
            epoch,
            mean_ce: ce / n,
            mean_cl: cl / n,
            mean_total: total / n,
            wall_seconds: started.elapsed().as_secs_f64(),
            held_out,
            checkpoint,
        };
        log::info!(
            "epoch {} mean loss {:.5} (ce {:.5}, cl {:.5}) in {:.1}s",
            epoch + 1,
            summary.mean_total,
            summary.mean_ce,
            summary.mean_cl,
            summary.wall_seconds
        );
        history.epochs.push(summary);
    }
    run_log.flush().map_err(|e| Error::io(&log_path, e))?;
    Ok((
        Checkpoint {
            model: state.model,
            step: state.step,
        },
        history,
    ))
}

/// One run-log line: `step`, `lr`, `ce`, `cl`, `w_tox`, `total`.
fn write_log(w: &mut impl Write, r: &StepRecord) -> std::io::Result<()> {
    let line = serde_json::json!({
        "step": r.step,
        "lr": r.lr,
        "ce": r.loss.ce,
        "cl": r.loss.cl,
        "w_tox": r.loss.w_tox,
        "total": r.loss.total,
    });
    writeln!(w, "{line}")
}

/// Pooled-representation cosine statistics over `samples`.
pub fn contrast_stats(model: &Model, samples: &[AugmentedSample], constraints: &BatchConstraints, seed: u64) -> Result<ContrastStats> {
    let build = build_batches(samples, constraints, &ByteTokenizer, seed)?;
    let (mut pos, mut neg) = ((0.0, 0usize), (0.0, 0usize));
    for batch in &build.batches {
        let reps = pooled(model, batch)?;
        let cos = |i: usize, j: usize| {
            let (a, b) = (&reps[i], &reps[j]);
            a.dot(b) / (a.dot(a).sqrt() * b.dot(b).sqrt())
        };
        for &(i, j) in &batch.positive_pairs {
            pos.0 += cos(i, j);
            pos.1 += 1;
        }
        for (a, role) in batch.roles.iter().enumerate() {
            if *role != Role::Anchor {
                continue;
            }
            for (k, r) in batch.roles.iter().enumerate() {
                if *r == Role::Negative && batch.group_ids[k] == batch.group_ids[a] {
                    neg.0 += cos(a, k);
                    neg.1 += 1;
                }
            }
        }
    }
    if pos.1 == 0 || neg.1 == 0 {
        return Err(Error::Invalid("held-out set needs both positive pairs and negatives".into()));
    }
    Ok(ContrastStats {
        positive_cosine: pos.0 / pos.1 as f64,
        negative_cosine: neg.0 / neg.1 as f64,
        positive_pairs: pos.1,
        negative_pairs: neg.1,
    })
}

fn pooled(model: &Model, batch: &Batch) -> Result<Vec<ndarray::Array1<f64>>> {
    batch
        .sequences
        .iter()
        .enumerate()
        .map(|(i, seq)| {
            let out = model.forward(seq)?;
            let rows: Vec<usize> = batch.ce_mask[i].iter().enumerate().filter(|(_, &m)| m).map(|(r, _)| r).collect();
            let z = model.head.project(out.hidden_states.select(ndarray::Axis(0), &rows).view())?;
            let mask: Vec<bool> = rows.iter().map(|&r| batch.entity_mask[i][r]).collect();
            ne_pool(z.view(), &mask)
        })
        .collect()
}
