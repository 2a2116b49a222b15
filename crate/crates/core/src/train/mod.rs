//! Optimisation: schedule, single steps, full runs and the α sweep.

mod ablation;
mod run;
mod step;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::BatchConstraints;
use crate::model::ModelConfig;
use crate::{Error, Result};

pub use ablation::{ablate_alpha, write_ablation_csv, AblationRow, AblationTable, DEFAULT_ALPHAS};
pub use run::{contrast_stats, train, train_with_eval, ContrastStats, EpochSummary, RunHistory, StepRecord};
pub use step::{batch_loss, batch_loss_grad, train_step, TrainState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Linear warmup to the peak, then linear decay to zero.
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub warmup_steps: usize,
    pub schedule: Schedule,
    pub alpha: f64,
    pub tau: f64,
    pub label_smoothing: f64,
    /// Keep the self term in the similarity denominator.
    pub include_self: bool,
    pub batch_constraints: BatchConstraints,
    pub seed: u64,
    pub checkpoint_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    fn base(model: ModelConfig, learning_rate: f64, epochs: usize, constraints: BatchConstraints) -> Self {
        Self {
            model,
            learning_rate,
            epochs,
            warmup_steps: 5,
            schedule: Schedule::Linear,
            alpha: 4.0,
            tau: 1.0,
            label_smoothing: 0.1,
            include_self: false,
            batch_constraints: constraints,
            seed: 0,
            checkpoint_dir: PathBuf::from("checkpoints"),
        }
    }

    /// Toy model on CPU. The learning rate is sized for plain SGD on the toy
    /// model rather than copied from the large-model presets.
    pub fn desk() -> Self {
        let constraints = BatchConstraints {
            max_positives: Some(3),
            max_negatives: Some(3),
            max_length: 256,
            batch_groups: 4,
        };
        Self::base(ModelConfig::desk(), 0.05, 4, constraints)
    }

    pub fn gpt2() -> Self {
        Self::base(ModelConfig::gpt2(), 5e-4, 4, BatchConstraints { max_length: 512, ..BatchConstraints::default() })
    }

    pub fn phi2() -> Self {
        let c = BatchConstraints {
            max_positives: Some(3),
            max_negatives: Some(5),
            max_length: 340,
            batch_groups: 4,
        };
        Self::base(ModelConfig::phi2(), 2e-5, 3, c)
    }

    pub fn llama2_7b() -> Self {
        let c = BatchConstraints {
            max_positives: Some(2),
            max_negatives: Some(3),
            max_length: 340,
            batch_groups: 4,
        };
        Self::base(ModelConfig::llama2_7b(), 2e-5, 3, c)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "gpt2" => Ok(Self::gpt2()),
            "phi2" => Ok(Self::phi2()),
            "llama2-7b" => Ok(Self::llama2_7b()),
            other => Err(Error::Config(format!("unknown training preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.batch_constraints.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!("label_smoothing must lie in [0, 1), got {}", self.label_smoothing)));
        }
        if self.batch_constraints.max_length > self.model.max_length {
            return Err(Error::Config(format!(
                "batch max_length {} exceeds model max_length {}",
                self.batch_constraints.max_length, self.model.max_length
            )));
        }
        Ok(())
    }
}

/// Learning rate at `step` of a linear warmup/decay schedule.
///
/// `peak·step/warmup` up to and including `warmup`, then
/// `peak·(total − step)/(total − warmup)`. Each ratio is formed from exact
/// integers before a single multiplication, so the peak and both endpoints
/// are hit exactly.
pub fn lr_at(step: usize, peak_lr: f64, warmup: usize, total_steps: usize) -> Result<f64> {
    if warmup >= total_steps {
        return Err(Error::Config(format!("warmup ({warmup}) must be smaller than total steps ({total_steps})")));
    }
    if step > total_steps {
        return Err(Error::Invalid(format!("step {step} beyond total steps {total_steps}")));
    }
    let (num, den) = if warmup > 0 && step <= warmup {
        (step, warmup)
    } else {
        (total_steps - step, total_steps - warmup)
    };
    Ok(if num == den { peak_lr } else { peak_lr * (num as f64 / den as f64) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_points() {
        let (peak, w, t) = (5e-4, 5, 25);
        assert_eq!(lr_at(0, peak, w, t).unwrap(), 0.0);
        assert_eq!(lr_at(w, peak, w, t).unwrap(), peak);
        assert_eq!(lr_at(t, peak, w, t).unwrap(), 0.0);
        assert_eq!(lr_at(15, peak, w, t).unwrap(), peak * 0.5);
        assert_eq!(lr_at(2, peak, w, t).unwrap(), peak * 0.4);
        assert!(lr_at(0, peak, 5, 5).is_err());
        assert!(lr_at(26, peak, w, t).is_err());
        assert_eq!(lr_at(0, peak, 0, 10).unwrap(), peak);
    }

    #[test]
    fn schedule_shape() {
        let (peak, w, t) = (2e-5, 5, 40);
        let lrs: Vec<f64> = (0..=t).map(|s| lr_at(s, peak, w, t).unwrap()).collect();
        let argmax = lrs.iter().enumerate().fold(0, |b, (i, &v)| if v > lrs[b] { i } else { b });
        assert_eq!(argmax, w);
        assert_eq!(lrs.iter().filter(|&&v| v == peak).count(), 1);
        for s in 1..t {
            let second = lrs[s + 1] - 2.0 * lrs[s] + lrs[s - 1];
            if s != w {
                assert!(second.abs() < 1e-18, "kink at {s}");
            }
        }
    }

    #[test]
    fn presets_match_published_rows() {
        let g = TrainConfig::gpt2();
        assert_eq!((g.learning_rate, g.epochs, g.batch_constraints.max_length), (5e-4, 4, 512));
        assert_eq!((g.batch_constraints.max_positives, g.batch_constraints.max_negatives), (None, None));
        let p = TrainConfig::phi2();
        assert_eq!((p.learning_rate, p.epochs, p.batch_constraints.max_length), (2e-5, 3, 340));
        assert_eq!((p.batch_constraints.max_positives, p.batch_constraints.max_negatives), (Some(3), Some(5)));
        let l = TrainConfig::llama2_7b();
        assert_eq!((l.batch_constraints.max_positives, l.batch_constraints.max_negatives), (Some(2), Some(3)));
        for c in [g, p, l, TrainConfig::desk()] {
            assert_eq!((c.warmup_steps, c.alpha, c.tau, c.label_smoothing), (5, 4.0, 1.0, 0.1));
            c.validate().unwrap();
        }
    }

    #[test]
    fn toml_round_trip() {
        let c = TrainConfig::phi2();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<TrainConfig>(&text).unwrap(), c);
        let partial: TrainConfig = toml::from_str("alpha = 8.0\n[model]\nd_model = 32\n").unwrap();
        assert_eq!((partial.alpha, partial.model.d_model, partial.model.n_heads), (8.0, 32, 4));
    }
}
