use ndarray::{s, Array2};

use super::TrainConfig;
use crate::corpus::Batch;
use crate::loss::{
    ce_label_smoothed_grad, combined_loss, contrastive_loss_grad, ne_pool, ne_pool_backward, toxic_weight, CeTerm,
    ContrastOptions, LossBreakdown,
};
use crate::model::{ForwardCache, HeadCache, Model};
use crate::{Error, Result};

/// Parameters plus the number of optimizer steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub step: u64,
}

/// Rows of the summary region of one sequence.
fn summary_rows(ce_mask: &[bool]) -> Vec<usize> {
    ce_mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

/// Everything the backward pass needs from the forward pass.
struct BatchForward {
    breakdown: LossBreakdown,
    caches: Vec<ForwardCache>,
    ce_grads: Vec<Array2<f64>>,
    head_caches: Vec<(Vec<usize>, Vec<bool>, HeadCache)>,
    rep_grad: Option<Array2<f64>>,
}

/// Loss for one batch without the backward pass.
pub fn batch_loss(model: &Model, batch: &Batch, config: &TrainConfig) -> Result<LossBreakdown> {
    forward(model, batch, config).map(|f| f.breakdown)
}

/// Loss and full parameter gradient for one batch.
///
/// Each sequence is run through the model; its summary-region hidden states
/// are projected, pooled with the entity mask, and the pooled vectors enter
/// the contrastive loss. Cross-entropy scores the logits at `t − 1` against
/// the token at `t` wherever `ce_mask[t]` is set.
pub fn batch_loss_grad(model: &Model, batch: &Batch, config: &TrainConfig) -> Result<(LossBreakdown, Model)> {
    let BatchForward {
        breakdown,
        caches,
        ce_grads,
        head_caches,
        rep_grad,
    } = forward(model, batch, config)?;
    let mut grads = model.zeros_like();
    for (i, cache) in caches.iter().enumerate() {
        let len = batch.sequences[i].len();
        let mut d_logits = Array2::zeros(cache.output.logits.raw_dim());
        d_logits.slice_mut(s![..len - 1, ..]).assign(&ce_grads[i]);
        let mut d_hidden = Array2::zeros(cache.output.hidden_states.raw_dim());
        if let (Some(g), Some((rows, mask, hc))) = (&rep_grad, head_caches.get(i)) {
            let dr = g.row(i).to_owned() * config.alpha;
            let dz = ne_pool_backward(&dr, mask)?;
            let dx = model.head.backward(hc, dz.view(), &mut grads.head);
            for (k, &r) in rows.iter().enumerate() {
                d_hidden.row_mut(r).assign(&dx.row(k));
            }
        }
        model.backward(cache, d_hidden.view(), d_logits.view(), &mut grads);
    }
    Ok((breakdown, grads))
}

fn forward(model: &Model, batch: &Batch, config: &TrainConfig) -> Result<BatchForward> {
    batch.check_invariants()?;
    let n = batch.len();
    if n == 0 {
        return Err(Error::Invalid("empty batch".into()));
    }
    let caches = batch
        .sequences
        .iter()
        .map(|seq| model.forward_cached(seq))
        .collect::<Result<Vec<_>>>()?;

    let terms: Vec<CeTerm<'_>> = caches
        .iter()
        .zip(&batch.sequences)
        .zip(&batch.ce_mask)
        .map(|((c, seq), mask)| {
            let len = seq.len();
            CeTerm {
                logits: c.output.logits.slice(s![..len - 1, ..]),
                targets: &seq[1..],
                mask: &mask[1..],
            }
        })
        .collect();
    let (ce, ce_grads) = ce_label_smoothed_grad(&terms, config.label_smoothing)?;

    let contrast = !batch.positive_pairs.is_empty() && config.alpha != 0.0;
    let mut head_caches = Vec::new();
    let mut reps = Array2::zeros((n, model.config.proj_out));
    if contrast {
        for (i, cache) in caches.iter().enumerate() {
            let rows = summary_rows(&batch.ce_mask[i]);
            let x = cache.output.hidden_states.select(ndarray::Axis(0), &rows);
            let hc = model.head.project_cached(x.view())?;
            let mask: Vec<bool> = rows.iter().map(|&r| batch.entity_mask[i][r]).collect();
            reps.row_mut(i).assign(&ne_pool(hc.z().view(), &mask)?);
            head_caches.push((rows, mask, hc));
        }
    }
    let opts = ContrastOptions {
        tau: config.tau,
        include_self: config.include_self,
    };
    let (cl, w_tox, n_pairs, rep_grad) = if contrast {
        let out = contrastive_loss_grad(reps.view(), &batch.positive_pairs, &batch.toxic_flags, opts)?;
        (out.loss, out.w_tox, out.n_pairs, Some(out.grad))
    } else {
        (0.0, toxic_weight(&batch.toxic_flags), batch.positive_pairs.len(), None)
    };
    let breakdown = combined_loss(ce, cl, config.alpha, w_tox, n_pairs);
    if !breakdown.total.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss (ce {ce}, cl {cl}) on batch of groups {:?}",
            dedup(&batch.group_ids)
        )));
    }

    Ok(BatchForward {
        breakdown,
        caches,
        ce_grads,
        head_caches,
        rep_grad,
    })
}

fn dedup(ids: &[String]) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for id in ids {
        if out.last() != Some(&id.as_str()) {
            out.push(id);
        }
    }
    out
}

/// One SGD step at learning rate `lr`.
pub fn train_step(state: &mut TrainState, batch: &Batch, config: &TrainConfig, lr: f64) -> Result<LossBreakdown> {
    let (breakdown, grads) = batch_loss_grad(&state.model, batch, config)?;
    state.model.scaled_add(-lr, &grads);
    state.model.apply_precision();
    if !state.model.all_finite() {
        return Err(Error::Numerical(format!(
            "non-finite parameters after step {} on groups {:?}",
            state.step + 1,
            dedup(&batch.group_ids)
        )));
    }
    state.step += 1;
    Ok(breakdown)
}
