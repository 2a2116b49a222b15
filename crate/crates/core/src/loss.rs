//! Pooling, similarity, contrastive and cross-entropy objectives.
//!
//! Every loss comes in two forms: a value-only function and a `*_grad`
//! variant returning the value together with its gradient, so the training
//! step and the gradient checks share one implementation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Contrastive weight applied when a batch carries toxic content.
pub const TOXIC_WEIGHT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    /// Already includes `w_tox`.
    pub cl: f64,
    pub w_tox: f64,
    pub alpha: f64,
    pub total: f64,
    pub n_pairs: usize,
}

impl LossBreakdown {
    /// False when the batch had no positive pairs.
    pub fn contrast_active(&self) -> bool {
        self.n_pairs > 0
    }
}

/// `total = ce + α·cl`.
pub fn combined_loss(ce: f64, cl: f64, alpha: f64, w_tox: f64, n_pairs: usize) -> LossBreakdown {
    LossBreakdown {
        ce,
        cl,
        w_tox,
        alpha,
        total: ce + alpha * cl,
        n_pairs,
    }
}

/// A pooled sequence representation.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledRepresentation {
    pub r: Array1<f64>,
    pub source_index: usize,
}

/// Pooling weights: `m / Σm`, or uniform when the mask is empty.
pub fn pool_weights(mask: &[bool]) -> Result<Vec<f64>> {
    if mask.is_empty() {
        return Err(Error::Shape("cannot pool an empty sequence".into()));
    }
    let hits = mask.iter().filter(|&&m| m).count();
    Ok(if hits == 0 {
        vec![1.0 / mask.len() as f64; mask.len()]
    } else {
        mask.iter().map(|&m| if m { 1.0 / hits as f64 } else { 0.0 }).collect()
    })
}

/// Entity-weighted mean of the rows of `z`.
pub fn ne_pool(z: ArrayView2<'_, f64>, mask: &[bool]) -> Result<Array1<f64>> {
    if z.nrows() != mask.len() {
        return Err(Error::Shape(format!("{} rows but mask of length {}", z.nrows(), mask.len())));
    }
    if mask.is_empty() {
        return Err(Error::Shape("cannot pool an empty sequence".into()));
    }
    let hits = mask.iter().filter(|&&m| m).count();
    let mut r = Array1::zeros(z.ncols());
    // Sum first, divide once, so one-hot and all-ones masks are exact.
    for (row, &m) in z.outer_iter().zip(mask) {
        if m || hits == 0 {
            r += &row;
        }
    }
    r /= if hits == 0 { mask.len() } else { hits } as f64;
    Ok(r)
}

/// Gradient of [`ne_pool`] with respect to `z`.
pub fn ne_pool_backward(grad_r: &Array1<f64>, mask: &[bool]) -> Result<Array2<f64>> {
    let w = pool_weights(mask)?;
    let mut g = Array2::zeros((mask.len(), grad_r.len()));
    for (mut row, &wi) in g.outer_iter_mut().zip(&w) {
        if wi != 0.0 {
            row.assign(&(grad_r * wi));
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastOptions {
    pub tau: f64,
    /// Keep `k = i` in the softmax denominator.
    pub include_self: bool,
}

impl ContrastOptions {
    pub fn new(tau: f64) -> Self {
        Self { tau, include_self: false }
    }

    fn check(&self, n: usize) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Invalid(format!("temperature must be positive, got {}", self.tau)));
        }
        let needed = if self.include_self { 1 } else { 2 };
        if n < needed {
            return Err(Error::Invalid(format!("similarity needs at least {needed} representations, got {n}")));
        }
        Ok(())
    }
}

/// Row `i` of the temperature-scaled similarity softmax.
///
/// Entry `i` is zero unless `include_self` is set.
pub fn similarity_row_with(reps: ArrayView2<'_, f64>, i: usize, opts: ContrastOptions) -> Result<Vec<f64>> {
    let n = reps.nrows();
    opts.check(n)?;
    if i >= n {
        return Err(Error::Invalid(format!("row {i} out of range for {n} representations")));
    }
    let ri = reps.row(i);
    let logits: Vec<Option<f64>> = (0..n)
        .map(|k| (k != i || opts.include_self).then(|| ri.dot(&reps.row(k)) / opts.tau))
        .collect();
    let max = logits.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| l.map_or(0.0, |l| (l - max).exp())).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

pub fn similarity_row(reps: ArrayView2<'_, f64>, i: usize, tau: f64) -> Result<Vec<f64>> {
    similarity_row_with(reps, i, ContrastOptions::new(tau))
}

pub fn toxic_weight(toxic_flags: &[bool]) -> f64 {
    if toxic_flags.iter().any(|&t| t) {
        TOXIC_WEIGHT
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveOutput {
    /// Includes the toxic weight.
    pub loss: f64,
    pub w_tox: f64,
    pub n_pairs: usize,
    /// Gradient with respect to every representation row.
    pub grad: Array2<f64>,
}

impl ContrastiveOutput {
    pub fn active(&self) -> bool {
        self.n_pairs > 0
    }
}

fn check_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<()> {
    for &(i, j) in pairs {
        if i >= n || j >= n || i == j {
            return Err(Error::Invalid(format!("invalid positive pair ({i}, {j}) for {n} representations")));
        }
    }
    Ok(())
}

/// Symmetric pair loss over `pairs`, scaled by the batch toxic weight.
///
/// Each unordered pair contributes `log sim(i,j) + log sim(j,i)`; the sum is
/// divided by `2|P|`. With no pairs the loss is zero and the output reports
/// itself inactive.
pub fn contrastive_loss_grad(
    reps: ArrayView2<'_, f64>,
    pairs: &[(usize, usize)],
    toxic_flags: &[bool],
    opts: ContrastOptions,
) -> Result<ContrastiveOutput> {
    let n = reps.nrows();
    check_pairs(n, pairs)?;
    let w_tox = toxic_weight(toxic_flags);
    let mut grad = Array2::zeros(reps.raw_dim());
    if pairs.is_empty() {
        return Ok(ContrastiveOutput { loss: 0.0, w_tox, n_pairs: 0, grad });
    }
    opts.check(n)?;

    let c = w_tox / (2.0 * pairs.len() as f64);
    let mut sum_log = 0.0;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    for &(a, b) in pairs {
        for (i, j) in [(a, b), (b, a)] {
            if rows[i].is_none() {
                rows[i] = Some(similarity_row_with(reps, i, opts)?);
            }
            let p = rows[i].as_ref().unwrap();
            sum_log += p[j].ln();
            // d(−c·log p_ij)/d s_ik = c·(p_ik − [k = j]), s_ik = r_i·r_k / τ.
            for k in 0..n {
                if k == i && !opts.include_self {
                    continue;
                }
                let g = c * (p[k] - if k == j { 1.0 } else { 0.0 }) / opts.tau;
                if g == 0.0 {
                    continue;
                }
                let rk = reps.row(k).to_owned();
                let ri = reps.row(i).to_owned();
                grad.row_mut(i).scaled_add(g, &rk);
                grad.row_mut(k).scaled_add(g, &ri);
            }
        }
    }
    Ok(ContrastiveOutput {
        loss: w_tox * (-sum_log / (2.0 * pairs.len() as f64)),
        w_tox,
        n_pairs: pairs.len(),
        grad,
    })
}

pub fn contrastive_loss(reps: ArrayView2<'_, f64>, pairs: &[(usize, usize)], toxic_flags: &[bool], tau: f64) -> Result<f64> {
    contrastive_loss_grad(reps, pairs, toxic_flags, ContrastOptions::new(tau)).map(|o| o.loss)
}

/// One sequence's contribution to the cross-entropy: `logits[t]` is scored
/// against `targets[t]` wherever `mask[t]` is set.
#[derive(Debug, Clone, Copy)]
pub struct CeTerm<'a> {
    pub logits: ArrayView2<'a, f64>,
    pub targets: &'a [u32],
    pub mask: &'a [bool],
}

/// Label-smoothed cross-entropy averaged over every masked token in the
/// batch, and its gradient with respect to each term's logits.
pub fn ce_label_smoothed_grad(terms: &[CeTerm<'_>], epsilon: f64) -> Result<(f64, Vec<Array2<f64>>)> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Invalid(format!("label smoothing must lie in [0, 1), got {epsilon}")));
    }
    let mut count = 0usize;
    for t in terms {
        if t.targets.len() != t.logits.nrows() || t.mask.len() != t.logits.nrows() {
            return Err(Error::Shape("logits, targets and mask lengths differ".into()));
        }
        count += t.mask.iter().filter(|&&m| m).count();
    }
    if count == 0 {
        return Err(Error::Invalid("cross-entropy mask selects no tokens".into()));
    }
    let scale = 1.0 / count as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(terms.len());
    for t in terms {
        let v = t.logits.ncols();
        let smooth = epsilon / v as f64;
        let mut g = Array2::zeros(t.logits.raw_dim());
        for (pos, row) in t.logits.axis_iter(Axis(0)).enumerate() {
            if !t.mask[pos] {
                continue;
            }
            let target = t.targets[pos] as usize;
            if target >= v {
                return Err(Error::Invalid(format!("target {target} outside vocabulary of {v}")));
            }
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            // −Σ q_v log p_v with q = (1−ε)·onehot + ε/V.
            let mean_logit = row.sum() / v as f64;
            total += lse - (1.0 - epsilon) * row[target] - epsilon * mean_logit;
            let mut grow = g.row_mut(pos);
            for (k, &x) in row.iter().enumerate() {
                let q = smooth + if k == target { 1.0 - epsilon } else { 0.0 };
                grow[k] = ((x - lse).exp() - q) * scale;
            }
        }
        grads.push(g);
    }
    Ok((total * scale, grads))
}

pub fn ce_label_smoothed(terms: &[CeTerm<'_>], epsilon: f64) -> Result<f64> {
    ce_label_smoothed_grad(terms, epsilon).map(|(l, _)| l)
}
