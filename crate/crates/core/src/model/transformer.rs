use ndarray::{s, Array2, ArrayView2, Axis};

use super::ops::{affine, affine_backward, gelu, gelu_grad, layer_norm, layer_norm_backward, LnCache};
use super::{ForwardOutput, Layer, Model};
use crate::{Error, Result};

struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    qkv: Array2<f64>,
    /// Attention probabilities per head, `L × L`, zero above the diagonal.
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    ln2: LnCache,
    b: Array2<f64>,
    fc_pre: Array2<f64>,
    fc_act: Array2<f64>,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache {
    tokens: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    pub output: ForwardOutput,
}

impl Model {
    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Shape("empty token sequence".into()));
        }
        if tokens.len() > self.config.max_length {
            return Err(Error::Shape(format!(
                "sequence of {} tokens exceeds max_length {}",
                tokens.len(),
                self.config.max_length
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::Invalid(format!("token id {bad} outside vocabulary of {}", self.config.vocab_size)));
        }
        Ok(())
    }

    pub fn forward(&self, tokens: &[u32]) -> Result<ForwardOutput> {
        self.forward_cached(tokens).map(|c| c.output)
    }

    pub fn forward_cached(&self, tokens: &[u32]) -> Result<ForwardCache> {
        self.check_tokens(tokens)?;
        let len = tokens.len();
        let mut x = Array2::zeros((len, self.config.d_model));
        for (t, (&id, mut row)) in tokens.iter().zip(x.outer_iter_mut()).enumerate() {
            row.assign(&self.tok_emb.row(id as usize));
            row += &self.pos_emb.row(t);
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = self.layer_forward(layer, x);
            caches.push(cache);
            x = next;
        }
        let (hidden, lnf) = layer_norm(x.view(), &self.lnf_gain, &self.lnf_bias);
        let logits = hidden.dot(&self.w_lm);
        Ok(ForwardCache {
            tokens: tokens.to_vec(),
            layers: caches,
            lnf,
            output: ForwardOutput {
                hidden_states: hidden,
                logits,
            },
        })
    }

    fn layer_forward(&self, layer: &Layer, x: Array2<f64>) -> (Array2<f64>, LayerCache) {
        let d = self.config.d_model;
        let dh = self.config.head_dim();
        let len = x.nrows();
        let scale = 1.0 / (dh as f64).sqrt();

        let (a, ln1) = layer_norm(x.view(), &layer.ln1_gain, &layer.ln1_bias);
        let qkv = affine(a.view(), &layer.w_qkv, &layer.b_qkv);
        let mut attn = Array2::zeros((len, d));
        let mut probs = Vec::with_capacity(self.config.n_heads);
        for h in 0..self.config.n_heads {
            let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
            let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
            let v = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
            let mut p = q.dot(&k.t()) * scale;
            for (i, mut row) in p.outer_iter_mut().enumerate() {
                let max = row.slice(s![..=i]).fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let mut sum = 0.0;
                for (j, x) in row.iter_mut().enumerate() {
                    *x = if j <= i { (*x - max).exp() } else { 0.0 };
                    sum += *x;
                }
                row /= sum;
            }
            attn.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&p.dot(&v));
            probs.push(p);
        }
        let mut x_mid = affine(attn.view(), &layer.w_attn_out, &layer.b_attn_out);
        x_mid += &x;

        let (b, ln2) = layer_norm(x_mid.view(), &layer.ln2_gain, &layer.ln2_bias);
        let fc_pre = affine(b.view(), &layer.w_fc, &layer.b_fc);
        let fc_act = fc_pre.mapv(gelu);
        let mut out = affine(fc_act.view(), &layer.w_fc_out, &layer.b_fc_out);
        out += &x_mid;
        (
            out,
            LayerCache {
                ln1,
                a,
                qkv,
                probs,
                attn,
                ln2,
                b,
                fc_pre,
                fc_act,
            },
        )
    }

    /// Accumulates into `grads` the gradient of a loss whose partial
    /// derivatives with respect to the final hidden states and the logits
    /// are `d_hidden` and `d_logits`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_hidden: ArrayView2<'_, f64>,
        d_logits: ArrayView2<'_, f64>,
        grads: &mut Model,
    ) {
        let hidden = &cache.output.hidden_states;
        ndarray::linalg::general_mat_mul(1.0, &hidden.t(), &d_logits, 1.0, &mut grads.w_lm);
        let dh = &d_hidden + &d_logits.dot(&self.w_lm.t());
        let mut dx = layer_norm_backward(dh.view(), &cache.lnf, &self.lnf_gain, &mut grads.lnf_gain, &mut grads.lnf_bias);
        for ((layer, lc), lg) in self.layers.iter().zip(&cache.layers).zip(grads.layers.iter_mut()).rev() {
            dx = self.layer_backward(layer, lc, dx, lg);
        }
        for (t, (&id, row)) in cache.tokens.iter().zip(dx.outer_iter()).enumerate() {
            let mut e = grads.tok_emb.row_mut(id as usize);
            e += &row;
            let mut p = grads.pos_emb.row_mut(t);
            p += &row;
        }
    }

    fn layer_backward(&self, layer: &Layer, c: &LayerCache, d_out: Array2<f64>, g: &mut Layer) -> Array2<f64> {
        let d = self.config.d_model;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        // Feed-forward block; the residual passes `d_out` straight through.
        let d_act = affine_backward(d_out.view(), c.fc_act.view(), &layer.w_fc_out, &mut g.w_fc_out, &mut g.b_fc_out);
        let d_pre = d_act * &c.fc_pre.mapv(gelu_grad);
        let d_b = affine_backward(d_pre.view(), c.b.view(), &layer.w_fc, &mut g.w_fc, &mut g.b_fc);
        let d_mid = d_out + &layer_norm_backward(d_b.view(), &c.ln2, &layer.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);

        // Attention block.
        let d_attn = affine_backward(d_mid.view(), c.attn.view(), &layer.w_attn_out, &mut g.w_attn_out, &mut g.b_attn_out);
        let mut d_qkv = Array2::zeros(c.qkv.raw_dim());
        for (h, p) in c.probs.iter().enumerate() {
            let q = c.qkv.slice(s![.., h * dh..(h + 1) * dh]);
            let k = c.qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
            let v = c.qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
            let d_o = d_attn.slice(s![.., h * dh..(h + 1) * dh]);
            let dv = p.t().dot(&d_o);
            let dp = d_o.dot(&v.t());
            // Softmax backward, row-wise: dS = P ∘ (dP − rowsum(P ∘ dP)).
            let mut ds = p * &dp;
            let row_dot = ds.sum_axis(Axis(1));
            for ((mut row, pr), &rd) in ds.outer_iter_mut().zip(p.outer_iter()).zip(&row_dot) {
                row.zip_mut_with(&pr, |x, &pv| *x -= pv * rd);
            }
            ds *= scale;
            d_qkv.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&ds.dot(&k));
            d_qkv.slice_mut(s![.., d + h * dh..d + (h + 1) * dh]).assign(&ds.t().dot(&q));
            d_qkv.slice_mut(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]).assign(&dv);
        }
        let d_a = affine_backward(d_qkv.view(), c.a.view(), &layer.w_qkv, &mut g.w_qkv, &mut g.b_qkv);
        d_mid + &layer_norm_backward(d_a.view(), &c.ln1, &layer.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias)
    }
}
