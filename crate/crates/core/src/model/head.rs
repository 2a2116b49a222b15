use ndarray::{Array1, Array2, ArrayView2};
use rand_distr::{Distribution, Normal};

use super::ops::{affine, affine_backward, gelu, gelu_grad};
use crate::rng::Rng;
use crate::{Error, Result};

/// Token-level contrastive projection:
/// `z = normalize(W2·GELU(W1·x + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// Added to the norm before dividing; zero means near-zero vectors are
    /// an error instead.
    pub norm_eps: f64,
}

/// Pre-normalisation norms below this are treated as a dead head.
pub const DEGENERATE_NORM: f64 = 1e-12;

pub struct HeadCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
    u: Array2<f64>,
    norms: Array1<f64>,
    z: Array2<f64>,
}

impl HeadCache {
    pub fn z(&self) -> &Array2<f64> {
        &self.z
    }
}

impl ProjectionHead {
    pub fn zeros(d_model: usize, hidden: usize, out: usize) -> Self {
        Self {
            w1: Array2::zeros((d_model, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, out)),
            b2: Array1::zeros(out),
            norm_eps: 0.0,
        }
    }

    /// Weights drawn from `N(0, 1/fan_in)`, biases zero.
    pub(crate) fn init(d_model: usize, hidden: usize, out: usize, rng: &mut Rng) -> Self {
        let mut head = Self::zeros(d_model, hidden, out);
        let n1 = Normal::new(0.0, (1.0 / d_model as f64).sqrt()).expect("valid std");
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("valid std");
        head.w1.iter_mut().for_each(|w| *w = n1.sample(rng));
        head.w2.iter_mut().for_each(|w| *w = n2.sample(rng));
        head
    }

    pub fn d_model(&self) -> usize {
        self.w1.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.ncols()
    }

    pub fn project(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.project_cached(x).map(|c| c.z)
    }

    pub fn project_cached(&self, x: ArrayView2<'_, f64>) -> Result<HeadCache> {
        if x.ncols() != self.d_model() {
            return Err(Error::Shape(format!("hidden width {} but head expects {}", x.ncols(), self.d_model())));
        }
        let pre = affine(x, &self.w1, &self.b1);
        let hidden = pre.mapv(gelu);
        let u = affine(hidden.view(), &self.w2, &self.b2);
        let mut norms = Array1::zeros(u.nrows());
        let mut z = u.clone();
        for (i, (mut row, n)) in z.outer_iter_mut().zip(norms.iter_mut()).enumerate() {
            *n = row.dot(&row).sqrt();
            if self.norm_eps == 0.0 && *n < DEGENERATE_NORM {
                return Err(Error::Numerical(format!("degenerate projection at token {i}: norm {n:e}")));
            }
            row /= *n + self.norm_eps;
        }
        Ok(HeadCache {
            x: x.to_owned(),
            pre,
            hidden,
            u,
            norms,
            z,
        })
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, cache: &HeadCache, dz: ArrayView2<'_, f64>, grads: &mut ProjectionHead) -> Array2<f64> {
        let mut du = dz.to_owned();
        for ((mut row, u), &n) in du.outer_iter_mut().zip(cache.u.outer_iter()).zip(&cache.norms) {
            // z = u/(n+ε): dz/du = I/(n+ε) − u·uᵀ/(n·(n+ε)²).
            let d = n + self.norm_eps;
            let coef = if n > 0.0 { u.dot(&row) / (n * d * d) } else { 0.0 };
            row.zip_mut_with(&u, |g, &ui| *g = *g / d - coef * ui);
        }
        let dh = affine_backward(du.view(), cache.hidden.view(), &self.w2, &mut grads.w2, &mut grads.b2);
        let dpre = dh * &cache.pre.mapv(gelu_grad);
        affine_backward(dpre.view(), cache.x.view(), &self.w1, &mut grads.w1, &mut grads.b1)
    }
}
