//! Dense kernels shared by the transformer and the projection head.

use ndarray::{Array1, Array2, ArrayView2, Axis};

pub(crate) const LN_EPS: f64 = 1e-5;

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub(crate) struct LnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub(crate) fn layer_norm(x: ArrayView2<'_, f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.to_owned();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.outer_iter_mut().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.dot(&row) / d;
        *s = 1.0 / (var + LN_EPS).sqrt();
        row *= *s;
    }
    let y = &xhat * gain + bias;
    (y, LnCache { xhat, inv_std })
}

/// Returns `dx`; accumulates into `d_gain` and `d_bias`.
pub(crate) fn layer_norm_backward(
    dy: ArrayView2<'_, f64>,
    cache: &LnCache,
    gain: &Array1<f64>,
    d_gain: &mut Array1<f64>,
    d_bias: &mut Array1<f64>,
) -> Array2<f64> {
    *d_gain += &(&dy * &cache.xhat).sum_axis(Axis(0));
    *d_bias += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = &dy * gain;
    for ((mut row, xhat), &s) in dx.outer_iter_mut().zip(cache.xhat.outer_iter()).zip(&cache.inv_std) {
        let mean = row.sum() / d;
        let proj = row.dot(&xhat) / d;
        row.zip_mut_with(&xhat, |g, &xh| *g = s * (*g - mean - xh * proj));
    }
    dx
}

/// `x·W + b`.
pub(crate) fn affine(x: ArrayView2<'_, f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

/// Backward of [`affine`]: accumulates parameter gradients, returns `dx`.
pub(crate) fn affine_backward(
    dy: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    w: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    ndarray::linalg::general_mat_mul(1.0, &x.t(), &dy, 1.0, dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}
