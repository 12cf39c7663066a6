//! Differentiable building blocks on `frames × features` matrices.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const NORM_EPS: f64 = 1e-5;

pub(crate) fn linear(
    x: ArrayView2<'_, f64>,
    w: &Array2<f64>,
    b: Option<&Array1<f64>>,
) -> Array2<f64> {
    let mut y = x.dot(w);
    if let Some(b) = b {
        y += b;
    }
    y
}

/// Accumulates weight (and bias) gradients and returns the input gradient.
pub(crate) fn linear_backward(
    x: ArrayView2<'_, f64>,
    w: &Array2<f64>,
    dy: ArrayView2<'_, f64>,
    dw: &mut Array2<f64>,
    db: Option<&mut Array1<f64>>,
) -> Array2<f64> {
    ndarray::linalg::general_mat_mul(1.0, &x.t(), &dy, 1.0, dw);
    if let Some(db) = db {
        *db += &dy.sum_axis(Axis(0));
    }
    dy.dot(&w.t())
}

pub(crate) struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

/// Normalizes each row over its features, then applies a per-feature gain and bias.
pub(crate) fn layer_norm(
    x: ArrayView2<'_, f64>,
    g: &Array1<f64>,
    b: &Array1<f64>,
) -> (Array2<f64>, NormCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.to_owned();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *s = 1.0 / (var + NORM_EPS).sqrt();
        let inv = *s;
        row.mapv_inplace(|v| v * inv);
    }
    let y = &xhat * g + b;
    (y, NormCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward(
    cache: &NormCache,
    g: &Array1<f64>,
    dy: ArrayView2<'_, f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dg += &(&dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let n = dy.ncols() as f64;
    let mut dx = &dy * g;
    for ((mut row, xh), &s) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let sum: f64 = row.sum();
        let dot: f64 = row.iter().zip(xh.iter()).map(|(a, b)| a * b).sum();
        Zip::from(&mut row).and(&xh).for_each(|d, &h| {
            *d = s / n * (n * *d - sum - h * dot);
        });
    }
    dx
}

pub(crate) fn relu(x: Array2<f64>) -> Array2<f64> {
    x.mapv_into(|v| v.max(0.0))
}

/// Zeroes `dy` where the forward output was not positive.
pub(crate) fn relu_backward(y: ArrayView2<'_, f64>, mut dy: Array2<f64>) -> Array2<f64> {
    Zip::from(&mut dy).and(&y).for_each(|d, &v| {
        if v <= 0.0 {
            *d = 0.0;
        }
    });
    dy
}

/// Inverted dropout mask (`0` or `1 / (1 - p)`), or `None` when inactive.
pub(crate) fn dropout_mask(
    shape: (usize, usize),
    p: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Option<Array2<f64>> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(Array2::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < p {
            0.0
        } else {
            keep
        }
    }))
}

pub(crate) fn apply_mask(x: Array2<f64>, mask: Option<&Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

pub(crate) fn log_softmax_rows(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub(crate) fn softmax(row: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = row.mapv(|v| (v - max).exp());
    let s = e.sum();
    e / s
}
