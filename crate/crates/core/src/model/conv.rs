//! Residual 1-D convolution block.
//!
//! Main path: conv(k=3, stride 2) → norm → ReLU → conv(k=3, stride 1) → norm.
//! Shortcut: width-1 linear map applied to every second input frame.
//! Output: ReLU(main + shortcut), half the input length.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};

use super::layers::{self, NormCache};
use super::params::ConvBlockParams;

pub(crate) const KERNEL: usize = 3;
const PAD: usize = 1;

pub(crate) fn conv_out_len(len: usize, stride: usize) -> usize {
    if len == 0 {
        0
    } else {
        (len + 2 * PAD - KERNEL) / stride + 1
    }
}

/// `T_out × (KERNEL·C_in)` patch matrix, zero outside the signal.
fn im2col(x: ArrayView2<'_, f64>, stride: usize) -> Array2<f64> {
    let (len, cin) = x.dim();
    let out_len = conv_out_len(len, stride);
    let mut cols = Array2::zeros((out_len, KERNEL * cin));
    for t in 0..out_len {
        for k in 0..KERNEL {
            let src = (stride * t + k) as isize - PAD as isize;
            if src >= 0 && (src as usize) < len {
                cols.slice_mut(s![t, k * cin..(k + 1) * cin])
                    .assign(&x.row(src as usize));
            }
        }
    }
    cols
}

fn col2im(dcols: ArrayView2<'_, f64>, len: usize, cin: usize, stride: usize) -> Array2<f64> {
    let mut dx = Array2::zeros((len, cin));
    for t in 0..dcols.nrows() {
        for k in 0..KERNEL {
            let src = (stride * t + k) as isize - PAD as isize;
            if src >= 0 && (src as usize) < len {
                let mut row = dx.row_mut(src as usize);
                row += &dcols.slice(s![t, k * cin..(k + 1) * cin]);
            }
        }
    }
    dx
}

fn flat_kernel(w: &Array3<f64>) -> ArrayView2<'_, f64> {
    let (k, cin, cout) = w.dim();
    w.view()
        .into_shape_with_order((k * cin, cout))
        .expect("conv weights are contiguous")
}

pub(crate) struct ConvCache {
    cols: Array2<f64>,
}

pub(crate) fn conv1d(
    x: ArrayView2<'_, f64>,
    w: &Array3<f64>,
    b: &ndarray::Array1<f64>,
    stride: usize,
) -> (Array2<f64>, ConvCache) {
    let cols = im2col(x, stride);
    let mut y = cols.dot(&flat_kernel(w));
    y += b;
    (y, ConvCache { cols })
}

fn conv1d_backward(
    cache: &ConvCache,
    w: &Array3<f64>,
    dy: ArrayView2<'_, f64>,
    in_len: usize,
    stride: usize,
    dw: &mut Array3<f64>,
    db: &mut ndarray::Array1<f64>,
) -> Array2<f64> {
    let (k, cin, cout) = dw.dim();
    {
        let mut dw_flat = dw
            .view_mut()
            .into_shape_with_order((k * cin, cout))
            .expect("contiguous");
        ndarray::linalg::general_mat_mul(1.0, &cache.cols.t(), &dy, 1.0, &mut dw_flat);
    }
    *db += &dy.sum_axis(Axis(0));
    let dcols = dy.dot(&flat_kernel(w).t());
    col2im(dcols.view(), in_len, cin, stride)
}

pub(crate) struct BlockCache {
    in_len: usize,
    x_sub: Array2<f64>,
    conv1: ConvCache,
    norm1: NormCache,
    act1: Array2<f64>,
    conv2: ConvCache,
    norm2: NormCache,
    out: Array2<f64>,
}

pub(crate) fn block_forward(
    x: ArrayView2<'_, f64>,
    p: &ConvBlockParams,
) -> (Array2<f64>, BlockCache) {
    let (h1, conv1) = conv1d(x, &p.conv1_w, &p.conv1_b, 2);
    let (n1, norm1) = layers::layer_norm(h1.view(), &p.norm1_g, &p.norm1_b);
    let act1 = layers::relu(n1);
    let (h2, conv2) = conv1d(act1.view(), &p.conv2_w, &p.conv2_b, 1);
    let (n2, norm2) = layers::layer_norm(h2.view(), &p.norm2_g, &p.norm2_b);
    let x_sub = x.slice(s![..;2, ..]).to_owned();
    let short = layers::linear(x_sub.view(), &p.short_w, Some(&p.short_b));
    let out = layers::relu(n2 + short);
    let cache = BlockCache {
        in_len: x.nrows(),
        x_sub,
        conv1,
        norm1,
        act1,
        conv2,
        norm2,
        out: out.clone(),
    };
    (out, cache)
}

pub(crate) fn block_backward(
    cache: &BlockCache,
    p: &ConvBlockParams,
    dout: Array2<f64>,
    g: &mut ConvBlockParams,
) -> Array2<f64> {
    let dsum = layers::relu_backward(cache.out.view(), dout);
    // shortcut
    let dx_sub = layers::linear_backward(
        cache.x_sub.view(),
        &p.short_w,
        dsum.view(),
        &mut g.short_w,
        Some(&mut g.short_b),
    );
    // main path
    let dh2 = layers::layer_norm_backward(
        &cache.norm2,
        &p.norm2_g,
        dsum.view(),
        &mut g.norm2_g,
        &mut g.norm2_b,
    );
    let dact1 = conv1d_backward(
        &cache.conv2,
        &p.conv2_w,
        dh2.view(),
        cache.act1.nrows(),
        1,
        &mut g.conv2_w,
        &mut g.conv2_b,
    );
    let dn1 = layers::relu_backward(cache.act1.view(), dact1);
    let dh1 = layers::layer_norm_backward(
        &cache.norm1,
        &p.norm1_g,
        dn1.view(),
        &mut g.norm1_g,
        &mut g.norm1_b,
    );
    let mut dx = conv1d_backward(
        &cache.conv1,
        &p.conv1_w,
        dh1.view(),
        cache.in_len,
        2,
        &mut g.conv1_w,
        &mut g.conv1_b,
    );
    for (t, row) in dx_sub.rows().into_iter().enumerate() {
        let mut r = dx.row_mut(2 * t);
        r += &row;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::Init;

    #[test]
    fn output_lengths() {
        assert_eq!(conv_out_len(16, 2), 8);
        assert_eq!(conv_out_len(16, 1), 16);
        assert_eq!(conv_out_len(1, 2), 1);
        assert_eq!(conv_out_len(0, 2), 0);
    }

    #[test]
    fn block_halves_length() {
        let mut init = Init::new(3);
        let p = ConvBlockParams {
            conv1_w: init.conv(3, 2, 4),
            conv1_b: init.uniform1(4, 6),
            norm1_g: ndarray::Array1::ones(4),
            norm1_b: ndarray::Array1::zeros(4),
            conv2_w: init.conv(3, 4, 4),
            conv2_b: init.uniform1(4, 12),
            norm2_g: ndarray::Array1::ones(4),
            norm2_b: ndarray::Array1::zeros(4),
            short_w: init.linear(2, 4),
            short_b: init.uniform1(4, 2),
        };
        let x = Array2::from_shape_fn((16, 2), |(t, c)| ((t * 3 + c) as f64).sin());
        let (y, _) = block_forward(x.view(), &p);
        assert_eq!(y.dim(), (8, 4));
        let (empty, _) = block_forward(Array2::zeros((0, 2)).view(), &p);
        assert_eq!(empty.dim(), (0, 4));

        let zero = p.zeros_like();
        let (y0, _) = block_forward(x.view(), &zero);
        assert!(y0.iter().all(|&v| v == 0.0));
    }
}
