//! Stride-1, "same"-padded 2-D convolution lowered to GEMM via im2col.
//!
//! The column buffer is built for a band of output rows at a time so memory
//! stays bounded at full image resolution (a 5×5 conv over 32 channels at
//! 1408×512 would otherwise need a 577M-element buffer).

use super::gemm::{gemm, View, ViewMut};
use super::{Real, Result, Tensor, TensorError};

/// Upper bound on column-buffer elements per band.
const COL_BUDGET: usize = 1 << 22;

/// Gradients of a parameterized layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad<T> {
    pub d_weights: Tensor<T>,
    pub d_bias: Vec<T>,
    /// `None` when the caller did not ask for the input gradient.
    pub d_input: Option<Tensor<T>>,
}

struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    out_channels: usize,
    kernel: usize,
}

impl Geometry {
    fn check<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias_len: usize) -> Result<Self> {
        let (channels, height, width) = input.dims3("conv2d")?;
        let [out_channels, in_channels, kh, kw] = weights.shape()[..] else {
            return Err(TensorError::Rank {
                op: "conv2d",
                rank: 4,
                shape: weights.shape().to_vec(),
            });
        };
        if in_channels != channels {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                expected: vec![out_channels, channels, kh, kw],
                got: weights.shape().to_vec(),
            });
        }
        if kh != kw || kh % 2 == 0 {
            return Err(TensorError::Invalid {
                op: "conv2d",
                reason: format!("kernel must be square and odd, got {kh}×{kw}"),
            });
        }
        if bias_len != out_channels {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                expected: vec![out_channels],
                got: vec![bias_len],
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            out_channels,
            kernel: kh,
        })
    }

    fn taps(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn band_rows(&self) -> usize {
        (COL_BUDGET / (self.taps() * self.width).max(1)).clamp(1, self.height.max(1))
    }
}

/// Valid destination x-range for a horizontal tap offset `dx` (padding `pad`).
fn x_range(width: usize, dx: usize, pad: usize) -> (usize, usize) {
    let x0 = pad.saturating_sub(dx).min(width);
    let x1 = (width + pad).saturating_sub(dx).min(width);
    (x0, x1.max(x0))
}

fn im2col<T: Real>(input: &[T], g: &Geometry, r0: usize, r1: usize, col: &mut [T]) {
    let (k, w, h) = (g.kernel, g.width, g.height);
    let pad = k / 2;
    let n = (r1 - r0) * w;
    for c in 0..g.channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for dy in 0..k {
            for dx in 0..k {
                let row = (c * k + dy) * k + dx;
                let dst = &mut col[row * n..(row + 1) * n];
                let (x0, x1) = x_range(w, dx, pad);
                for y in r0..r1 {
                    let out = &mut dst[(y - r0) * w..(y - r0 + 1) * w];
                    let sy = y + dy;
                    if sy < pad || sy - pad >= h {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(sy - pad) * w..(sy - pad + 1) * w];
                    out.fill(T::zero());
                    if x1 > x0 {
                        out[x0..x1].copy_from_slice(&src[x0 + dx - pad..x1 + dx - pad]);
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(col: &[T], g: &Geometry, r0: usize, r1: usize, d_input: &mut [T]) {
    let (k, w, h) = (g.kernel, g.width, g.height);
    let pad = k / 2;
    let n = (r1 - r0) * w;
    for c in 0..g.channels {
        let plane = &mut d_input[c * h * w..(c + 1) * h * w];
        for dy in 0..k {
            for dx in 0..k {
                let row = (c * k + dy) * k + dx;
                let src = &col[row * n..(row + 1) * n];
                let (x0, x1) = x_range(w, dx, pad);
                for y in r0..r1 {
                    let sy = y + dy;
                    if sy < pad || sy - pad >= h || x1 <= x0 {
                        continue;
                    }
                    let band = &src[(y - r0) * w..(y - r0 + 1) * w];
                    let dst = &mut plane[(sy - pad) * w..(sy - pad + 1) * w];
                    for (d, s) in dst[x0 + dx - pad..x1 + dx - pad].iter_mut().zip(&band[x0..x1]) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

/// `out[o,y,x] = bias[o] + Σ in[c, y+dy−k/2, x+dx−k/2]·w[o,c,dy,dx]`, zero outside bounds.
pub fn conv2d<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let g = Geometry::check(input, weights, bias.len())?;
    let (h, w) = (g.height, g.width);
    let plane = h * w;
    let taps = g.taps();
    let mut out = Tensor::zeros(&[g.out_channels, h, w]);
    let band = g.band_rows();
    let mut col = vec![T::zero(); taps * band * w];
    let wv = View::row_major(weights.data(), g.out_channels, taps);
    for r0 in (0..h).step_by(band) {
        let r1 = (r0 + band).min(h);
        let n = (r1 - r0) * w;
        im2col(input.data(), &g, r0, r1, &mut col[..taps * n]);
        let dst = ViewMut {
            data: &mut out.data_mut()[r0 * w..],
            rows: g.out_channels,
            cols: n,
            rs: plane,
            cs: 1,
        };
        gemm(T::one(), wv, View::row_major(&col[..taps * n], taps, n), T::zero(), dst);
    }
    for (o, &b) in bias.iter().enumerate() {
        out.channel_mut(o).iter_mut().for_each(|v| *v += b);
    }
    Ok(out)
}

/// Exact gradients of [`conv2d`] given the upstream gradient of its output.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    upstream: &Tensor<T>,
    need_input_grad: bool,
) -> Result<LayerGrad<T>> {
    let g = Geometry::check(input, weights, weights.shape()[0])?;
    let (h, w) = (g.height, g.width);
    let plane = h * w;
    upstream.check_shape("conv2d_backward", &[g.out_channels, h, w])?;
    let taps = g.taps();

    let d_bias = (0..g.out_channels)
        .map(|o| upstream.channel(o).iter().copied().sum())
        .collect();
    let mut d_weights = Tensor::zeros(weights.shape());
    let mut d_input = need_input_grad.then(|| Tensor::zeros(input.shape()));

    let band = g.band_rows();
    let mut col = vec![T::zero(); taps * band * w];
    let wv = View::row_major(weights.data(), g.out_channels, taps);
    for r0 in (0..h).step_by(band) {
        let r1 = (r0 + band).min(h);
        let n = (r1 - r0) * w;
        let gv = View {
            data: &upstream.data()[r0 * w..],
            rows: g.out_channels,
            cols: n,
            rs: plane,
            cs: 1,
        };
        im2col(input.data(), &g, r0, r1, &mut col[..taps * n]);
        gemm(
            T::one(),
            gv,
            View::row_major(&col[..taps * n], taps, n).t(),
            T::one(),
            ViewMut::row_major(d_weights.data_mut(), g.out_channels, taps),
        );
        if let Some(d_in) = d_input.as_mut() {
            let dcol = &mut col[..taps * n];
            gemm(T::one(), wv.t(), gv, T::zero(), ViewMut::row_major(dcol, taps, n));
            col2im_add(dcol, &g, r0, r1, d_in.data_mut());
        }
    }
    Ok(LayerGrad {
        d_weights,
        d_bias,
        d_input,
    })
}
