//! Forward and backward kernels. Convolution is lowered to im2col + sgemm.

use super::Tensor;
use crate::error::{ensure, Result};

/// `c = a * b + beta * c` for an `m x k` by `k x n` product with explicit
/// `(row, col)` strides on every operand.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_strides: (usize, usize),
    b: &[f32],
    b_strides: (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    let max_index = |rows: usize, cols: usize, (rs, cs): (usize, usize)| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= max_index(m, k, a_strides));
    assert!(b.len() >= max_index(k, n, b_strides));
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index sgemm can touch.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new(input: [usize; 4], weight: [usize; 4], stride: usize, padding: usize) -> Result<Self> {
        let [batch, in_c, h, w] = input;
        let [out_c, w_in_c, kh, kw] = weight;
        ensure!(stride >= 1, "conv2d stride must be positive");
        ensure!(
            in_c == w_in_c,
            "conv2d channel mismatch: input has {in_c}, weight expects {w_in_c}"
        );
        ensure!(kh >= 1 && kw >= 1 && out_c >= 1, "conv2d weight has an empty dimension: {weight:?}");
        let ph = h + 2 * padding;
        let pw = w + 2 * padding;
        ensure!(
            ph >= kh && pw >= kw,
            "conv2d output would be empty: input {h}x{w}, padding {padding}, kernel {kh}x{kw}"
        );
        let oh = (ph - kh) / stride + 1;
        let ow = (pw - kw) / stride + 1;
        Ok(Self { batch, in_c, h, w, out_c, kh, kw, stride, padding, oh, ow })
    }

    fn k(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn n(&self) -> usize {
        self.batch * self.oh * self.ow
    }

    /// Output columns `ox` whose tap `kx` lands inside the input row, as a half-open range.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        valid_range(self.ow, self.w, kx, self.stride, self.padding)
    }

    fn valid_rows(&self, ky: usize) -> (usize, usize) {
        valid_range(self.oh, self.h, ky, self.stride, self.padding)
    }
}

fn valid_range(out_len: usize, in_len: usize, tap: usize, stride: usize, padding: usize) -> (usize, usize) {
    // o*stride + tap - padding in [0, in_len)
    let lo = if padding > tap { (padding - tap).div_ceil(stride) } else { 0 };
    let hi = if in_len + padding > tap {
        ((in_len + padding - tap - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn im2col(input: &[f32], g: &ConvGeometry) -> Vec<f32> {
    let n = g.n();
    let ohw = g.oh * g.ow;
    let mut cols = vec![0.0f32; g.k() * n];
    for ci in 0..g.in_c {
        for ky in 0..g.kh {
            let (y0, y1) = g.valid_rows(ky);
            for kx in 0..g.kw {
                let (x0, x1) = g.valid_cols(kx);
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for ib in 0..g.batch {
                    let plane = &input[(ib * g.in_c + ci) * g.h * g.w..][..g.h * g.w];
                    for oy in y0..y1 {
                        let iy = oy * g.stride + ky - g.padding;
                        let src_row = &plane[iy * g.w..(iy + 1) * g.w];
                        let d = &mut dst[ib * ohw + oy * g.ow..][..g.ow];
                        if g.stride == 1 {
                            let ix0 = x0 + kx - g.padding;
                            d[x0..x1].copy_from_slice(&src_row[ix0..ix0 + (x1 - x0)]);
                        } else {
                            for ox in x0..x1 {
                                d[ox] = src_row[ox * g.stride + kx - g.padding];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f32], g: &ConvGeometry) -> Vec<f32> {
    let n = g.n();
    let ohw = g.oh * g.ow;
    let mut out = vec![0.0f32; g.batch * g.in_c * g.h * g.w];
    for ci in 0..g.in_c {
        for ky in 0..g.kh {
            let (y0, y1) = g.valid_rows(ky);
            for kx in 0..g.kw {
                let (x0, x1) = g.valid_cols(kx);
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * n..(row + 1) * n];
                for ib in 0..g.batch {
                    let plane = &mut out[(ib * g.in_c + ci) * g.h * g.w..][..g.h * g.w];
                    for oy in y0..y1 {
                        let iy = oy * g.stride + ky - g.padding;
                        let s = &src[ib * ohw + oy * g.ow..][..g.ow];
                        for ox in x0..x1 {
                            plane[iy * g.w + ox * g.stride + kx - g.padding] += s[ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2D cross-correlation with zero padding. `bias` must hold `out_c` values.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    ensure!(
        bias.numel() == g.out_c,
        "conv2d bias has {} values, expected {}",
        bias.numel(),
        g.out_c
    );
    let cols = im2col(input.data(), &g);
    let (k, n, ohw) = (g.k(), g.n(), g.oh * g.ow);
    let mut mat = vec![0.0f32; g.out_c * n];
    gemm(g.out_c, k, n, weight.data(), (k, 1), &cols, (n, 1), 0.0, &mut mat);

    let mut out = vec![0.0f32; g.batch * g.out_c * ohw];
    for co in 0..g.out_c {
        let b = bias.data()[co];
        for ib in 0..g.batch {
            let src = &mat[co * n + ib * ohw..][..ohw];
            let dst = &mut out[(ib * g.out_c + co) * ohw..][..ohw];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s + b;
            }
        }
    }
    Ok(Tensor::from_raw([g.batch, g.out_c, g.oh, g.ow], out))
}

pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
    need_input_grad: bool,
) -> Result<ConvGrads> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    ensure!(
        grad_out.shape() == [g.batch, g.out_c, g.oh, g.ow],
        "conv2d_backward gradient shape {:?} does not match output geometry",
        grad_out.shape()
    );
    let (k, n, ohw) = (g.k(), g.n(), g.oh * g.ow);

    let mut gmat = vec![0.0f32; g.out_c * n];
    let mut gbias = vec![0.0f32; g.out_c];
    for co in 0..g.out_c {
        let mut acc = 0.0f64;
        for ib in 0..g.batch {
            let src = &grad_out.data()[(ib * g.out_c + co) * ohw..][..ohw];
            gmat[co * n + ib * ohw..][..ohw].copy_from_slice(src);
            acc += src.iter().map(|&v| v as f64).sum::<f64>();
        }
        gbias[co] = acc as f32;
    }

    let cols = im2col(input.data(), &g);
    let mut gweight = vec![0.0f32; g.out_c * k];
    gemm(g.out_c, n, k, &gmat, (n, 1), &cols, (1, n), 0.0, &mut gweight);

    let ginput = if need_input_grad {
        let mut gcols = vec![0.0f32; k * n];
        gemm(k, g.out_c, n, weight.data(), (1, k), &gmat, (n, 1), 0.0, &mut gcols);
        Some(Tensor::from_raw(input.shape(), col2im(&gcols, &g)))
    } else {
        None
    };

    Ok(ConvGrads {
        input: ginput,
        weight: Tensor::from_raw(weight.shape(), gweight),
        bias: Tensor::from_raw(bias_shape(g.out_c), gbias),
    })
}

pub fn bias_shape(out_c: usize) -> [usize; 4] {
    [1, out_c, 1, 1]
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Subgradient convention: zero at the kink.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_raw(input.shape(), data)
}

/// `(b, c*r*r, h, w) -> (b, c, r*h, r*w)`, with
/// `out[c, r*y+dy, r*x+dx] = in[c*r*r + dy*r + dx, y, x]`.
pub fn pixel_shuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let [b, c_in, h, w] = input.shape();
    ensure!(r >= 1, "pixel_shuffle factor must be positive");
    ensure!(
        c_in % (r * r) == 0,
        "pixel_shuffle: {c_in} channels not divisible by {}",
        r * r
    );
    let c = c_in / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0f32; input.numel()];
    let src = input.data();
    for ib in 0..b {
        for ic in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let plane = &src[((ib * c_in) + ic * r * r + dy * r + dx) * h * w..][..h * w];
                    let base = (ib * c + ic) * oh * ow;
                    for y in 0..h {
                        let row = base + (r * y + dy) * ow + dx;
                        for x in 0..w {
                            out[row + r * x] = plane[y * w + x];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_raw([b, c, oh, ow], out))
}

/// Inverse of [`pixel_shuffle`]; also its backward pass.
pub fn pixel_unshuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let [b, c, oh, ow] = input.shape();
    ensure!(r >= 1, "pixel_unshuffle factor must be positive");
    ensure!(
        oh % r == 0 && ow % r == 0,
        "pixel_unshuffle: {oh}x{ow} not divisible by {r}"
    );
    let (h, w) = (oh / r, ow / r);
    let c_out = c * r * r;
    let mut out = vec![0.0f32; input.numel()];
    let src = input.data();
    for ib in 0..b {
        for ic in 0..c {
            let base = (ib * c + ic) * oh * ow;
            for dy in 0..r {
                for dx in 0..r {
                    let plane = &mut out[((ib * c_out) + ic * r * r + dy * r + dx) * h * w..][..h * w];
                    for y in 0..h {
                        let row = base + (r * y + dy) * ow + dx;
                        for x in 0..w {
                            plane[y * w + x] = src[row + r * x];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_raw([b, c_out, h, w], out))
}

/// Mean squared error, accumulated in `f64`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    ensure!(
        pred.shape() == target.shape(),
        "mse_loss shape mismatch: {:?} vs {:?}",
        pred.shape(),
        target.shape()
    );
    ensure!(pred.numel() > 0, "mse_loss on empty tensors");
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    Ok(sum / pred.numel() as f64)
}

/// `d/d pred` of [`mse_loss`], scaled by the upstream gradient.
pub fn mse_backward(pred: &Tensor, target: &Tensor, upstream: f64) -> Tensor {
    let scale = 2.0 * upstream / pred.numel() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| ((p as f64 - t as f64) * scale) as f32)
        .collect();
    Tensor::from_raw(pred.shape(), data)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    ensure!(
        a.shape() == b.shape(),
        "add shape mismatch: {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_raw(a.shape(), data))
}
