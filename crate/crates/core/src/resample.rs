//! Bicubic resampling and colour conversion.
//!
//! One kernel (Keys, `a = -0.5`) serves every scale change in the crate:
//! synthetic degradation, pseudo-pair generation and the network's global
//! residual path. Coordinates use half-pixel centres; downscaling stretches
//! the kernel by `1/scale` and renormalises the taps.

use crate::error::{ensure, Result};
use crate::nn::Tensor;

const KEYS_A: f64 = -0.5;

/// A planar `(channel, height, width)` image with nominal range `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(channels == 1 || channels == 3, "images have 1 or 3 channels, got {channels}");
        ensure!(height >= 1 && width >= 1, "image dimensions must be positive, got {height}x{width}");
        ensure!(
            data.len() == channels * height * width,
            "image data length {} does not match {channels}x{height}x{width}",
            data.len()
        );
        ensure!(data.iter().all(|v| v.is_finite()), "image contains non-finite values");
        Ok(Self { channels, height, width, data })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    fn from_raw(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Self { channels, height, width, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        ensure!(
            height >= 1 && width >= 1 && top + height <= self.height && left + width <= self.width,
            "crop {height}x{width}+{top}+{left} outside {}x{} image",
            self.height,
            self.width
        );
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            for y in top..top + height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + left..row + left + width]);
            }
        }
        Ok(Image::from_raw(self.channels, height, width, data))
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_raw([1, self.channels, self.height, self.width], self.data.clone())
    }

    /// Batch item `index` of a `(b, 1|3, h, w)` tensor.
    pub fn from_tensor(t: &Tensor, index: usize) -> Result<Image> {
        let [b, c, h, w] = t.shape();
        ensure!(index < b, "batch index {index} out of range for {b}");
        Image::new(c, h, w, t.batch_item(index).into_data())
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Image {
        Image::from_raw(self.channels, self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn clamp01(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Round-trip through 8-bit storage.
    pub fn quantize8(&self) -> Image {
        self.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
    }

    /// Translate by `(dy, dx)` with wrap-around.
    pub fn roll(&self, dy: usize, dx: usize) -> Image {
        let (h, w) = (self.height, self.width);
        let mut data = vec![0.0; self.data.len()];
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    data[(c * h + (y + dy) % h) * w + (x + dx) % w] = self.get(c, y, x);
                }
            }
        }
        Image::from_raw(self.channels, h, w, data)
    }
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn cubic_kernel(x: f64) -> f64 {
    let a = KEYS_A;
    let t = x.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Taps for one output sample: clamped source index and normalised weight.
pub type Taps = Vec<(usize, f64)>;

/// Per-output taps for mapping `in_len` samples to `out_len` samples with
/// `src = (dst + 0.5) / scale - 0.5 + offset`.
pub fn axis_taps(in_len: usize, out_len: usize, scale: f64, offset: f64) -> Vec<Taps> {
    let stretch = if scale < 1.0 { 1.0 / scale } else { 1.0 };
    let support = 2.0 * stretch;
    let last = in_len as i64 - 1;
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) / scale - 0.5 + offset;
            let lo = (center - support).floor() as i64;
            let hi = (center + support).ceil() as i64;
            let mut taps: Taps = Vec::with_capacity((hi - lo + 1) as usize);
            let mut total = 0.0;
            for j in lo..=hi {
                let w = cubic_kernel((j as f64 - center) / stretch);
                if w == 0.0 {
                    continue;
                }
                total += w;
                let idx = j.clamp(0, last) as usize;
                match taps.last_mut() {
                    Some((prev, pw)) if *prev == idx => *pw += w,
                    _ => taps.push((idx, w)),
                }
            }
            for (_, w) in &mut taps {
                *w /= total;
            }
            taps
        })
        .collect()
}

fn output_len(len: usize, scale: f64) -> usize {
    (len as f64 * scale + 0.5).floor() as usize
}

/// Bicubic resize by `scale` on both axes. Output dims are `round(dim * scale)`.
pub fn resize(img: &Image, scale: f64) -> Result<Image> {
    ensure!(scale.is_finite() && scale > 0.0, "resize scale must be positive, got {scale}");
    let out_h = output_len(img.height, scale);
    let out_w = output_len(img.width, scale);
    ensure!(
        out_h >= 1 && out_w >= 1,
        "resize of {}x{} by {scale} gives an empty image",
        img.height,
        img.width
    );
    resample(img, out_h, out_w, scale, 0.0, 0.0)
}

/// General scale-and-shift resampling: output pixel `(y, x)` reads the source
/// at `((y + 0.5) / scale - 0.5 + offset_y, (x + 0.5) / scale - 0.5 + offset_x)`.
pub fn resample(img: &Image, out_h: usize, out_w: usize, scale: f64, offset_y: f64, offset_x: f64) -> Result<Image> {
    ensure!(scale.is_finite() && scale > 0.0, "resample scale must be positive, got {scale}");
    ensure!(out_h >= 1 && out_w >= 1, "resample output must be non-empty");
    let taps_x = axis_taps(img.width, out_w, scale, offset_x);
    let taps_y = axis_taps(img.height, out_h, scale, offset_y);
    let rows = resample_rows(img, out_w, &taps_x);
    Ok(resample_cols(&rows, out_h, &taps_y))
}

/// Horizontal pass only.
pub fn resample_rows(img: &Image, out_w: usize, taps: &[Taps]) -> Image {
    let (c, h, w) = img.dims();
    let mut data = Vec::with_capacity(c * h * out_w);
    for row in img.data.chunks_exact(w) {
        for t in taps.iter().take(out_w) {
            let acc: f64 = t.iter().map(|&(j, wt)| row[j] as f64 * wt).sum();
            data.push(acc as f32);
        }
    }
    Image::from_raw(c, h, out_w, data)
}

/// Vertical pass only.
pub fn resample_cols(img: &Image, out_h: usize, taps: &[Taps]) -> Image {
    let (c, _, w) = img.dims();
    let mut data = vec![0.0f32; c * out_h * w];
    let mut acc = vec![0.0f64; w];
    for ch in 0..c {
        let plane = img.plane(ch);
        for (y, t) in taps.iter().take(out_h).enumerate() {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &(j, wt) in t {
                let src = &plane[j * w..(j + 1) * w];
                for (a, &s) in acc.iter_mut().zip(src) {
                    *a += s as f64 * wt;
                }
            }
            for (d, a) in data[(ch * out_h + y) * w..][..w].iter_mut().zip(&acc) {
                *d = *a as f32;
            }
        }
    }
    Image::from_raw(c, out_h, w, data)
}

/// Crop to the largest multiple of `s` in both dims, anchored top-left.
pub fn modcrop(img: &Image, s: usize) -> Result<Image> {
    ensure!(s >= 1, "modcrop factor must be positive");
    ensure!(
        img.height >= s && img.width >= s,
        "modcrop: {}x{} image smaller than factor {s}",
        img.height,
        img.width
    );
    let (h, w) = (img.height / s * s, img.width / s * s);
    if (h, w) == (img.height, img.width) {
        return Ok(img.clone());
    }
    img.crop(0, 0, h, w)
}

/// BT.601 studio-swing luma on `[0, 1]` RGB.
pub fn rgb_to_y(img: &Image) -> Result<Image> {
    ensure!(img.channels == 3, "rgb_to_y needs 3 channels, got {}", img.channels);
    let n = img.height * img.width;
    let (r, g, b) = (&img.data[..n], &img.data[n..2 * n], &img.data[2 * n..]);
    let data = (0..n)
        .map(|i| ((65.481 * r[i] as f64 + 128.553 * g[i] as f64 + 24.966 * b[i] as f64 + 16.0) / 255.0) as f32)
        .collect();
    Ok(Image::from_raw(1, img.height, img.width, data))
}

/// Luma of an RGB image; single-channel images are taken as luma already.
pub fn luma(img: &Image) -> Image {
    if img.channels == 1 {
        img.clone()
    } else {
        rgb_to_y(img).expect("three channels checked")
    }
}
