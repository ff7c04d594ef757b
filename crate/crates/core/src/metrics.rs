//! PSNR and SSIM on luma, plus tOF with a block-matching flow estimator.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::resample::{luma, Image};
use crate::video::VideoClip;

pub const PSNR_CAP_DB: f64 = 100.0;
pub const FLOW_BLOCK: usize = 8;
pub const FLOW_RADIUS: i32 = 4;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub psnr_y: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub psnr_y: f64,
    pub ssim: f64,
    /// `None` for single-frame clips, where no flow pair exists.
    pub tof: Option<f64>,
    pub border_crop: usize,
    pub per_frame: Vec<FrameScore>,
}

fn same_dims(a: &Image, b: &Image) -> Result<()> {
    ensure!(a.dims() == b.dims(), "image dims differ: {:?} vs {:?}", a.dims(), b.dims());
    Ok(())
}

fn crop_border(img: &Image, border: usize) -> Result<Image> {
    let (_, h, w) = img.dims();
    ensure!(2 * border < h.min(w), "border crop {border} too large for {h}x{w}");
    img.crop(border, border, h - 2 * border, w - 2 * border)
}

/// PSNR of the luma channels after removing `border_crop` pixels per side.
pub fn psnr_y(reference: &Image, test: &Image, border_crop: usize) -> Result<f64> {
    same_dims(reference, test)?;
    let a = crop_border(&luma(reference), border_crop)?;
    let b = crop_border(&luma(test), border_crop)?;
    let mse = a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>()
        / a.data().len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Separable valid-mode filtering of a single plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all valid 11x11 Gaussian windows. RGB inputs are reduced
/// to luma first.
pub fn ssim(reference: &Image, test: &Image) -> Result<f64> {
    same_dims(reference, test)?;
    let (_, h, w) = reference.dims();
    ensure!(h >= SSIM_WINDOW && w >= SSIM_WINDOW, "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}");
    let a: Vec<f64> = luma(reference).data().iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = luma(test).data().iter().map(|&v| v as f64).collect();
    let k = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(&a, h, w, &k);
    let mu_b = filter_valid(&b, h, w, &k);
    let aa = filter_valid(&prod(&a, &a), h, w, &k);
    let bb = filter_valid(&prod(&b, &b), h, w, &k);
    let ab = filter_valid(&prod(&a, &b), h, w, &k);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Dense integer flow, one vector per pixel, broadcast from its block.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub u: Vec<i32>,
    pub v: Vec<i32>,
}

impl FlowField {
    pub fn at(&self, y: usize, x: usize) -> (i32, i32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }
}

/// Block matching from `a` to `b`: each 8x8 block of `a` (the last row and
/// column of blocks may be smaller) finds the displacement `(u, v)` minimising
/// SAD against `b`, with `u` horizontal. Candidates falling outside `b` are
/// skipped.
pub fn estimate_flow(a: &Image, b: &Image) -> Result<FlowField> {
    same_dims(a, b)?;
    let (la, lb) = (luma(a), luma(b));
    let (_, h, w) = la.dims();
    let (pa, pb) = (la.plane(0), lb.plane(0));
    let mut flow = FlowField { height: h, width: w, u: vec![0; h * w], v: vec![0; h * w] };
    let mut candidates = Vec::new();
    for v in -FLOW_RADIUS..=FLOW_RADIUS {
        for u in -FLOW_RADIUS..=FLOW_RADIUS {
            candidates.push((u, v));
        }
    }
    candidates.sort_by_key(|&(u, v)| (u.abs() + v.abs(), u, v));

    for by in (0..h).step_by(FLOW_BLOCK) {
        for bx in (0..w).step_by(FLOW_BLOCK) {
            let bh = FLOW_BLOCK.min(h - by);
            let bw = FLOW_BLOCK.min(w - bx);
            let mut best = (f64::INFINITY, 0, 0);
            for &(u, v) in &candidates {
                let (ty, tx) = (by as i64 + v as i64, bx as i64 + u as i64);
                if ty < 0 || tx < 0 || ty as usize + bh > h || tx as usize + bw > w {
                    continue;
                }
                let (ty, tx) = (ty as usize, tx as usize);
                let mut sad = 0.0f64;
                for y in 0..bh {
                    let ra = &pa[(by + y) * w + bx..][..bw];
                    let rb = &pb[(ty + y) * w + tx..][..bw];
                    sad += ra.iter().zip(rb).map(|(&p, &q)| (p - q).abs() as f64).sum::<f64>();
                }
                // Candidates are pre-sorted by the tie-break order, so only a
                // strictly smaller cost replaces the incumbent.
                if sad < best.0 {
                    best = (sad, u, v);
                }
            }
            for y in by..by + bh {
                for x in bx..bx + bw {
                    flow.u[y * w + x] = best.1;
                    flow.v[y * w + x] = best.2;
                }
            }
        }
    }
    Ok(flow)
}

fn check_clips(reference: &VideoClip, test: &VideoClip) -> Result<()> {
    ensure!(
        reference.len() == test.len(),
        "frame counts differ: {} vs {}",
        reference.len(),
        test.len()
    );
    ensure!(reference.dims() == test.dims(), "clip dims differ: {:?} vs {:?}", reference.dims(), test.dims());
    Ok(())
}

/// Mean L1 difference between flows estimated on consecutive reference frames
/// and on consecutive test frames, over pixels at least `border_crop` from the
/// frame edge.
pub fn tof(reference: &VideoClip, test: &VideoClip, border_crop: usize) -> Result<f64> {
    check_clips(reference, test)?;
    ensure!(reference.len() >= 2, "tOF needs at least two frames");
    let (_, h, w) = reference.dims();
    ensure!(2 * border_crop < h.min(w), "border crop {border_crop} too large for {h}x{w}");
    let (r, t) = (reference.frames(), test.frames());
    let mut total = 0.0f64;
    let mut count = 0usize;
    for i in 0..r.len() - 1 {
        let fr = estimate_flow(&r[i], &r[i + 1])?;
        let ft = estimate_flow(&t[i], &t[i + 1])?;
        for y in border_crop..h - border_crop {
            for x in border_crop..w - border_crop {
                let (ur, vr) = fr.at(y, x);
                let (ut, vt) = ft.at(y, x);
                total += ((ur - ut).abs() + (vr - vt).abs()) as f64;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// PSNR-Y and SSIM per frame (both on the border-cropped luma) plus tOF.
pub fn evaluate(reference: &VideoClip, test: &VideoClip, border_crop: usize) -> Result<EvalResult> {
    check_clips(reference, test)?;
    let mut per_frame = Vec::with_capacity(reference.len());
    for (r, t) in reference.frames().iter().zip(test.frames()) {
        let psnr = psnr_y(r, t, border_crop)?;
        let s = ssim(&crop_border(&luma(r), border_crop)?, &crop_border(&luma(t), border_crop)?)?;
        per_frame.push(FrameScore { psnr_y: psnr, ssim: s });
    }
    let n = per_frame.len() as f64;
    let tof = if reference.len() >= 2 { Some(tof(reference, test, border_crop)?) } else { None };
    Ok(EvalResult {
        psnr_y: per_frame.iter().map(|f| f.psnr_y).sum::<f64>() / n,
        ssim: per_frame.iter().map(|f| f.ssim).sum::<f64>() / n,
        tof,
        border_crop,
        per_frame,
    })
}
