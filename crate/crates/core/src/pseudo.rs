//! Pseudo training pairs cut from restored HR frames: crop a patch, rescale
//! it by a drawn factor to get the target, then downscale the target by the
//! SR factor to get the input.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::resample::{modcrop, resize, Image};
use crate::video::VideoClip;

/// How the rescaling factor for pseudo targets is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScaleMode {
    /// Factor pinned to 1: targets are raw crops.
    None,
    Fixed { factor: f64 },
    /// Uniform downscale factor in `[lo, hi]`.
    Random { lo: f64, hi: f64 },
    /// Uniform upscale factor in `[lo, hi]`, both at least 1.
    Upscale { lo: f64, hi: f64 },
}

impl ScaleMode {
    pub fn range(&self) -> (f64, f64) {
        match *self {
            ScaleMode::None => (1.0, 1.0),
            ScaleMode::Fixed { factor } => (factor, factor),
            ScaleMode::Random { lo, hi } | ScaleMode::Upscale { lo, hi } => (lo, hi),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.range();
        ensure!(lo.is_finite() && hi.is_finite() && lo <= hi, "scale range [{lo}, {hi}] is empty");
        match self {
            ScaleMode::None => {}
            ScaleMode::Fixed { .. } | ScaleMode::Random { .. } => {
                ensure!(lo > 0.0 && hi <= 1.0, "downscale factors must lie in (0, 1], got [{lo}, {hi}]")
            }
            ScaleMode::Upscale { .. } => ensure!(lo >= 1.0, "upscale factors must be >= 1, got [{lo}, {hi}]"),
        }
        Ok(())
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        let (lo, hi) = self.range();
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..=hi)
        }
    }
}

impl Default for ScaleMode {
    fn default() -> Self {
        ScaleMode::Random { lo: 0.8, hi: 0.95 }
    }
}

impl fmt::Display for ScaleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleMode::None => write!(f, "none"),
            ScaleMode::Fixed { factor } => write!(f, "fixed:{factor}"),
            ScaleMode::Random { lo, hi } => write!(f, "random:{lo}:{hi}"),
            ScaleMode::Upscale { lo, hi } => write!(f, "upscale:{lo}:{hi}"),
        }
    }
}

/// Parses `none`, `fixed:F`, `random:LO:HI` and `upscale:LO:HI`.
impl FromStr for ScaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| -> Result<f64> {
            p.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad number `{p}` in scale mode `{s}`")))
        };
        let mode = match parts.as_slice() {
            ["none"] => ScaleMode::None,
            ["fixed", f] => ScaleMode::Fixed { factor: num(f)? },
            ["random", lo, hi] => ScaleMode::Random { lo: num(lo)?, hi: num(hi)? },
            ["upscale", lo, hi] => ScaleMode::Upscale { lo: num(lo)?, hi: num(hi)? },
            _ => return Err(Error::invalid(format!("unknown scale mode `{s}`"))),
        };
        mode.validate()?;
        Ok(mode)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Side of the square crop taken from a restored frame.
    pub patch_size_hr: usize,
    pub mode: ScaleMode,
    pub sr_scale: usize,
    /// Frames per network input window (odd).
    pub window: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { patch_size_hr: 64, mode: ScaleMode::default(), sr_scale: 4, window: 3, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn scale_min(&self) -> f64 {
        self.mode.range().0
    }

    pub fn scale_max(&self) -> f64 {
        self.mode.range().1
    }

    /// Same sampler, drawing factors according to `mode`.
    pub fn make_scale_mode(self, mode: ScaleMode) -> Result<Self> {
        let cfg = Self { mode, ..self };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.mode.validate()?;
        ensure!(self.sr_scale >= 1, "sr_scale must be positive");
        ensure!(self.window % 2 == 1, "window must be odd, got {}", self.window);
        let smallest = (self.patch_size_hr as f64 * self.scale_min() + 0.5).floor() as usize;
        ensure!(
            smallest >= self.sr_scale,
            "patch_size_hr {} at factor {} leaves less than one LR pixel",
            self.patch_size_hr,
            self.scale_min()
        );
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub top: usize,
    pub left: usize,
    pub size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub frame_index: usize,
    pub crop: CropRect,
    pub downscale_factor: f64,
}

/// A pseudo `(input, target)` pair. `input` holds the whole network window;
/// its centre entry is the pseudo LR input proper.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoPair {
    pub input: Vec<Image>,
    pub target: Image,
    pub provenance: Provenance,
}

impl PseudoPair {
    pub fn input_center(&self) -> &Image {
        &self.input[self.input.len() / 2]
    }
}

fn check_pool(restored: &VideoClip, cfg: &SamplerConfig, centers: &Range<usize>) -> Result<()> {
    cfg.validate()?;
    let (_, h, w) = restored.dims();
    ensure!(
        h >= cfg.patch_size_hr && w >= cfg.patch_size_hr,
        "restored frames {h}x{w} are smaller than patch_size_hr {}",
        cfg.patch_size_hr
    );
    ensure!(
        centers.start < centers.end && centers.end <= restored.len(),
        "frame range {centers:?} invalid for a {}-frame clip",
        restored.len()
    );
    Ok(())
}

fn pair_at(restored: &VideoClip, cfg: &SamplerConfig, factor: f64, frame_index: usize, rng: &mut impl Rng) -> Result<PseudoPair> {
    let (_, h, w) = restored.dims();
    let p = cfg.patch_size_hr;
    let top = rng.gen_range(0..=h - p);
    let left = rng.gen_range(0..=w - p);
    let s = cfg.sr_scale as f64;

    let mut targets = Vec::with_capacity(cfg.window);
    for f in restored.window(frame_index, cfg.window) {
        let patch = f.crop(top, left, p, p)?;
        targets.push(modcrop(&resize(&patch, factor)?, cfg.sr_scale)?);
    }
    let input = targets
        .iter()
        .map(|y| resize(y, 1.0 / s))
        .collect::<Result<Vec<_>>>()?;
    let target = targets.swap_remove(cfg.window / 2);
    Ok(PseudoPair {
        input,
        target,
        provenance: Provenance { frame_index, crop: CropRect { top, left, size: p }, downscale_factor: factor },
    })
}

/// Draw one pair: factor, then frame, then crop origin.
pub fn sample_pair(restored: &VideoClip, cfg: &SamplerConfig, rng: &mut impl Rng) -> Result<PseudoPair> {
    Ok(sample_batch(restored, cfg, rng, 1)?.remove(0))
}

/// Draw `batch_size` pairs from one frame sharing one rescale factor, so
/// they stack densely. Each pair gets its own crop.
pub fn sample_batch(restored: &VideoClip, cfg: &SamplerConfig, rng: &mut impl Rng, batch_size: usize) -> Result<Vec<PseudoPair>> {
    sample_batch_from(restored, 0..restored.len(), cfg, rng, batch_size)
}

/// As [`sample_batch`], with centre frames restricted to `centers`.
pub fn sample_batch_from(
    restored: &VideoClip,
    centers: Range<usize>,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
    batch_size: usize,
) -> Result<Vec<PseudoPair>> {
    ensure!(batch_size >= 1, "batch_size must be at least 1");
    check_pool(restored, cfg, &centers)?;
    let factor = cfg.mode.draw(rng);
    let frame_index = rng.gen_range(centers);
    (0..batch_size).map(|_| pair_at(restored, cfg, factor, frame_index, rng)).collect()
}
