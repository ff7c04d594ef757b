//! Procedural test clips with controllable cross-scale patch recurrence.
//!
//! Frames are rendered from a texture atlas drawn at `atlas_density` atlas
//! pixels per HR pixel, viewed through a zooming and panning camera. With
//! high recurrence every frame views one shared atlas, so zooming makes the
//! same structures reappear at different scales; with low recurrence each
//! frame views its own independently drawn atlas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::resample::{luma, resample, resize, Image};
use crate::video::VideoClip;

pub const LR_FACTOR: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recurrence {
    High,
    Low,
}

/// Camera pose for one frame. `pan_y`/`pan_x` move the view centre, in HR
/// pixels at zoom 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub zoom: f64,
    pub pan_y: f64,
    pub pan_x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub hr_size: usize,
    pub recurrence: Recurrence,
    pub camera_path: Vec<CameraPose>,
    pub atlas_density: f64,
    /// Side of the random grid upsampled into the atlas background.
    pub noise_cells: usize,
    pub num_primitives: usize,
}

impl SceneSpec {
    /// Linear zoom from `zoom_from` to `zoom_to` without panning.
    pub fn zoom_sweep(
        seed: u64,
        num_frames: usize,
        hr_size: usize,
        recurrence: Recurrence,
        zoom_from: f64,
        zoom_to: f64,
    ) -> Self {
        let steps = num_frames.saturating_sub(1).max(1) as f64;
        let camera_path = (0..num_frames)
            .map(|t| CameraPose { zoom: zoom_from + (zoom_to - zoom_from) * t as f64 / steps, pan_y: 0.0, pan_x: 0.0 })
            .collect();
        Self::with_path(seed, hr_size, recurrence, camera_path)
    }

    /// Zoom sweep with random endpoints and pan drift drawn from `rng`: start
    /// zoom in `[0.8, 1.4)`, end zoom 0.7 to 1.4 times that, pan up to 8 px.
    pub fn random_sweep(rng: &mut impl Rng, seed: u64, num_frames: usize, hr_size: usize, recurrence: Recurrence) -> Self {
        let z0 = rng.gen_range(0.8..1.4);
        let z1 = z0 * rng.gen_range(0.7..1.4);
        let spec = Self::zoom_sweep(seed, num_frames, hr_size, recurrence, z0, z1);
        let (py, px) = (rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
        spec.with_pan_drift(py, px)
    }

    /// Every frame at zoom 1 with no pan.
    pub fn static_scene(seed: u64, num_frames: usize, hr_size: usize) -> Self {
        let camera_path = vec![CameraPose { zoom: 1.0, pan_y: 0.0, pan_x: 0.0 }; num_frames];
        Self::with_path(seed, hr_size, Recurrence::High, camera_path)
    }

    pub fn with_path(seed: u64, hr_size: usize, recurrence: Recurrence, camera_path: Vec<CameraPose>) -> Self {
        let primitives = (hr_size * hr_size / 700).max(12);
        Self {
            seed,
            hr_size,
            recurrence,
            camera_path,
            atlas_density: 2.0,
            noise_cells: (hr_size / 8).max(4),
            num_primitives: primitives,
        }
    }

    /// Adds a linear pan ending at `(end_y, end_x)` on the last frame.
    pub fn with_pan_drift(mut self, end_y: f64, end_x: f64) -> Self {
        let steps = self.camera_path.len().saturating_sub(1).max(1) as f64;
        for (t, pose) in self.camera_path.iter_mut().enumerate() {
            pose.pan_y += end_y * t as f64 / steps;
            pose.pan_x += end_x * t as f64 / steps;
        }
        self
    }

    pub fn num_frames(&self) -> usize {
        self.camera_path.len()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.num_frames() >= 2, "a scene needs at least 2 frames, got {}", self.num_frames());
        ensure!(
            self.hr_size >= LR_FACTOR && self.hr_size.is_multiple_of(LR_FACTOR),
            "hr_size {} must be a positive multiple of {LR_FACTOR}",
            self.hr_size
        );
        ensure!(self.atlas_density.is_finite() && self.atlas_density > 0.0, "atlas_density must be positive");
        ensure!(self.noise_cells >= 2, "noise_cells must be at least 2");
        for (t, p) in self.camera_path.iter().enumerate() {
            ensure!(p.zoom.is_finite() && p.zoom > 0.0, "frame {t}: zoom must be positive, got {}", p.zoom);
            ensure!(p.pan_y.is_finite() && p.pan_x.is_finite(), "frame {t}: pan must be finite");
        }
        Ok(())
    }

    /// Atlas side large enough to hold every view plus a kernel margin.
    fn atlas_size(&self) -> usize {
        let d = self.atlas_density;
        let extent = self
            .camera_path
            .iter()
            .map(|p| self.hr_size as f64 * d / p.zoom + 2.0 * d * p.pan_y.abs().max(p.pan_x.abs()))
            .fold(0.0, f64::max);
        (extent.ceil() as usize + 16).max(16)
    }
}

/// Ground-truth HR frames with their x4 bicubic LR versions.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipPair {
    pub hr: VideoClip,
    pub lr: VideoClip,
    pub spec: SceneSpec,
}

fn draw_atlas(size: usize, spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Image> {
    let g = spec.noise_cells;
    let base: [f32; 3] = [rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7)];
    let grid = Image::from_fn(3, g, g, |c, _, _| base[c] + rng.gen_range(-0.25f32..0.25))?;
    let mut data = resample(&grid, size, size, size as f64 / g as f64, 0.0, 0.0)?.data().to_vec();

    let plane = size * size;
    let d = spec.atlas_density;
    for _ in 0..spec.num_primitives {
        let color: [f32; 3] = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
        let cy = rng.gen_range(0.0..size as f64);
        let cx = rng.gen_range(0.0..size as f64);
        let r = rng.gen_range(3.0 * d..(size as f64 / 10.0).max(4.0 * d));
        let kind = rng.gen_range(0..4u8);
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let (sin, cos) = angle.sin_cos();
        let aspect = rng.gen_range(0.3..1.0);
        let period = rng.gen_range(2.5 * d..7.0 * d);
        let inside = |y: f64, x: f64| -> bool {
            let (dy, dx) = (y - cy, x - cx);
            // Coordinates in the primitive's rotated frame.
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            match kind {
                0 => u * u + v * v <= r * r,
                1 => u.abs() <= r && v.abs() <= r * aspect,
                2 => {
                    let rho = (u * u + v * v).sqrt();
                    rho <= r && rho >= r * (1.0 - 0.4 * aspect)
                }
                _ => u.abs() <= r && v.abs() <= r * aspect && (u / period).rem_euclid(1.0) < 0.5,
            }
        };
        let lo_y = (cy - r).floor().max(0.0) as usize;
        let hi_y = ((cy + r).ceil() as usize).min(size - 1);
        let lo_x = (cx - r).floor().max(0.0) as usize;
        let hi_x = ((cx + r).ceil() as usize).min(size - 1);
        for y in lo_y..=hi_y {
            for x in lo_x..=hi_x {
                if inside(y as f64 + 0.5, x as f64 + 0.5) {
                    for (c, &col) in color.iter().enumerate() {
                        data[c * plane + y * size + x] = col;
                    }
                }
            }
        }
    }
    Ok(Image::new(3, size, size, data)?.map(|v| v.clamp(0.02, 0.98)))
}

fn render(atlas: &Image, spec: &SceneSpec, pose: &CameraPose) -> Result<Image> {
    let h = spec.hr_size;
    let d = spec.atlas_density;
    let scale = pose.zoom / d;
    let centre = atlas.height() as f64 / 2.0;
    let off_y = centre + pose.pan_y * d - h as f64 / (2.0 * scale);
    let off_x = centre + pose.pan_x * d - h as f64 / (2.0 * scale);
    resample(atlas, h, h, scale, off_y, off_x)
}

/// Renders the scene; all randomness comes from `spec.seed`.
pub fn generate_clip(spec: &SceneSpec) -> Result<ClipPair> {
    spec.validate()?;
    let size = spec.atlas_size();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared = match spec.recurrence {
        Recurrence::High => Some(draw_atlas(size, spec, &mut rng)?),
        Recurrence::Low => None,
    };
    let mut hr = Vec::with_capacity(spec.num_frames());
    for pose in &spec.camera_path {
        let frame = match &shared {
            Some(atlas) => render(atlas, spec, pose)?,
            None => render(&draw_atlas(size, spec, &mut rng)?, spec, pose)?,
        };
        hr.push(frame);
    }
    let lr = hr.iter().map(|f| resize(f, 1.0 / LR_FACTOR as f64)).collect::<Result<Vec<_>>>()?;
    Ok(ClipPair { hr: VideoClip::new(hr)?, lr: VideoClip::new(lr)?, spec: spec.clone() })
}

const PROBE: usize = 16;
const PROBE_STRIDE: usize = 4;
const PROBE_SCALES: [f64; 3] = [1.0, 0.9, 0.8];
const PROBE_TAU: f64 = 0.01;

fn patch_mse(a: &Image, ay: usize, ax: usize, b: &Image, by: usize, bx: usize) -> f64 {
    let (wa, wb) = (a.width(), b.width());
    let (pa, pb) = (a.plane(0), b.plane(0));
    let mut acc = 0.0f64;
    for y in 0..PROBE {
        let ra = &pa[(ay + y) * wa + ax..][..PROBE];
        let rb = &pb[(by + y) * wb + bx..][..PROBE];
        acc += ra.iter().zip(rb).map(|(&p, &q)| ((p - q) as f64).powi(2)).sum::<f64>();
    }
    acc / (PROBE * PROBE) as f64
}

/// Mean over probes of `exp(-d / 0.01)`, where `d` is the smallest MSE
/// between a random 16x16 luma probe (on the stride-4 grid) and any
/// stride-4 patch of another frame rescaled by 1.0, 0.9 or 0.8.
pub fn recurrence_score(clip: &VideoClip, num_probes: usize, rng: &mut impl Rng) -> Result<f64> {
    ensure!(num_probes >= 1, "num_probes must be positive");
    let (_, h, w) = clip.dims();
    ensure!(h >= PROBE && w >= PROBE, "frames must be at least {PROBE}x{PROBE}");
    let lumas: Vec<Image> = clip.frames().iter().map(luma).collect();
    let mut pyramids = Vec::with_capacity(lumas.len());
    for f in &lumas {
        let mut levels = Vec::new();
        for &s in &PROBE_SCALES {
            let r = if s == 1.0 { f.clone() } else { resize(f, s)? };
            if r.height() >= PROBE && r.width() >= PROBE {
                levels.push(r);
            }
        }
        pyramids.push(levels);
    }
    let mut total = 0.0;
    for _ in 0..num_probes {
        let t = rng.gen_range(0..lumas.len());
        let py = rng.gen_range(0..=(h - PROBE) / PROBE_STRIDE) * PROBE_STRIDE;
        let px = rng.gen_range(0..=(w - PROBE) / PROBE_STRIDE) * PROBE_STRIDE;
        let mut best = f64::INFINITY;
        for (u, levels) in pyramids.iter().enumerate() {
            if u == t && lumas.len() > 1 {
                continue;
            }
            for cand in levels {
                for cy in (0..=cand.height() - PROBE).step_by(PROBE_STRIDE) {
                    for cx in (0..=cand.width() - PROBE).step_by(PROBE_STRIDE) {
                        best = best.min(patch_mse(&lumas[t], py, px, cand, cy, cx));
                    }
                }
            }
        }
        total += (-best / PROBE_TAU).exp();
    }
    Ok(total / num_probes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ncc(a: &[f32], b: &[f32]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
        let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
        let mut num = 0.0;
        let (mut va, mut vb) = (0.0, 0.0);
        for (&x, &y) in a.iter().zip(b) {
            let (dx, dy) = (x as f64 - ma, y as f64 - mb);
            num += dx * dy;
            va += dx * dx;
            vb += dy * dy;
        }
        num / (va * vb).sqrt()
    }

    #[test]
    fn static_path_gives_identical_frames() {
        let pair = generate_clip(&SceneSpec::static_scene(3, 4, 32)).unwrap();
        assert!(pair.hr.frames().iter().all(|f| f == &pair.hr.frames()[0]));
    }

    #[test]
    fn lr_is_quarter_bicubic_and_deterministic() {
        let spec = SceneSpec::zoom_sweep(5, 3, 48, Recurrence::High, 1.0, 1.5).with_pan_drift(2.0, -3.0);
        let a = generate_clip(&spec).unwrap();
        assert_eq!(a, generate_clip(&spec).unwrap());
        assert_eq!(a.lr.dims(), (3, 12, 12));
        for (h, l) in a.hr.frames().iter().zip(a.lr.frames()) {
            assert_eq!(&resize(h, 0.25).unwrap(), l);
        }
        assert!(a.hr.frames().iter().all(|f| f.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn zoomed_frame_matches_upscaled_first_frame() {
        let spec = SceneSpec::zoom_sweep(8, 10, 64, Recurrence::High, 1.0, 1.9);
        let pair = generate_clip(&spec).unwrap();
        let up = resize(&pair.hr.frames()[0], 1.5).unwrap();
        let centre = up.crop(16, 16, 64, 64).unwrap();
        let target = &pair.hr.frames()[5];
        assert!((spec.camera_path[5].zoom - 1.5).abs() < 1e-12);
        let a = luma(&centre).crop(8, 8, 48, 48).unwrap();
        let b = luma(target).crop(8, 8, 48, 48).unwrap();
        let c = ncc(a.data(), b.data());
        assert!(c > 0.95, "ncc {c}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = SceneSpec::zoom_sweep(1, 4, 30, Recurrence::High, 1.0, 1.5);
        assert!(generate_clip(&s).is_err());
        s.hr_size = 32;
        s.camera_path[1].zoom = 0.0;
        assert!(generate_clip(&s).is_err());
        assert!(generate_clip(&SceneSpec::static_scene(1, 1, 32)).is_err());
    }

    #[test]
    fn recurrence_scores_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let still = generate_clip(&SceneSpec::static_scene(2, 3, 32)).unwrap();
        assert!(recurrence_score(&still.hr, 20, &mut rng).unwrap() > 0.999);

        let noise = VideoClip::new(
            (0..3).map(|_| Image::from_fn(1, 32, 32, |_, _, _| rng.gen::<f32>()).unwrap()).collect(),
        )
        .unwrap();
        assert!(recurrence_score(&noise, 20, &mut rng).unwrap() < 0.2);
    }
}
