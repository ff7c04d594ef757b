//! Test-time adaptation: restore a clip, build a pseudo dataset from the
//! restoration, and fine-tune on it. Also the distillation variant, where a
//! frozen teacher supplies the pseudo dataset and a student is trained.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::VsrModel;
use crate::nn::{adam_step, AdamHyper, Graph, Tensor};
use crate::pseudo::{sample_batch_from, PseudoPair, SamplerConfig};
use crate::resample::Image;
use crate::video::VideoClip;

/// The divergence guard compares the mean of the last this-many losses
/// against `GUARD_FACTOR` times the first loss.
const GUARD_WINDOW: usize = 10;
const GUARD_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub sampler: SamplerConfig,
    /// Seeds the pseudo-pair stream.
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            batch_size: 4,
            adam: AdamHyper { lr: 1e-4, ..AdamHyper::default() },
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.iterations >= 1, "iterations must be at least 1");
        ensure!(self.batch_size >= 1, "batch_size must be at least 1");
        self.adam.validate()?;
        self.sampler.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    /// Training MSE of every iteration.
    pub loss_curve: Vec<f64>,
    pub wall_time_s: f64,
    pub iterations: usize,
    /// SHA-256 of the adapted parameters.
    pub params_checksum: String,
    /// SHA-256 of the restored frames the pseudo pairs were drawn from.
    pub pool_checksum: String,
}

impl AdaptReport {
    /// Equality on everything except wall time.
    pub fn same_outcome(&self, other: &AdaptReport) -> bool {
        self.loss_curve == other.loss_curve
            && self.iterations == other.iterations
            && self.params_checksum == other.params_checksum
            && self.pool_checksum == other.pool_checksum
    }

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len().max(1) as f64
    }

    /// Mean loss over the first and last 10% of iterations (at least one each).
    pub fn loss_head_tail(&self) -> (f64, f64) {
        let n = self.loss_curve.len();
        let k = (n / 10).max(1).min(n);
        (Self::mean(&self.loss_curve[..k]), Self::mean(&self.loss_curve[n - k..]))
    }
}

/// Result of an adaptation run.
#[derive(Clone, Debug)]
pub struct Adapted {
    pub model: VsrModel,
    /// The restoration pseudo pairs were drawn from.
    pub initial: VideoClip,
    pub restored: VideoClip,
    pub report: AdaptReport,
}

/// Restore every frame from its replicate-padded window, clamped to `[0, 1]`.
pub fn restore_clip(model: &VsrModel, lr_clip: &VideoClip) -> Result<VideoClip> {
    let t_len = model.config().num_input_frames;
    let frames = (0..lr_clip.len())
        .map(|t| Ok(model.forward(&lr_clip.window(t, t_len))?.clamp01()))
        .collect::<Result<Vec<_>>>()?;
    VideoClip::new(frames)
}

fn stack_pairs(model: &VsrModel, pairs: &[PseudoPair]) -> Result<(crate::model::Batch, Tensor)> {
    let windows: Vec<Vec<&Image>> = pairs.iter().map(|p| p.input.iter().collect()).collect();
    let batch = model.make_batch(&windows)?;
    let targets: Vec<Tensor> = pairs.iter().map(|p| p.target.to_tensor()).collect();
    Ok((batch, Tensor::stack_batch(&targets)?))
}

fn check_compatible(model: &VsrModel, cfg: &AdaptConfig) -> Result<()> {
    cfg.validate()?;
    ensure!(
        cfg.sampler.sr_scale == model.config().scale,
        "sampler scale {} differs from model scale {}",
        cfg.sampler.sr_scale,
        model.config().scale
    );
    ensure!(
        cfg.sampler.window == model.config().num_input_frames,
        "sampler window {} differs from model input frames {}",
        cfg.sampler.window,
        model.config().num_input_frames
    );
    Ok(())
}

/// The inner loop: `cfg.iterations` Adam steps on pseudo batches drawn from
/// `pool` with centre frames in `centers`. The pool is never modified.

pub fn adapt_on_pool(
    model: &mut VsrModel,
    pool: &VideoClip,
    centers: std::ops::Range<usize>,
    cfg: &AdaptConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AdaptReport> {
    check_compatible(model, cfg)?;
    ensure!(
        centers.start < centers.end && centers.end <= pool.len(),
        "frame range {centers:?} invalid for a {}-frame pool",
        pool.len()
    );
    let start = Instant::now();
    let pool_checksum = pool.checksum();
    let mut losses = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let pairs = sample_batch_from(pool, centers.clone(), &cfg.sampler, rng, cfg.batch_size)?;
        let (batch, target) = stack_pairs(model, &pairs)?;
        let loss = model.train_step(&batch, &target, &cfg.adam)?;
        losses.push(loss);
        let recent = &losses[losses.len().saturating_sub(GUARD_WINDOW)..];
        let diverged = !loss.is_finite() || AdaptReport::mean(recent) > GUARD_FACTOR * losses[0];
        if diverged {
            let report = AdaptReport {
                iterations: losses.len(),
                loss_curve: losses,
                wall_time_s: start.elapsed().as_secs_f64(),
                params_checksum: model.params().checksum(),
                pool_checksum,
            };
            return Err(Error::AdaptationDiverged { iteration: it, loss, report: Box::new(report) });
        }
    }
    Ok(AdaptReport {
        iterations: losses.len(),
        loss_curve: losses,
        wall_time_s: start.elapsed().as_secs_f64(),
        params_checksum: model.params().checksum(),
        pool_checksum,
    })
}

/// Self-adaptation: the model restores the clip once, trains on pseudo pairs
/// cut from that fixed restoration, then restores the clip again.
pub fn self_adapt(model: VsrModel, lr_clip: &VideoClip, cfg: &AdaptConfig) -> Result<Adapted> {
    distill_adapt(&model.clone(), model, lr_clip, cfg)
}

/// Distillation: the frozen `teacher` restores the clip once and the
/// `student` is trained on pseudo pairs cut from the teacher's frames.
pub fn distill_adapt(teacher: &VsrModel, mut student: VsrModel, lr_clip: &VideoClip, cfg: &AdaptConfig) -> Result<Adapted> {
    check_compatible(&student, cfg)?;
    ensure!(
        teacher.config().scale == student.config().scale,
        "teacher scale {} differs from student scale {}",
        teacher.config().scale,
        student.config().scale
    );
    let start = Instant::now();
    let pool = restore_clip(teacher, lr_clip)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = adapt_on_pool(&mut student, &pool, 0..pool.len(), cfg, &mut rng)?;
    let restored = restore_clip(&student, lr_clip)?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(Adapted { model: student, initial: pool, restored, report })
}

/// Per-frame outcome of [`self_adapt_per_frame`].
#[derive(Clone, Debug)]
pub struct PerFrameAdapted {
    pub restored: VideoClip,
    pub reports: Vec<AdaptReport>,
}

/// Default per-frame budget: the clip-level iteration count split evenly
/// over frames, at least one each.
pub fn compute_matched_iterations(iterations: usize, num_frames: usize) -> usize {
    (iterations / num_frames.max(1)).max(1)
}

/// Adapts a separate copy of `model` for every frame, with pseudo targets
/// cut only from that frame's restoration, and restores each frame with its
/// own copy. `cfg.iterations` is the per-frame iteration count.
pub fn self_adapt_per_frame(model: &VsrModel, lr_clip: &VideoClip, cfg: &AdaptConfig) -> Result<PerFrameAdapted> {
    check_compatible(model, cfg)?;
    let pool = restore_clip(model, lr_clip)?;
    let t_len = model.config().num_input_frames;
    let mut frames = Vec::with_capacity(lr_clip.len());
    let mut reports = Vec::with_capacity(lr_clip.len());
    for t in 0..lr_clip.len() {
        let mut local = model.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(t as u64 + 1);
        reports.push(adapt_on_pool(&mut local, &pool, t..t + 1, cfg, &mut rng)?);
        frames.push(local.forward(&lr_clip.window(t, t_len))?.clamp01());
    }
    Ok(PerFrameAdapted { restored: VideoClip::new(frames)?, reports })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub steps: usize,
    pub lr: f64,
    /// Step at which the learning rate is halved.
    pub halve_at: usize,
    /// Converged when the loss varies by less than this over the last `window` steps.
    pub tolerance: f64,
    pub window: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { steps: 3000, lr: 1e-3, halve_at: 1500, tolerance: 1e-6, window: 100 }
    }
}

#[derive(Clone, Debug)]
pub struct OracleOutcome {
    pub output: Image,
    pub loss_curve: Vec<f64>,
    pub converged: bool,
}

/// Trains `model` to map one input window to every target at once, each
/// step weighting all targets equally. The MSE minimiser of this objective
/// is the pixel-wise mean of the targets.
pub fn theorem1_oracle(model: &mut VsrModel, input: &[&Image], targets: &[Image], cfg: &OracleConfig) -> Result<OracleOutcome> {
    ensure!(targets.len() >= 2, "need at least two targets, got {}", targets.len());
    ensure!(cfg.steps >= 1 && cfg.window >= 1, "steps and window must be positive");
    let batch = model.make_batch(&[input.to_vec()])?;
    let dims = targets[0].dims();
    ensure!(targets.iter().all(|t| t.dims() == dims), "targets differ in size");
    let expected = (batch.base.shape()[1], batch.base.shape()[2], batch.base.shape()[3]);
    ensure!(dims == expected, "target dims {dims:?} differ from model output {expected:?}");
    let target_tensors: Vec<Tensor> = targets.iter().map(|t| t.to_tensor()).collect();
    let mut hyper = AdamHyper { lr: cfg.lr, ..AdamHyper::default() };
    hyper.validate()?;
    let weight = 1.0 / targets.len() as f32;
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        if step == cfg.halve_at {
            hyper.lr *= 0.5;
        }
        let mut g = Graph::new();
        let out = model.forward_graph(&mut g, &batch)?;
        let mut total = None;
        let mut value = 0.0;
        for t in &target_tensors {
            let tv = g.constant(t.clone());
            let l = g.mse(out, tv)?;
            value += g.loss_value(l).unwrap_or(f64::NAN);
            total = Some(match total {
                None => l,
                Some(acc) => g.add(acc, l)?,
            });
        }
        let loss = g.scale(total.expect("at least two targets"), weight);
        g.backward(loss, model.params_mut())?;
        let value = value * weight as f64;
        losses.push(value);
        if !value.is_finite() {
            let report = AdaptReport {
                iterations: losses.len(),
                loss_curve: losses,
                wall_time_s: 0.0,
                params_checksum: model.params().checksum(),
                pool_checksum: String::new(),
            };
            return Err(Error::AdaptationDiverged { iteration: step, loss: value, report: Box::new(report) });
        }
        adam_step(model.params_mut(), &hyper)?;
    }
    let tail = &losses[losses.len().saturating_sub(cfg.window)..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let output = Image::from_tensor(&model.forward_batch(&batch)?, 0)?;
    Ok(OracleOutcome { output, loss_curve: losses, converged: hi - lo < cfg.tolerance })
}
