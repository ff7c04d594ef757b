//! The multi-frame SR network `f`: stacked input frames, residual conv
//! blocks, a sub-pixel head and a global bicubic skip of the centre frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::nn::{adam_step, AdamHyper, Graph, ParamStore, Tensor, Var};
use crate::resample::{resize, Image};
use crate::video::VideoClip;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Teacher,
    Student,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_input_frames: usize,
    pub base_channels: usize,
    pub num_blocks: usize,
    pub scale: usize,
    /// Colour channels per frame (3 for RGB).
    pub channels: usize,
    pub size_class: SizeClass,
}

impl ModelConfig {
    pub fn teacher() -> Self {
        Self { num_input_frames: 3, base_channels: 64, num_blocks: 16, scale: 4, channels: 3, size_class: SizeClass::Teacher }
    }

    pub fn student() -> Self {
        Self { num_input_frames: 3, base_channels: 32, num_blocks: 4, scale: 4, channels: 3, size_class: SizeClass::Student }
    }

    /// 6 blocks x 32 channels: a teacher that trains in minutes on one CPU core.
    pub fn small_teacher() -> Self {
        Self { base_channels: 32, num_blocks: 6, ..Self::teacher() }
    }

    /// 2 blocks x 16 channels, about a seventh of [`ModelConfig::small_teacher`].
    pub fn small_student() -> Self {
        Self { base_channels: 16, num_blocks: 2, ..Self::student() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.num_input_frames % 2 == 1,
            "num_input_frames must be odd, got {}",
            self.num_input_frames
        );
        ensure!(self.base_channels >= 1, "base_channels must be positive");
        ensure!(self.num_blocks >= 1, "num_blocks must be positive");
        ensure!(self.scale >= 1, "scale must be positive");
        ensure!(self.channels == 1 || self.channels == 3, "channels must be 1 or 3");
        Ok(())
    }

    /// `(name, shape)` of every parameter, in construction order.
    pub fn param_shapes(&self) -> Vec<(String, [usize; 4])> {
        let c = self.base_channels;
        let in_c = self.channels * self.num_input_frames;
        let out_c = self.channels * self.scale * self.scale;
        let mut shapes = vec![
            ("conv_in.weight".to_owned(), [c, in_c, 3, 3]),
            ("conv_in.bias".to_owned(), [1, c, 1, 1]),
        ];
        for b in 0..self.num_blocks {
            for conv in ["conv1", "conv2"] {
                shapes.push((format!("blocks.{b:02}.{conv}.weight"), [c, c, 3, 3]));
                shapes.push((format!("blocks.{b:02}.{conv}.bias"), [1, c, 1, 1]));
            }
        }
        shapes.push(("conv_body.weight".to_owned(), [c, c, 3, 3]));
        shapes.push(("conv_body.bias".to_owned(), [1, c, 1, 1]));
        shapes.push(("head.weight".to_owned(), [out_c, c, 3, 3]));
        shapes.push(("head.bias".to_owned(), [1, out_c, 1, 1]));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Recover the architecture from checkpoint parameter shapes.
    pub fn infer(params: &ParamStore, size_class: SizeClass) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_owned());
        let conv_in = params.value("conv_in.weight").map_err(|_| corrupt("missing conv_in.weight"))?.shape();
        let head = params.value("head.weight").map_err(|_| corrupt("missing head.weight"))?.shape();
        let num_blocks = params.names().filter(|n| n.ends_with(".conv1.weight")).count();
        let channels = if conv_in[1] % 3 == 0 && head[0] % 3 == 0 { 3 } else { 1 };
        let scale = ((head[0] / channels) as f64).sqrt().round() as usize;
        let config = Self {
            num_input_frames: conv_in[1] / channels,
            base_channels: conv_in[0],
            num_blocks,
            scale,
            channels,
            size_class,
        };
        config.validate().map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        Ok(config)
    }
}

/// Network inputs for a batch: stacked windows and the bicubic base.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `(b, channels * T, h, w)`.
    pub input: Tensor,
    /// `(b, channels, s*h, s*w)`: bicubic upscale of each window's centre frame.
    pub base: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VsrModel {
    config: ModelConfig,
    params: ParamStore,
}

impl VsrModel {
    /// He-uniform initialisation with a zero head, so a fresh model
    /// reproduces the bicubic upscale exactly.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape) in config.param_shapes() {
            let t = if name.starts_with("head") || name.ends_with(".bias") {
                Tensor::zeros(shape)
            } else {
                let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                let gain = if name.ends_with("conv2.weight") { 0.1 } else { 1.0 };
                let bound = gain * (6.0 / fan_in).sqrt();
                Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound) as f32)
            };
            params.insert(name, t);
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let expected = config.param_shapes();
        if expected.len() != params.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            match params.get(name) {
                Some(e) if e.value.shape() == *shape => {}
                Some(e) => {
                    return Err(Error::CorruptCheckpoint(format!(
                        "parameter `{name}` has shape {:?}, expected {shape:?}",
                        e.value.shape()
                    )))
                }
                None => return Err(Error::CorruptCheckpoint(format!("missing parameter `{name}`"))),
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }

    /// Build network inputs from `T`-frame windows that share one size.
    pub fn make_batch(&self, windows: &[Vec<&Image>]) -> Result<Batch> {
        ensure!(!windows.is_empty(), "empty batch");
        let t_len = self.config.num_input_frames;
        let dims = windows[0].first().map(|f| f.dims());
        let mut inputs = Vec::with_capacity(windows.len());
        let mut bases = Vec::with_capacity(windows.len());
        for w in windows {
            ensure!(w.len() == t_len, "window has {} frames, model expects {t_len}", w.len());
            for f in w {
                ensure!(Some(f.dims()) == dims, "window frames differ in size: {:?} vs {:?}", f.dims(), dims);
                ensure!(
                    f.channels() == self.config.channels,
                    "frame has {} channels, model expects {}",
                    f.channels(),
                    self.config.channels
                );
            }
            let parts: Vec<Tensor> = w.iter().map(|f| f.to_tensor()).collect();
            inputs.push(Tensor::concat_channels(&parts)?);
            bases.push(resize(w[t_len / 2], self.config.scale as f64)?.to_tensor());
        }
        Ok(Batch { input: Tensor::stack_batch(&inputs)?, base: Tensor::stack_batch(&bases)? })
    }

    fn conv(&self, g: &mut Graph, x: Var, prefix: &str) -> Result<Var> {
        let w = g.param(&self.params, &format!("{prefix}.weight"))?;
        let b = g.param(&self.params, &format!("{prefix}.bias"))?;
        g.conv2d(x, w, b, 1, 1)
    }

    /// Record the forward pass on `g`; returns the `(b, channels, s*h, s*w)` output.
    pub fn forward_graph(&self, g: &mut Graph, batch: &Batch) -> Result<Var> {
        let x = g.constant(batch.input.clone());
        let base = g.constant(batch.base.clone());
        let feat0 = self.conv(g, x, "conv_in")?;
        let mut h = feat0;
        for b in 0..self.config.num_blocks {
            let r = self.conv(g, h, &format!("blocks.{b:02}.conv1"))?;
            let r = g.relu(r);
            let r = self.conv(g, r, &format!("blocks.{b:02}.conv2"))?;
            h = g.add(h, r)?;
        }
        let body = self.conv(g, h, "conv_body")?;
        let body = g.add(body, feat0)?;
        let head = self.conv(g, body, "head")?;
        let up = g.pixel_shuffle(head, self.config.scale)?;
        g.add(up, base)
    }

    pub fn forward_batch(&self, batch: &Batch) -> Result<Tensor> {
        let mut g = Graph::new();
        let out = self.forward_graph(&mut g, batch)?;
        Ok(g.take_value(out))
    }

    /// Restore the centre frame of one `T`-frame window.
    pub fn forward(&self, window: &[&Image]) -> Result<Image> {
        let batch = self.make_batch(&[window.to_vec()])?;
        Image::from_tensor(&self.forward_batch(&batch)?, 0)
    }

    /// One supervised step: forward, MSE against `target`, backward, Adam.
    pub fn train_step(&mut self, batch: &Batch, target: &Tensor, hyper: &AdamHyper) -> Result<f64> {
        let mut g = Graph::new();
        let out = self.forward_graph(&mut g, batch)?;
        let t = g.constant(target.clone());
        let loss = g.mse(out, t)?;
        let value = g.backward(loss, &mut self.params)?;
        if value.is_finite() {
            adam_step(&mut self.params, hyper)?;
        }
        Ok(value)
    }

    /// MSE of the network on `batch` without touching gradients.
    pub fn eval_loss(&self, batch: &Batch, target: &Tensor) -> Result<f64> {
        crate::nn::kernels::mse_loss(&self.forward_batch(batch)?, target)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// HR crop side; must be a multiple of the model scale.
    pub patch_size_hr: usize,
    pub adam: AdamHyper,
    /// Step at which the learning rate is halved, if any.
    pub lr_halve_at: Option<usize>,
    pub validation_windows: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            patch_size_hr: 64,
            adam: AdamHyper { lr: 1e-3, ..AdamHyper::default() },
            lr_halve_at: None,
            validation_windows: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub loss_curve: Vec<f64>,
    pub val_loss_initial: f64,
    pub val_loss_final: f64,
    /// Validation MSE of the bicubic upscale alone.
    pub val_loss_bicubic: f64,
}

/// Ground-truth clip with its whole-frame bicubic degradation.
struct TrainClip {
    hr: Vec<Image>,
    lr: VideoClip,
}

fn prepare_corpus(clips: &[VideoClip], scale: usize, channels: usize) -> Result<Vec<TrainClip>> {
    clips
        .iter()
        .map(|clip| {
            ensure!(clip.dims().0 == channels, "corpus clip has {} channels, model expects {channels}", clip.dims().0);
            let hr = clip
                .frames()
                .iter()
                .map(|f| crate::resample::modcrop(f, scale))
                .collect::<Result<Vec<_>>>()?;
            let lr = VideoClip::new(
                hr.iter()
                    .map(|f| resize(f, 1.0 / scale as f64))
                    .collect::<Result<Vec<_>>>()?,
            )?;
            Ok(TrainClip { hr, lr })
        })
        .collect()
}

fn draw_training_batch(model: &VsrModel, corpus: &[TrainClip], patch_lr: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<(Batch, Tensor)> {
    let s = model.config.scale;
    let t_len = model.config.num_input_frames;
    let mut windows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let clip = &corpus[rng.gen_range(0..corpus.len())];
        let t = rng.gen_range(0..clip.lr.len());
        let (_, lh, lw) = clip.lr.dims();
        ensure!(lh >= patch_lr && lw >= patch_lr, "corpus frames ({lh}x{lw} LR) smaller than patch {patch_lr}");
        let y = rng.gen_range(0..=lh - patch_lr);
        let x = rng.gen_range(0..=lw - patch_lr);
        let window = clip
            .lr
            .window(t, t_len)
            .into_iter()
            .map(|f| f.crop(y, x, patch_lr, patch_lr))
            .collect::<Result<Vec<_>>>()?;
        windows.push(window);
        targets.push(clip.hr[t].crop(y * s, x * s, patch_lr * s, patch_lr * s)?.to_tensor());
    }
    let refs: Vec<Vec<&Image>> = windows.iter().map(|w| w.iter().collect()).collect();
    Ok((model.make_batch(&refs)?, Tensor::stack_batch(&targets)?))
}

/// Supervised pre-training on ground-truth clips; LR inputs are the
/// bicubic `1/s` degradation of each HR frame.
pub fn pretrain(
    model: &mut VsrModel,
    train: &[VideoClip],
    validation: &[VideoClip],
    cfg: &PretrainConfig,
) -> Result<PretrainReport> {
    ensure!(!train.is_empty(), "pre-training corpus is empty");
    ensure!(cfg.batch_size >= 1, "batch_size must be positive");
    cfg.adam.validate()?;
    let s = model.config.scale;
    ensure!(
        cfg.patch_size_hr >= s && cfg.patch_size_hr.is_multiple_of(s),
        "patch_size_hr {} must be a positive multiple of the scale {s}",
        cfg.patch_size_hr
    );
    let patch_lr = cfg.patch_size_hr / s;
    let train_set = prepare_corpus(train, s, model.config.channels)?;
    let val_set = if validation.is_empty() {
        prepare_corpus(train, s, model.config.channels)?
    } else {
        prepare_corpus(validation, s, model.config.channels)?
    };

    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_7a1d);
    let val_batches: Vec<(Batch, Tensor)> = (0..cfg.validation_windows.max(1))
        .map(|_| draw_training_batch(model, &val_set, patch_lr, 1, &mut val_rng))
        .collect::<Result<_>>()?;
    let val_loss = |m: &VsrModel| -> Result<f64> {
        let mut acc = 0.0;
        for (b, t) in &val_batches {
            acc += m.eval_loss(b, t)?;
        }
        Ok(acc / val_batches.len() as f64)
    };
    let val_loss_bicubic = val_batches
        .iter()
        .map(|(b, t)| crate::nn::kernels::mse_loss(&b.base, t))
        .sum::<Result<f64>>()?
        / val_batches.len() as f64;
    let val_loss_initial = val_loss(model)?;

    model.params.reset_optimizer();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut hyper = cfg.adam;
    let mut loss_curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        if cfg.lr_halve_at == Some(step) {
            hyper.lr *= 0.5;
        }
        let (batch, target) = draw_training_batch(model, &train_set, patch_lr, cfg.batch_size, &mut rng)?;
        let loss = model.train_step(&batch, &target, &hyper)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged(format!("non-finite loss at step {step}")));
        }
        loss_curve.push(loss);
    }
    let val_loss_final = val_loss(model)?;
    if cfg.steps > 0 && !(val_loss_final < val_loss_initial) {
        return Err(Error::TrainingDiverged(format!(
            "validation loss did not improve ({val_loss_initial} -> {val_loss_final})"
        )));
    }
    Ok(PretrainReport { loss_curve, val_loss_initial, val_loss_final, val_loss_bicubic })
}
