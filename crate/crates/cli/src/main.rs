//! `selfvsr`: generate synthetic clips, pre-train, restore, adapt, distil,
//! evaluate and inspect video super-resolution runs.

mod config;
mod error;
mod io;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfvsr::adapt::{
    compute_matched_iterations, distill_adapt, restore_clip, self_adapt_per_frame, AdaptConfig,
};
use selfvsr::checkpoint::{load_model_inferred, save_params};
use selfvsr::metrics::{evaluate, EvalResult};
use selfvsr::model::{pretrain, ModelConfig, PretrainConfig, SizeClass, VsrModel};
use selfvsr::nn::AdamHyper;
use selfvsr::pseudo::{SamplerConfig, ScaleMode};
use selfvsr::resample::Image;
use selfvsr::synth::{generate_clip, Recurrence, SceneSpec, LR_FACTOR};
use selfvsr::video::VideoClip;
use serde::Serialize;

use crate::error::{CliError, CliResult, EXIT_CODES_HELP};
use crate::report::Report;

#[derive(Parser, Debug)]
#[command(name = "selfvsr", version, about, after_help = EXIT_CODES_HELP, args_override_self = true)]
struct Cli {
    /// Flat TOML file of `flag = value` pairs for the subcommand; flags given
    /// on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic clip (or a corpus of clips) with ground truth.
    Gen(GenArgs),
    /// Supervised pre-training on ground-truth clips.
    Pretrain(PretrainArgs),
    /// Restore a clip with a checkpoint, without adaptation.
    Restore(RestoreArgs),
    /// Adapt a checkpoint to a clip on its own restorations, then restore it.
    Adapt(AdaptCmdArgs),
    /// Adapt a student on the restorations of a frozen teacher.
    Distill(DistillArgs),
    /// Compare two frame directories.
    Eval(EvalCmdArgs),
    /// Stack one row of every frame into a temporal-profile image.
    Profile(ProfileArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum RecurrenceArg {
    High,
    Low,
}

impl From<RecurrenceArg> for Recurrence {
    fn from(r: RecurrenceArg) -> Self {
        match r {
            RecurrenceArg::High => Recurrence::High,
            RecurrenceArg::Low => Recurrence::Low,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    frames: usize,
    #[arg(long, default_value_t = 256)]
    hr_size: usize,
    /// LR factor; the generator always degrades by 4.
    #[arg(long, default_value_t = 4)]
    scale: usize,
    #[arg(long, value_enum, default_value = "high")]
    recurrence: RecurrenceArg,
    #[arg(long, default_value_t = 1.0)]
    zoom_from: f64,
    #[arg(long, default_value_t = 1.9)]
    zoom_to: f64,
    /// Total pan over the clip, in HR pixels at zoom 1.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pan_y: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pan_x: f64,
    /// Write this many clips with random zoom sweeps into `OUT/clip_NNN`,
    /// alternating high and low recurrence.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Regenerate from a previously written `spec.json` instead.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    Teacher,
    Student,
    SmallTeacher,
    SmallStudent,
}

#[derive(Args, Debug, Serialize)]
struct PretrainArgs {
    /// A clip directory, or a directory of clip directories.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "teacher")]
    model: Preset,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    input_frames: Option<usize>,
    #[arg(long, default_value_t = 4)]
    scale: usize,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 64)]
    patch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long)]
    lr_halve_at: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct EvalOpts {
    /// Pixels dropped from each side before PSNR, SSIM and tOF.
    #[arg(long, default_value_t = 4)]
    border_crop: usize,
    /// Measure on 8-bit quantised frames instead of internal values.
    #[arg(long)]
    quantize_first: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
enum FramesPerAdapt {
    #[value(name = "all")]
    #[serde(rename = "all")]
    All,
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
}

fn parse_scale_mode(s: &str) -> Result<ScaleMode, String> {
    s.parse::<ScaleMode>().map_err(|e| e.to_string())
}

#[derive(Args, Debug, Clone, Serialize)]
struct AdaptOpts {
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    /// none | fixed:F | random:LO:HI | upscale:LO:HI
    #[arg(long, default_value = "random:0.8:0.95", value_parser = parse_scale_mode)]
    scale_mode: ScaleMode,
    /// Crop side taken from restored frames.
    #[arg(long, default_value_t = 64)]
    patch_size: usize,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// `all`: one model adapted on every frame; `1`: a separate copy per frame.
    #[arg(long, value_enum, default_value = "all")]
    frames_per_adapt: FramesPerAdapt,
    /// Per-frame budget with `--frames-per-adapt 1`; defaults to
    /// `iterations / frames`.
    #[arg(long)]
    iterations_per_frame: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct RestoreArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    clip: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "teacher")]
    size_class: SizeClassArg,
    /// Expected model scale; checked against the checkpoint.
    #[arg(long)]
    scale: Option<usize>,
    #[command(flatten)]
    eval: EvalOpts,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SizeClassArg {
    Teacher,
    Student,
}

impl From<SizeClassArg> for SizeClass {
    fn from(s: SizeClassArg) -> Self {
        match s {
            SizeClassArg::Teacher => SizeClass::Teacher,
            SizeClassArg::Student => SizeClass::Student,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct AdaptCmdArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    clip: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the adapted parameters (not with `--frames-per-adapt 1`).
    #[arg(long)]
    save_checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "teacher")]
    size_class: SizeClassArg,
    #[arg(long)]
    scale: Option<usize>,
    #[command(flatten)]
    adapt: AdaptOpts,
    #[command(flatten)]
    eval: EvalOpts,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct DistillArgs {
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    student: PathBuf,
    #[arg(long)]
    clip: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    save_checkpoint: Option<PathBuf>,
    #[arg(long)]
    scale: Option<usize>,
    #[command(flatten)]
    adapt: AdaptOpts,
    #[command(flatten)]
    eval: EvalOpts,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EvalCmdArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    eval: EvalOpts,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ProfileArgs {
    /// Directory of frames.
    #[arg(long)]
    clip: PathBuf,
    /// Row to extract from every frame.
    #[arg(long)]
    row: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn eval_clips(reference: &VideoClip, test: &VideoClip, opts: &EvalOpts) -> CliResult<EvalResult> {
    if opts.quantize_first {
        let q = |c: &VideoClip| c.map_frames(|f| Ok(f.quantize8()));
        Ok(evaluate(&q(reference)?, &q(test)?, opts.border_crop)?)
    } else {
        Ok(evaluate(reference, test, opts.border_crop)?)
    }
}

fn load_model(path: &Path, size_class: SizeClass, scale: Option<usize>) -> CliResult<VsrModel> {
    if !path.is_file() {
        return Err(CliError::io(path, "checkpoint not found"));
    }
    let model = load_model_inferred(path, size_class)?;
    if let Some(s) = scale {
        if s != model.config().scale {
            return Err(usage(format!("--scale {s} but the checkpoint has scale {}", model.config().scale)));
        }
    }
    Ok(model)
}

fn adapt_config(opts: &AdaptOpts, model: &ModelConfig) -> CliResult<AdaptConfig> {
    let cfg = AdaptConfig {
        iterations: opts.iterations,
        batch_size: opts.batch_size,
        adam: AdamHyper { lr: opts.lr, ..AdamHyper::default() },
        sampler: SamplerConfig {
            patch_size_hr: opts.patch_size,
            mode: opts.scale_mode,
            sr_scale: model.scale,
            window: model.num_input_frames,
            seed: opts.seed,
        },
        seed: opts.seed,
    };
    cfg.validate()?;
    if opts.iterations_per_frame.is_some() && opts.frames_per_adapt == FramesPerAdapt::All {
        return Err(usage("--iterations-per-frame needs --frames-per-adapt 1"));
    }
    Ok(cfg)
}

fn log(msg: impl AsRef<str>) {
    eprintln!("[selfvsr] {}", msg.as_ref());
}

fn cmd_gen(args: &GenArgs, report: &mut Report) -> CliResult<()> {
    if args.scale != LR_FACTOR {
        return Err(usage(format!("the generator degrades by {LR_FACTOR}; got --scale {}", args.scale)));
    }
    let specs: Vec<(PathBuf, SceneSpec)> = if let Some(path) = &args.spec {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let spec: SceneSpec = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        vec![(args.out.clone(), spec)]
    } else if args.count > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        (0..args.count)
            .map(|i| {
                let rec = if i % 2 == 0 { Recurrence::High } else { Recurrence::Low };
                let seed = args.seed.wrapping_mul(1000).wrapping_add(i as u64);
                let spec = SceneSpec::random_sweep(&mut rng, seed, args.frames, args.hr_size, rec);
                (args.out.join(format!("clip_{i:03}")), spec)
            })
            .collect()
    } else {
        let spec = SceneSpec::zoom_sweep(args.seed, args.frames, args.hr_size, args.recurrence.into(), args.zoom_from, args.zoom_to)
            .with_pan_drift(args.pan_y, args.pan_x);
        vec![(args.out.clone(), spec)]
    };
    for (dir, spec) in &specs {
        log(format!("rendering {} frames into {}", spec.num_frames(), dir.display()));
        let pair = generate_clip(spec)?;
        io::write_frames(&dir.join("hr"), &pair.hr)?;
        io::write_frames(&dir.join("lr"), &pair.lr)?;
        let json = serde_json::to_string_pretty(spec).map_err(|e| CliError::Other(e.to_string()))?;
        io::write_text(&dir.join("spec.json"), &json)?;
        let name = dir.strip_prefix(&args.out).ok().filter(|p| !p.as_os_str().is_empty()).map(|p| p.display().to_string());
        let key = |k: &str| name.as_ref().map_or(k.to_owned(), |n| format!("{n}/{k}"));
        report.output(key("hr"), io::sha256_dir(&dir.join("hr"))?);
        report.output(key("lr"), io::sha256_dir(&dir.join("lr"))?);
    }
    report.number("clips", specs.len() as f64);
    Ok(())
}

fn cmd_pretrain(args: &PretrainArgs, report: &mut Report) -> CliResult<()> {
    let mut cfg = match args.model {
        Preset::Teacher => ModelConfig::teacher(),
        Preset::Student => ModelConfig::student(),
        Preset::SmallTeacher => ModelConfig::small_teacher(),
        Preset::SmallStudent => ModelConfig::small_student(),
    };
    cfg.num_blocks = args.blocks.unwrap_or(cfg.num_blocks);
    cfg.base_channels = args.channels.unwrap_or(cfg.base_channels);
    cfg.num_input_frames = args.input_frames.unwrap_or(cfg.num_input_frames);
    cfg.scale = args.scale;
    cfg.validate()?;
    let pc = PretrainConfig {
        steps: args.steps,
        batch_size: args.batch_size,
        patch_size_hr: args.patch_size,
        adam: AdamHyper::with_lr(args.lr)?,
        lr_halve_at: args.lr_halve_at,
        validation_windows: PretrainConfig::default().validation_windows,
        seed: args.seed,
    };
    let train = io::read_corpus(&args.corpus)?;
    let validation = match &args.validation {
        Some(v) => io::read_corpus(v)?,
        None => Vec::new(),
    };
    let mut model = VsrModel::new(cfg, args.seed)?;
    log(format!("pre-training {} parameters on {} clips for {} steps", model.param_count(), train.len(), args.steps));
    let r = pretrain(&mut model, &train, &validation, &pc)?;
    save_params(model.params(), &args.out)?;
    report.output("checkpoint", io::sha256_file(&args.out)?);
    report.number("parameters", model.param_count() as f64);
    report.number("val_loss_initial", r.val_loss_initial);
    report.number("val_loss_final", r.val_loss_final);
    report.number("val_loss_bicubic", r.val_loss_bicubic);
    report.set("pretrain", &r);
    Ok(())
}

fn record_eval(report: &mut Report, key: &str, e: &EvalResult) {
    report.number(&format!("{key}.psnr_y"), e.psnr_y);
    report.number(&format!("{key}.ssim"), e.ssim);
    if let Some(t) = e.tof {
        report.number(&format!("{key}.tof"), t);
    }
    report.set(key, e);
}

fn write_output(report: &mut Report, dir: &Path, clip: &VideoClip) -> CliResult<()> {
    io::write_frames(dir, clip)?;
    report.output("frames", io::sha256_dir(dir)?);
    Ok(())
}

fn open_clip(report: &mut Report, path: &Path) -> CliResult<io::ClipDir> {
    let clip = io::ClipDir::open(path)?;
    report.input("clip", io::sha256_dir(&clip.input_dir)?);
    Ok(clip)
}

fn cmd_restore(args: &RestoreArgs, report: &mut Report) -> CliResult<()> {
    let model = load_model(&args.checkpoint, args.size_class.into(), args.scale)?;
    report.input("checkpoint", io::sha256_file(&args.checkpoint)?);
    let clip = open_clip(report, &args.clip)?;
    log(format!("restoring {} frames", clip.input.len()));
    let restored = restore_clip(&model, &clip.input)?;
    write_output(report, &args.out, &restored)?;
    if let Some(reference) = &clip.reference {
        record_eval(report, "eval", &eval_clips(reference, &restored, &args.eval)?);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_adaptation(
    teacher: &VsrModel,
    student: VsrModel,
    clip: &io::ClipDir,
    opts: &AdaptOpts,
    eval: &EvalOpts,
    save: Option<&Path>,
    out: &Path,
    report: &mut Report,
) -> CliResult<()> {
    let cfg = adapt_config(opts, student.config())?;
    let distilling = teacher.params() != student.params();
    let baseline = if distilling { Some(restore_clip(&student, &clip.input)?) } else { None };
    let restored = match opts.frames_per_adapt {
        FramesPerAdapt::All => {
            log(format!("adapting for {} iterations", cfg.iterations));
            let a = distill_adapt(teacher, student, &clip.input, &cfg)?;
            if let Some(path) = save {
                save_params(a.model.params(), path)?;
                report.output("checkpoint", io::sha256_file(path)?);
            }
            if let Some(reference) = &clip.reference {
                let key = if distilling { "eval_teacher" } else { "eval_before" };
                record_eval(report, key, &eval_clips(reference, &a.initial, eval)?);
            }
            let (head, tail) = a.report.loss_head_tail();
            report.number("loss_first_10pct", head);
            report.number("loss_last_10pct", tail);
            report.number("adapt_time_s", a.report.wall_time_s);
            report.set("adapt", &a.report);
            a.restored
        }
        FramesPerAdapt::One => {
            if save.is_some() {
                return Err(usage("--save-checkpoint is not available with --frames-per-adapt 1"));
            }
            if distilling {
                return Err(usage("distill supports --frames-per-adapt all only"));
            }
            let per_frame = opts
                .iterations_per_frame
                .unwrap_or_else(|| compute_matched_iterations(cfg.iterations, clip.input.len()));
            log(format!("adapting each of {} frames for {per_frame} iterations", clip.input.len()));
            let cfg = AdaptConfig { iterations: per_frame, ..cfg };
            if let Some(reference) = &clip.reference {
                record_eval(report, "eval_before", &eval_clips(reference, &restore_clip(&student, &clip.input)?, eval)?);
            }
            let pf = self_adapt_per_frame(&student, &clip.input, &cfg)?;
            report.number("iterations_per_frame", per_frame as f64);
            report.set("adapt_per_frame", &pf.reports);
            pf.restored
        }
    };
    if let (Some(reference), Some(b)) = (&clip.reference, &baseline) {
        record_eval(report, "eval_before", &eval_clips(reference, b, eval)?);
    }
    write_output(report, out, &restored)?;
    if let Some(reference) = &clip.reference {
        record_eval(report, "eval_after", &eval_clips(reference, &restored, eval)?);
    }
    Ok(())
}

fn cmd_adapt(args: &AdaptCmdArgs, report: &mut Report) -> CliResult<()> {
    let model = load_model(&args.checkpoint, args.size_class.into(), args.scale)?;
    report.input("checkpoint", io::sha256_file(&args.checkpoint)?);
    let clip = open_clip(report, &args.clip)?;
    let teacher = model.clone();
    run_adaptation(&teacher, model, &clip, &args.adapt, &args.eval, args.save_checkpoint.as_deref(), &args.out, report)
}

fn cmd_distill(args: &DistillArgs, report: &mut Report) -> CliResult<()> {
    let teacher = load_model(&args.teacher, SizeClass::Teacher, args.scale)?;
    let student = load_model(&args.student, SizeClass::Student, args.scale)?;
    report.input("teacher", io::sha256_file(&args.teacher)?);
    report.input("student", io::sha256_file(&args.student)?);
    let clip = open_clip(report, &args.clip)?;
    run_adaptation(&teacher, student, &clip, &args.adapt, &args.eval, args.save_checkpoint.as_deref(), &args.out, report)
}

fn cmd_eval(args: &EvalCmdArgs, report: &mut Report) -> CliResult<()> {
    let reference = io::read_frames(&args.reference)?;
    let test = io::read_frames(&args.test)?;
    report.input("reference", io::sha256_dir(&args.reference)?);
    report.input("test", io::sha256_dir(&args.test)?);
    if reference.len() != test.len() {
        return Err(usage(format!("frame counts differ: {} vs {}", reference.len(), test.len())));
    }
    record_eval(report, "eval", &eval_clips(&reference, &test, &args.eval)?);
    Ok(())
}

/// Row `row` of every frame, stacked top to bottom in frame order.
fn temporal_profile(clip: &VideoClip, row: usize) -> CliResult<Image> {
    let (c, h, w) = clip.dims();
    if row >= h {
        return Err(usage(format!("--row {row} outside frames of height {h}")));
    }
    let n = clip.len();
    Ok(Image::from_fn(c, n, w, |ch, t, x| clip.frames()[t].get(ch, row, x))?)
}

fn cmd_profile(args: &ProfileArgs, report: &mut Report) -> CliResult<()> {
    let clip = io::read_frames(&args.clip)?;
    report.input("clip", io::sha256_dir(&args.clip)?);
    let strip = temporal_profile(&clip, args.row)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    io::write_png(&args.out, &strip)?;
    report.output("profile", io::sha256_file(&args.out)?);
    report.number("frames", clip.len() as f64);
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let start = Instant::now();
    let (name, config, report_path) = match &cli.command {
        Command::Gen(a) => ("gen", serde_json::to_value(a), a.report.clone()),
        Command::Pretrain(a) => ("pretrain", serde_json::to_value(a), a.report.clone()),
        Command::Restore(a) => ("restore", serde_json::to_value(a), a.report.clone()),
        Command::Adapt(a) => ("adapt", serde_json::to_value(a), a.report.clone()),
        Command::Distill(a) => ("distill", serde_json::to_value(a), a.report.clone()),
        Command::Eval(a) => ("eval", serde_json::to_value(a), a.report.clone()),
        Command::Profile(a) => ("profile", serde_json::to_value(a), a.report.clone()),
    };
    let mut report = Report::new(name, config.map_err(|e| CliError::Other(e.to_string()))?);
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, &mut report)?,
        Command::Pretrain(a) => cmd_pretrain(a, &mut report)?,
        Command::Restore(a) => cmd_restore(a, &mut report)?,
        Command::Adapt(a) => cmd_adapt(a, &mut report)?,
        Command::Distill(a) => cmd_distill(a, &mut report)?,
        Command::Eval(a) => cmd_eval(a, &mut report)?,
        Command::Profile(a) => cmd_profile(a, &mut report)?,
    }
    report.finish(start.elapsed().as_secs_f64());
    print!("{}", report.summary());
    if let Some(path) = report_path {
        io::write_text(&path, &report.to_json())?;
    }
    Ok(())
}

fn parse_cli() -> CliResult<Cli> {
    let mut argv: Vec<String> = std::env::args().collect();
    let cmd = Cli::command();
    if let Some(path) = config::config_path(&argv) {
        argv = config::merge(argv, Path::new(&path), &cmd)?;
    }
    let matches = cmd.try_get_matches_from(argv).unwrap_or_else(|e| e.exit());
    Cli::from_arg_matches(&matches).map_err(|e| usage(e.to_string()))
}

fn main() -> ExitCode {
    let result = parse_cli().and_then(|cli| dispatch(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("selfvsr: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn profile_stacks_rows() {
        let frames: Vec<Image> = (0..3).map(|t| Image::from_fn(1, 4, 5, |_, y, x| (t * 100 + y * 10 + x) as f32).unwrap()).collect();
        let strip = temporal_profile(&VideoClip::new(frames).unwrap(), 2).unwrap();
        assert_eq!(strip.dims(), (1, 3, 5));
        assert_eq!(strip.get(0, 1, 3), 123.0);
        assert!(temporal_profile(&VideoClip::new(vec![Image::filled(1, 2, 2, 0.0).unwrap()]).unwrap(), 2).is_err());
    }
}
