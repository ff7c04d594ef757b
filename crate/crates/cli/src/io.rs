//! PNG frames on disk. A clip directory holds `%05d.png` frames directly, or
//! `lr/` and optionally `hr/` subdirectories of them.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};
use selfvsr::resample::Image;
use selfvsr::video::VideoClip;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn frame_name(index: usize) -> String {
    format!("{index:05}.png")
}

fn png_paths(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::io(dir, "no PNG frames found"));
    }
    Ok(paths)
}

/// Grey PNGs load as one channel, everything else as RGB; values in `[0, 1]`.
pub fn read_png(path: &Path) -> CliResult<Image> {
    let img = image::open(path).map_err(|e| CliError::io(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let grey = matches!(img.color(), image::ColorType::L8 | image::ColorType::La8 | image::ColorType::L16 | image::ColorType::La16);
    let (channels, pixels): (usize, Vec<f32>) = if grey {
        (1, img.to_luma32f().into_raw())
    } else {
        (3, img.to_rgb32f().into_raw())
    };
    let mut planar = vec![0.0f32; channels * h * w];
    for (i, px) in pixels.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            planar[c * h * w + i] = v;
        }
    }
    Ok(Image::new(channels, h, w, planar)?)
}

/// Quantise to 8 bits (round half up, clamped) and write as PNG.
pub fn write_png(path: &Path, img: &Image) -> CliResult<()> {
    let (c, h, w) = img.dims();
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8;
    let mut interleaved = vec![0u8; c * h * w];
    for ch in 0..c {
        for (i, &v) in img.plane(ch).iter().enumerate() {
            interleaved[i * c + ch] = q(v);
        }
    }
    let dynamic = if c == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w as u32, h as u32, interleaved).expect("buffer sized"))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w as u32, h as u32, interleaved).expect("buffer sized"))
    };
    dynamic.save(path).map_err(|e| CliError::io(path, e))
}

pub fn read_frames(dir: &Path) -> CliResult<VideoClip> {
    let frames = png_paths(dir)?.iter().map(|p| read_png(p)).collect::<CliResult<Vec<_>>>()?;
    Ok(VideoClip::new(frames)?)
}

pub fn write_frames(dir: &Path, clip: &VideoClip) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    clip.frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let path = dir.join(frame_name(i));
            write_png(&path, f)?;
            Ok(path)
        })
        .collect()
}

/// Input frames of a clip plus its ground truth, when present.
pub struct ClipDir {
    pub input: VideoClip,
    pub input_dir: PathBuf,
    pub reference: Option<VideoClip>,
}

impl ClipDir {
    pub fn open(dir: &Path) -> CliResult<Self> {
        if !dir.is_dir() {
            return Err(CliError::io(dir, "not a directory"));
        }
        let lr = dir.join("lr");
        if lr.is_dir() {
            let hr = dir.join("hr");
            let reference = if hr.is_dir() { Some(read_frames(&hr)?) } else { None };
            Ok(Self { input: read_frames(&lr)?, input_dir: lr, reference })
        } else {
            Ok(Self { input: read_frames(dir)?, input_dir: dir.to_path_buf(), reference: None })
        }
    }
}

/// Clips used for pre-training: every subdirectory of `dir` holding frames
/// (directly or under `hr/`), or `dir` itself when it holds frames.
pub fn read_corpus(dir: &Path) -> CliResult<Vec<VideoClip>> {
    let clip_frames = |d: &Path| -> Option<PathBuf> {
        let hr = d.join("hr");
        if hr.is_dir() {
            Some(hr)
        } else if png_paths(d).is_ok() {
            Some(d.to_path_buf())
        } else {
            None
        }
    };
    if !dir.is_dir() {
        return Err(CliError::io(dir, "not a directory"));
    }
    if let Some(frames) = clip_frames(dir) {
        return Ok(vec![read_frames(&frames)?]);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    let clips = subdirs
        .iter()
        .filter_map(|d| clip_frames(d))
        .map(|d| read_frames(&d))
        .collect::<CliResult<Vec<_>>>()?;
    if clips.is_empty() {
        return Err(CliError::io(dir, "no clips found"));
    }
    Ok(clips)
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// SHA-256 over the sorted file names and contents of the PNGs in `dir`.
pub fn sha256_dir(dir: &Path) -> CliResult<String> {
    let mut hasher = Sha256::new();
    for path in png_paths(dir)? {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        hasher.update(name.as_bytes());
        hasher.update(fs::read(&path).map_err(|e| CliError::io(&path, e))?);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
