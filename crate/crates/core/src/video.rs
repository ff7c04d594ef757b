use sha2::{Digest, Sha256};

use crate::error::{ensure, Result};
use crate::resample::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Rgb,
    Luma,
}

/// Ordered, equally sized frames. Values are nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    frames: Vec<Image>,
    color: ColorSpace,
}

impl VideoClip {
    pub fn new(frames: Vec<Image>) -> Result<Self> {
        ensure!(!frames.is_empty(), "a clip needs at least one frame");
        let dims = frames[0].dims();
        for (i, f) in frames.iter().enumerate() {
            ensure!(f.dims() == dims, "frame {i} has dims {:?}, frame 0 has {:?}", f.dims(), dims);
        }
        let color = if dims.0 == 3 { ColorSpace::Rgb } else { ColorSpace::Luma };
        Ok(Self { frames, color })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Image> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color
    }

    /// `(channels, height, width)` shared by every frame.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.frames[0].dims()
    }

    /// Indices of the `len`-frame window centred on `t`, replicate-padded at the ends.
    pub fn window_indices(&self, t: usize, len: usize) -> Vec<usize> {
        let half = (len / 2) as isize;
        let last = self.frames.len() as isize - 1;
        (0..len as isize)
            .map(|k| (t as isize + k - half).clamp(0, last) as usize)
            .collect()
    }

    pub fn window(&self, t: usize, len: usize) -> Vec<&Image> {
        self.window_indices(t, len).into_iter().map(|i| &self.frames[i]).collect()
    }

    pub fn map_frames(&self, f: impl FnMut(&Image) -> Result<Image>) -> Result<VideoClip> {
        VideoClip::new(self.frames.iter().map(f).collect::<Result<Vec<_>>>()?)
    }

    /// SHA-256 of every frame's dims and little-endian samples.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.frames {
            let (c, hh, w) = f.dims();
            for d in [c, hh, w] {
                h.update((d as u64).to_le_bytes());
            }
            h.update(f.data().iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>());
        }
        hex::encode(h.finalize())
    }
}
