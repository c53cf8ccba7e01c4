//! Raw video input: Y4M and headerless planar YUV readers, luma-plane access,
//! and the 360p downsampler used before pre-encoding.
//!
//! Only the luma plane is kept; every downstream feature (texture,
//! blockiness, blur, temporal) is luma-only, so chroma is skipped at parse
//! time. 8-bit samples only; high-bit-depth input is rejected rather than
//! truncated.

pub mod scale;
pub mod y4m;

pub use scale::downsample_to_360p;
pub use y4m::{parse_y4m, write_y4m};

use crate::error::{Error, Result};

/// A borrowed 8-bit luma plane.
#[derive(Debug, Clone, Copy)]
pub struct LumaPlane<'a> {
    pub data: &'a [u8],
    pub width: usize,
    pub height: usize,
}

impl<'a> LumaPlane<'a> {
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// Decoded clip: luma planes only, plus frame geometry and rate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoClip {
    width: usize,
    height: usize,
    fps_num: u32,
    fps_den: u32,
    frames: Vec<Vec<u8>>,
}

impl VideoClip {
    pub fn new(width: usize, height: usize, fps: (u32, u32), frames: Vec<Vec<u8>>) -> Result<Self> {
        if width < 16 || height < 16 {
            return Err(Error::Shape(format!(
                "clip dimensions {width}x{height} below the 16x16 minimum"
            )));
        }
        if frames.is_empty() {
            return Err(Error::Shape("clip needs at least one frame".into()));
        }
        if fps.0 == 0 || fps.1 == 0 {
            return Err(Error::Shape(format!("invalid frame rate {}:{}", fps.0, fps.1)));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.len() != width * height {
                return Err(Error::Shape(format!(
                    "frame {i} has {} samples, expected {}",
                    f.len(),
                    width * height
                )));
            }
        }
        Ok(VideoClip { width, height, fps_num: fps.0, fps_den: fps.1, frames })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn fps(&self) -> (u32, u32) {
        (self.fps_num, self.fps_den)
    }

    pub fn fps_f64(&self) -> f64 {
        self.fps_num as f64 / self.fps_den as f64
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frame_count() as f64 / self.fps_f64()
    }

    pub fn plane(&self, frame: usize) -> LumaPlane<'_> {
        LumaPlane { data: &self.frames[frame], width: self.width, height: self.height }
    }

    pub fn frames(&self) -> &[Vec<u8>] {
        &self.frames
    }
}

/// Reads headerless planar YUV. Dimensions, frame rate and chroma subsampling
/// come from sidecar flags; the stream must contain a whole number of frames.
pub fn parse_raw_yuv(
    data: &[u8],
    width: usize,
    height: usize,
    fps: (u32, u32),
    chroma: y4m::Chroma,
) -> Result<VideoClip> {
    let luma = width * height;
    let frame_size = luma + chroma.chroma_bytes(width, height)?;
    if data.is_empty() || data.len() % frame_size != 0 {
        return Err(Error::parse(
            format!("byte {}", data.len()),
            format!(
                "raw stream length {} is not a whole number of {frame_size}-byte frames",
                data.len()
            ),
        ));
    }
    let frames = data
        .chunks_exact(frame_size)
        .map(|chunk| chunk[..luma].to_vec())
        .collect();
    VideoClip::new(width, height, fps, frames)
}
