//! Uniform encode-and-measure interface with two implementations: an
//! external-subprocess adapter (real encoder plus quality-metric tool) and
//! the simulated codec, plus the encoder summary-log parser.

pub mod external;
pub mod stats;

pub use external::{BackendConfig, ExternalBackend};
pub use stats::{parse_stats_log, EncoderStats, PARTITION_BINS, PARTITION_GROUPS};

use crate::core::CrfGrid;
use crate::error::{Error, Result};
use crate::simcodec::LatentVideo;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// One codec invocation's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResult {
    pub crf: f64,
    pub bitrate: f64,
    pub vmaf: f64,
    pub stats: Option<EncoderStats>,
}

impl EncodeResult {
    pub fn validate(&self) -> Result<()> {
        if !(self.bitrate > 0.0) {
            return Err(Error::Numeric(format!("bitrate {} must be > 0", self.bitrate)));
        }
        if !(0.0..=100.0).contains(&self.vmaf) {
            return Err(Error::Numeric(format!("vmaf {} outside [0, 100]", self.vmaf)));
        }
        Ok(())
    }
}

/// Frame-count and frame-rate sidecar needed to turn an output file size into
/// a bitrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub frame_count: usize,
    pub fps_num: u32,
    pub fps_den: u32,
}

impl ClipMeta {
    pub fn duration_seconds(&self) -> f64 {
        self.frame_count as f64 * self.fps_den as f64 / self.fps_num as f64
    }
}

/// What a backend encodes: a file on disk (external backend) or a latent
/// video (simulated codec).
#[derive(Debug, Clone)]
pub enum EncodeInput {
    File { path: PathBuf, meta: ClipMeta },
    Latent(LatentVideo),
}

/// Encode-and-measure interface. `encode_measure` is restricted to the grid
/// CRF range; `pre_encode` is the fast low-resolution pass used for codec
/// features and accepts the wider pre-encode range (the defaults encode at
/// CRF 18 and 33).
pub trait CodecBackend: Sync {
    fn encode_measure(&self, input: &EncodeInput, crf: f64) -> Result<EncodeResult>;

    /// Fast pre-encode that must return parsed stats.
    fn pre_encode(&self, input: &EncodeInput, crf: f64) -> Result<EncodeResult>;
}

/// Shared precondition for [`CodecBackend::encode_measure`].
pub fn check_measure_crf(grid: &CrfGrid, crf: f64) -> Result<()> {
    if !crf.is_finite() || crf < grid.min_crf() || crf > grid.max_crf() {
        return Err(Error::Config(format!(
            "crf {crf} outside measurable range [{}, {}]",
            grid.min_crf(),
            grid.max_crf()
        )));
    }
    Ok(())
}

/// CRF bounds accepted by `pre_encode` (the x264-style 0..51 scale).
pub const PRE_ENCODE_CRF_RANGE: (f64, f64) = (0.0, 51.0);

pub fn check_pre_encode_crf(crf: f64) -> Result<()> {
    if !crf.is_finite() || crf < PRE_ENCODE_CRF_RANGE.0 || crf > PRE_ENCODE_CRF_RANGE.1 {
        return Err(Error::Config(format!(
            "pre-encode crf {crf} outside [{}, {}]",
            PRE_ENCODE_CRF_RANGE.0, PRE_ENCODE_CRF_RANGE.1
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_crf_range() {
        let g = CrfGrid::standard();
        assert!(check_measure_crf(&g, 30.4).is_ok());
        assert!(check_measure_crf(&g, 20.0).is_ok());
        assert!(check_measure_crf(&g, 40.0).is_ok());
        assert!(check_measure_crf(&g, 45.0).is_err());
        assert!(check_measure_crf(&g, 19.9).is_err());
        assert!(check_measure_crf(&g, f64::NAN).is_err());
    }

    #[test]
    fn encode_result_validation() {
        let ok = EncodeResult { crf: 30.4, bitrate: 2500.0, vmaf: 92.0, stats: None };
        assert!(ok.validate().is_ok());
        assert!(EncodeResult { bitrate: 0.0, ..ok.clone() }.validate().is_err());
        assert!(EncodeResult { vmaf: 101.0, ..ok }.validate().is_err());
    }
}
