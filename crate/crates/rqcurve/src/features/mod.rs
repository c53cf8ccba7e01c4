//! The three feature families: content features from raw luma frames, codec
//! features from parsed pre-encode stats, and anchor features from one anchor
//! encode.

pub mod codec;
pub mod content;
pub mod glcm;
pub mod quality;
pub mod temporal;

pub use codec::{
    assemble_codec_features, codec_field_names, CodecFeatures, CODEC_DIM, CODEC_SCHEMA_TAG,
    PRE_ENCODE_CRF_HIGH, PRE_ENCODE_CRF_LOW,
};
pub use content::{
    content_field_names, extract_content, ContentFeatures, SamplingConfig, CONTENT_DIM,
    CONTENT_SCHEMA_TAG,
};
pub use glcm::{glcm, glcm_stats, GlcmMatrix, GlcmOffset, HaralickStats, CANONICAL_OFFSETS};
pub use quality::{blockiness, blur, noise_sigma, BLUR_CEILING};
pub use temporal::{diff_plane_stats, frame_mad, temporal_stats, TemporalStats};

use crate::codec::EncodeResult;
use crate::core::{AnchorPoint, CrfGrid};
use crate::error::{Error, Result};

/// Anchor feature segment width.
pub const ANCHOR_DIM: usize = 2;

/// Combined schema tag written into feature files and model headers.
pub fn feature_schema_tag() -> String {
    format!("{CODEC_SCHEMA_TAG}.{CODEC_DIM}+{CONTENT_SCHEMA_TAG}.{CONTENT_DIM}+anchor.{ANCHOR_DIM}")
}

/// Turns one anchor-CRF encode into the anchor point and its two-entry
/// feature segment. The measurement must sit exactly at the configured
/// anchor CRF, which must be a grid point.
pub fn assemble_anchor(
    result: &EncodeResult,
    anchor_crf: f64,
    grid: &CrfGrid,
) -> Result<(AnchorPoint, [f64; ANCHOR_DIM])> {
    grid.index_of(anchor_crf)
        .map_err(|_| Error::Config(format!("anchor crf {anchor_crf} is not on the grid")))?;
    if (result.crf - anchor_crf).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "anchor encode at crf {} does not match configured anchor {anchor_crf}",
            result.crf
        )));
    }
    result.validate()?;
    let anchor = AnchorPoint { crf: anchor_crf, bitrate: result.bitrate, vmaf: result.vmaf };
    let segment = anchor.feature_segment();
    Ok((anchor, segment))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_assembly_copies_measurement() {
        let grid = CrfGrid::standard();
        let r = EncodeResult { crf: 30.4, bitrate: 2500.0, vmaf: 92.3, stats: None };
        let (anchor, seg) = assemble_anchor(&r, 30.4, &grid).unwrap();
        assert_eq!(anchor.crf, 30.4);
        assert_eq!(seg, [2500.0, 92.3]);
    }

    #[test]
    fn off_grid_anchor_is_config_error() {
        let grid = CrfGrid::standard();
        let r = EncodeResult { crf: 30.5, bitrate: 2500.0, vmaf: 92.3, stats: None };
        assert!(matches!(assemble_anchor(&r, 30.5, &grid), Err(Error::Config(_))));
    }

    #[test]
    fn mismatched_measurement_rejected() {
        let grid = CrfGrid::standard();
        let r = EncodeResult { crf: 30.2, bitrate: 2500.0, vmaf: 92.3, stats: None };
        assert!(assemble_anchor(&r, 30.4, &grid).is_err());
    }

    #[test]
    fn schema_tag_mentions_all_dims() {
        let tag = feature_schema_tag();
        assert!(tag.contains("113"));
        assert!(tag.contains("65"));
    }
}
