//! The 113-dimensional codec feature schema, assembled from the two
//! pre-encode stats records (CRF 18 and CRF 33).
//!
//! Schema v1 layout:
//!
//! * `[0, 37)`   low pre-encode block (CRF 18),
//! * `[37, 74)`  high pre-encode block (CRF 33),
//! * `[74, 111)` elementwise low − high deltas over the same 37 measures,
//! * `[111]`     log-bitrate slope `(ln r_low − ln r_high) / (crf_high − crf_low)`,
//! * `[112]`     QP slope `(qp_high − qp_low) / (crf_high − crf_low)`.
//!
//! Each 37-entry block is: frame-type proportions (3), per-type QP (3), mean
//! QP (1), mean PSNR (1), bitrate kbps (1), log1p bitrate (1), quality score
//! (1), partition histogram (18), mode proportions (3), MV magnitude mean and
//! variance (2), bits shares (3).

use crate::codec::{EncoderStats, PARTITION_GROUPS};
use crate::error::{Error, Result};

pub const CODEC_DIM: usize = 113;
pub const CODEC_SCHEMA_TAG: &str = "codec-v1";
const BLOCK_DIM: usize = 37;

/// CRFs of the two fast pre-encodes the schema is built from.
pub const PRE_ENCODE_CRF_LOW: f64 = 18.0;
pub const PRE_ENCODE_CRF_HIGH: f64 = 33.0;

/// Fixed-length codec feature vector (schema above).
#[derive(Debug, Clone, PartialEq)]
pub struct CodecFeatures {
    values: Vec<f64>,
}

impl CodecFeatures {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// Renormalizes a proportion group in place. Groups are accepted when they
/// sum to 1 within ±0.01 and renormalized exactly; an all-zero group is
/// allowed when `may_be_empty` (frame type absent from the encode).
fn renormalize(group: &mut [f64], what: &str, may_be_empty: bool) -> Result<()> {
    if let Some(i) = group.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Schema(format!("{what}[{i}] is negative or non-finite")));
    }
    let sum: f64 = group.iter().sum();
    if sum == 0.0 {
        if may_be_empty {
            return Ok(());
        }
        return Err(Error::Schema(format!("{what}: proportions sum to 0")));
    }
    if !(0.99..=1.01).contains(&sum) {
        return Err(Error::Schema(format!("{what}: proportions sum to {sum}, outside [0.99, 1.01]")));
    }
    for v in group.iter_mut() {
        *v /= sum;
    }
    Ok(())
}

fn block_of(stats: &EncoderStats, which: &str) -> Result<[f64; BLOCK_DIM]> {
    stats.validate().map_err(|e| Error::Schema(format!("{which}: {e}")))?;
    if !(stats.bitrate_kbps > 0.0) {
        return Err(Error::Schema(format!("{which}: bitrate_kbps missing or non-positive")));
    }

    let mut props = stats.frame_proportions();
    renormalize(&mut props, &format!("{which}.frame_proportions"), false)?;

    let mut partition = stats.partition_histogram.clone();
    for (t, &(lo, hi)) in PARTITION_GROUPS.iter().enumerate() {
        renormalize(
            &mut partition[lo..hi],
            &format!("{which}.partition[{t}]"),
            stats.frame_counts[t] == 0,
        )?;
    }

    // Logs without macroblock or size lines leave these groups empty; they
    // stay zero rather than failing the whole record.
    let mut modes = stats.mode_proportions;
    renormalize(&mut modes, &format!("{which}.mode_proportions"), true)?;

    let mut bits = stats.bits_share;
    renormalize(&mut bits, &format!("{which}.bits_share"), true)?;

    let mut out = [0.0; BLOCK_DIM];
    let mut k = 0;
    let mut push = |v: f64, out: &mut [f64; BLOCK_DIM]| {
        out[k] = v;
        k += 1;
    };
    for v in props {
        push(v, &mut out);
    }
    for v in stats.qp_by_type {
        push(v, &mut out);
    }
    push(stats.mean_qp, &mut out);
    push(stats.mean_psnr, &mut out);
    push(stats.bitrate_kbps, &mut out);
    push(stats.bitrate_kbps.ln_1p(), &mut out);
    push(stats.quality_score, &mut out);
    for &v in &partition {
        push(v, &mut out);
    }
    for v in modes {
        push(v, &mut out);
    }
    push(stats.mv_magnitude.0, &mut out);
    push(stats.mv_magnitude.1, &mut out);
    for v in bits {
        push(v, &mut out);
    }
    debug_assert_eq!(k, BLOCK_DIM);
    Ok(out)
}

/// Assembles the 113-entry codec vector from the two pre-encode stats.
pub fn assemble_codec_features(
    stats_low: &EncoderStats,
    stats_high: &EncoderStats,
) -> Result<CodecFeatures> {
    let low = block_of(stats_low, "low")?;
    let high = block_of(stats_high, "high")?;
    let mut values = Vec::with_capacity(CODEC_DIM);
    values.extend_from_slice(&low);
    values.extend_from_slice(&high);
    for i in 0..BLOCK_DIM {
        values.push(low[i] - high[i]);
    }
    let dcrf = PRE_ENCODE_CRF_HIGH - PRE_ENCODE_CRF_LOW;
    values.push((stats_low.bitrate_kbps.ln() - stats_high.bitrate_kbps.ln()) / dcrf);
    values.push((stats_high.mean_qp - stats_low.mean_qp) / dcrf);
    debug_assert_eq!(values.len(), CODEC_DIM);
    Ok(CodecFeatures { values })
}

/// Field names in schema order.
pub fn codec_field_names() -> Vec<String> {
    let mut block = Vec::with_capacity(BLOCK_DIM);
    for t in ["i", "p", "b"] {
        block.push(format!("frames.{t}"));
    }
    for t in ["i", "p", "b"] {
        block.push(format!("qp.{t}"));
    }
    block.push("qp.mean".into());
    block.push("psnr.mean".into());
    block.push("bitrate_kbps".into());
    block.push("bitrate_log1p".into());
    block.push("quality".into());
    for name in [
        "part.i.i16", "part.i.i8", "part.i.i4", "part.p.i16", "part.p.i8", "part.p.i4",
        "part.p.p16", "part.p.p8", "part.p.p4", "part.p.skip", "part.b.i16", "part.b.i8",
        "part.b.i4", "part.b.b16", "part.b.b8", "part.b.b4", "part.b.direct", "part.b.skip",
    ] {
        block.push(name.into());
    }
    for m in ["intra", "inter", "skip"] {
        block.push(format!("mode.{m}"));
    }
    block.push("mv.mean".into());
    block.push("mv.var".into());
    for t in ["i", "p", "b"] {
        block.push(format!("bits.{t}"));
    }
    debug_assert_eq!(block.len(), BLOCK_DIM);

    let mut names = Vec::with_capacity(CODEC_DIM);
    for b in &block {
        names.push(format!("low.{b}"));
    }
    for b in &block {
        names.push(format!("high.{b}"));
    }
    for b in &block {
        names.push(format!("delta.{b}"));
    }
    names.push("slope.log_bitrate".into());
    names.push("slope.qp".into());
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::PARTITION_BINS;

    fn sample_stats(kbps: f64, qp: f64) -> EncoderStats {
        let mut partition = vec![0.0; PARTITION_BINS];
        partition[0..3].copy_from_slice(&[0.2, 0.5, 0.3]);
        partition[3..10].copy_from_slice(&[0.02, 0.02, 0.01, 0.45, 0.2, 0.1, 0.2]);
        let counts = [2u64, 8, 10];
        let modes = EncoderStats::derive_mode_proportions(&partition, &counts);
        EncoderStats {
            frame_counts: counts,
            qp_by_type: [qp - 2.0, qp, qp + 1.0],
            mean_qp: qp,
            mean_psnr: 42.0,
            bitrate_kbps: kbps,
            quality_score: 0.97,
            partition_histogram: partition,
            mode_proportions: modes,
            mv_magnitude: (3.5, 1.2),
            bits_share: [0.3, 0.4, 0.3],
        }
    }

    #[test]
    fn schema_has_113_names() {
        let names = codec_field_names();
        assert_eq!(names.len(), CODEC_DIM);
        assert_eq!(names[0], "low.frames.i");
        assert_eq!(names[112], "slope.qp");
    }

    #[test]
    fn assembled_length_and_proportions() {
        let low = sample_stats(4000.0, 21.0);
        let high = sample_stats(900.0, 33.0);
        let f = assemble_codec_features(&low, &high).unwrap();
        assert_eq!(f.values().len(), CODEC_DIM);
        // frame proportions (2, 8, 10) → (0.1, 0.4, 0.5)
        assert!((f.values()[0] - 0.1).abs() < 1e-12);
        assert!((f.values()[1] - 0.4).abs() < 1e-12);
        assert!((f.values()[2] - 0.5).abs() < 1e-12);
        // delta block: bitrate delta at offset 74+8
        assert!((f.values()[74 + 8] - (4000.0 - 900.0)).abs() < 1e-9);
        // log bitrate slope is negative (bitrate falls as crf rises)
        assert!(f.values()[111] > 0.0);
        // qp slope positive
        assert!((f.values()[112] - (33.0 - 21.0) / 15.0).abs() < 1e-12);
    }

    #[test]
    fn bad_proportions_rejected() {
        let mut s = sample_stats(1000.0, 25.0);
        s.mode_proportions = [0.5, 0.1, 0.1]; // sums to 0.7
        let err = assemble_codec_features(&s, &sample_stats(500.0, 30.0)).unwrap_err();
        assert!(err.to_string().contains("mode_proportions"), "{err}");
    }

    #[test]
    fn near_one_proportions_renormalized() {
        let mut s = sample_stats(1000.0, 25.0);
        s.bits_share = [0.301, 0.402, 0.302]; // sums to 1.005
        let f = assemble_codec_features(&s, &sample_stats(500.0, 30.0)).unwrap();
        let sum: f64 = f.values()[34..37].iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_bitrate_named_in_error() {
        let mut s = sample_stats(1000.0, 25.0);
        s.bitrate_kbps = 0.0;
        let err = assemble_codec_features(&s, &sample_stats(500.0, 30.0)).unwrap_err();
        assert!(err.to_string().contains("bitrate_kbps"), "{err}");
    }
}
