//! Parsed encoder summary statistics and the summary-log parser.
//!
//! The grammar targets the de-facto summary block printed by mainstream
//! open-source encoders:
//!
//! ```text
//! x264 [info]: frame I:2     Avg QP:20.12  size: 9000
//! x264 [info]: frame P:8     Avg QP:23.54  size: 3000
//! x264 [info]: frame B:10    Avg QP:25.18  size:  800
//! x264 [info]: mb I  I16..4: 18.2% 55.1% 26.7%
//! x264 [info]: mb P  I16..4:  2.3%  3.3%  0.8%  P16..4: 33.3% 13.8%  6.0%  skip:40.5%
//! x264 [info]: mb B  I16..4:  0.3%  0.5%  0.1%  B16..8: 20.6%  3.5%  0.5%  direct: 1.4%  skip:73.0%
//! x264 [info]: SSIM Mean Y:0.9874921 (19.023db)
//! x264 [info]: PSNR Mean Y:45.123 U:47.891 V:47.455 Avg:45.810 Global:45.622 kb/s:850.20
//! ```
//!
//! An arbitrary `...]: ` prefix per line is stripped. Unrecognized lines are
//! skipped so encoder version drift degrades gracefully; at least one
//! `frame X:` line is mandatory. The final bitrate is taken from a `kb/s:`
//! field or a trailing `<num> kb/s`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Macroblock partition histogram length: three per-frame-type groups.
pub const PARTITION_BINS: usize = 18;

/// Partition group boundaries within the 18-bin histogram:
/// I frames `[0..3)` (i16x16, i8x8, i4x4),
/// P frames `[3..10)` (i16, i8, i4, p16, p8, p4, skip),
/// B frames `[10..18)` (i16, i8, i4, b16, b8, b4, direct, skip).
pub const PARTITION_GROUPS: [(usize, usize); 3] = [(0, 3), (3, 10), (10, 18)];

/// Summary statistics of one encode, assembled either by parsing an encoder
/// log or synthesized by the simulated codec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderStats {
    /// Frame counts per type (I, P, B).
    pub frame_counts: [u64; 3],
    /// Average QP per frame type; 0 where a type is absent.
    pub qp_by_type: [f64; 3],
    /// Count-weighted mean QP over all frames.
    pub mean_qp: f64,
    /// Mean luma PSNR in dB; 0 when the log reports none.
    pub mean_psnr: f64,
    /// Final bitrate figure in kbps; 0 when the log reports none.
    pub bitrate_kbps: f64,
    /// SSIM-style quality score in [0, 1]; 0 when the log reports none.
    pub quality_score: f64,
    /// Macroblock partition histogram, [`PARTITION_BINS`] entries. Each
    /// per-frame-type group sums to 1, or is all-zero when that type is
    /// absent from the encode.
    pub partition_histogram: Vec<f64>,
    /// Overall (intra, inter, skip) macroblock shares, weighted by frame
    /// counts.
    pub mode_proportions: [f64; 3],
    /// Motion vector magnitude (mean, variance); (0, 0) when the log carries
    /// no motion statistics.
    pub mv_magnitude: (f64, f64),
    /// Share of total bits spent in I/P/B frames.
    pub bits_share: [f64; 3],
}

impl EncoderStats {
    pub fn total_frames(&self) -> u64 {
        self.frame_counts.iter().sum()
    }

    /// Frame-type proportions (I, P, B).
    pub fn frame_proportions(&self) -> [f64; 3] {
        let total = self.total_frames() as f64;
        if total == 0.0 {
            return [0.0; 3];
        }
        [
            self.frame_counts[0] as f64 / total,
            self.frame_counts[1] as f64 / total,
            self.frame_counts[2] as f64 / total,
        ]
    }

    /// Structural invariants: at least one frame, correct histogram length,
    /// finite fields.
    pub fn validate(&self) -> Result<()> {
        if self.total_frames() == 0 {
            return Err(Error::Schema("frame_counts: no frames".into()));
        }
        if self.partition_histogram.len() != PARTITION_BINS {
            return Err(Error::Schema(format!(
                "partition_histogram: {} bins, expected {PARTITION_BINS}",
                self.partition_histogram.len()
            )));
        }
        let all = self
            .partition_histogram
            .iter()
            .chain(self.qp_by_type.iter())
            .chain(self.mode_proportions.iter())
            .chain(self.bits_share.iter())
            .chain([&self.mean_qp, &self.mean_psnr, &self.bitrate_kbps, &self.quality_score])
            .chain([&self.mv_magnitude.0, &self.mv_magnitude.1]);
        for (i, v) in all.enumerate() {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("stats field {i} is not finite")));
            }
        }
        Ok(())
    }

    /// Derives the overall (intra, inter, skip) shares from the partition
    /// groups, weighting each frame type by its frame count. `direct` counts
    /// as inter.
    pub fn derive_mode_proportions(partition: &[f64], frame_counts: &[u64; 3]) -> [f64; 3] {
        let total: u64 = frame_counts.iter().sum();
        if total == 0 {
            return [0.0; 3];
        }
        let w = [
            frame_counts[0] as f64 / total as f64,
            frame_counts[1] as f64 / total as f64,
            frame_counts[2] as f64 / total as f64,
        ];
        // (intra bins, inter bins, skip bins) per group
        let mut intra = w[0] * (partition[0] + partition[1] + partition[2]);
        let mut inter = 0.0;
        let mut skip = 0.0;
        intra += w[1] * (partition[3] + partition[4] + partition[5]);
        inter += w[1] * (partition[6] + partition[7] + partition[8]);
        skip += w[1] * partition[9];
        intra += w[2] * (partition[10] + partition[11] + partition[12]);
        inter += w[2] * (partition[13] + partition[14] + partition[15] + partition[16]);
        skip += w[2] * partition[17];
        let sum = intra + inter + skip;
        if sum > 0.0 {
            [intra / sum, inter / sum, skip / sum]
        } else {
            [0.0; 3]
        }
    }
}

/// Leading number in `s` (optionally %-suffixed), plus how many bytes it used.
fn leading_number(s: &str) -> Option<(f64, usize)> {
    let s2 = s.trim_start();
    let skipped = s.len() - s2.len();
    let mut end = 0;
    for (i, c) in s2.char_indices() {
        if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' {
            end = i + c.len_utf8();
        } else {
            break;
        }
    }
    if end == 0 {
        return None;
    }
    s2[..end].parse::<f64>().ok().map(|v| (v, skipped + end))
}

/// First number following `key` in `line`.
fn number_after(line: &str, key: &str) -> Option<f64> {
    let pos = line.find(key)?;
    leading_number(&line[pos + key.len()..]).map(|(v, _)| v)
}

/// Up to `n` consecutive numbers following `key` (percent signs tolerated).
fn numbers_after(line: &str, key: &str, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let Some(pos) = line.find(key) else {
        return out;
    };
    let mut rest = &line[pos + key.len()..];
    while out.len() < n {
        match leading_number(rest) {
            Some((v, used)) => {
                out.push(v);
                rest = &rest[used..];
                rest = rest.strip_prefix('%').unwrap_or(rest);
            }
            None => break,
        }
    }
    out
}

/// Strips an `x264 [info]: `-style prefix.
fn strip_tool_prefix(line: &str) -> &str {
    match line.find("]: ") {
        Some(pos) => &line[pos + 3..],
        None => line,
    }
}

/// Parses an encoder summary log into [`EncoderStats`].
///
/// Total: every input yields either stats or a structured error. Unknown
/// lines are skipped; at least one frame-type line must be present.
pub fn parse_stats_log(text: &str) -> Result<EncoderStats> {
    let mut counts = [0u64; 3];
    let mut qp = [0.0f64; 3];
    let mut size = [0.0f64; 3];
    let mut seen_frame_line = false;
    let mut partition = vec![0.0f64; PARTITION_BINS];
    let mut seen_mb = [false; 3];
    let mut psnr = 0.0f64;
    let mut ssim = 0.0f64;
    let mut kbps = 0.0f64;
    let mut mv: (f64, f64) = (0.0, 0.0);

    for raw in text.lines() {
        let line = strip_tool_prefix(raw).trim();
        for (t, tag) in ["frame I:", "frame P:", "frame B:"].iter().enumerate() {
            if let Some(rest) = line.strip_prefix(tag) {
                let count = leading_number(rest).map(|(v, _)| v).unwrap_or(0.0);
                if count < 0.0 || count.fract() != 0.0 {
                    return Err(Error::parse(
                        format!("line {raw:?}"),
                        "frame count must be a non-negative integer",
                    ));
                }
                counts[t] = count as u64;
                qp[t] = number_after(line, "Avg QP:").unwrap_or(0.0);
                size[t] = number_after(line, "size:").unwrap_or(0.0);
                seen_frame_line = true;
            }
        }
        if line.starts_with("mb I") {
            let v = numbers_after(line, "I16..4:", 3);
            for (i, x) in v.iter().enumerate() {
                partition[i] = x / 100.0;
            }
            seen_mb[0] = !v.is_empty();
        } else if line.starts_with("mb P") {
            let v = numbers_after(line, "I16..4:", 3);
            for (i, x) in v.iter().enumerate() {
                partition[3 + i] = x / 100.0;
            }
            let v = numbers_after(line, "P16..4:", 3);
            for (i, x) in v.iter().enumerate() {
                partition[6 + i] = x / 100.0;
            }
            if let Some(s) = number_after(line, "skip:") {
                partition[9] = s / 100.0;
            }
            seen_mb[1] = true;
        } else if line.starts_with("mb B") {
            let v = numbers_after(line, "I16..4:", 3);
            for (i, x) in v.iter().enumerate() {
                partition[10 + i] = x / 100.0;
            }
            let v = numbers_after(line, "B16..8:", 3);
            for (i, x) in v.iter().enumerate() {
                partition[13 + i] = x / 100.0;
            }
            if let Some(d) = number_after(line, "direct:") {
                partition[16] = d / 100.0;
            }
            if let Some(s) = number_after(line, "skip:") {
                partition[17] = s / 100.0;
            }
            seen_mb[2] = true;
        }
        if line.starts_with("PSNR Mean") {
            if let Some(v) = number_after(line, "Avg:") {
                psnr = v;
            }
        }
        if line.starts_with("SSIM Mean") {
            if let Some(v) = number_after(line, "Y:") {
                ssim = v;
            }
        }
        if let Some(v) = number_after(line, "kb/s:") {
            kbps = v;
        } else if let Some(pos) = line.find(" kb/s") {
            // trailing "850.20 kb/s" form
            if let Some((v, _)) = line[..pos].split_whitespace().last().and_then(leading_number) {
                kbps = v;
            }
        }
        if let Some(m) = number_after(line, "mv mean:") {
            mv.0 = m;
        }
        if let Some(v) = number_after(line, "mv var:") {
            mv.1 = v;
        }
    }

    if !seen_frame_line {
        return Err(Error::parse("summary block", "no frame-type lines found"));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::parse("summary block", "all frame counts are zero"));
    }

    // Normalize partition groups; zero any group whose frame type is absent.
    for (t, &(lo, hi)) in PARTITION_GROUPS.iter().enumerate() {
        let group = &mut partition[lo..hi];
        if counts[t] == 0 || !seen_mb[t] {
            group.fill(0.0);
            continue;
        }
        let sum: f64 = group.iter().sum();
        if sum > 0.0 {
            for v in group.iter_mut() {
                *v /= sum;
            }
        }
    }

    let totalf = total as f64;
    let mean_qp = (0..3).map(|t| qp[t] * counts[t] as f64).sum::<f64>() / totalf;
    let bits: Vec<f64> = (0..3).map(|t| size[t] * counts[t] as f64).collect();
    let bits_total: f64 = bits.iter().sum();
    let bits_share = if bits_total > 0.0 {
        [bits[0] / bits_total, bits[1] / bits_total, bits[2] / bits_total]
    } else {
        [0.0; 3]
    };
    let mode_proportions = EncoderStats::derive_mode_proportions(&partition, &counts);

    let stats = EncoderStats {
        frame_counts: counts,
        qp_by_type: qp,
        mean_qp,
        mean_psnr: psnr,
        bitrate_kbps: kbps,
        quality_score: ssim,
        partition_histogram: partition,
        mode_proportions,
        mv_magnitude: mv,
        bits_share,
    };
    stats.validate()?;
    Ok(stats)
}
