//! The 65-dimensional content feature schema and its extractor.
//!
//! Schema v1 layout:
//!
//! * 27 base measures, each contributing (mean, variance) aggregated over the
//!   sampled frames / frame pairs → 54 entries:
//!   - 20 texture measures: Haralick (contrast, energy, entropy, homogeneity,
//!     correlation) for each of the four canonical offsets (right, down,
//!     down-right, down-left), computed per sampled frame;
//!   - 4 temporal measures per sampled consecutive pair: MAD, pixel variance
//!     of |diff|, max |diff|, static-pixel share;
//!   - 3 quality proxies per sampled frame: noise sigma, blockiness, blur.
//! * 11 global statistics: luma mean, luma variance, luma entropy, row
//!   gradient energy, column gradient energy, frame rate, duration, width,
//!   height, pixel count, sampled frame count.
//!
//! Aggregate variances are population variances; a clip with fewer than two
//! sampled pairs reports zero for all temporal entries.

use super::glcm::{glcm, glcm_stats, CANONICAL_OFFSETS};
use super::quality::{blockiness, blur, noise_sigma};
use super::temporal::diff_plane_stats;
use crate::error::{Error, Result};
use crate::ingest::VideoClip;

pub const CONTENT_DIM: usize = 65;
pub const CONTENT_SCHEMA_TAG: &str = "content-v1";

const BASE_MEASURES: usize = 27;
const GLCM_LEVELS: usize = 16;

/// Frame sampling for content extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingConfig {
    /// Upper bound on sampled frames; frames are taken uniformly.
    pub max_frames: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { max_frames: 30 }
    }
}

/// Fixed-length content feature vector (schema above).
#[derive(Debug, Clone, PartialEq)]
pub struct ContentFeatures {
    values: Vec<f64>,
}

impl ContentFeatures {
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.len() != CONTENT_DIM {
            return Err(Error::Schema(format!(
                "content vector has {} entries, schema says {CONTENT_DIM}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("content feature {i} is not finite")));
        }
        Ok(ContentFeatures { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// Field names in schema order; doubles as the schema document.
pub fn content_field_names() -> Vec<String> {
    let mut base = Vec::with_capacity(BASE_MEASURES);
    for off in ["right", "down", "downright", "downleft"] {
        for stat in ["contrast", "energy", "entropy", "homogeneity", "correlation"] {
            base.push(format!("glcm.{off}.{stat}"));
        }
    }
    for t in ["mad", "pixvar", "maxdiff", "static_share"] {
        base.push(format!("temporal.{t}"));
    }
    for q in ["noise_sigma", "blockiness", "blur"] {
        base.push(format!("quality.{q}"));
    }
    debug_assert_eq!(base.len(), BASE_MEASURES);

    let mut names = Vec::with_capacity(CONTENT_DIM);
    for b in &base {
        names.push(format!("{b}.mean"));
        names.push(format!("{b}.var"));
    }
    for g in [
        "luma_mean",
        "luma_var",
        "luma_entropy",
        "row_grad_energy",
        "col_grad_energy",
        "frame_rate",
        "duration_s",
        "width",
        "height",
        "pixel_count",
        "sampled_frames",
    ] {
        names.push(format!("global.{g}"));
    }
    names
}

fn sample_indices(frame_count: usize, max_frames: usize) -> Vec<usize> {
    let max_frames = max_frames.max(1);
    if frame_count <= max_frames {
        return (0..frame_count).collect();
    }
    // uniform stride, always including frame 0
    (0..max_frames).map(|k| k * frame_count / max_frames).collect()
}

fn mean_var(series: &[f64]) -> (f64, f64) {
    if series.is_empty() {
        return (0.0, 0.0);
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Computes the full 65-entry content vector. Deterministic for a fixed clip
/// and sampling config.
pub fn extract_content(clip: &VideoClip, config: &SamplingConfig) -> Result<ContentFeatures> {
    let indices = sample_indices(clip.frame_count(), config.max_frames);

    // per-frame series for the 23 spatial measures
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(indices.len()); BASE_MEASURES];
    for &fi in &indices {
        let plane = clip.plane(fi);
        let mut k = 0;
        for off in CANONICAL_OFFSETS {
            let m = glcm(&plane, off, GLCM_LEVELS)?;
            for v in glcm_stats(&m).as_array() {
                series[k].push(v);
                k += 1;
            }
        }
        // temporal series filled below (indices 20..24)
        k = 24;
        series[k].push(noise_sigma(&plane));
        series[k + 1].push(blockiness(&plane));
        series[k + 2].push(blur(&plane));
    }
    for w in indices.windows(2) {
        let (mad, pixvar, maxd, static_share) =
            diff_plane_stats(&clip.plane(w[0]), &clip.plane(w[1]));
        series[20].push(mad);
        series[21].push(pixvar);
        series[22].push(maxd);
        series[23].push(static_share);
    }

    let mut values = Vec::with_capacity(CONTENT_DIM);
    for s in &series {
        let (m, v) = mean_var(s);
        values.push(m);
        values.push(v);
    }

    // global statistics over sampled frames
    let mut hist = [0u64; 256];
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut count = 0u64;
    let mut row_grad = 0.0f64;
    let mut row_n = 0u64;
    let mut col_grad = 0.0f64;
    let mut col_n = 0u64;
    for &fi in &indices {
        let p = clip.plane(fi);
        for &v in p.data {
            hist[v as usize] += 1;
            sum += v as f64;
            sum_sq += (v as f64) * (v as f64);
            count += 1;
        }
        for y in 0..p.height {
            for x in 1..p.width {
                let d = p.at(x, y) as f64 - p.at(x - 1, y) as f64;
                row_grad += d * d;
                row_n += 1;
            }
        }
        for y in 1..p.height {
            for x in 0..p.width {
                let d = p.at(x, y) as f64 - p.at(x, y - 1) as f64;
                col_grad += d * d;
                col_n += 1;
            }
        }
    }
    let n = count as f64;
    let luma_mean = sum / n;
    let luma_var = (sum_sq / n - luma_mean * luma_mean).max(0.0);
    let luma_entropy = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>();

    values.push(luma_mean);
    values.push(luma_var);
    values.push(luma_entropy);
    values.push(row_grad / row_n.max(1) as f64);
    values.push(col_grad / col_n.max(1) as f64);
    values.push(clip.fps_f64());
    values.push(clip.duration_seconds());
    values.push(clip.width() as f64);
    values.push(clip.height() as f64);
    values.push((clip.width() * clip.height()) as f64);
    values.push(indices.len() as f64);

    ContentFeatures::from_vec(values)
}
