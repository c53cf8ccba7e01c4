//! Parametric ground-truth oracle standing in for a real encoder and corpus.
//!
//! Each synthetic video is a seeded 8-entry latent complexity vector `z`.
//! Curve parameters derive deterministically from `z` through a fixed
//! projection squashed into fixed ranges, giving every video a strictly
//! decreasing logistic CRF→VMAF curve and exponential CRF→bitrate curve with
//! closed forms. Features are noisy views of `z`: the codec segment is
//! assembled from synthesized pre-encode stats through the same assembly path
//! the real pipeline uses, the content segment is a fixed random linear map
//! of `z`, and the anchor segment carries the exact closed-form measurements
//! at the anchor CRF.

use crate::codec::{
    check_measure_crf, check_pre_encode_crf, CodecBackend, EncodeInput, EncodeResult,
    EncoderStats, PARTITION_BINS, PARTITION_GROUPS,
};
use crate::core::{AnchorPoint, CrfGrid, FeatureVector, RateQualityCurve};
use crate::error::{Error, Result};
use crate::features::{assemble_codec_features, CONTENT_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

pub const LATENT_DIM: usize = 8;

/// Default anchor CRF (grid index 52).
pub const ANCHOR_CRF: f64 = 30.4;

/// Closed-form curve parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    /// CRF of the half-quality point of the logistic VMAF curve.
    pub v_mid: f64,
    /// Logistic steepness.
    pub k: f64,
    /// Bitrate at CRF 20 in kbps.
    pub r20: f64,
    /// Exponential bitrate decay per CRF unit.
    pub rho: f64,
}

/// One synthetic video: seed, latent complexity, derived curve parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentVideo {
    pub seed: u64,
    pub z: [f64; LATENT_DIM],
    pub theta: CurveParams,
}

/// Ground-truth VMAF at a CRF: `100 / (1 + exp(k (crf - v_mid)))`, clamped to
/// [0, 100]. Strictly decreasing in CRF.
pub fn vmaf_gt(theta: &CurveParams, crf: f64) -> f64 {
    (100.0 / (1.0 + (theta.k * (crf - theta.v_mid)).exp())).clamp(0.0, 100.0)
}

/// Ground-truth bitrate at a CRF: `r20 * exp(-rho (crf - 20))` kbps.
pub fn bitrate_gt(theta: &CurveParams, crf: f64) -> f64 {
    theta.r20 * (-theta.rho * (crf - 20.0)).exp()
}

/// Ground-truth curve sampled on the whole grid.
pub fn ground_truth_curve(theta: &CurveParams, grid: &CrfGrid) -> RateQualityCurve {
    let mut vmaf = Vec::with_capacity(grid.count());
    let mut bitrate = Vec::with_capacity(grid.count());
    for i in 0..grid.count() {
        let crf = grid.crf_of(i).expect("index in range");
        vmaf.push(vmaf_gt(theta, crf));
        bitrate.push(bitrate_gt(theta, crf));
    }
    RateQualityCurve::new(vmaf, bitrate).expect("grid-shaped curve")
}

/// Exact anchor measurement from the closed forms.
pub fn exact_anchor(theta: &CurveParams) -> AnchorPoint {
    AnchorPoint {
        crf: ANCHOR_CRF,
        bitrate: bitrate_gt(theta, ANCHOR_CRF),
        vmaf: vmaf_gt(theta, ANCHOR_CRF),
    }
}

// ---------------------------------------------------------------------------
// Fixed projection maps
// ---------------------------------------------------------------------------

/// Stream tags keeping the seeded RNG uses disjoint.
const STREAM_SAMPLE: u64 = 0x5eed_0001;
const STREAM_STATS: u64 = 0x5eed_0002;
const STREAM_CONTENT: u64 = 0x5eed_0003;
const STREAM_MEASURE: u64 = 0x5eed_0004;

/// Seed of the fixed projection maps shared by every dataset.
const FIXED_MAP_SEED: u64 = 0x2f6e_6f74_6562_6f6f;

struct SimMaps {
    theta_rows: [[f64; LATENT_DIM]; 4],
    content_rows: Vec<[f64; LATENT_DIM]>,
    partition_rows: [[f64; LATENT_DIM]; PARTITION_BINS],
    bits_rows: [[f64; LATENT_DIM]; 3],
    qp_row: [f64; LATENT_DIM],
    psnr_row: [f64; LATENT_DIM],
    rate_row: [f64; LATENT_DIM],
    mv_row: [f64; LATENT_DIM],
    mv_var_row: [f64; LATENT_DIM],
    count_p_row: [f64; LATENT_DIM],
    count_b_row: [f64; LATENT_DIM],
    quality_row: [f64; LATENT_DIM],
}

fn unit_row(rng: &mut ChaCha8Rng) -> [f64; LATENT_DIM] {
    let mut row = [0.0; LATENT_DIM];
    for v in row.iter_mut() {
        *v = normal(rng);
    }
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    for v in row.iter_mut() {
        *v /= norm;
    }
    row
}

fn maps() -> &'static SimMaps {
    static MAPS: OnceLock<SimMaps> = OnceLock::new();
    MAPS.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(FIXED_MAP_SEED);
        let mut rows4 = [[0.0; LATENT_DIM]; 4];
        for r in rows4.iter_mut() {
            *r = unit_row(&mut rng);
        }
        let content_rows = (0..CONTENT_DIM).map(|_| unit_row(&mut rng)).collect();
        let mut partition_rows = [[0.0; LATENT_DIM]; PARTITION_BINS];
        for r in partition_rows.iter_mut() {
            *r = unit_row(&mut rng);
        }
        let mut bits_rows = [[0.0; LATENT_DIM]; 3];
        for r in bits_rows.iter_mut() {
            *r = unit_row(&mut rng);
        }
        SimMaps {
            theta_rows: rows4,
            content_rows,
            partition_rows,
            bits_rows,
            qp_row: unit_row(&mut rng),
            psnr_row: unit_row(&mut rng),
            rate_row: unit_row(&mut rng),
            mv_row: unit_row(&mut rng),
            mv_var_row: unit_row(&mut rng),
            count_p_row: unit_row(&mut rng),
            count_b_row: unit_row(&mut rng),
            quality_row: unit_row(&mut rng),
        }
    })
}

fn dot(row: &[f64; LATENT_DIM], z: &[f64; LATENT_DIM]) -> f64 {
    row.iter().zip(z.iter()).map(|(a, b)| a * b).sum()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn derive_theta(z: &[f64; LATENT_DIM]) -> CurveParams {
    let m = maps();
    CurveParams {
        v_mid: 32.0 + 12.0 * logistic(dot(&m.theta_rows[0], z)),
        k: 0.15 + 0.30 * logistic(dot(&m.theta_rows[1], z)),
        r20: 1000.0 + 19000.0 * logistic(dot(&m.theta_rows[2], z)),
        rho: 0.08 + 0.12 * logistic(dot(&m.theta_rows[3], z)),
    }
}

impl LatentVideo {
    /// Deterministic latent draw: `z` is standard normal from the seed, theta
    /// follows from `z` through the fixed projection.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ STREAM_SAMPLE);
        let mut z = [0.0; LATENT_DIM];
        for v in z.iter_mut() {
            *v = normal(&mut rng);
        }
        LatentVideo { seed, z, theta: derive_theta(&z) }
    }
}

// ---------------------------------------------------------------------------
// Stats and feature synthesis
// ---------------------------------------------------------------------------

fn crf_stream(seed: u64, crf: f64, stream: u64) -> ChaCha8Rng {
    let tenths = (crf * 10.0).round() as i64 as u64;
    ChaCha8Rng::seed_from_u64(seed ^ stream ^ tenths.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn softmax_into(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Synthesizes the pre-encode summary stats for one video at one CRF. The
/// measures are projections of `z` with CRF-dependent terms plus Gaussian
/// feature noise of scale `noise_sigma`; proportion groups are softmax
/// normalized so the stats always satisfy the assembly invariants.
pub fn synth_stats(latent: &LatentVideo, crf: f64, noise_sigma: f64) -> EncoderStats {
    let m = maps();
    let z = &latent.z;
    let mut rng = crf_stream(latent.seed, crf, STREAM_STATS);
    let mut eps = |scale: f64| scale * noise_sigma * normal(&mut rng);

    let frame_counts = [
        2u64,
        18 + (6.0 * logistic(dot(&m.count_p_row, z))).round() as u64,
        20 + (8.0 * logistic(dot(&m.count_b_row, z))).round() as u64,
    ];

    let qp_center = 0.8 * crf + 4.0 + 1.5 * dot(&m.qp_row, z);
    let qp_by_type = [
        qp_center - 3.0 + eps(0.5),
        qp_center + eps(0.5),
        qp_center + 1.5 + eps(0.5),
    ];
    let total = frame_counts.iter().sum::<u64>() as f64;
    let mean_qp = (0..3).map(|t| qp_by_type[t] * frame_counts[t] as f64).sum::<f64>() / total;

    let mean_psnr = 50.0 - 0.45 * qp_center + 2.0 * dot(&m.psnr_row, z) + eps(0.5);
    let bitrate_kbps = (0.12 * bitrate_gt(&latent.theta, crf)
        * (0.1 * dot(&m.rate_row, z) + eps(0.05)).exp())
    .max(1.0);
    let quality_score =
        (vmaf_gt(&latent.theta, crf) / 100.0 + 0.02 * dot(&m.quality_row, z) + eps(0.01))
            .clamp(0.01, 0.999);

    // Partition logits: plausible baselines, a latent term, and a CRF trend
    // (skip rises and fine partitions fade as CRF climbs).
    let base: [f64; PARTITION_BINS] = [
        1.0, 1.2, 0.6, // I frame: i16, i8, i4
        -1.5, -1.5, -2.0, 1.2, 0.6, 0.0, 1.0, // P frame
        -2.0, -2.0, -2.5, 0.8, 0.2, -0.3, -0.5, 1.5, // B frame
    ];
    let crf_trend: [f64; PARTITION_BINS] = [
        0.0, 0.0, -0.3, //
        0.0, 0.0, -0.3, 0.0, 0.0, -0.3, 0.5, //
        0.0, 0.0, -0.3, 0.0, 0.0, -0.3, 0.0, 0.5,
    ];
    let mut partition = [0.0f64; PARTITION_BINS];
    for (j, p) in partition.iter_mut().enumerate() {
        *p = base[j]
            + 0.5 * dot(&m.partition_rows[j], z)
            + crf_trend[j] * (crf - 25.0) / 10.0
            + eps(0.2);
    }
    for &(lo, hi) in PARTITION_GROUPS.iter() {
        softmax_into(&mut partition[lo..hi]);
    }

    let mut bits = [0.0f64; 3];
    let bits_base = [1.1, 0.8, -0.2];
    for (j, b) in bits.iter_mut().enumerate() {
        *b = bits_base[j] + 0.3 * dot(&m.bits_rows[j], z) + eps(0.2);
    }
    softmax_into(&mut bits);

    let softplus = |x: f64| (1.0 + x.exp()).ln();
    let mv_mean = softplus(2.0 + dot(&m.mv_row, z) + eps(0.3));
    let mv_var = softplus(1.0 + dot(&m.mv_var_row, z) + eps(0.3));

    let partition_histogram = partition.to_vec();
    let mode_proportions = EncoderStats::derive_mode_proportions(&partition_histogram, &frame_counts);

    EncoderStats {
        frame_counts,
        qp_by_type,
        mean_qp,
        mean_psnr,
        bitrate_kbps,
        quality_score,
        partition_histogram,
        mode_proportions,
        mv_magnitude: (mv_mean, mv_var),
        bits_share: bits,
    }
}

/// Synthesizes the full feature vector for one video. The codec segment goes
/// through [`assemble_codec_features`] on synthesized pre-encode stats; the
/// content segment is a fixed random linear map of `z` plus noise; the anchor
/// segment is exact.
pub fn synth_features(latent: &LatentVideo, noise_sigma: f64) -> FeatureVector {
    let stats_low = synth_stats(latent, crate::features::PRE_ENCODE_CRF_LOW, noise_sigma);
    let stats_high = synth_stats(latent, crate::features::PRE_ENCODE_CRF_HIGH, noise_sigma);
    let codec = assemble_codec_features(&stats_low, &stats_high)
        .expect("synthesized stats are normalized by construction")
        .into_vec();

    let m = maps();
    let mut rng = crf_stream(latent.seed, 0.0, STREAM_CONTENT);
    let content = m
        .content_rows
        .iter()
        .map(|row| dot(row, &latent.z) + noise_sigma * normal(&mut rng))
        .collect();

    let anchor = exact_anchor(&latent.theta);
    FeatureVector { codec, content, anchor: Some(anchor.feature_segment()) }
}

// ---------------------------------------------------------------------------
// Dataset synthesis
// ---------------------------------------------------------------------------

/// One synthetic sample: the latent stays alongside so tests and the
/// evaluation harness can query the oracle.
#[derive(Debug, Clone)]
pub struct SimSample {
    pub id: String,
    pub latent: LatentVideo,
    pub features: FeatureVector,
    pub anchor: AnchorPoint,
    pub truth: RateQualityCurve,
}

#[derive(Debug, Clone)]
pub struct SimDataset {
    pub train: Vec<SimSample>,
    pub test: Vec<SimSample>,
    pub noise_sigma: f64,
    pub seed: u64,
}

fn splitmix(seed: u64, index: u64) -> u64 {
    let mut x = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn synth_sample(prefix: &str, seed: u64, index: u64, noise_sigma: f64, grid: &CrfGrid) -> SimSample {
    let latent = LatentVideo::from_seed(splitmix(seed, index));
    SimSample {
        id: format!("{prefix}-{index:05}"),
        latent,
        features: synth_features(&latent, noise_sigma),
        anchor: exact_anchor(&latent.theta),
        truth: ground_truth_curve(&latent.theta, grid),
    }
}

/// Deterministic train/test synthesis with disjoint per-sample seeds.
pub fn synth_dataset(n_train: usize, n_test: usize, seed: u64, noise_sigma: f64) -> Result<SimDataset> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::Config("dataset needs at least one train and one test sample".into()));
    }
    let grid = CrfGrid::standard();
    let train = (0..n_train)
        .map(|i| synth_sample("train", seed, i as u64, noise_sigma, &grid))
        .collect();
    let test = (0..n_test)
        .map(|j| synth_sample("test", seed, (n_train + j) as u64, noise_sigma, &grid))
        .collect();
    Ok(SimDataset { train, test, noise_sigma, seed })
}

// ---------------------------------------------------------------------------
// Backend implementation
// ---------------------------------------------------------------------------

/// The simulated codec as an encode-and-measure backend. Measurement noise
/// perturbs the returned bitrate/VMAF (not the underlying truth); at zero it
/// reproduces the closed forms exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimCodecBackend {
    pub measurement_noise: f64,
}

impl SimCodecBackend {
    fn latent<'a>(input: &'a EncodeInput) -> Result<&'a LatentVideo> {
        match input {
            EncodeInput::Latent(l) => Ok(l),
            EncodeInput::File { path, .. } => Err(Error::Backend(format!(
                "simulated codec cannot encode file {}",
                path.display()
            ))),
        }
    }
}

impl CodecBackend for SimCodecBackend {
    fn encode_measure(&self, input: &EncodeInput, crf: f64) -> Result<EncodeResult> {
        let grid = CrfGrid::standard();
        check_measure_crf(&grid, crf)?;
        let latent = Self::latent(input)?;
        let mut rng = crf_stream(latent.seed, crf, STREAM_MEASURE);
        let vmaf = (vmaf_gt(&latent.theta, crf) + self.measurement_noise * normal(&mut rng))
            .clamp(0.0, 100.0);
        let bitrate = (bitrate_gt(&latent.theta, crf)
            * (1.0 + self.measurement_noise * 0.01 * normal(&mut rng)))
        .max(1e-3);
        Ok(EncodeResult {
            crf,
            bitrate,
            vmaf,
            stats: Some(synth_stats(latent, crf, self.measurement_noise)),
        })
    }

    fn pre_encode(&self, input: &EncodeInput, crf: f64) -> Result<EncodeResult> {
        check_pre_encode_crf(crf)?;
        let latent = Self::latent(input)?;
        let stats = synth_stats(latent, crf, self.measurement_noise);
        Ok(EncodeResult {
            crf,
            bitrate: stats.bitrate_kbps,
            vmaf: stats.quality_score * 100.0,
            stats: Some(stats),
        })
    }
}
