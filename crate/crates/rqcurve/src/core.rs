//! Domain types for the discretized CRF axis and rate-quality curves.
//!
//! Everything downstream (prediction, suspension, strategy selection,
//! evaluation) speaks in terms of a fixed 101-point CRF grid spanning
//! [20.0, 40.0] in steps of 0.2, paired VMAF/bitrate vectors over that grid,
//! and a single measured anchor point that pins predicted curves.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Number of grid points on the standard CRF axis.
pub const GRID_COUNT: usize = 101;

/// Bitrates are floored here after clamping so log-domain math never sees zero.
pub const BITRATE_FLOOR_KBPS: f64 = 1e-3;

/// Discretized CRF axis. Grid points are stored as integer tenths of a CRF
/// unit so that index arithmetic is exact; floats are only produced at the
/// edges of the API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrfGrid {
    min_tenths: i64,
    step_tenths: i64,
    count: usize,
}

impl Default for CrfGrid {
    fn default() -> Self {
        CrfGrid { min_tenths: 200, step_tenths: 2, count: GRID_COUNT }
    }
}

impl CrfGrid {
    /// The standard [20, 40] step-0.2 grid.
    pub fn standard() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn min_crf(&self) -> f64 {
        self.min_tenths as f64 / 10.0
    }

    pub fn max_crf(&self) -> f64 {
        (self.min_tenths + self.step_tenths * (self.count as i64 - 1)) as f64 / 10.0
    }

    pub fn step(&self) -> f64 {
        self.step_tenths as f64 / 10.0
    }

    /// CRF value of grid point `index`.
    pub fn crf_of(&self, index: usize) -> Result<f64> {
        if index >= self.count {
            return Err(Error::IndexOutOfRange { index, count: self.count });
        }
        Ok((self.min_tenths + self.step_tenths * index as i64) as f64 / 10.0)
    }

    /// Exact inverse of [`crf_of`](Self::crf_of). The input must lie within
    /// 1e-6 of a grid point; callers that need off-grid values interpolate
    /// instead.
    pub fn index_of(&self, crf: f64) -> Result<usize> {
        let off_grid = || Error::OffGrid {
            crf,
            min: self.min_crf(),
            max: self.max_crf(),
            step: self.step(),
        };
        if !crf.is_finite() {
            return Err(off_grid());
        }
        let steps = (crf * 10.0 - self.min_tenths as f64) / self.step_tenths as f64;
        let index = steps.round();
        if index < 0.0 || index as usize >= self.count {
            return Err(off_grid());
        }
        let snapped = (self.min_tenths + self.step_tenths * index as i64) as f64 / 10.0;
        if (crf - snapped).abs() > 1e-6 {
            return Err(off_grid());
        }
        Ok(index as usize)
    }

    /// Largest grid index whose CRF is <= `crf` (clamped to the grid range).
    /// Used by strategy lookups that snap interpolated CRFs toward quality.
    pub fn snap_down(&self, crf: f64) -> usize {
        let steps = (crf * 10.0 - self.min_tenths as f64) / self.step_tenths as f64;
        // Guard against float fuzz just below an exact grid point.
        let idx = (steps + 1e-9).floor();
        idx.clamp(0.0, (self.count - 1) as f64) as usize
    }
}

/// Paired CRF→VMAF and CRF→bitrate vectors over the standard grid.
///
/// Raw network output is allowed to be out of range; [`clamp_curve`] produces
/// the presentation form (VMAF in [0, 100], bitrate above the floor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateQualityCurve {
    vmaf: Vec<f64>,
    bitrate: Vec<f64>,
}

impl RateQualityCurve {
    pub fn new(vmaf: Vec<f64>, bitrate: Vec<f64>) -> Result<Self> {
        if vmaf.len() != GRID_COUNT || bitrate.len() != GRID_COUNT {
            return Err(Error::Shape(format!(
                "curve vectors must have {} entries, got vmaf={} bitrate={}",
                GRID_COUNT,
                vmaf.len(),
                bitrate.len()
            )));
        }
        Ok(RateQualityCurve { vmaf, bitrate })
    }

    pub fn vmaf(&self) -> &[f64] {
        &self.vmaf
    }

    pub fn bitrate(&self) -> &[f64] {
        &self.bitrate
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.vmaf, self.bitrate)
    }
}

/// One measured encode at the prior anchor CRF: the (bitrate, VMAF) pair that
/// both feeds the feature vector and pins the predicted curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPoint {
    pub crf: f64,
    pub bitrate: f64,
    pub vmaf: f64,
}

impl AnchorPoint {
    /// Validates range invariants and that the CRF sits on the grid; returns
    /// the grid index of the anchor.
    pub fn grid_index(&self, grid: &CrfGrid) -> Result<usize> {
        if !(0.0..=100.0).contains(&self.vmaf) {
            return Err(Error::Numeric(format!("anchor vmaf {} outside [0, 100]", self.vmaf)));
        }
        if !(self.bitrate > 0.0) {
            return Err(Error::Numeric(format!("anchor bitrate {} must be > 0", self.bitrate)));
        }
        grid.index_of(self.crf)
    }

    /// The two-entry anchor feature segment: (bitrate kbps, vmaf).
    pub fn feature_segment(&self) -> [f64; 2] {
        [self.bitrate, self.vmaf]
    }
}

/// Concatenated per-video features: codec segment (from the two pre-encodes),
/// content segment (from raw luma), and the optional two-entry anchor segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub codec: Vec<f64>,
    pub content: Vec<f64>,
    /// `None` when anchor features are ablated.
    pub anchor: Option<[f64; 2]>,
}

impl FeatureVector {
    pub fn total_dim(&self) -> usize {
        self.codec.len() + self.content.len() + if self.anchor.is_some() { 2 } else { 0 }
    }

    /// Flattens segments in schema order (codec, content, anchor).
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.codec);
        out.extend_from_slice(&self.content);
        if let Some(a) = self.anchor {
            out.extend_from_slice(&a);
        }
    }

    pub fn check_dims(&self, codec_dim: usize, content_dim: usize, want_anchor: bool) -> Result<()> {
        if self.codec.len() != codec_dim {
            return Err(Error::Schema(format!(
                "codec segment has {} entries, schema says {}",
                self.codec.len(),
                codec_dim
            )));
        }
        if self.content.len() != content_dim {
            return Err(Error::Schema(format!(
                "content segment has {} entries, schema says {}",
                self.content.len(),
                content_dim
            )));
        }
        if want_anchor && self.anchor.is_none() {
            return Err(Error::Schema("anchor segment required but absent".into()));
        }
        Ok(())
    }
}

/// The 101 (bitrate, vmaf) pairs of the derived bitrate-VMAF curve, ordered by
/// ascending CRF. No resampling: pair `i` takes both coordinates from grid
/// index `i`.
pub fn derive_rate_quality_pairs(curve: &RateQualityCurve) -> Vec<(f64, f64)> {
    curve
        .bitrate
        .iter()
        .zip(curve.vmaf.iter())
        .map(|(&r, &v)| (r, v))
        .collect()
}

/// Clamps VMAF to [0, 100] and floors bitrate at [`BITRATE_FLOOR_KBPS`].
/// Idempotent. Non-finite entries are rejected rather than clamped.
pub fn clamp_curve(curve: &RateQualityCurve) -> Result<RateQualityCurve> {
    if let Some(bad) = curve
        .vmaf
        .iter()
        .chain(curve.bitrate.iter())
        .position(|x| !x.is_finite())
    {
        return Err(Error::Numeric(format!("curve entry {bad} is not finite")));
    }
    let vmaf = curve.vmaf.iter().map(|v| v.clamp(0.0, 100.0)).collect();
    let bitrate = curve.bitrate.iter().map(|r| r.max(BITRATE_FLOOR_KBPS)).collect();
    RateQualityCurve::new(vmaf, bitrate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_endpoints() {
        let g = CrfGrid::standard();
        assert_eq!(g.count(), 101);
        assert_eq!(g.crf_of(0).unwrap(), 20.0);
        assert_eq!(g.crf_of(100).unwrap(), 40.0);
        assert_eq!(g.crf_of(52).unwrap(), 30.4);
        assert!(g.crf_of(101).is_err());
    }

    #[test]
    fn grid_points_strictly_increasing() {
        let g = CrfGrid::standard();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..g.count() {
            let c = g.crf_of(i).unwrap();
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn index_of_inverts_crf_of() {
        let g = CrfGrid::standard();
        for i in 0..g.count() {
            assert_eq!(g.index_of(g.crf_of(i).unwrap()).unwrap(), i);
        }
        assert_eq!(g.index_of(30.4).unwrap(), 52);
        assert_eq!(g.index_of(20.0).unwrap(), 0);
        assert!(g.index_of(30.5).is_err());
        assert!(g.index_of(19.8).is_err());
        assert!(g.index_of(40.2).is_err());
        assert!(g.index_of(f64::NAN).is_err());
    }

    #[test]
    fn snap_down_floors_to_grid() {
        let g = CrfGrid::standard();
        assert_eq!(g.snap_down(30.5), 52); // 30.4
        assert_eq!(g.snap_down(30.4), 52);
        assert_eq!(g.snap_down(19.0), 0);
        assert_eq!(g.snap_down(41.0), 100);
        // 20.0 + 40*0.2 = 28.0 + 0.1 interpolated → snaps to index 40
        assert_eq!(g.snap_down(28.1), 40);
    }

    #[test]
    fn curve_construction_validates_length() {
        assert!(RateQualityCurve::new(vec![1.0; 101], vec![1.0; 101]).is_ok());
        assert!(RateQualityCurve::new(vec![1.0; 100], vec![1.0; 101]).is_err());
        assert!(RateQualityCurve::new(vec![], vec![]).is_err());
    }

    #[test]
    fn derive_pairs_constant_curve() {
        let c = RateQualityCurve::new(vec![90.0; 101], vec![1000.0; 101]).unwrap();
        let pairs = derive_rate_quality_pairs(&c);
        assert_eq!(pairs.len(), 101);
        assert!(pairs.iter().all(|&p| p == (1000.0, 90.0)));
    }

    #[test]
    fn derive_pairs_keeps_index_pairing() {
        let vmaf: Vec<f64> = (0..101).map(|i| 100.0 - i as f64 * 0.5).collect();
        let bitrate: Vec<f64> = (0..101).map(|i| 5000.0 - i as f64 * 40.0).collect();
        let c = RateQualityCurve::new(vmaf.clone(), bitrate.clone()).unwrap();
        let pairs = derive_rate_quality_pairs(&c);
        for i in 0..101 {
            assert_eq!(pairs[i], (bitrate[i], vmaf[i]));
        }
    }

    #[test]
    fn clamp_rules() {
        let mut vmaf = vec![50.0; 101];
        let mut bitrate = vec![100.0; 101];
        vmaf[0] = 103.2;
        vmaf[1] = -0.5;
        bitrate[0] = 0.0;
        let c = RateQualityCurve::new(vmaf, bitrate).unwrap();
        let clamped = clamp_curve(&c).unwrap();
        assert_eq!(clamped.vmaf()[0], 100.0);
        assert_eq!(clamped.vmaf()[1], 0.0);
        assert_eq!(clamped.bitrate()[0], BITRATE_FLOOR_KBPS);
    }

    #[test]
    fn clamp_rejects_non_finite() {
        let mut vmaf = vec![50.0; 101];
        vmaf[7] = f64::NAN;
        let c = RateQualityCurve::new(vmaf, vec![100.0; 101]).unwrap();
        assert!(matches!(clamp_curve(&c), Err(Error::Numeric(_))));
    }

    #[test]
    fn anchor_grid_index() {
        let g = CrfGrid::standard();
        let a = AnchorPoint { crf: 30.4, bitrate: 2500.0, vmaf: 92.3 };
        assert_eq!(a.grid_index(&g).unwrap(), 52);
        assert_eq!(a.feature_segment(), [2500.0, 92.3]);
        let off = AnchorPoint { crf: 30.5, ..a };
        assert!(off.grid_index(&g).is_err());
        let bad = AnchorPoint { vmaf: 101.0, ..a };
        assert!(bad.grid_index(&g).is_err());
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vmaf: Vec<f64> = (0..101).map(|_| rng.random_range(-50.0..150.0)).collect();
            let bitrate: Vec<f64> = (0..101).map(|_| rng.random_range(-10.0..1e4)).collect();
            let c = RateQualityCurve::new(vmaf, bitrate).unwrap();
            let once = clamp_curve(&c).unwrap();
            let twice = clamp_curve(&once).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn index_of_rejects_offgrid(crf in 20.0f64..40.0) {
            let g = CrfGrid::standard();
            let nearest = (crf * 5.0).round() / 5.0;
            let res = g.index_of(crf);
            if (crf - nearest).abs() > 1e-6 {
                prop_assert!(res.is_err());
            } else {
                prop_assert!(res.is_ok());
            }
        }
    }
}
