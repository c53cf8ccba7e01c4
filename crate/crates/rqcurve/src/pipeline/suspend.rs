//! Anchor suspension: shifting a predicted curve so it passes exactly through
//! the measured anchor point, and the exact backward pass through that shift
//! used by end-to-end training.

use crate::core::{AnchorPoint, CrfGrid, RateQualityCurve, BITRATE_FLOOR_KBPS, GRID_COUNT};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SuspensionMode {
    /// Both channels shifted by the anchor offset.
    Additive,
    /// VMAF shifted additively, bitrate scaled by `anchor / pred[a]`.
    MultiplicativeBitrate,
}

impl std::fmt::Display for SuspensionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SuspensionMode::Additive => write!(f, "additive"),
            SuspensionMode::MultiplicativeBitrate => write!(f, "multiplicative-bitrate"),
        }
    }
}

impl std::str::FromStr for SuspensionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(SuspensionMode::Additive),
            "multiplicative-bitrate" => Ok(SuspensionMode::MultiplicativeBitrate),
            other => Err(Error::Config(format!("unknown suspension mode {other:?}"))),
        }
    }
}

/// Suspends one raw 202-wide output row (101 VMAF then 101 bitrate) in place.
pub fn suspend_row(
    row: &mut [f64],
    anchor: &AnchorPoint,
    anchor_index: usize,
    mode: SuspensionMode,
) -> Result<()> {
    debug_assert_eq!(row.len(), 2 * GRID_COUNT);
    let (vmaf, rate) = row.split_at_mut(GRID_COUNT);
    let off_v = anchor.vmaf - vmaf[anchor_index];
    for v in vmaf.iter_mut() {
        *v += off_v;
    }
    match mode {
        SuspensionMode::Additive => {
            let off_r = anchor.bitrate - rate[anchor_index];
            for r in rate.iter_mut() {
                *r += off_r;
            }
        }
        SuspensionMode::MultiplicativeBitrate => {
            let denom = rate[anchor_index];
            if denom < BITRATE_FLOOR_KBPS {
                return Err(Error::DegenerateAnchor(format!(
                    "predicted bitrate {denom} at the anchor index is below the floor"
                )));
            }
            let scale = anchor.bitrate / denom;
            for r in rate.iter_mut() {
                *r *= scale;
            }
        }
    }
    // exactness at the anchor index, down to rounding
    vmaf[anchor_index] = anchor.vmaf;
    rate[anchor_index] = anchor.bitrate;
    Ok(())
}

/// Backward through [`suspend_row`].
///
/// Additive channel: `d_pred[j] = up[j] - [j == a] * sum(up)`.
/// Multiplicative bitrate: `d_pred[j] = up[j] * s` for `j != a` and
/// `d_pred[a] = up[a] * s - (anchor / p_a^2) * sum_i(up[i] * p_i)` with
/// `s = anchor / p_a`, where `p` is the pre-suspension row.
pub fn suspend_row_backward(
    upstream: &[f64],
    pred_row: &[f64],
    anchor: &AnchorPoint,
    anchor_index: usize,
    mode: SuspensionMode,
) -> Vec<f64> {
    debug_assert_eq!(upstream.len(), 2 * GRID_COUNT);
    debug_assert_eq!(pred_row.len(), 2 * GRID_COUNT);
    let mut out = vec![0.0; 2 * GRID_COUNT];
    let (up_v, up_r) = upstream.split_at(GRID_COUNT);
    {
        let sum: f64 = up_v.iter().sum();
        let dst = &mut out[..GRID_COUNT];
        dst.copy_from_slice(up_v);
        dst[anchor_index] -= sum;
    }
    match mode {
        SuspensionMode::Additive => {
            let sum: f64 = up_r.iter().sum();
            let dst = &mut out[GRID_COUNT..];
            dst.copy_from_slice(up_r);
            dst[anchor_index] -= sum;
        }
        SuspensionMode::MultiplicativeBitrate => {
            let pred_rate = &pred_row[GRID_COUNT..];
            let p_a = pred_rate[anchor_index];
            let scale = anchor.bitrate / p_a;
            let weighted: f64 = up_r.iter().zip(pred_rate.iter()).map(|(u, p)| u * p).sum();
            let dst = &mut out[GRID_COUNT..];
            for (d, &u) in dst.iter_mut().zip(up_r.iter()) {
                *d = u * scale;
            }
            dst[anchor_index] -= anchor.bitrate / (p_a * p_a) * weighted;
        }
    }
    out
}

/// Suspends a predicted curve on the grid so it passes exactly through the
/// anchor.
pub fn suspend(
    pred: &RateQualityCurve,
    anchor: &AnchorPoint,
    mode: SuspensionMode,
    grid: &CrfGrid,
) -> Result<RateQualityCurve> {
    let a = anchor.grid_index(grid)?;
    let mut row = Vec::with_capacity(2 * GRID_COUNT);
    row.extend_from_slice(pred.vmaf());
    row.extend_from_slice(pred.bitrate());
    suspend_row(&mut row, anchor, a, mode)?;
    let rate = row.split_off(GRID_COUNT);
    RateQualityCurve::new(row, rate)
}

/// Gradient of [`suspend`] with respect to the prediction, given upstream
/// gradients per channel.
pub fn suspend_backward(
    upstream_vmaf: &[f64],
    upstream_bitrate: &[f64],
    pred: &RateQualityCurve,
    anchor: &AnchorPoint,
    mode: SuspensionMode,
    grid: &CrfGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if upstream_vmaf.len() != GRID_COUNT || upstream_bitrate.len() != GRID_COUNT {
        return Err(Error::Shape("upstream gradients must span the grid".into()));
    }
    let a = anchor.grid_index(grid)?;
    let mut up = Vec::with_capacity(2 * GRID_COUNT);
    up.extend_from_slice(upstream_vmaf);
    up.extend_from_slice(upstream_bitrate);
    let mut pred_row = Vec::with_capacity(2 * GRID_COUNT);
    pred_row.extend_from_slice(pred.vmaf());
    pred_row.extend_from_slice(pred.bitrate());
    let mut out = suspend_row_backward(&up, &pred_row, anchor, a, mode);
    let rate = out.split_off(GRID_COUNT);
    Ok((out, rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> CrfGrid {
        CrfGrid::standard()
    }

    fn anchor() -> AnchorPoint {
        AnchorPoint { crf: 30.4, bitrate: 2500.0, vmaf: 90.0 }
    }

    fn pred_curve(vmaf_at_anchor: f64, rate_at_anchor: f64) -> RateQualityCurve {
        let vmaf: Vec<f64> = (0..GRID_COUNT)
            .map(|i| vmaf_at_anchor + (52.0 - i as f64) * 0.2)
            .collect();
        let bitrate: Vec<f64> = (0..GRID_COUNT)
            .map(|i| rate_at_anchor + (52.0 - i as f64) * 30.0)
            .collect();
        RateQualityCurve::new(vmaf, bitrate).unwrap()
    }

    #[test]
    fn additive_offset_applied_everywhere() {
        let pred = pred_curve(88.0, 2000.0);
        let s = suspend(&pred, &anchor(), SuspensionMode::Additive, &grid()).unwrap();
        assert_eq!(s.vmaf()[52], 90.0);
        assert_eq!(s.bitrate()[52], 2500.0);
        for i in 0..GRID_COUNT {
            assert!((s.vmaf()[i] - (pred.vmaf()[i] + 2.0)).abs() < 1e-12);
            assert!((s.bitrate()[i] - (pred.bitrate()[i] + 500.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn already_exact_curve_unchanged() {
        let pred = pred_curve(90.0, 2500.0);
        let s = suspend(&pred, &anchor(), SuspensionMode::Additive, &grid()).unwrap();
        assert_eq!(s, pred);
    }

    #[test]
    fn multiplicative_bitrate_scales() {
        let pred = pred_curve(88.0, 2000.0);
        let s = suspend(&pred, &anchor(), SuspensionMode::MultiplicativeBitrate, &grid()).unwrap();
        assert_eq!(s.bitrate()[52], 2500.0);
        for i in 0..GRID_COUNT {
            assert!((s.bitrate()[i] - pred.bitrate()[i] * 1.25).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_multiplicative_anchor_rejected() {
        let vmaf = vec![50.0; GRID_COUNT];
        let bitrate = vec![0.0; GRID_COUNT];
        let pred = RateQualityCurve::new(vmaf, bitrate).unwrap();
        let err = suspend(&pred, &anchor(), SuspensionMode::MultiplicativeBitrate, &grid());
        assert!(matches!(err, Err(Error::DegenerateAnchor(_))));
    }

    #[test]
    fn off_grid_anchor_rejected() {
        let pred = pred_curve(88.0, 2000.0);
        let bad = AnchorPoint { crf: 30.5, bitrate: 2500.0, vmaf: 90.0 };
        assert!(suspend(&pred, &bad, SuspensionMode::Additive, &grid()).is_err());
    }

    #[test]
    fn backward_zero_upstream_is_zero() {
        let pred = pred_curve(88.0, 2000.0);
        let z = vec![0.0; GRID_COUNT];
        let (dv, dr) =
            suspend_backward(&z, &z, &pred, &anchor(), SuspensionMode::Additive, &grid()).unwrap();
        assert!(dv.iter().all(|&v| v == 0.0));
        assert!(dr.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_one_hot_at_anchor_is_zero() {
        // the anchor entry is pinned, so gradient through it vanishes
        let pred = pred_curve(88.0, 2000.0);
        let mut up = vec![0.0; GRID_COUNT];
        up[52] = 1.0;
        let z = vec![0.0; GRID_COUNT];
        let (dv, _) =
            suspend_backward(&up, &z, &pred, &anchor(), SuspensionMode::Additive, &grid()).unwrap();
        assert!(dv.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for mode in [SuspensionMode::Additive, SuspensionMode::MultiplicativeBitrate] {
            let pred = pred_curve(88.0, 2000.0);
            let up_v: Vec<f64> = (0..GRID_COUNT).map(|_| rng.random_range(-1.0..1.0)).collect();
            let up_r: Vec<f64> = (0..GRID_COUNT).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (dv, dr) =
                suspend_backward(&up_v, &up_r, &pred, &anchor(), mode, &grid()).unwrap();

            // scalar objective: dot(upstream, suspend(pred))
            let f = |p: &RateQualityCurve| -> f64 {
                let s = suspend(p, &anchor(), mode, &grid()).unwrap();
                s.vmaf().iter().zip(up_v.iter()).map(|(a, b)| a * b).sum::<f64>()
                    + s.bitrate().iter().zip(up_r.iter()).map(|(a, b)| a * b).sum::<f64>()
            };
            let h = 1e-5;
            for &j in &[0usize, 13, 52, 99, 100] {
                for ch in 0..2 {
                    let mut vm = pred.vmaf().to_vec();
                    let mut rt = pred.bitrate().to_vec();
                    let slot = if ch == 0 { &mut vm[j] } else { &mut rt[j] };
                    let orig = *slot;
                    *slot = orig + h;
                    let fp = f(&RateQualityCurve::new(vm.clone(), rt.clone()).unwrap());
                    let slot = if ch == 0 { &mut vm[j] } else { &mut rt[j] };
                    *slot = orig - h;
                    let fm = f(&RateQualityCurve::new(vm.clone(), rt.clone()).unwrap());
                    let numeric = (fp - fm) / (2.0 * h);
                    let analytic = if ch == 0 { dv[j] } else { dr[j] };
                    assert!(
                        (numeric - analytic).abs() < 1e-6,
                        "{mode:?} ch{ch} j{j}: fd {numeric} vs {analytic}"
                    );
                }
            }
        }
    }

    #[test]
    fn suspension_exactness_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let g = grid();
        for mode in [SuspensionMode::Additive, SuspensionMode::MultiplicativeBitrate] {
            for _ in 0..200 {
                let vmaf: Vec<f64> = (0..GRID_COUNT).map(|_| rng.random_range(0.0..100.0)).collect();
                let bitrate: Vec<f64> =
                    (0..GRID_COUNT).map(|_| rng.random_range(10.0..9000.0)).collect();
                let pred = RateQualityCurve::new(vmaf, bitrate).unwrap();
                let idx = rng.random_range(0..GRID_COUNT);
                let a = AnchorPoint {
                    crf: g.crf_of(idx).unwrap(),
                    bitrate: rng.random_range(10.0..9000.0),
                    vmaf: rng.random_range(0.0..100.0),
                };
                let s = suspend(&pred, &a, mode, &g).unwrap();
                assert!((s.vmaf()[idx] - a.vmaf).abs() <= 1e-9 * a.vmaf.abs().max(1.0));
                assert!((s.bitrate()[idx] - a.bitrate).abs() <= 1e-9 * a.bitrate.abs());
            }
        }
    }
}
