//! Encoding-strategy selection over predicted curves, decoupled from the
//! model: constant-quality CRF lookup and slope-based bitrate-saving
//! selection, with an optional monotone projection for noisy predictions.

use crate::core::{derive_rate_quality_pairs, CrfGrid, RateQualityCurve};
use serde::{Deserialize, Serialize};

/// Pool-adjacent-violators projection onto non-increasing sequences;
/// least-squares optimal among monotone sequences.
pub fn pav_non_increasing(y: &[f64]) -> Vec<f64> {
    // blocks of (sum, count), merged while an earlier mean is below a later one
    let mut sums: Vec<f64> = Vec::with_capacity(y.len());
    let mut counts: Vec<usize> = Vec::with_capacity(y.len());
    for &v in y {
        sums.push(v);
        counts.push(1);
        while sums.len() >= 2 {
            let last = sums.len() - 1;
            let mean_prev = sums[last - 1] / counts[last - 1] as f64;
            let mean_last = sums[last] / counts[last] as f64;
            if mean_prev < mean_last {
                sums[last - 1] += sums[last];
                counts[last - 1] += counts[last];
                sums.pop();
                counts.pop();
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (s, c) in sums.iter().zip(counts.iter()) {
        let mean = s / *c as f64;
        out.extend(std::iter::repeat(mean).take(*c));
    }
    out
}

/// Projects both channels onto non-increasing sequences in CRF.
pub fn monotone_project(curve: &RateQualityCurve) -> RateQualityCurve {
    RateQualityCurve::new(pav_non_increasing(curve.vmaf()), pav_non_increasing(curve.bitrate()))
        .expect("projection preserves length")
}

/// How a target relates to the curve's reachable range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LookupOutcome {
    /// Target lies within the curve; the returned CRF satisfies it.
    Reached,
    /// Target above the curve's maximum; pinned to CRF 20.
    Unreachable,
    /// Target below the curve's minimum; pinned to CRF 40.
    BelowRange,
    /// Slope scan found no step below the threshold; every extra kbps was
    /// worth paying for, pinned to CRF 20.
    AllWorthwhile,
}

/// A strategy decision: an on-grid CRF and the predicted operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrfChoice {
    pub crf: f64,
    pub vmaf: f64,
    pub bitrate: f64,
    pub outcome: LookupOutcome,
}

/// Largest CRF (lowest bitrate) whose linearly interpolated VMAF still meets
/// the target, snapped down the 0.2 grid toward lower CRF (quality-safe).
/// Expects a monotone (projected) curve.
pub fn crf_for_target_vmaf(curve: &RateQualityCurve, target: f64, grid: &CrfGrid) -> CrfChoice {
    let vmaf = curve.vmaf();
    let bitrate = curve.bitrate();
    let last = grid.count() - 1;
    if target > vmaf[0] {
        return CrfChoice {
            crf: grid.crf_of(0).unwrap(),
            vmaf: vmaf[0],
            bitrate: bitrate[0],
            outcome: LookupOutcome::Unreachable,
        };
    }
    if target < vmaf[last] {
        return CrfChoice {
            crf: grid.crf_of(last).unwrap(),
            vmaf: vmaf[last],
            bitrate: bitrate[last],
            outcome: LookupOutcome::BelowRange,
        };
    }
    // Largest index whose VMAF still meets the target. Interpolating between
    // i and i+1 and snapping toward lower CRF lands on the same index.
    let mut idx = 0;
    for i in (0..grid.count()).rev() {
        if vmaf[i] >= target {
            idx = i;
            break;
        }
    }
    CrfChoice {
        crf: grid.crf_of(idx).unwrap(),
        vmaf: vmaf[idx],
        bitrate: bitrate[idx],
        outcome: LookupOutcome::Reached,
    }
}

/// Slope-threshold (knee) selection on the derived bitrate-VMAF pairs.
///
/// Forward slopes `s_i = (vmaf[i]-vmaf[i+1]) / (bitrate[i]-bitrate[i+1])` say
/// how much quality each extra kbps buys when moving from grid point `i+1` to
/// `i`. Scanning from the high-CRF end, the first step that pays less than
/// the threshold is the knee; the scan stops at that step's high-CRF side.
/// If every step pays at least the threshold the result is CRF 20 with the
/// all-worthwhile outcome. Zero-width bitrate steps are skipped.
pub fn crf_for_slope(curve: &RateQualityCurve, slope_threshold: f64, grid: &CrfGrid) -> CrfChoice {
    let pairs = derive_rate_quality_pairs(curve);
    let last = grid.count() - 1;
    for i in (0..last).rev() {
        let (r_lo, v_lo) = pairs[i];
        let (r_hi, v_hi) = pairs[i + 1];
        let dr = r_lo - r_hi;
        if dr <= 0.0 {
            continue; // degenerate step
        }
        let slope = (v_lo - v_hi) / dr;
        if slope < slope_threshold {
            return CrfChoice {
                crf: grid.crf_of(i + 1).unwrap(),
                vmaf: pairs[i + 1].1,
                bitrate: pairs[i + 1].0,
                outcome: LookupOutcome::Reached,
            };
        }
    }
    CrfChoice {
        crf: grid.crf_of(0).unwrap(),
        vmaf: pairs[0].1,
        bitrate: pairs[0].0,
        outcome: LookupOutcome::AllWorthwhile,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::GRID_COUNT;
    use crate::simcodec::{bitrate_gt, ground_truth_curve, vmaf_gt, CurveParams, LatentVideo};
    use proptest::prelude::*;

    fn grid() -> CrfGrid {
        CrfGrid::standard()
    }

    #[test]
    fn pav_three_point_example() {
        assert_eq!(pav_non_increasing(&[90.0, 91.0, 89.0]), vec![90.5, 90.5, 89.0]);
    }

    #[test]
    fn pav_leaves_monotone_untouched() {
        let y = vec![95.0, 94.0, 94.0, 80.0];
        assert_eq!(pav_non_increasing(&y), y);
        let c = vec![5.0; 7];
        assert_eq!(pav_non_increasing(&c), c);
    }

    #[test]
    fn pav_is_idempotent_and_monotone() {
        let y: Vec<f64> = (0..101).map(|i| 100.0 - i as f64 * 0.3 + ((i * 7) % 5) as f64).collect();
        let once = pav_non_increasing(&y);
        assert!(once.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(pav_non_increasing(&once), once);
    }

    fn strictly_decreasing_curve() -> RateQualityCurve {
        let theta = CurveParams { v_mid: 38.0, k: 0.3, r20: 8000.0, rho: 0.12 };
        ground_truth_curve(&theta, &grid())
    }

    #[test]
    fn exact_hit_returns_that_grid_point() {
        let mut vmaf: Vec<f64> = (0..GRID_COUNT).map(|i| 100.0 - 0.2 * i as f64).collect();
        vmaf[40] = 91.0; // make index 40 the exact hit: 100 - 8 = 92 → force 91
        // keep strictly decreasing around it
        for i in 41..GRID_COUNT {
            vmaf[i] = vmaf[i].min(90.9 - 0.2 * (i - 41) as f64);
        }
        let bitrate: Vec<f64> = (0..GRID_COUNT).map(|i| 5000.0 - 10.0 * i as f64).collect();
        let curve = RateQualityCurve::new(vmaf, bitrate).unwrap();
        let c = crf_for_target_vmaf(&curve, 91.0, &grid());
        assert_eq!(c.crf, grid().crf_of(40).unwrap());
        assert_eq!(c.outcome, LookupOutcome::Reached);
    }

    #[test]
    fn interpolated_crf_snaps_down() {
        // vmaf[40] = 91.5, vmaf[41] = 90.5 → interpolated crf is crf_of(40)+0.1,
        // which must snap to crf_of(40)
        let mut vmaf: Vec<f64> = (0..GRID_COUNT).map(|i| 120.0 - 0.5 * i as f64).collect();
        vmaf[40] = 91.5;
        vmaf[41] = 90.5;
        for (i, v) in vmaf.iter_mut().enumerate() {
            if i < 40 {
                *v = 91.5 + (40 - i) as f64 * 0.5;
            } else if i > 41 {
                *v = 90.5 - (i - 41) as f64 * 0.5;
            }
        }
        let bitrate: Vec<f64> = (0..GRID_COUNT).map(|i| 5000.0 - 10.0 * i as f64).collect();
        let curve = RateQualityCurve::new(vmaf.clone(), bitrate).unwrap();
        let c = crf_for_target_vmaf(&curve, 91.0, &grid());
        assert_eq!(c.crf, grid().crf_of(40).unwrap());
        assert_eq!(c.vmaf, 91.5);
    }

    #[test]
    fn unreachable_target_pins_to_min_crf() {
        let curve = strictly_decreasing_curve();
        let c = crf_for_target_vmaf(&curve, 150.0, &grid());
        assert_eq!(c.crf, 20.0);
        assert_eq!(c.outcome, LookupOutcome::Unreachable);
        assert_eq!(c.vmaf, curve.vmaf()[0]);
        assert_eq!(c.bitrate, curve.bitrate()[0]);
    }

    #[test]
    fn below_range_target_pins_to_max_crf() {
        let curve = strictly_decreasing_curve();
        let below = curve.vmaf()[100] - 5.0;
        let c = crf_for_target_vmaf(&curve, below, &grid());
        assert_eq!(c.crf, 40.0);
        assert_eq!(c.outcome, LookupOutcome::BelowRange);
    }

    #[test]
    fn quality_safe_guarantee_on_oracle_curves() {
        for seed in 0..50 {
            let lv = LatentVideo::from_seed(seed);
            let curve = ground_truth_curve(&lv.theta, &grid());
            let target = 91.0;
            let c = crf_for_target_vmaf(&curve, target, &grid());
            if c.outcome == LookupOutcome::Reached {
                let actual = vmaf_gt(&lv.theta, c.crf);
                assert!(actual >= target - 1.0, "seed {seed}: actual {actual}");
            }
        }
    }

    #[test]
    fn monotone_policy_in_target() {
        let curve = strictly_decreasing_curve();
        let c_low = crf_for_target_vmaf(&curve, 70.0, &grid());
        let c_high = crf_for_target_vmaf(&curve, 93.0, &grid());
        if c_low.outcome == LookupOutcome::Reached && c_high.outcome == LookupOutcome::Reached {
            assert!(c_low.crf >= c_high.crf);
        }
    }

    #[test]
    fn slope_threshold_above_max_returns_crf_40() {
        let curve = strictly_decreasing_curve();
        let c = crf_for_slope(&curve, 1e9, &grid());
        assert_eq!(c.crf, 40.0);
    }

    #[test]
    fn slope_threshold_below_min_returns_crf_20_flagged() {
        let curve = strictly_decreasing_curve();
        let c = crf_for_slope(&curve, 1e-12, &grid());
        assert_eq!(c.crf, 20.0);
        assert_eq!(c.outcome, LookupOutcome::AllWorthwhile);
    }

    #[test]
    fn slope_knee_matches_brute_force_scan() {
        let g = grid();
        for seed in 0..30 {
            let lv = LatentVideo::from_seed(seed);
            let curve = ground_truth_curve(&lv.theta, &g);
            let threshold = 0.01;
            let got = crf_for_slope(&curve, threshold, &g);

            // brute-force scan over the 100 analytic slopes
            let mut expect: Option<f64> = None;
            for i in (0..100).rev() {
                let c_lo = g.crf_of(i).unwrap();
                let c_hi = g.crf_of(i + 1).unwrap();
                let dv = vmaf_gt(&lv.theta, c_lo) - vmaf_gt(&lv.theta, c_hi);
                let dr = bitrate_gt(&lv.theta, c_lo) - bitrate_gt(&lv.theta, c_hi);
                if dr <= 0.0 {
                    continue;
                }
                if dv / dr < threshold {
                    expect = Some(c_hi);
                    break;
                }
            }
            assert_eq!(got.crf, expect.unwrap_or(20.0), "seed {seed}");
        }
    }

    #[test]
    fn slope_choice_invariant_to_vmaf_shift() {
        let curve = strictly_decreasing_curve();
        let shifted = RateQualityCurve::new(
            curve.vmaf().iter().map(|v| v - 7.5).collect(),
            curve.bitrate().to_vec(),
        )
        .unwrap();
        let a = crf_for_slope(&curve, 0.01, &grid());
        let b = crf_for_slope(&shifted, 0.01, &grid());
        assert_eq!(a.crf, b.crf);
    }

    proptest! {
        #[test]
        fn returned_crf_is_on_grid(seed in 0u64..500, target in 0.0f64..110.0) {
            let lv = LatentVideo::from_seed(seed);
            let g = grid();
            let curve = ground_truth_curve(&lv.theta, &g);
            let c = crf_for_target_vmaf(&curve, target, &g);
            prop_assert!(g.index_of(c.crf).is_ok());
            prop_assert!((20.0..=40.0).contains(&c.crf));
        }

        #[test]
        fn projection_output_is_monotone(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vmaf: Vec<f64> = (0..GRID_COUNT).map(|i| 100.0 - 0.5 * i as f64 + rng.random_range(-3.0..3.0)).collect();
            let bitrate: Vec<f64> = (0..GRID_COUNT).map(|i| 6000.0 - 40.0 * i as f64 + rng.random_range(-200.0..200.0)).collect();
            let curve = RateQualityCurve::new(vmaf, bitrate).unwrap();
            let p = monotone_project(&curve);
            prop_assert!(p.vmaf().windows(2).all(|w| w[0] >= w[1] - 1e-12));
            prop_assert!(p.bitrate().windows(2).all(|w| w[0] >= w[1] - 1e-12));
            // idempotent
            let pp = monotone_project(&p);
            for i in 0..GRID_COUNT {
                prop_assert!((p.vmaf()[i] - pp.vmaf()[i]).abs() < 1e-9);
            }
        }
    }
}
