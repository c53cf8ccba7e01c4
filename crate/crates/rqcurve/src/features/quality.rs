//! No-reference quality proxies: noise level, blockiness, blur.

use crate::ingest::LumaPlane;

/// Reported when a variance-based proxy degenerates on a flat frame.
pub const BLUR_CEILING: f64 = 100.0;

/// Noise standard deviation estimated from the 3x3 high-pass residual
/// `[[1,-2,1],[-2,4,-2],[1,-2,1]]`. The filter response to i.i.d. noise has
/// deviation 6 sigma, and the mean absolute value of a centered Gaussian is
/// sigma*sqrt(2/pi), hence the sqrt(pi/2)/6 scale on the mean absolute
/// residual.
pub fn noise_sigma(plane: &LumaPlane<'_>) -> f64 {
    let (w, h) = (plane.width, plane.height);
    if w < 3 || h < 3 {
        return 0.0;
    }
    let mut acc = 0.0f64;
    let mut count = 0u64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dx: i64, dy: i64| {
                plane.at((x as i64 + dx) as usize, (y as i64 + dy) as usize) as f64
            };
            let r = p(-1, -1) - 2.0 * p(0, -1) + p(1, -1) - 2.0 * p(-1, 0) + 4.0 * p(0, 0)
                - 2.0 * p(1, 0)
                + p(-1, 1)
                - 2.0 * p(0, 1)
                + p(1, 1);
            acc += r.abs();
            count += 1;
        }
    }
    let mean_abs = acc / count as f64;
    mean_abs * (std::f64::consts::PI / 2.0).sqrt() / 6.0
}

/// Ratio of the mean absolute luma step across 8-aligned block boundaries to
/// the mean absolute step elsewhere. 1.0 when both vanish (flat frame); the
/// blocky regime produces values above 1.
pub fn blockiness(plane: &LumaPlane<'_>) -> f64 {
    let (w, h) = (plane.width, plane.height);
    let mut boundary = (0.0f64, 0u64);
    let mut interior = (0.0f64, 0u64);
    // column steps between x-1 and x
    for y in 0..h {
        for x in 1..w {
            let step = (plane.at(x, y) as f64 - plane.at(x - 1, y) as f64).abs();
            if x % 8 == 0 {
                boundary.0 += step;
                boundary.1 += 1;
            } else {
                interior.0 += step;
                interior.1 += 1;
            }
        }
    }
    // row steps between y-1 and y
    for y in 1..h {
        for x in 0..w {
            let step = (plane.at(x, y) as f64 - plane.at(x, y - 1) as f64).abs();
            if y % 8 == 0 {
                boundary.0 += step;
                boundary.1 += 1;
            } else {
                interior.0 += step;
                interior.1 += 1;
            }
        }
    }
    let b = if boundary.1 > 0 { boundary.0 / boundary.1 as f64 } else { 0.0 };
    let i = if interior.1 > 0 { interior.0 / interior.1 as f64 } else { 0.0 };
    if i == 0.0 {
        if b == 0.0 {
            1.0
        } else {
            BLUR_CEILING
        }
    } else {
        b / i
    }
}

/// Inverse of the Laplacian variance normalized by luma variance: sharp
/// content concentrates energy in the Laplacian, so low values mean sharp and
/// high values mean blurred. Flat frames report [`BLUR_CEILING`].
pub fn blur(plane: &LumaPlane<'_>) -> f64 {
    let (w, h) = (plane.width, plane.height);
    let n = (w * h) as f64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for &v in plane.data {
        sum += v as f64;
        sum_sq += (v as f64) * (v as f64);
    }
    let mean = sum / n;
    let luma_var = (sum_sq / n - mean * mean).max(0.0);

    if w < 3 || h < 3 {
        return BLUR_CEILING;
    }
    let mut lsum = 0.0f64;
    let mut lsum_sq = 0.0f64;
    let mut count = 0u64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let l = 4.0 * plane.at(x, y) as f64
                - plane.at(x - 1, y) as f64
                - plane.at(x + 1, y) as f64
                - plane.at(x, y - 1) as f64
                - plane.at(x, y + 1) as f64;
            lsum += l;
            lsum_sq += l * l;
            count += 1;
        }
    }
    let lmean = lsum / count as f64;
    let lap_var = (lsum_sq / count as f64 - lmean * lmean).max(0.0);
    if lap_var <= 0.0 {
        return BLUR_CEILING;
    }
    (luma_var / lap_var).min(BLUR_CEILING)
}
