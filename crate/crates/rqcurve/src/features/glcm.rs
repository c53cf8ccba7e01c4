//! Grey-level co-occurrence matrices and Haralick texture statistics.

use crate::error::{Error, Result};
use crate::ingest::LumaPlane;

/// Pixel-pair offsets used by the content feature schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlcmOffset {
    Right,
    Down,
    DownRight,
    DownLeft,
}

pub const CANONICAL_OFFSETS: [GlcmOffset; 4] =
    [GlcmOffset::Right, GlcmOffset::Down, GlcmOffset::DownRight, GlcmOffset::DownLeft];

impl GlcmOffset {
    pub fn delta(&self) -> (i64, i64) {
        match self {
            GlcmOffset::Right => (1, 0),
            GlcmOffset::Down => (0, 1),
            GlcmOffset::DownRight => (1, 1),
            GlcmOffset::DownLeft => (-1, 1),
        }
    }
}

/// Normalized co-occurrence matrix: entry `(a, b)` is the probability that a
/// pixel quantized to level `a` has its offset neighbor quantized to `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    pub levels: usize,
    pub p: Vec<f64>,
}

impl GlcmMatrix {
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.p[a * self.levels + b]
    }
}

/// Quantizes 8-bit samples over [0, 255] into `levels` buckets.
#[inline]
fn quantize(v: u8, levels: usize) -> usize {
    (v as usize * levels) / 256
}

/// Computes the normalized co-occurrence matrix for one offset.
///
/// The default level count in this crate is 16; any value in [2, 256] is
/// accepted so small hand-checkable fixtures stay expressible.
pub fn glcm(plane: &LumaPlane<'_>, offset: GlcmOffset, levels: usize) -> Result<GlcmMatrix> {
    if !(2..=256).contains(&levels) {
        return Err(Error::Config(format!("glcm levels {levels} outside [2, 256]")));
    }
    let (dx, dy) = offset.delta();
    let mut counts = vec![0u64; levels * levels];
    let mut total = 0u64;
    for y in 0..plane.height as i64 {
        for x in 0..plane.width as i64 {
            let nx = x + dx;
            let ny = y + dy;
            if nx < 0 || ny < 0 || nx >= plane.width as i64 || ny >= plane.height as i64 {
                continue;
            }
            let a = quantize(plane.at(x as usize, y as usize), levels);
            let b = quantize(plane.at(nx as usize, ny as usize), levels);
            counts[a * levels + b] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Shape(format!(
            "plane {}x{} has no pixel pairs for offset {:?}",
            plane.width, plane.height, offset
        )));
    }
    let p = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(GlcmMatrix { levels, p })
}

/// The five Haralick statistics used by the content schema.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HaralickStats {
    pub contrast: f64,
    pub energy: f64,
    pub entropy: f64,
    pub homogeneity: f64,
    pub correlation: f64,
}

impl HaralickStats {
    pub fn as_array(&self) -> [f64; 5] {
        [self.contrast, self.energy, self.entropy, self.homogeneity, self.correlation]
    }
}

/// Standard Haralick definitions over a normalized matrix. Conventions:
/// `0 * log2(0) := 0`, and correlation is 0 when either marginal deviation
/// vanishes.
pub fn glcm_stats(m: &GlcmMatrix) -> HaralickStats {
    let n = m.levels;
    let mut contrast = 0.0;
    let mut energy = 0.0;
    let mut entropy = 0.0;
    let mut homogeneity = 0.0;
    let mut mean_a = 0.0;
    let mut mean_b = 0.0;
    for a in 0..n {
        for b in 0..n {
            let p = m.at(a, b);
            let d = a as f64 - b as f64;
            contrast += p * d * d;
            energy += p * p;
            if p > 0.0 {
                entropy -= p * p.log2();
            }
            homogeneity += p / (1.0 + d.abs());
            mean_a += a as f64 * p;
            mean_b += b as f64 * p;
        }
    }
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for a in 0..n {
        for b in 0..n {
            let p = m.at(a, b);
            var_a += (a as f64 - mean_a) * (a as f64 - mean_a) * p;
            var_b += (b as f64 - mean_b) * (b as f64 - mean_b) * p;
        }
    }
    let correlation = if var_a > 0.0 && var_b > 0.0 {
        let (sa, sb) = (var_a.sqrt(), var_b.sqrt());
        let mut c = 0.0;
        for a in 0..n {
            for b in 0..n {
                c += (a as f64 - mean_a) * (b as f64 - mean_b) * m.at(a, b);
            }
        }
        c / (sa * sb)
    } else {
        0.0
    };
    HaralickStats { contrast, energy, entropy, homogeneity, correlation }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane<'a>(data: &'a [u8], w: usize, h: usize) -> LumaPlane<'a> {
        LumaPlane { data, width: w, height: h }
    }

    #[test]
    fn constant_image_concentrates_at_origin() {
        let data = [0u8; 4];
        let m = glcm(&plane(&data, 2, 2), GlcmOffset::Right, 8).unwrap();
        assert_eq!(m.at(0, 0), 1.0);
        assert_eq!(m.p.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn two_level_vertical_stripes() {
        // [[0,255],[0,255]] with offset (1,0): both horizontal pairs are low→high
        let data = [0u8, 255, 0, 255];
        let m = glcm(&plane(&data, 2, 2), GlcmOffset::Right, 2).unwrap();
        assert_eq!(m.at(0, 1), 1.0);
        assert_eq!(m.at(0, 0), 0.0);
        assert_eq!(m.at(1, 0), 0.0);
        assert_eq!(m.at(1, 1), 0.0);
    }

    #[test]
    fn matrix_sums_to_one() {
        let data: Vec<u8> = (0..64 * 64).map(|i| ((i * 31 + 7) % 256) as u8).collect();
        for off in CANONICAL_OFFSETS {
            let m = glcm(&plane(&data, 64, 64), off, 16).unwrap();
            let sum: f64 = m.p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "{off:?}: {sum}");
            assert!(m.p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn degenerate_plane_rejected() {
        let data = [0u8; 2];
        // 1-row plane has no vertical pairs
        assert!(glcm(&plane(&data, 2, 1), GlcmOffset::Down, 8).is_err());
        assert!(glcm(&plane(&data, 2, 1), GlcmOffset::Right, 8).is_ok());
    }

    #[test]
    fn levels_out_of_range_rejected() {
        let data = [0u8; 4];
        assert!(glcm(&plane(&data, 2, 2), GlcmOffset::Right, 1).is_err());
        assert!(glcm(&plane(&data, 2, 2), GlcmOffset::Right, 257).is_err());
    }

    #[test]
    fn diagonal_mass_has_zero_contrast_full_homogeneity() {
        // identity-concentrated: uniform mass on the diagonal
        let levels = 4;
        let mut p = vec![0.0; levels * levels];
        for a in 0..levels {
            p[a * levels + a] = 0.25;
        }
        let s = glcm_stats(&GlcmMatrix { levels, p });
        assert_eq!(s.contrast, 0.0);
        assert_eq!(s.homogeneity, 1.0);
    }

    #[test]
    fn single_entry_matrix() {
        let levels = 4;
        let mut p = vec![0.0; levels * levels];
        p[0] = 1.0;
        let s = glcm_stats(&GlcmMatrix { levels, p });
        assert_eq!(s.energy, 1.0);
        assert_eq!(s.entropy, 0.0);
        assert_eq!(s.correlation, 0.0); // sigma = 0 convention
    }

    #[test]
    fn stats_match_brute_force_on_random_matrix() {
        // independent brute-force double loop over all (a, b)
        let levels = 4;
        let raw: Vec<f64> = (0..16).map(|i| ((i * 37 + 11) % 17) as f64 + 0.5).collect();
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let m = GlcmMatrix { levels, p: p.clone() };
        let s = glcm_stats(&m);

        let mut contrast = 0.0;
        let mut energy = 0.0;
        let mut entropy = 0.0;
        let mut homo = 0.0;
        let mut mu_a = 0.0;
        let mut mu_b = 0.0;
        for a in 0..levels {
            for b in 0..levels {
                let pv = p[a * levels + b];
                contrast += pv * ((a as f64) - (b as f64)).powi(2);
                energy += pv * pv;
                if pv > 0.0 {
                    entropy -= pv * pv.log2();
                }
                homo += pv / (1.0 + ((a as f64) - (b as f64)).abs());
                mu_a += a as f64 * pv;
                mu_b += b as f64 * pv;
            }
        }
        let mut va = 0.0;
        let mut vb = 0.0;
        let mut cov = 0.0;
        for a in 0..levels {
            for b in 0..levels {
                let pv = p[a * levels + b];
                va += (a as f64 - mu_a).powi(2) * pv;
                vb += (b as f64 - mu_b).powi(2) * pv;
                cov += (a as f64 - mu_a) * (b as f64 - mu_b) * pv;
            }
        }
        let corr = cov / (va.sqrt() * vb.sqrt());

        assert!((s.contrast - contrast).abs() < 1e-12);
        assert!((s.energy - energy).abs() < 1e-12);
        assert!((s.entropy - entropy).abs() < 1e-12);
        assert!((s.homogeneity - homo).abs() < 1e-12);
        assert!((s.correlation - corr).abs() < 1e-12);
    }
}
