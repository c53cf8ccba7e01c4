//! Aspect-preserving 360p downsampler (box filter).

use super::VideoClip;

/// Downsamples to height 360 with a box filter over source blocks, width
/// scaled to preserve aspect ratio and rounded to even. Clips at or below
/// 360 lines are returned unchanged.
pub fn downsample_to_360p(clip: &VideoClip) -> VideoClip {
    if clip.height() <= 360 {
        return clip.clone();
    }
    let dst_h = 360usize;
    let scaled_w = clip.width() as f64 * dst_h as f64 / clip.height() as f64;
    let dst_w = (((scaled_w / 2.0).round() as usize) * 2).max(16);

    let (sw, sh) = (clip.width(), clip.height());
    let frames = clip
        .frames()
        .iter()
        .map(|src| {
            let mut dst = vec![0u8; dst_w * dst_h];
            for dy in 0..dst_h {
                let y0 = dy * sh / dst_h;
                let y1 = ((dy + 1) * sh / dst_h).max(y0 + 1);
                for dx in 0..dst_w {
                    let x0 = dx * sw / dst_w;
                    let x1 = ((dx + 1) * sw / dst_w).max(x0 + 1);
                    let mut acc = 0u64;
                    for y in y0..y1 {
                        let row = &src[y * sw..y * sw + sw];
                        for &v in &row[x0..x1] {
                            acc += v as u64;
                        }
                    }
                    let n = ((y1 - y0) * (x1 - x0)) as u64;
                    dst[dy * dst_w + dx] = ((acc + n / 2) / n) as u8;
                }
            }
            dst
        })
        .collect();
    VideoClip::new(dst_w, dst_h, clip.fps(), frames).expect("downsampled geometry is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip_of(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> VideoClip {
        let frame: Vec<u8> = (0..w * h).map(|i| f(i % w, i / w)).collect();
        VideoClip::new(w, h, (30, 1), vec![frame]).unwrap()
    }

    #[test]
    fn hd_halves_to_640x360() {
        let clip = clip_of(1280, 720, |x, y| ((x + y) % 256) as u8);
        let down = downsample_to_360p(&clip);
        assert_eq!(down.width(), 640);
        assert_eq!(down.height(), 360);
    }

    #[test]
    fn already_360_is_unchanged() {
        let clip = clip_of(640, 360, |x, _| (x % 256) as u8);
        let down = downsample_to_360p(&clip);
        assert_eq!(down, clip);
    }

    #[test]
    fn constant_frame_stays_constant() {
        let clip = clip_of(1280, 720, |_, _| 137);
        let down = downsample_to_360p(&clip);
        assert!(down.frames()[0].iter().all(|&v| v == 137));
    }

    #[test]
    fn mean_preserved_on_integer_ratio() {
        let clip = clip_of(1280, 720, |x, y| ((x * 13 + y * 7) % 251) as u8);
        let down = downsample_to_360p(&clip);
        let mean = |c: &VideoClip| {
            let f = &c.frames()[0];
            f.iter().map(|&v| v as f64).sum::<f64>() / f.len() as f64
        };
        assert!((mean(&clip) - mean(&down)).abs() <= 0.5);
    }

    #[test]
    fn non_integer_ratio_dimensions() {
        // 854x480 → width 854*360/480 = 640.5 → even-rounded 640
        let clip = clip_of(854, 480, |x, _| (x % 256) as u8);
        let down = downsample_to_360p(&clip);
        assert_eq!(down.height(), 360);
        assert_eq!(down.width(), 640);
    }
}
