//! Average colour distribution in CIELAB (D65, sRGB input).

use image::RgbImage;

pub const LAB_BLOCK_LEN: usize = 30;
const HIST_BINS: usize = 8;

fn srgb_to_linear(c: u8) -> f64 {
    let c = f64::from(c) / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// `(L, a, b)` for an sRGB pixel under the D65 white point.
pub fn rgb_to_lab(rgb: [u8; 3], lut: &[f64; 256]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|c| lut[c as usize]);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let (fx, fy, fz) = (lab_f(x / 0.950_47), lab_f(y), lab_f(z / 1.088_83));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn linear_lut() -> [f64; 256] {
    std::array::from_fn(|i| srgb_to_linear(i as u8))
}

/// Per channel mean and standard deviation (scaled to roughly unit range),
/// then an 8-bin normalized histogram per channel.
pub fn lab_block(image: &RgbImage) -> [f64; LAB_BLOCK_LEN] {
    let lut = linear_lut();
    let labs: Vec<[f64; 3]> = image.pixels().map(|p| rgb_to_lab(p.0, &lut)).collect();
    let n = labs.len() as f64;
    // (scale, histogram lower bound, histogram upper bound) per channel
    let ranges = [
        (100.0, 0.0, 100.0),
        (128.0, -128.0, 128.0),
        (128.0, -128.0, 128.0),
    ];
    let mut out = [0.0; LAB_BLOCK_LEN];
    for (c, &(scale, lo, hi)) in ranges.iter().enumerate() {
        // shifted by the first sample so a constant channel has exactly zero spread
        let origin = labs[0][c];
        let shift = labs.iter().map(|v| v[c] - origin).sum::<f64>() / n;
        let mean = origin + shift;
        let var = labs
            .iter()
            .map(|v| (v[c] - origin - shift).powi(2))
            .sum::<f64>()
            / n;
        out[2 * c] = mean / scale;
        out[2 * c + 1] = var.sqrt() / scale;
        let mut hist = [0usize; HIST_BINS];
        for v in &labs {
            let t = (v[c] - lo) / (hi - lo) * HIST_BINS as f64;
            hist[(t.floor().max(0.0) as usize).min(HIST_BINS - 1)] += 1;
        }
        for (k, count) in hist.iter().enumerate() {
            out[6 + c * HIST_BINS + k] = *count as f64 / n;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_colours() {
        let lut = linear_lut();
        let white = rgb_to_lab([255, 255, 255], &lut);
        assert!((white[0] - 100.0).abs() < 1e-3);
        assert!(white[1].abs() < 1e-2 && white[2].abs() < 1e-2);
        let black = rgb_to_lab([0, 0, 0], &lut);
        assert!(black.iter().all(|v| v.abs() < 1e-9));
        // sRGB red is about (53.24, 80.09, 67.20)
        let red = rgb_to_lab([255, 0, 0], &lut);
        assert!((red[0] - 53.24).abs() < 0.05);
        assert!((red[1] - 80.09).abs() < 0.1);
        assert!((red[2] - 67.20).abs() < 0.1);
    }

    #[test]
    fn uniform_image_has_zero_spread() {
        let img = RgbImage::from_pixel(16, 16, image::Rgb([128, 128, 128]));
        let b = lab_block(&img);
        assert_eq!(b[1], 0.0);
        assert_eq!(b[3], 0.0);
        assert_eq!(b[5], 0.0);
        for c in 0..3 {
            let s: f64 = b[6 + c * 8..6 + (c + 1) * 8].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
