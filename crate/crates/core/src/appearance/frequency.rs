//! Radially averaged amplitude spectrum of a grayscale image.

use image::GrayImage;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub const FREQ_BLOCK_LEN: usize = 16;

/// Spectrum magnitudes (normalized by pixel count) below this are rounding noise.
const MAGNITUDE_FLOOR: f64 = 1e-12;

/// `log(1 + |F|/N)` averaged over 16 annuli of spatial frequency radius,
/// excluding the DC coefficient, then scaled to sum to one.
///
/// The image must be square.
pub fn frequency_block(gray: &GrayImage) -> [f64; FREQ_BLOCK_LEN] {
    let n = gray.width() as usize;
    assert_eq!(
        n,
        gray.height() as usize,
        "frequency block expects a square image"
    );
    let mut data: Vec<Complex<f64>> = gray
        .as_raw()
        .iter()
        .map(|&p| Complex::new(f64::from(p) / 255.0, 0.0))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); n];
    for x in 0..n {
        for y in 0..n {
            column[y] = data[y * n + x];
        }
        fft.process(&mut column);
        for y in 0..n {
            data[y * n + x] = column[y];
        }
    }

    let total = (n * n) as f64;
    let half = n as f64 / 2.0;
    let r_max = (2.0 * half * half).sqrt();
    let mut sums = [0.0; FREQ_BLOCK_LEN];
    let mut counts = [0usize; FREQ_BLOCK_LEN];
    for v in 0..n {
        for u in 0..n {
            if u == 0 && v == 0 {
                continue;
            }
            let fu = if u <= n / 2 {
                u as f64
            } else {
                u as f64 - n as f64
            };
            let fv = if v <= n / 2 {
                v as f64
            } else {
                v as f64 - n as f64
            };
            let r = (fu * fu + fv * fv).sqrt();
            let bin = ((r / r_max * FREQ_BLOCK_LEN as f64) as usize).min(FREQ_BLOCK_LEN - 1);
            let mag = data[v * n + u].norm() / total;
            let mag = if mag < MAGNITUDE_FLOOR { 0.0 } else { mag };
            sums[bin] += mag.ln_1p();
            counts[bin] += 1;
        }
    }
    let mut out = [0.0; FREQ_BLOCK_LEN];
    for k in 0..FREQ_BLOCK_LEN {
        if counts[k] > 0 {
            out[k] = sums[k] / counts[k] as f64;
        }
    }
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        out.iter_mut().for_each(|v| *v /= s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_ac_energy() {
        let img = GrayImage::from_pixel(64, 64, image::Luma([128]));
        assert!(frequency_block(&img).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fine_stripes_put_energy_in_outer_bins() {
        let img = GrayImage::from_fn(64, 64, |x, _| {
            image::Luma([if x % 2 == 0 { 0 } else { 255 }])
        });
        let b = frequency_block(&img);
        let outer_bin = ((32.0 / (2.0f64 * 32.0 * 32.0).sqrt()) * 16.0) as usize;
        let argmax = (0..16).max_by(|&i, &j| b[i].total_cmp(&b[j])).unwrap();
        assert_eq!(argmax, outer_bin);
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
