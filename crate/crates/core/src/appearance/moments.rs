//! Hu moment invariants of binary masks.
//!
//! Central moments are accumulated in exact integer arithmetic (scaled by
//! powers of the pixel count), so translated and lattice-rotated copies of a
//! mask produce identical normalized moments. Very large masks that would
//! overflow `i128` fall back to floating point.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.set(x, y, f(x, y));
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[(y * self.width + x) as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Foreground pixel coordinates in raster order.
    pub fn foreground(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i as u32 % self.width, i as u32 / self.width))
    }
}

/// Normalized central moments η_pq for p + q in {2, 3}.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Eta {
    e20: f64,
    e11: f64,
    e02: f64,
    e30: f64,
    e21: f64,
    e12: f64,
    e03: f64,
}

fn eta_exact(points: &[(i128, i128)]) -> Option<Eta> {
    let n = points.len() as i128;
    let sx: i128 = points.iter().map(|p| p.0).sum();
    let sy: i128 = points.iter().map(|p| p.1).sum();
    // M_pq = Σ (n·x − Σx)^p (n·y − Σy)^q = n^(p+q) μ_pq
    let mut m = [0i128; 7];
    for &(x, y) in points {
        let dx = n.checked_mul(x)?.checked_sub(sx)?;
        let dy = n.checked_mul(y)?.checked_sub(sy)?;
        let dx2 = dx.checked_mul(dx)?;
        let dy2 = dy.checked_mul(dy)?;
        let terms = [
            dx2,
            dx.checked_mul(dy)?,
            dy2,
            dx2.checked_mul(dx)?,
            dx2.checked_mul(dy)?,
            dy2.checked_mul(dx)?,
            dy2.checked_mul(dy)?,
        ];
        for (acc, t) in m.iter_mut().zip(terms) {
            *acc = acc.checked_add(t)?;
        }
    }
    // η_pq = μ_pq / n^(1 + (p+q)/2) = M_pq / n^(1 + 3(p+q)/2)
    let nf = n as f64;
    let d2 = nf.powi(4);
    let d3 = nf.powi(5) * nf.sqrt();
    Some(Eta {
        e20: m[0] as f64 / d2,
        e11: m[1] as f64 / d2,
        e02: m[2] as f64 / d2,
        e30: m[3] as f64 / d3,
        e21: m[4] as f64 / d3,
        e12: m[5] as f64 / d3,
        e03: m[6] as f64 / d3,
    })
}

fn eta_float(points: &[(i128, i128)]) -> Eta {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let mut mu = [0f64; 7];
    for &(x, y) in points {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        mu[0] += dx * dx;
        mu[1] += dx * dy;
        mu[2] += dy * dy;
        mu[3] += dx * dx * dx;
        mu[4] += dx * dx * dy;
        mu[5] += dx * dy * dy;
        mu[6] += dy * dy * dy;
    }
    let d2 = n * n;
    let d3 = n.powf(2.5);
    Eta {
        e20: mu[0] / d2,
        e11: mu[1] / d2,
        e02: mu[2] / d2,
        e30: mu[3] / d3,
        e21: mu[4] / d3,
        e12: mu[5] / d3,
        e03: mu[6] / d3,
    }
}

/// The seven classical Hu invariants of the foreground pixel set.
pub fn hu_moments(mask: &BinaryMask) -> Result<[f64; 7]> {
    let points: Vec<(i128, i128)> = mask
        .foreground()
        .map(|(x, y)| (i128::from(x), i128::from(y)))
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyMask);
    }
    // Shift to the foreground bounding box to keep the integer sums small.
    let x0 = points.iter().map(|p| p.0).min().unwrap_or(0);
    let y0 = points.iter().map(|p| p.1).min().unwrap_or(0);
    let points: Vec<(i128, i128)> = points.into_iter().map(|(x, y)| (x - x0, y - y0)).collect();
    let e = eta_exact(&points).unwrap_or_else(|| eta_float(&points));
    Ok(hu_from_eta(&e))
}

fn hu_from_eta(e: &Eta) -> [f64; 7] {
    let a = e.e30 + e.e12;
    let b = e.e21 + e.e03;
    let c = e.e30 - 3.0 * e.e12;
    let d = 3.0 * e.e21 - e.e03;
    let diff = e.e20 - e.e02;
    [
        e.e20 + e.e02,
        diff * diff + 4.0 * e.e11 * e.e11,
        c * c + d * d,
        a * a + b * b,
        c * a * (a * a - 3.0 * b * b) + d * b * (3.0 * a * a - b * b),
        diff * (a * a - b * b) + 4.0 * e.e11 * a * b,
        d * a * (a * a - 3.0 * b * b) - c * b * (3.0 * a * a - b * b),
    ]
}

/// Log-compresses Hu invariants into `[-1, 1]`: `-sign(h)·log10(|h| + 1e-30) / 40`.
pub fn hu_block(hu: &[f64; 7]) -> [f64; 7] {
    hu.map(|h| {
        let s = if h > 0.0 {
            1.0
        } else if h < 0.0 {
            -1.0
        } else {
            0.0
        };
        (-s * (h.abs() + 1e-30).log10() / 40.0).clamp(-1.0, 1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_pixel_bar() {
        // μ00 = 2, μ20 = 0.5, μ02 = 0 -> η20 = 0.5 / 2^2 = 0.125
        let mut m = BinaryMask::new(4, 4);
        m.set(0, 0, true);
        m.set(1, 0, true);
        let hu = hu_moments(&m).unwrap();
        assert_eq!(hu[0], 0.125);
        assert_eq!(hu[1], 0.015625);
        assert!(hu[2..].iter().all(|&h| h == 0.0));
    }

    #[test]
    fn empty_mask_is_an_error() {
        assert!(matches!(
            hu_moments(&BinaryMask::new(8, 8)),
            Err(Error::EmptyMask)
        ));
    }

    fn blob(w: u32, h: u32, ox: u32, oy: u32) -> BinaryMask {
        // an asymmetric "P"-like shape
        BinaryMask::from_fn(w, h, |x, y| {
            let (x, y) = (x as i64 - ox as i64, y as i64 - oy as i64);
            let stem = (0..6).contains(&x) && (0..30).contains(&y);
            let bowl = (6..18).contains(&x)
                && (0..14).contains(&y)
                && !((6..12).contains(&x) && (5..9).contains(&y));
            stem || bowl
        })
    }

    fn rotate90(m: &BinaryMask) -> BinaryMask {
        let (w, h) = (m.width(), m.height());
        BinaryMask::from_fn(h, w, |x, y| m.get(y, h - 1 - x))
    }

    #[test]
    fn translation_and_rotation_are_exact() {
        let a = hu_moments(&blob(64, 64, 3, 4)).unwrap();
        let b = hu_moments(&blob(64, 64, 20, 9)).unwrap();
        assert_eq!(a, b);
        let r = hu_moments(&rotate90(&blob(64, 64, 3, 4))).unwrap();
        for (x, y) in a.iter().zip(r.iter()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300), "{x} vs {y}");
        }
    }

    #[test]
    fn float_fallback_agrees_with_exact_path() {
        let m = blob(40, 40, 2, 2);
        let pts: Vec<(i128, i128)> = m.foreground().map(|(x, y)| (x.into(), y.into())).collect();
        let exact = hu_from_eta(&eta_exact(&pts).unwrap());
        let float = hu_from_eta(&eta_float(&pts));
        for (x, y) in exact.iter().zip(float.iter()) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12));
        }
    }

    #[test]
    fn block_transform() {
        let b = hu_block(&[1e-3, -1e-3, 0.0, 1.0, 1e-50, 2.0, -0.5]);
        assert!((b[0] - 3.0 / 40.0).abs() < 1e-15);
        assert!((b[1] + 3.0 / 40.0).abs() < 1e-15);
        assert_eq!(b[2], 0.0);
        assert_eq!(b[3], 0.0);
        assert_eq!(b[4], 0.75);
        assert!(b.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
