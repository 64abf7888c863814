//! Hand-crafted appearance descriptors, per-track galleries and cosine
//! distances.
//!
//! Extracted vectors have 58 components laid out as
//!
//! | range      | block                                                   |
//! |------------|---------------------------------------------------------|
//! | `[0, 30)`  | LAB mean/std per channel + 8-bin histograms (128×128)   |
//! | `[30, 46)` | radial log-amplitude spectrum, 16 annuli (64×64 gray)   |
//! | `[46, 49)` | contour extent, compactness, polygon vertex count       |
//! | `[49, 51)` | hull solidity, hull/contour perimeter ratio             |
//! | `[51, 58)` | log-compressed Hu invariants of the silhouette          |
//!
//! The whole vector is L2-normalized. Shape blocks are computed on the crop at
//! native resolution so they commute exactly with lattice rotations.

mod color;
mod crop;
mod feature;
mod frequency;
mod gallery;
mod moments;
mod shape;

use image::imageops::{self, FilterType};

pub use image::{GrayImage, Rgb, RgbImage};

pub use color::{lab_block, rgb_to_lab, LAB_BLOCK_LEN};
pub use crop::{load_image, save_ppm, ImageCrop, MIN_CROP_SIDE};
pub use feature::{cosine_distance, FeatureVector};
pub use frequency::{frequency_block, FREQ_BLOCK_LEN};
pub use gallery::{gallery_distance, Gallery, GalleryEntry};
pub use moments::{hu_block, hu_moments, BinaryMask};
pub use shape::{binarize, largest_component, shape_blocks, ShapeBlocks};

pub const FEATURE_DIM: usize = 58;

pub const LAB_RANGE: std::ops::Range<usize> = 0..30;
pub const FREQ_RANGE: std::ops::Range<usize> = 30..46;
pub const CONTOUR_RANGE: std::ops::Range<usize> = 46..49;
pub const HULL_RANGE: std::ops::Range<usize> = 49..51;
pub const HU_RANGE: std::ops::Range<usize> = 51..58;

const LAB_SIDE: u32 = 128;
const FREQ_SIDE: u32 = 64;

/// Unnormalized 58-component descriptor.
pub fn raw_features(crop: &ImageCrop) -> [f64; FEATURE_DIM] {
    let rgb = crop.image();
    let lab_img = imageops::resize(rgb, LAB_SIDE, LAB_SIDE, FilterType::Triangle);
    let gray = imageops::grayscale(rgb);
    let freq_img = imageops::resize(&gray, FREQ_SIDE, FREQ_SIDE, FilterType::Triangle);

    let mut out = [0.0; FEATURE_DIM];
    out[LAB_RANGE].copy_from_slice(&lab_block(&lab_img));
    out[FREQ_RANGE].copy_from_slice(&frequency_block(&freq_img));
    let shape = shape_blocks(&gray);
    out[CONTOUR_RANGE].copy_from_slice(&shape.contour);
    out[HULL_RANGE].copy_from_slice(&shape.hull);
    out[HU_RANGE].copy_from_slice(&shape.hu);
    out
}

pub fn extract_features(crop: &ImageCrop) -> FeatureVector {
    FeatureVector::normalized(raw_features(crop).to_vec())
        .expect("LAB histograms always give the descriptor a nonzero norm")
}

/// Extracts descriptors for many crops, in parallel when the `parallel`
/// feature is enabled. Output order matches input order.
pub fn extract_batch(crops: &[&ImageCrop]) -> Vec<FeatureVector> {
    crate::parallel::map(crops, |c| extract_features(c))
}

pub fn extract_batch_sequential(crops: &[&ImageCrop]) -> Vec<FeatureVector> {
    crops.iter().map(|c| extract_features(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    #[test]
    fn uniform_gray_crop() {
        let crop =
            ImageCrop::from_image(RgbImage::from_pixel(40, 60, Rgb([128, 128, 128]))).unwrap();
        let raw = raw_features(&crop);
        assert_eq!([raw[1], raw[3], raw[5]], [0.0; 3]);
        assert!(raw[FREQ_RANGE].iter().skip(1).all(|&v| v == 0.0));
        assert!(raw[CONTOUR_RANGE.start..].iter().all(|&v| v == 0.0));
        let f = extract_features(&crop);
        let norm: f64 = f.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    fn figure(w: u32, h: u32, seed: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            let inside = ((x as i64 - w as i64 / 2).pow(2) * 4 + (y as i64 - h as i64 / 3).pow(2))
                < (w as i64 * w as i64) / 2;
            let v = ((x * 7 + y * 13 + seed) % 17) as u8;
            if inside {
                Rgb([200 - v, 60 + v, 40])
            } else {
                Rgb([20 + v, 40, 90 + v])
            }
        })
    }

    #[test]
    fn rotated_copy_has_identical_hu_block() {
        let ra = raw_features(&ImageCrop::from_image(figure(48, 72, 3)).unwrap());
        let rb =
            raw_features(&ImageCrop::from_image(imageops::rotate180(&figure(48, 72, 3))).unwrap());
        for i in HU_RANGE {
            assert!(
                (ra[i] - rb[i]).abs() < 1e-6,
                "component {i}: {} vs {}",
                ra[i],
                rb[i]
            );
        }
    }

    #[test]
    fn batch_matches_single_extraction() {
        let crops: Vec<ImageCrop> = (0..5)
            .map(|s| ImageCrop::from_image(figure(30 + s, 50, s)).unwrap())
            .collect();
        let refs: Vec<&ImageCrop> = crops.iter().collect();
        let par = extract_batch(&refs);
        let seq = extract_batch_sequential(&refs);
        assert_eq!(par, seq);
        assert_eq!(par[2], extract_features(&crops[2]));
    }
}
