//! Silhouette descriptors: contour, convex hull and Hu invariants of the
//! largest foreground region after Otsu binarization.

use image::{GrayImage, Luma};
use imageproc::contours::{find_contours, BorderType};
use imageproc::contrast::otsu_level;
use imageproc::geometry::{approximate_polygon_dp, arc_length, contour_area, convex_hull};
use imageproc::point::Point;
use imageproc::region_labelling::{connected_components, Connectivity};

use super::moments::{hu_block, hu_moments, BinaryMask};

pub const CONTOUR_BLOCK_LEN: usize = 3;
pub const HULL_BLOCK_LEN: usize = 2;
pub const HU_BLOCK_LEN: usize = 7;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShapeBlocks {
    /// extent, compactness, polygon vertex count / 32
    pub contour: [f64; CONTOUR_BLOCK_LEN],
    /// solidity, hull perimeter / contour perimeter
    pub hull: [f64; HULL_BLOCK_LEN],
    pub hu: [f64; HU_BLOCK_LEN],
}

/// Otsu foreground mask. Pixels above the level are foreground unless they
/// make up most of the image border, in which case the mask is inverted.
/// Returns `None` for single-valued images.
pub fn binarize(gray: &GrayImage) -> Option<BinaryMask> {
    let (lo, hi) = gray.pixels().fold((u8::MAX, u8::MIN), |(lo, hi), p| {
        (lo.min(p.0[0]), hi.max(p.0[0]))
    });
    if lo == hi {
        return None;
    }
    let level = otsu_level(gray);
    let (w, h) = gray.dimensions();
    let above = |x: u32, y: u32| gray.get_pixel(x, y).0[0] > level;
    let (mut border, mut border_above) = (0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                border += 1;
                border_above += usize::from(above(x, y));
            }
        }
    }
    let invert = 2 * border_above > border;
    Some(BinaryMask::from_fn(w, h, |x, y| above(x, y) != invert))
}

/// The largest 8-connected foreground component (ties go to the lowest label).
pub fn largest_component(mask: &BinaryMask) -> Option<BinaryMask> {
    let (w, h) = (mask.width(), mask.height());
    let img = GrayImage::from_fn(w, h, |x, y| Luma([if mask.get(x, y) { 255 } else { 0 }]));
    let labels = connected_components(&img, Connectivity::Eight, Luma([0u8]));
    let max_label = labels.pixels().map(|p| p.0[0]).max().unwrap_or(0);
    if max_label == 0 {
        return None;
    }
    let mut sizes = vec![0usize; max_label as usize + 1];
    for p in labels.pixels() {
        sizes[p.0[0] as usize] += 1;
    }
    let best = (1..=max_label as usize).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))?;
    Some(BinaryMask::from_fn(w, h, |x, y| {
        labels.get_pixel(x, y).0[0] as usize == best
    }))
}

fn outer_contour(component: &BinaryMask) -> Vec<Point<i32>> {
    let (w, h) = (component.width(), component.height());
    let img = GrayImage::from_fn(w, h, |x, y| Luma([u8::from(component.get(x, y))]));
    find_contours::<i32>(&img)
        .into_iter()
        .filter(|c| c.border_type == BorderType::Outer)
        .max_by_key(|c| c.points.len())
        .map(|c| c.points)
        .unwrap_or_default()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// All three shape blocks; zeros when no foreground region exists.
pub fn shape_blocks(gray: &GrayImage) -> ShapeBlocks {
    let Some(component) = binarize(gray).as_ref().and_then(largest_component) else {
        return ShapeBlocks::default();
    };
    let hu = match hu_moments(&component) {
        Ok(h) => hu_block(&h),
        Err(_) => return ShapeBlocks::default(),
    };

    let contour = outer_contour(&component);
    let crop_area = f64::from(gray.width()) * f64::from(gray.height());
    let area = contour_area(&contour);
    let perimeter = arc_length(&contour, true);
    let vertices = if perimeter > 0.0 {
        approximate_polygon_dp(&contour, 0.01 * perimeter, true).len() as f64
    } else {
        contour.len() as f64
    };
    let compactness = if perimeter > 0.0 {
        (4.0 * std::f64::consts::PI * area / (perimeter * perimeter)).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let hull = if contour.len() >= 3 {
        convex_hull(contour.clone())
    } else {
        contour.clone()
    };
    let hull_area = contour_area(&hull);
    let hull_perimeter = arc_length(&hull, true);

    ShapeBlocks {
        contour: [
            ratio(area, crop_area),
            compactness,
            (vertices / 32.0).clamp(0.0, 1.0),
        ],
        hull: [ratio(area, hull_area), ratio(hull_perimeter, perimeter)],
        hu,
    }
}
