use std::path::Path;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::types::BoundingBox;

/// Smallest crop side accepted by the extractor.
pub const MIN_CROP_SIDE: u32 = 8;

/// Row-major 8-bit RGB image region.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCrop {
    image: RgbImage,
}

impl ImageCrop {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        let image = RgbImage::from_raw(width, height, pixels).ok_or_else(|| {
            Error::Image(format!("pixel buffer does not match {width}x{height} RGB"))
        })?;
        Self::from_image(image)
    }

    pub fn from_image(image: RgbImage) -> Result<Self> {
        if image.width() < MIN_CROP_SIDE || image.height() < MIN_CROP_SIDE {
            return Err(Error::Image(format!(
                "crop must be at least {MIN_CROP_SIDE}x{MIN_CROP_SIDE}, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        Ok(Self { image })
    }

    /// Cuts `bbox` out of `frame`, clamping to the image bounds. Regions
    /// thinner than the minimum side are widened around their centre.
    pub fn from_region(frame: &RgbImage, bbox: &BoundingBox) -> Result<Self> {
        let (fw, fh) = (frame.width(), frame.height());
        if fw < MIN_CROP_SIDE || fh < MIN_CROP_SIDE {
            return Err(Error::Image(format!(
                "frame {fw}x{fh} is smaller than the minimum crop"
            )));
        }
        let span = |lo: f64, hi: f64, limit: u32| -> (u32, u32) {
            let limit_f = f64::from(limit);
            let mut a = lo.floor().clamp(0.0, limit_f) as u32;
            let mut b = hi.ceil().clamp(0.0, limit_f) as u32;
            if b < a + MIN_CROP_SIDE {
                let mid = (a + b) / 2;
                a = mid
                    .saturating_sub(MIN_CROP_SIDE / 2)
                    .min(limit - MIN_CROP_SIDE);
                b = a + MIN_CROP_SIDE;
            }
            (a, b)
        };
        let (x0, x1) = span(bbox.left, bbox.right(), fw);
        let (y0, y1) = span(bbox.top, bbox.bottom(), fh);
        let sub = image::imageops::crop_imm(frame, x0, y0, x1 - x0, y1 - y0).to_image();
        Self::from_image(sub)
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn pixels(&self) -> &[u8] {
        self.image.as_raw()
    }
}

/// Decodes a PPM (or any other enabled format) into RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader
        .decode()
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    Ok(decoded.to_rgb8())
}

/// Writes a binary (P6) PPM.
pub fn save_ppm(path: impl AsRef<Path>, image: &RgbImage) -> Result<()> {
    use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
    use image::ImageEncoder;

    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    PnmEncoder::new(&mut writer)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(
            image.as_raw(),
            image.width(),
            image.height(),
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    std::io::Write::flush(&mut writer).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_or_mismatched_buffers() {
        assert!(ImageCrop::new(4, 8, vec![0; 4 * 8 * 3]).is_err());
        assert!(ImageCrop::new(8, 8, vec![0; 10]).is_err());
        assert!(ImageCrop::new(8, 8, vec![0; 8 * 8 * 3]).is_ok());
    }

    #[test]
    fn region_is_clamped_to_frame() {
        let frame = RgbImage::new(64, 48);
        let b = BoundingBox::new(50.0, -10.0, 40.0, 30.0).unwrap();
        let c = ImageCrop::from_region(&frame, &b).unwrap();
        assert_eq!((c.width(), c.height()), (14, 20));
        let thin = BoundingBox::new(62.5, 5.0, 1.0, 2.0).unwrap();
        let c = ImageCrop::from_region(&frame, &thin).unwrap();
        assert_eq!((c.width(), c.height()), (8, 8));
    }

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("000001.ppm");
        let mut img = RgbImage::new(9, 10);
        img.put_pixel(3, 4, image::Rgb([10, 200, 30]));
        save_ppm(&path, &img).unwrap();
        assert_eq!(&std::fs::read(&path).unwrap()[..2], b"P6");
        assert_eq!(load_image(&path).unwrap(), img);
    }
}
