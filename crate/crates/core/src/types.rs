//! Domain types shared by every stage of the pipeline.

use std::fmt;
use std::sync::Arc;

use crate::appearance::{FeatureVector, ImageCrop};
use crate::error::{Error, Result};

/// 1-based frame index, following the MOT convention.
pub type FrameIndex = u32;

/// Identity assigned by the tracker. Ids start at 1 and are never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(transparent)]
pub struct TrackId(pub u32);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Axis-aligned pixel rectangle stored as corner plus size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Result<Self> {
        if ![left, top, width, height].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox("non-finite coordinate".into()));
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "width and height must be positive, got {width}x{height}"
            )));
        }
        Ok(Self {
            left,
            top,
            width,
            height,
        })
    }

    /// Box of the given size centred on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(cx - width / 2.0, cy - height / 2.0, width, height)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            left: self.left + dx,
            top: self.top + dy,
            ..*self
        }
    }
}

/// One detector output for one frame.
#[derive(Debug, Clone)]
pub struct Detection {
    pub frame: FrameIndex,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub feature: Option<FeatureVector>,
    /// Image region the feature can be extracted from when `feature` is absent.
    pub crop: Option<Arc<ImageCrop>>,
}

impl Detection {
    pub fn new(frame: FrameIndex, bbox: BoundingBox, confidence: f64) -> Self {
        Self {
            frame,
            bbox,
            confidence,
            feature: None,
            crop: None,
        }
    }

    pub fn with_feature(mut self, feature: FeatureVector) -> Self {
        self.feature = Some(feature);
        self
    }

    pub fn with_crop(mut self, crop: Arc<ImageCrop>) -> Self {
        self.crop = Some(crop);
        self
    }
}

/// A box carrying an identity label: a ground-truth annotation or a tracker
/// output line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub frame: FrameIndex,
    pub id: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
}
