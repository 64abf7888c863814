//! Realtime tracking-by-detection with appearance-based reidentification.
//!
//! The per-frame pipeline lives in [`tracker::Tracker`]: an IOU fast path
//! against the previous frame, gated Hungarian matching on gallery cosine
//! distances (with Kalman location as gate and tie-breaker), three-frame
//! confirmation, two reidentification regimes, and identity recovery that
//! merges new tracks back into long-absent ones.

pub mod appearance;
pub mod assignment;
pub mod config;
pub mod error;
pub mod io;
pub mod kalman;
pub mod metrics;
pub mod parallel;
pub mod pipeline;
pub mod simulate;
pub mod tracker;
pub mod types;

pub use config::TrackerConfig;
pub use error::{Error, Result};
pub use types::{BoundingBox, Detection, FrameIndex, LabeledBox, TrackId};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
