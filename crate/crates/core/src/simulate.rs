//! Deterministic synthetic scenarios: detections, feature sidecar and ground
//! truth, optionally with rendered frames.
//!
//! # Random stream
//!
//! All randomness comes from one ChaCha8 stream (`rand_chacha::ChaCha8Rng`)
//! seeded with `SeedableRng::seed_from_u64(seed)`. Uniform variates are
//! `(next_u64() >> 11) * 2^-53`, in `[0, 1)`. Normal variates use the cosine
//! branch of Box-Muller on two fresh uniforms `u1, u2`:
//! `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`.
//!
//! Per frame, values are drawn in a fixed order whether or not they are used:
//! for each target in listed order, jitter x, jitter y (normal), miss
//! (uniform), confidence (uniform), then `feature_dim` feature-noise normals;
//! after the targets, false-positive occurrence, x, y, width, height and
//! confidence (uniform), then `feature_dim` normals for its direction.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::appearance::{extract_batch, save_ppm, FeatureVector, ImageCrop, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::io::{format_tracks, write_detections, write_features};
use crate::types::{BoundingBox, Detection, FrameIndex, LabeledBox};

pub const DETECTIONS_FILE: &str = "detections.txt";
pub const FEATURES_FILE: &str = "features.txt";
pub const GROUND_TRUTH_FILE: &str = "gt.txt";
pub const IMAGES_DIR: &str = "img";

fn default_dim() -> usize {
    FEATURE_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub frames: u32,
    /// Probability of one false positive per frame.
    #[serde(default)]
    pub false_positive_rate: f64,
    /// Probability that a present target is not detected.
    #[serde(default)]
    pub miss_rate: f64,
    /// Standard deviation of the detection center, in pixels.
    #[serde(default)]
    pub jitter_std: f64,
    #[serde(default)]
    pub feature_noise_std: f64,
    /// Width and height in pixels.
    pub image_size: [u32; 2],
    #[serde(default = "default_dim")]
    pub feature_dim: usize,
    /// Render frames and extract features from them instead of synthesizing
    /// features directly.
    #[serde(default)]
    pub render: bool,
    pub targets: Vec<TargetSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub frame: FrameIndex,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureShift {
    pub start: FrameIndex,
    pub end: FrameIndex,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub id: u32,
    #[serde(default)]
    pub base_feature: Vec<f64>,
    /// Box-center path, linearly interpolated and held at both ends.
    pub waypoints: Vec<Waypoint>,
    pub size: [f64; 2],
    /// Inclusive frame ranges in which the target is out of view.
    #[serde(default)]
    pub absences: Vec<[FrameIndex; 2]>,
    #[serde(default)]
    pub feature_shifts: Vec<FeatureShift>,
    /// Fill color when rendering.
    #[serde(default)]
    pub color: [u8; 3],
}

impl TargetSpec {
    pub fn center_at(&self, frame: FrameIndex) -> (f64, f64) {
        let w = &self.waypoints;
        let first = &w[0];
        if frame <= first.frame {
            return (first.x, first.y);
        }
        for pair in w.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if frame <= b.frame {
                let t = f64::from(frame - a.frame) / f64::from(b.frame - a.frame);
                return (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            }
        }
        let last = &w[w.len() - 1];
        (last.x, last.y)
    }

    pub fn present_at(&self, frame: FrameIndex) -> bool {
        !self.absences.iter().any(|&[s, e]| (s..=e).contains(&frame))
    }

    fn direction_at(&self, frame: FrameIndex) -> &[f64] {
        self.feature_shifts
            .iter()
            .find(|s| (s.start..=s.end).contains(&frame))
            .map(|s| s.direction.as_slice())
            .unwrap_or(&self.base_feature)
    }
}

fn invalid(msg: String) -> Error {
    Error::Config(msg)
}

fn check_direction(v: &[f64], dim: usize, what: &str) -> Result<()> {
    if v.len() != dim {
        return Err(invalid(format!(
            "{what}: expected {dim} components, found {}",
            v.len()
        )));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>();
    if !norm.is_finite() || norm == 0.0 {
        return Err(invalid(format!("{what}: not a usable direction")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(invalid("frames must be at least 1".into()));
        }
        for (name, rate) in [
            ("false_positive_rate", self.false_positive_rate),
            ("miss_rate", self.miss_rate),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(invalid(format!("{name} must be in [0, 1), got {rate}")));
            }
        }
        for (name, std) in [
            ("jitter_std", self.jitter_std),
            ("feature_noise_std", self.feature_noise_std),
        ] {
            if !(std.is_finite() && std >= 0.0) {
                return Err(invalid(format!(
                    "{name} must be finite and non-negative, got {std}"
                )));
            }
        }
        if self.image_size[0] == 0 || self.image_size[1] == 0 {
            return Err(invalid("image_size must be positive".into()));
        }
        if self.feature_dim == 0 {
            return Err(invalid("feature_dim must be positive".into()));
        }
        let mut ids = Vec::new();
        for t in &self.targets {
            if t.id == 0 || ids.contains(&t.id) {
                return Err(invalid(format!("target id {} is zero or repeated", t.id)));
            }
            ids.push(t.id);
            if !self.render {
                check_direction(
                    &t.base_feature,
                    self.feature_dim,
                    &format!("target {} base_feature", t.id),
                )?;
                for s in &t.feature_shifts {
                    check_direction(
                        &s.direction,
                        self.feature_dim,
                        &format!("target {} feature shift", t.id),
                    )?;
                }
            }
            if t.feature_shifts.iter().any(|s| s.start > s.end) {
                return Err(invalid(format!(
                    "target {}: feature shift ends before it starts",
                    t.id
                )));
            }
            if t.waypoints.is_empty() {
                return Err(invalid(format!("target {} has no waypoints", t.id)));
            }
            if t.waypoints.windows(2).any(|w| w[0].frame >= w[1].frame) {
                return Err(invalid(format!(
                    "target {}: waypoint frames must strictly increase",
                    t.id
                )));
            }
            if t.waypoints
                .iter()
                .any(|w| !(w.x.is_finite() && w.y.is_finite()))
            {
                return Err(invalid(format!("target {}: non-finite waypoint", t.id)));
            }
            if !(t.size[0] > 0.0
                && t.size[1] > 0.0
                && t.size[0].is_finite()
                && t.size[1].is_finite())
            {
                return Err(invalid(format!("target {}: size must be positive", t.id)));
            }
            let mut spans = t.absences.clone();
            spans.sort_unstable();
            if spans.iter().any(|&[s, e]| s > e) || spans.windows(2).any(|w| w[0][1] >= w[1][0]) {
                return Err(invalid(format!(
                    "target {}: absences must be ordered, disjoint ranges",
                    t.id
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }
}

/// Seeded variate source with the documented conversions.
pub struct Stream(ChaCha8Rng);

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }
}

/// An in-memory scenario. `features[i]` belongs to `detections[i]`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub detections: Vec<Detection>,
    pub features: Vec<FeatureVector>,
    pub ground_truth: Vec<LabeledBox>,
    /// One frame per index when rendering, else empty.
    pub images: Vec<RgbImage>,
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn synthesize(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = Stream::new(config.seed);
    let dim = config.feature_dim;
    let [img_w, img_h] = config.image_size.map(f64::from);
    let mut detections = Vec::new();
    let mut features = Vec::new();
    let mut ground_truth = Vec::new();
    let mut images = Vec::new();

    for frame in 1..=config.frames {
        let mut frame_image = config.render.then(|| background(config.image_size));
        for t in &config.targets {
            let jx = rng.normal() * config.jitter_std;
            let jy = rng.normal() * config.jitter_std;
            let missed = rng.uniform() < config.miss_rate;
            let confidence = 0.7 + 0.3 * rng.uniform();
            let noise = rng.normals(dim);
            if !t.present_at(frame) {
                continue;
            }
            let (cx, cy) = t.center_at(frame);
            let truth = BoundingBox::from_center(cx, cy, t.size[0], t.size[1])?;
            ground_truth.push(LabeledBox {
                frame,
                id: t.id,
                bbox: truth,
                confidence: 1.0,
            });
            if let Some(img) = frame_image.as_mut() {
                draw_disk(img, &truth, t.color);
            }
            if missed {
                continue;
            }
            let bbox = BoundingBox::from_center(cx + jx, cy + jy, t.size[0], t.size[1])?;
            detections.push(Detection::new(frame, bbox, confidence));
            if !config.render {
                let dir = unit(t.direction_at(frame));
                let noisy: Vec<f64> = dir
                    .iter()
                    .zip(&noise)
                    .map(|(d, n)| d + n * config.feature_noise_std)
                    .collect();
                features.push(FeatureVector::normalized(noisy)?);
            }
        }

        let occurs = rng.uniform() < config.false_positive_rate;
        let (ux, uy, uw, uh, uc) = (
            rng.uniform(),
            rng.uniform(),
            rng.uniform(),
            rng.uniform(),
            rng.uniform(),
        );
        let direction = rng.normals(dim);
        if occurs {
            let w = 20.0 + 40.0 * uw;
            let h = 40.0 + 80.0 * uh;
            let bbox =
                BoundingBox::new(ux * (img_w - w).max(0.0), uy * (img_h - h).max(0.0), w, h)?;
            detections.push(Detection::new(frame, bbox, 0.3 + 0.5 * uc));
            if !config.render {
                features.push(FeatureVector::normalized(direction)?);
            }
        }
        if let Some(img) = frame_image {
            images.push(img);
        }
    }

    if config.render {
        let crops = detections
            .iter()
            .map(|d| ImageCrop::from_region(&images[d.frame as usize - 1], &d.bbox))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&ImageCrop> = crops.iter().collect();
        features = extract_batch(&refs);
    }
    Ok(Scenario {
        detections,
        features,
        ground_truth,
        images,
    })
}

fn background([w, h]: [u32; 2]) -> RgbImage {
    RgbImage::from_fn(w, h, |_, y| Rgb([20, 40 + (60 * y / h) as u8, 90]))
}

/// Fills the ellipse inscribed in `bbox`.
fn draw_disk(img: &mut RgbImage, bbox: &BoundingBox, color: [u8; 3]) {
    let (cx, cy) = bbox.center();
    let (rx, ry) = (bbox.width / 2.0, bbox.height / 2.0);
    let x0 = bbox.left.floor().max(0.0) as u32;
    let y0 = bbox.top.floor().max(0.0) as u32;
    let x1 = (bbox.right().ceil().max(0.0) as u32).min(img.width());
    let y1 = (bbox.bottom().ceil().max(0.0) as u32).min(img.height());
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = (f64::from(x) + 0.5 - cx) / rx;
            let dy = (f64::from(y) + 0.5 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                img.put_pixel(x, y, Rgb(color));
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioFiles {
    pub detections: PathBuf,
    pub features: PathBuf,
    pub ground_truth: PathBuf,
    pub images: Option<PathBuf>,
}

/// Synthesizes `config` and writes it into `dir`, creating the directory.
/// Nothing is written if the config is invalid.
pub fn generate(config: &ScenarioConfig, dir: impl AsRef<Path>) -> Result<ScenarioFiles> {
    let scenario = synthesize(config)?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ScenarioFiles {
        detections: dir.join(DETECTIONS_FILE),
        features: dir.join(FEATURES_FILE),
        ground_truth: dir.join(GROUND_TRUTH_FILE),
        images: config.render.then(|| dir.join(IMAGES_DIR)),
    };
    write_detections(&files.detections, &scenario.detections)?;
    write_features(&files.features, &scenario.features)?;
    let gt = format_tracks(&scenario.ground_truth);
    fs::write(&files.ground_truth, gt).map_err(|e| Error::io(&files.ground_truth, e))?;
    if let Some(img_dir) = &files.images {
        fs::create_dir_all(img_dir).map_err(|e| Error::io(img_dir, e))?;
        for (i, img) in scenario.images.iter().enumerate() {
            save_ppm(img_dir.join(frame_image_name(i as u32 + 1)), img)?;
        }
    }
    Ok(files)
}

/// File name of a frame image, e.g. `000007.ppm`.
pub fn frame_image_name(frame: FrameIndex) -> String {
    format!("{frame:06}.ppm")
}

/// A fixed pseudo-random unit direction, independent of scenario seeds.
pub fn direction(label: u64, dim: usize) -> Vec<f64> {
    unit(&Stream::new(0x5eed_0000 + label).normals(dim))
}

/// Unit vector at cosine distance `distance` from `base`, rotated towards
/// `towards`.
pub fn rotated(base: &[f64], towards: &[f64], distance: f64) -> Vec<f64> {
    let base = unit(base);
    let along: f64 = base.iter().zip(towards).map(|(b, t)| b * t).sum();
    let orth = unit(
        &towards
            .iter()
            .zip(&base)
            .map(|(t, b)| t - along * b)
            .collect::<Vec<_>>(),
    );
    let c = 1.0 - distance;
    let s = (1.0 - c * c).sqrt();
    base.iter().zip(&orth).map(|(b, o)| c * b + s * o).collect()
}

fn wp(frame: FrameIndex, x: f64, y: f64) -> Waypoint {
    Waypoint { frame, x, y }
}

fn target(id: u32, waypoints: Vec<Waypoint>) -> TargetSpec {
    TargetSpec {
        id,
        base_feature: direction(u64::from(id), FEATURE_DIM),
        waypoints,
        size: [40.0, 80.0],
        absences: Vec::new(),
        feature_shifts: Vec::new(),
        color: [0, 0, 0],
    }
}

fn two_targets(frames: u32) -> Vec<TargetSpec> {
    vec![
        target(1, vec![wp(1, 100.0, 120.0), wp(frames, 320.0, 150.0)]),
        target(2, vec![wp(1, 520.0, 360.0), wp(frames, 320.0, 330.0)]),
    ]
}

fn base(name: &str, frames: u32, targets: Vec<TargetSpec>) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        seed: 7,
        frames,
        false_positive_rate: 0.0,
        miss_rate: 0.0,
        jitter_std: 0.0,
        feature_noise_std: 0.0,
        image_size: [640, 480],
        feature_dim: FEATURE_DIM,
        render: false,
        targets,
    }
}

/// The named scenarios available from the command line.
pub fn builtin_scenarios() -> Vec<ScenarioConfig> {
    let steady2 = base("steady2", 100, two_targets(100));

    let mut reacquire = base("reacquire", 120, two_targets(120));
    reacquire.jitter_std = 0.5;
    reacquire.feature_noise_std = 5e-4;
    reacquire.targets[1].absences = vec![[40, 59]];

    let mut recovery = reacquire.clone();
    recovery.name = "recovery".into();
    let b = &mut recovery.targets[1];
    let alternate = rotated(&b.base_feature, &direction(99, FEATURE_DIM), 0.05);
    b.feature_shifts = vec![FeatureShift {
        start: 60,
        end: 64,
        direction: alternate,
    }];

    // four lanes, each target sweeping back and forth at its own pace
    let lanes = [(80.0, 200), (200.0, 170), (320.0, 230), (440.0, 190)];
    let clutter_targets = lanes
        .iter()
        .enumerate()
        .map(|(i, &(y, period))| {
            let mut points = Vec::new();
            let mut frame = 1;
            let mut left = i % 2 == 0;
            while frame < 500 + period {
                points.push(wp(frame, if left { 60.0 } else { 580.0 }, y));
                left = !left;
                frame += period;
            }
            target(i as u32 + 1, points)
        })
        .collect();
    let mut clutter = base("clutter", 500, clutter_targets);
    clutter.seed = 11;
    clutter.miss_rate = 0.05;
    clutter.false_positive_rate = 0.05;
    clutter.jitter_std = 0.5;
    clutter.feature_noise_std = 5e-4;

    let mut rendered2 = base(
        "rendered2",
        40,
        vec![
            target(1, vec![wp(1, 70.0, 80.0), wp(40, 130.0, 100.0)]),
            target(2, vec![wp(1, 250.0, 170.0), wp(40, 190.0, 150.0)]),
        ],
    );
    rendered2.image_size = [320, 240];
    rendered2.render = true;
    rendered2.targets[0].color = [230, 80, 40];
    rendered2.targets[1].color = [60, 200, 90];
    for t in &mut rendered2.targets {
        t.size = [48.0, 48.0];
        t.base_feature.clear();
    }

    vec![steady2, reacquire, recovery, clutter, rendered2]
}

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid() {
        let all = builtin_scenarios();
        let names: Vec<_> = all.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            ["steady2", "reacquire", "recovery", "clutter", "rendered2"]
        );
        for s in &all {
            s.validate().unwrap();
        }
    }

    #[test]
    fn toml_round_trip() {
        for s in builtin_scenarios() {
            assert_eq!(ScenarioConfig::from_toml(&s.to_toml()).unwrap(), s);
        }
    }

    #[test]
    fn noiseless_detections_equal_truth() {
        let s = synthesize(&builtin("steady2").unwrap()).unwrap();
        assert_eq!(s.detections.len(), s.ground_truth.len());
        for (d, g) in s.detections.iter().zip(&s.ground_truth) {
            assert_eq!(d.bbox, g.bbox);
        }
        let first = &s.features[0];
        assert!(s.features.iter().step_by(2).all(|f| f == first));
    }

    #[test]
    fn absent_frames_have_no_lines() {
        let s = synthesize(&builtin("reacquire").unwrap()).unwrap();
        for g in &s.ground_truth {
            assert!(!(g.id == 2 && (40..=59).contains(&g.frame)));
        }
        assert_eq!(s.ground_truth.iter().filter(|g| g.id == 2).count(), 100);
    }

    #[test]
    fn alternate_direction_distance() {
        let r = builtin("recovery").unwrap();
        let b = &r.targets[1];
        let cos: f64 = unit(&b.base_feature)
            .iter()
            .zip(&b.feature_shifts[0].direction)
            .map(|(x, y)| x * y)
            .sum();
        assert!((1.0 - cos - 0.05).abs() < 1e-12);
    }

    #[test]
    fn uniform_and_normal_conversions() {
        let mut a = Stream::new(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let u = a.uniform();
        assert_eq!(u, (b.next_u64() >> 11) as f64 / 9007199254740992.0);
        assert!((0.0..1.0).contains(&u));
        let n = a.normal();
        let (u1, u2) = (
            (b.next_u64() >> 11) as f64 / 9007199254740992.0,
            (b.next_u64() >> 11) as f64 / 9007199254740992.0,
        );
        assert_eq!(
            n,
            (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        );
    }

    #[test]
    fn rejects_invalid_config() {
        let mut c = builtin("steady2").unwrap();
        c.miss_rate = 1.0;
        assert!(c.validate().is_err());
        let mut c = builtin("steady2").unwrap();
        c.targets[0].absences = vec![[10, 20], [15, 30]];
        assert!(c.validate().is_err());
        let mut c = builtin("steady2").unwrap();
        c.targets[0].waypoints = vec![wp(5, 0.0, 0.0), wp(5, 1.0, 1.0)];
        assert!(c.validate().is_err());
    }

    #[test]
    fn invalid_config_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let mut c = builtin("steady2").unwrap();
        c.frames = 0;
        assert!(generate(&c, &out).is_err());
        assert!(!out.exists());
    }
}
