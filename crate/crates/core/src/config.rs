//! Tracker configuration and its flat `key = value` file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::NoiseFactors;

/// Every threshold and regime parameter of the tracker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackerConfig {
    /// Minimum IOU against the previous frame for the fast-path match.
    pub iou_threshold: f64,
    /// Squared-Mahalanobis gate for short-term tracks.
    pub location_gate: f64,
    /// Appearance gate for tracks inactive for at most `long_term_after` frames.
    pub appearance_gate_short: f64,
    /// Appearance gate for long-absent tracks; also the identity-recovery threshold.
    pub appearance_gate_long: f64,
    pub long_term_after: u32,
    pub gallery_capacity: usize,
    pub confirm_after: u32,
    pub new_track_window: u32,
    pub merge_fraction: f64,
    pub identity_recovery_enabled: bool,
    pub noise: NoiseFactors,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.75,
            location_gate: 25.0,
            appearance_gate_short: 1e-4,
            appearance_gate_long: 5e-4,
            long_term_after: 5,
            gallery_capacity: 100,
            confirm_after: 3,
            new_track_window: 15,
            merge_fraction: 0.25,
            identity_recovery_enabled: true,
            noise: NoiseFactors::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("iou_threshold", self.iou_threshold),
            ("location_gate", self.location_gate),
            ("appearance_gate_short", self.appearance_gate_short),
            ("appearance_gate_long", self.appearance_gate_long),
            ("process_position_factor", self.noise.process_position),
            ("process_velocity_factor", self.noise.process_velocity),
            ("measurement_factor", self.noise.measurement),
            ("fallback_height", self.noise.fallback_height),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.iou_threshold > 1.0 {
            return Err(Error::Config("iou_threshold must be at most 1".into()));
        }
        if self.appearance_gate_long < self.appearance_gate_short {
            return Err(Error::Config(
                "appearance_gate_long must be >= appearance_gate_short".into(),
            ));
        }
        if !(self.merge_fraction > 0.0 && self.merge_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "merge_fraction must lie in (0, 1], got {}",
                self.merge_fraction
            )));
        }
        for (name, v) in [
            ("long_term_after", self.long_term_after as usize),
            ("gallery_capacity", self.gallery_capacity),
            ("confirm_after", self.confirm_after as usize),
            ("new_track_window", self.new_track_window as usize),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Defaults overridden by the keys present in `path`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut config = Self::default();
        ConfigOverrides::from_file(path)?.apply(&mut config);
        config.validate()?;
        Ok(config)
    }

    /// Renders the configuration in the same format `from_file` reads.
    pub fn to_file_string(&self) -> String {
        let o = ConfigOverrides::from(self);
        toml::to_string(&o).expect("flat config always serializes")
    }
}

/// Partial configuration: each present key replaces the corresponding field.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub iou_threshold: Option<f64>,
    pub location_gate: Option<f64>,
    pub appearance_gate_short: Option<f64>,
    pub appearance_gate_long: Option<f64>,
    pub long_term_after: Option<u32>,
    pub gallery_capacity: Option<usize>,
    pub confirm_after: Option<u32>,
    pub new_track_window: Option<u32>,
    pub merge_fraction: Option<f64>,
    pub identity_recovery_enabled: Option<bool>,
    pub process_position_factor: Option<f64>,
    pub process_velocity_factor: Option<f64>,
    pub measurement_factor: Option<f64>,
    pub fallback_height: Option<f64>,
}

impl ConfigOverrides {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&self, c: &mut TrackerConfig) {
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$src { c.$($dst).+ = v; })*
            };
        }
        set!(
            iou_threshold => iou_threshold,
            location_gate => location_gate,
            appearance_gate_short => appearance_gate_short,
            appearance_gate_long => appearance_gate_long,
            long_term_after => long_term_after,
            gallery_capacity => gallery_capacity,
            confirm_after => confirm_after,
            new_track_window => new_track_window,
            merge_fraction => merge_fraction,
            identity_recovery_enabled => identity_recovery_enabled,
            process_position_factor => noise.process_position,
            process_velocity_factor => noise.process_velocity,
            measurement_factor => noise.measurement,
            fallback_height => noise.fallback_height,
        );
    }
}

impl From<&TrackerConfig> for ConfigOverrides {
    fn from(c: &TrackerConfig) -> Self {
        Self {
            iou_threshold: Some(c.iou_threshold),
            location_gate: Some(c.location_gate),
            appearance_gate_short: Some(c.appearance_gate_short),
            appearance_gate_long: Some(c.appearance_gate_long),
            long_term_after: Some(c.long_term_after),
            gallery_capacity: Some(c.gallery_capacity),
            confirm_after: Some(c.confirm_after),
            new_track_window: Some(c.new_track_window),
            merge_fraction: Some(c.merge_fraction),
            identity_recovery_enabled: Some(c.identity_recovery_enabled),
            process_position_factor: Some(c.noise.process_position),
            process_velocity_factor: Some(c.noise.process_velocity),
            measurement_factor: Some(c.noise.measurement),
            fallback_height: Some(c.noise.fallback_height),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrackerConfig::default();
        c.validate().unwrap();
        assert_eq!(c.iou_threshold, 0.75);
        assert_eq!(c.location_gate, 25.0);
        assert_eq!(c.appearance_gate_short, 1e-4);
        assert_eq!(c.appearance_gate_long, 5e-4);
        assert_eq!(c.long_term_after, 5);
        assert_eq!(c.gallery_capacity, 100);
        assert_eq!(c.confirm_after, 3);
        assert_eq!(c.new_track_window, 15);
        assert_eq!(c.merge_fraction, 0.25);
        assert!(c.identity_recovery_enabled);
    }

    #[test]
    fn file_keys_override_defaults() {
        let o = ConfigOverrides::parse(
            "# tuned\nlocation_gate = 30\nidentity_recovery_enabled = false\n",
        )
        .unwrap();
        let mut c = TrackerConfig::default();
        o.apply(&mut c);
        assert_eq!(c.location_gate, 30.0);
        assert!(!c.identity_recovery_enabled);
        assert_eq!(c.iou_threshold, 0.75);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigOverrides::parse("iou_treshold = 0.5\n").is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut c = TrackerConfig {
            appearance_gate_long: 1e-5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.appearance_gate_long = 5e-4;
        c.merge_fraction = 0.0;
        assert!(c.validate().is_err());
        c.merge_fraction = 1.0;
        c.validate().unwrap();
    }

    #[test]
    fn rendered_config_reads_back() {
        let c = TrackerConfig {
            location_gate: 12.5,
            ..Default::default()
        };
        let mut back = TrackerConfig::default();
        ConfigOverrides::parse(&c.to_file_string())
            .unwrap()
            .apply(&mut back);
        assert_eq!(back, c);
    }
}
