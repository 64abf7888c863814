//! Track lifecycle and the per-frame association algorithm.
//!
//! Each [`Tracker::step`] runs, in order: Kalman prediction for recently seen
//! tracks, the IOU fast path against the previous frame, gated Hungarian
//! matching of the remaining detections against every remaining track,
//! state updates, creation of tentative tracks, confirmation or deletion of
//! tentative tracks, and finally identity recovery.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::appearance::{cosine_distance, extract_batch, FeatureVector, Gallery, ImageCrop};
use crate::assignment::{
    build_cost_matrix, hungarian, iou_fast_path, LocationPrediction, Regime, TrackCandidate,
};
use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::kalman::{MotionState, NoiseModel};
use crate::types::{BoundingBox, Detection, FrameIndex, TrackId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Tentative,
    Confirmed,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: TrackId,
    pub state: TrackState,
    pub gallery: Gallery,
    pub motion: MotionState,
    pub created_frame: FrameIndex,
    pub last_seen_frame: FrameIndex,
    pub consecutive_hits: u32,
    pub last_box: BoundingBox,
    /// Frame the motion state currently describes.
    motion_frame: FrameIndex,
}

impl Track {
    pub fn regime_at(&self, frame: FrameIndex, long_term_after: u32) -> Regime {
        if frame.saturating_sub(self.last_seen_frame) > long_term_after {
            Regime::LongTerm
        } else {
            Regime::ShortTerm
        }
    }

    fn noise(&self, config: &TrackerConfig) -> NoiseModel {
        config.noise.model_for_height(Some(self.last_box.height))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentEntry {
    pub track_id: TrackId,
    pub bbox: BoundingBox,
    pub confidence: f64,
    /// Set when the track was still tentative at emit time.
    pub provisional: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAssignments {
    pub frame: FrameIndex,
    /// Entries ordered by track id.
    pub entries: Vec<AssignmentEntry>,
}

/// `absorbed` was merged into the older track `surviving` at `frame`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct MergeEvent {
    pub frame: FrameIndex,
    pub absorbed: TrackId,
    pub surviving: TrackId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSummary {
    pub id: TrackId,
    pub state: TrackState,
    pub regime: Regime,
    pub last_seen_frame: FrameIndex,
    pub gallery_size: usize,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    /// Live tracks, ascending by id.
    tracks: Vec<Track>,
    next_id: u32,
    current_frame: Option<FrameIndex>,
    /// Matched detections of the most recent frame, for the IOU fast path.
    previous: Vec<(BoundingBox, TrackId)>,
    merges: Vec<MergeEvent>,
    confirmed: BTreeSet<TrackId>,
    feature_dim: Option<usize>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
            current_frame: None,
            previous: Vec::new(),
            merges: Vec::new(),
            confirmed: BTreeSet::new(),
            feature_dim: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, id: TrackId) -> Option<&Track> {
        self.index_of(id).map(|i| &self.tracks[i])
    }

    pub fn current_frame(&self) -> Option<FrameIndex> {
        self.current_frame
    }

    /// Every merge so far, in the order they happened.
    pub fn merge_events(&self) -> &[MergeEvent] {
        &self.merges
    }

    /// Ids that reached the confirmed state at some point, including ids that
    /// were later absorbed by a merge.
    pub fn confirmed_ids(&self) -> &BTreeSet<TrackId> {
        &self.confirmed
    }

    fn index_of(&self, id: TrackId) -> Option<usize> {
        self.tracks.binary_search_by_key(&id, |t| t.id).ok()
    }

    /// Read-only view of the live tracks, ordered by id. Regimes are relative
    /// to the last processed frame.
    pub fn snapshot(&self) -> Vec<TrackSummary> {
        let frame = self.current_frame.unwrap_or(0);
        self.tracks
            .iter()
            .map(|t| TrackSummary {
                id: t.id,
                state: t.state,
                regime: t.regime_at(frame, self.config.long_term_after),
                last_seen_frame: t.last_seen_frame,
                gallery_size: t.gallery.len(),
            })
            .collect()
    }

    fn prepare_features(&mut self, frame: FrameIndex, detections: &mut [Detection]) -> Result<()> {
        let pending: Vec<(usize, Arc<ImageCrop>)> = detections
            .iter()
            .enumerate()
            .filter(|(_, d)| d.feature.is_none())
            .filter_map(|(i, d)| d.crop.clone().map(|c| (i, c)))
            .collect();
        if !pending.is_empty() {
            let crops: Vec<&ImageCrop> = pending.iter().map(|(_, c)| c.as_ref()).collect();
            for ((i, _), f) in pending.iter().zip(extract_batch(&crops)) {
                detections[*i].feature = Some(f);
            }
        }
        for (index, d) in detections.iter().enumerate() {
            let f = d
                .feature
                .as_ref()
                .ok_or(Error::MissingFeature { frame, index })?;
            match self.feature_dim {
                None => self.feature_dim = Some(f.dim()),
                Some(expected) if expected != f.dim() => {
                    return Err(Error::FeatureDimension {
                        expected,
                        found: f.dim(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Processes one frame. Frames must be strictly increasing; frames with
    /// no detections should still be stepped so absences are counted.
    pub fn step(
        &mut self,
        frame: FrameIndex,
        mut detections: Vec<Detection>,
    ) -> Result<FrameAssignments> {
        if let Some(previous) = self.current_frame {
            if frame <= previous {
                return Err(Error::FrameOrder {
                    previous,
                    got: frame,
                });
            }
        }
        self.prepare_features(frame, &mut detections)?;
        let previous_frame = self.current_frame.replace(frame);
        let cfg = self.config.clone();

        // A tentative track that missed any frame is dropped.
        self.tracks
            .retain(|t| t.state == TrackState::Confirmed || t.last_seen_frame + 1 >= frame);

        // 1. prediction for tracks still in the short-term regime
        for t in &mut self.tracks {
            let noise = t.noise(&cfg);
            let horizon = frame.min(t.last_seen_frame + cfg.long_term_after);
            while t.motion_frame < horizon {
                t.motion = noise.predict(&t.motion);
                t.motion_frame += 1;
            }
        }

        // 2. IOU fast path against the previous frame's matched detections
        let boxes: Vec<BoundingBox> = detections.iter().map(|d| d.bbox).collect();
        let previous: &[(BoundingBox, TrackId)] = if previous_frame == Some(frame - 1) {
            &self.previous
        } else {
            &[]
        };
        let fast = iou_fast_path(&boxes, previous, cfg.iou_threshold);
        let mut matched: Vec<(usize, usize)> = fast
            .assignments
            .iter()
            .filter_map(|&(det, id)| self.index_of(id).map(|ti| (det, ti)))
            .collect();
        let fast_tracks: BTreeSet<usize> = matched.iter().map(|&(_, ti)| ti).collect();
        let mut leftovers = fast.leftovers;
        // fast-path ids whose track vanished fall back to appearance matching
        for &(det, id) in &fast.assignments {
            if self.index_of(id).is_none() {
                leftovers.push(det);
            }
        }
        leftovers.sort_unstable();

        // 3. gated Hungarian over the remaining detections and tracks
        let open_tracks: Vec<usize> = (0..self.tracks.len())
            .filter(|i| !fast_tracks.contains(i))
            .collect();
        let mut long_term_matches = BTreeSet::new();
        if !leftovers.is_empty() && !open_tracks.is_empty() {
            let candidates: Vec<TrackCandidate<'_>> = open_tracks
                .iter()
                .map(|&ti| {
                    let t = &self.tracks[ti];
                    let regime = t.regime_at(frame, cfg.long_term_after);
                    TrackCandidate {
                        gallery: &t.gallery,
                        regime,
                        prediction: (regime == Regime::ShortTerm).then(|| LocationPrediction {
                            noise: t.noise(&cfg),
                            state: t.motion.clone(),
                        }),
                    }
                })
                .collect();
            let queries: Vec<&Detection> = leftovers.iter().map(|&i| &detections[i]).collect();
            let costs = build_cost_matrix(&queries, &candidates, &cfg)?;
            let result = hungarian(&costs);
            let mut assigned = BTreeSet::new();
            for (row, col) in result.matches {
                let ti = open_tracks[col];
                if candidates[col].regime == Regime::LongTerm {
                    long_term_matches.insert(ti);
                }
                matched.push((leftovers[row], ti));
                assigned.insert(leftovers[row]);
            }
            leftovers.retain(|d| !assigned.contains(d));
        }

        // 4. update matched tracks
        let mut emitted: Vec<(TrackId, usize)> = Vec::with_capacity(detections.len());
        for &(det, ti) in &matched {
            let d = &detections[det];
            let t = &mut self.tracks[ti];
            t.last_box = d.bbox;
            let noise = t.noise(&cfg);
            t.motion = if long_term_matches.contains(&ti) {
                // the frozen state is too stale to correct; restart from here
                noise.initiate(d.bbox.center())?
            } else {
                noise.update(&t.motion, d.bbox.center())?
            };
            t.motion_frame = frame;
            t.consecutive_hits = if t.last_seen_frame + 1 == frame {
                t.consecutive_hits + 1
            } else {
                1
            };
            t.last_seen_frame = frame;
            t.gallery.push(
                frame,
                d.feature.clone().expect("checked in prepare_features"),
            );
            emitted.push((t.id, det));
        }

        // 5. unmatched detections start tentative tracks
        for &det in &leftovers {
            let d = &detections[det];
            let id = TrackId(self.next_id);
            self.next_id += 1;
            let noise = cfg.noise.model_for_height(Some(d.bbox.height));
            let mut gallery = Gallery::new(cfg.gallery_capacity);
            gallery.push(
                frame,
                d.feature.clone().expect("checked in prepare_features"),
            );
            self.tracks.push(Track {
                id,
                state: TrackState::Tentative,
                gallery,
                motion: noise.initiate(d.bbox.center())?,
                created_frame: frame,
                last_seen_frame: frame,
                consecutive_hits: 1,
                last_box: d.bbox,
                motion_frame: frame,
            });
            emitted.push((id, det));
        }

        // 6. confirm tentative tracks, drop those that missed this frame
        self.tracks
            .retain(|t| t.state == TrackState::Confirmed || t.last_seen_frame == frame);
        for t in &mut self.tracks {
            if t.state == TrackState::Tentative && t.consecutive_hits >= cfg.confirm_after {
                t.state = TrackState::Confirmed;
                self.confirmed.insert(t.id);
            }
        }

        // 7. identity recovery
        let merges = if cfg.identity_recovery_enabled {
            self.identity_recovery(frame)
        } else {
            Vec::new()
        };
        let redirect: HashMap<TrackId, TrackId> =
            merges.iter().map(|m| (m.absorbed, m.surviving)).collect();
        let resolve = |mut id: TrackId| {
            while let Some(&next) = redirect.get(&id) {
                id = next;
            }
            id
        };

        // 8. emit
        let mut entries: Vec<AssignmentEntry> = emitted
            .iter()
            .map(|&(id, det)| {
                let id = resolve(id);
                let d = &detections[det];
                let provisional = self
                    .track(id)
                    .is_none_or(|t| t.state == TrackState::Tentative);
                AssignmentEntry {
                    track_id: id,
                    bbox: d.bbox,
                    confidence: d.confidence,
                    provisional,
                }
            })
            .collect();
        entries.sort_by_key(|e| e.track_id);
        self.previous = entries.iter().map(|e| (e.bbox, e.track_id)).collect();
        Ok(FrameAssignments { frame, entries })
    }

    /// Merges new confirmed tracks into older tracks that have not been seen
    /// since the new track appeared, when enough gallery pairs agree.
    pub fn identity_recovery(&mut self, frame: FrameIndex) -> Vec<MergeEvent> {
        let cfg = &self.config;
        let new_ids: Vec<TrackId> = self
            .tracks
            .iter()
            .filter(|t| {
                t.state == TrackState::Confirmed && frame - t.created_frame <= cfg.new_track_window
            })
            .map(|t| t.id)
            .collect();
        let threshold = cfg.appearance_gate_long;
        let merge_fraction = cfg.merge_fraction;
        let mut events = Vec::new();
        for new_id in new_ids {
            let Some(ni) = self.index_of(new_id) else {
                continue;
            };
            let newer = &self.tracks[ni];
            let mut best: Option<(f64, usize)> = None;
            for (ci, cand) in self.tracks.iter().enumerate() {
                if ci == ni || cand.last_seen_frame >= newer.created_frame {
                    continue;
                }
                let fraction = agreement_fraction(&newer.gallery, &cand.gallery, threshold);
                // candidates are visited by ascending id, so ties keep the oldest
                if fraction > merge_fraction && best.is_none_or(|(f, _)| fraction > f) {
                    best = Some((fraction, ci));
                }
            }
            if let Some((_, ci)) = best {
                let absorbed = self.tracks.remove(ni);
                let ci = if ci > ni { ci - 1 } else { ci };
                let survivor = &mut self.tracks[ci];
                survivor.gallery.absorb(&absorbed.gallery);
                survivor.motion = absorbed.motion;
                survivor.motion_frame = absorbed.motion_frame;
                survivor.last_box = absorbed.last_box;
                survivor.consecutive_hits = absorbed.consecutive_hits;
                survivor.last_seen_frame = frame;
                survivor.state = TrackState::Confirmed;
                let event = MergeEvent {
                    frame,
                    absorbed: absorbed.id,
                    surviving: survivor.id,
                };
                self.confirmed.insert(survivor.id);
                for p in &mut self.previous {
                    if p.1 == absorbed.id {
                        p.1 = survivor.id;
                    }
                }
                self.merges.push(event);
                events.push(event);
            }
        }
        events
    }
}

/// Fraction of gallery pairs whose cosine distance is strictly below `threshold`.
pub fn agreement_fraction(a: &Gallery, b: &Gallery, threshold: f64) -> f64 {
    let total = a.len() * b.len();
    if total == 0 {
        return 0.0;
    }
    let b_features: Vec<&FeatureVector> = b.features().collect();
    let close: usize = a
        .features()
        .map(|f| {
            b_features
                .iter()
                .filter(|g| cosine_distance(f, g) < threshold)
                .count()
        })
        .sum();
    close as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, i: usize) -> FeatureVector {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        FeatureVector::normalized(v).unwrap()
    }

    fn near(base: usize, d: f64) -> FeatureVector {
        let mut v = vec![0.0; 8];
        v[base] = 1.0 - d;
        v[(base + 1) % 8] = (1.0 - (1.0 - d) * (1.0 - d)).sqrt();
        FeatureVector::normalized(v).unwrap()
    }

    fn det(frame: u32, x: f64, f: FeatureVector) -> Detection {
        Detection::new(frame, BoundingBox::new(x, 50.0, 40.0, 80.0).unwrap(), 0.9).with_feature(f)
    }

    fn ids(a: &FrameAssignments) -> Vec<(u32, bool)> {
        a.entries
            .iter()
            .map(|e| (e.track_id.0, e.provisional))
            .collect()
    }

    #[test]
    fn three_hits_confirm_a_track() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        let out: Vec<_> = (1..=4)
            .map(|f| {
                t.step(f, vec![det(f, 100.0 + f as f64, unit(8, 0))])
                    .unwrap()
            })
            .collect();
        assert_eq!(ids(&out[0]), vec![(1, true)]);
        assert_eq!(ids(&out[1]), vec![(1, true)]);
        assert_eq!(ids(&out[2]), vec![(1, false)]);
        assert_eq!(ids(&out[3]), vec![(1, false)]);
        assert_eq!(t.snapshot()[0].state, TrackState::Confirmed);
    }

    #[test]
    fn tentative_track_dies_on_first_miss() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(1, vec![det(1, 100.0, unit(8, 0))]).unwrap();
        t.step(2, vec![]).unwrap();
        assert!(t.snapshot().is_empty());
        let out = t.step(3, vec![det(3, 100.0, unit(8, 0))]).unwrap();
        assert_eq!(ids(&out), vec![(2, true)]);
    }

    fn confirmed_tracker() -> Tracker {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        for f in 1..=3 {
            t.step(f, vec![det(f, 100.0, unit(8, 0))]).unwrap();
        }
        t
    }

    #[test]
    fn long_absence_reidentifies_on_exact_feature() {
        let mut t = confirmed_tracker();
        for f in 4..=13 {
            t.step(f, vec![]).unwrap();
        }
        assert_eq!(t.snapshot()[0].regime, Regime::LongTerm);
        let out = t.step(14, vec![det(14, 400.0, unit(8, 0))]).unwrap();
        assert_eq!(ids(&out), vec![(1, false)]);
    }

    #[test]
    fn short_gap_rejects_moderate_appearance_change() {
        let mut t = confirmed_tracker();
        t.step(4, vec![]).unwrap();
        let out = t.step(5, vec![det(5, 100.0, near(0, 3e-4))]).unwrap();
        assert_eq!(ids(&out), vec![(2, true)]);
    }

    #[test]
    fn frames_must_increase() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(3, vec![]).unwrap();
        assert!(matches!(
            t.step(3, vec![]),
            Err(Error::FrameOrder {
                previous: 3,
                got: 3
            })
        ));
    }

    #[test]
    fn missing_feature_is_rejected() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        let d = Detection::new(1, BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(), 1.0);
        assert!(matches!(
            t.step(1, vec![d]),
            Err(Error::MissingFeature { .. })
        ));
    }

    #[test]
    fn snapshot_is_ordered_and_reports_regime() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        assert!(t.snapshot().is_empty());
        for f in 1..=3 {
            t.step(
                f,
                vec![det(f, 100.0, unit(8, 0)), det(f, 400.0, unit(8, 3))],
            )
            .unwrap();
        }
        let s = t.snapshot();
        assert_eq!(s.iter().map(|s| s.id.0).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(s[0].gallery_size, 3);
        for f in 4..=8 {
            t.step(f, vec![]).unwrap();
        }
        // 8 - 3 = 5: still short-term
        assert_eq!(t.snapshot()[0].regime, Regime::ShortTerm);
        t.step(9, vec![]).unwrap();
        assert_eq!(t.snapshot()[0].regime, Regime::LongTerm);
    }

    #[test]
    fn recovery_merges_new_track_into_absent_one() {
        let mut t = confirmed_tracker();
        for f in 4..=12 {
            t.step(f, vec![]).unwrap();
        }
        // returns looking different enough to fail the long-term gate
        for f in 13..=15 {
            t.step(f, vec![det(f, 300.0, near(0, 0.01))]).unwrap();
        }
        assert_eq!(t.tracks().len(), 2);
        let out = t.step(16, vec![det(16, 300.0, unit(8, 0))]).unwrap();
        // after frame 16 the new track holds 3 far + 1 exact feature: 1*3/12 = 0.25, not > 0.25
        assert!(t.merge_events().is_empty());
        assert_eq!(ids(&out), vec![(2, false)]);
        let out = t.step(17, vec![det(17, 300.0, unit(8, 0))]).unwrap();
        assert_eq!(
            t.merge_events(),
            &[MergeEvent {
                frame: 17,
                absorbed: TrackId(2),
                surviving: TrackId(1)
            }]
        );
        assert_eq!(ids(&out), vec![(1, false)]);
        assert_eq!(t.tracks().len(), 1);
        assert_eq!(t.tracks()[0].last_seen_frame, 17);
        assert_eq!(t.tracks()[0].gallery.len(), 3 + 5);
        // fast path continues under the surviving id
        let out = t.step(18, vec![det(18, 300.0, unit(8, 0))]).unwrap();
        assert_eq!(ids(&out), vec![(1, false)]);
    }

    #[test]
    fn recovery_ignores_tracks_seen_after_creation() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        // two tracks with the same look, both continuously visible
        for f in 1..=5 {
            t.step(
                f,
                vec![det(f, 100.0, unit(8, 0)), det(f, 400.0, unit(8, 0))],
            )
            .unwrap();
        }
        assert!(t.merge_events().is_empty());
        assert_eq!(t.tracks().len(), 2);
    }

    #[test]
    fn agreement_counts_strictly_below() {
        let mut a = Gallery::new(4);
        a.push(1, unit(8, 0));
        a.push(2, unit(8, 1));
        let mut b = Gallery::new(4);
        b.push(1, unit(8, 0));
        assert_eq!(agreement_fraction(&a, &b, 5e-4), 0.5);
        assert_eq!(agreement_fraction(&a, &b, 0.0), 0.0);
    }
}
