//! Whole-sequence driver and output selection.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use crate::config::TrackerConfig;
use crate::error::Result;
use crate::io::DetectionSet;
use crate::tracker::{FrameAssignments, MergeEvent, Tracker};
use crate::types::{Detection, FrameIndex, LabeledBox, TrackId};

/// Which entries make it into the output file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmitMode {
    /// Entries of tracks that were confirmed at some point. In batch output
    /// this includes the frames before confirmation.
    #[default]
    Confirmed,
    /// Every entry, including tracks that never confirmed.
    Tentative,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub frames: Vec<FrameAssignments>,
    pub merges: Vec<MergeEvent>,
    pub confirmed: BTreeSet<TrackId>,
    /// Wall time of each tracker step in milliseconds.
    pub step_ms: Vec<f64>,
}

/// Steps a fresh tracker over frames `1..=last_frame`, pulling each frame's
/// detections from `source`. Only the tracker step is timed.
pub fn run_with<F>(
    config: TrackerConfig,
    last_frame: FrameIndex,
    mut source: F,
) -> Result<RunOutput>
where
    F: FnMut(FrameIndex) -> Result<Vec<Detection>>,
{
    let mut tracker = Tracker::new(config)?;
    let mut frames = Vec::with_capacity(last_frame as usize);
    let mut step_ms = Vec::with_capacity(last_frame as usize);
    for frame in 1..=last_frame {
        let detections = source(frame)?;
        let start = Instant::now();
        let assignments = tracker.step(frame, detections)?;
        step_ms.push(start.elapsed().as_secs_f64() * 1e3);
        frames.push(assignments);
    }
    Ok(RunOutput {
        frames,
        merges: tracker.merge_events().to_vec(),
        confirmed: tracker.confirmed_ids().clone(),
        step_ms,
    })
}

pub fn run(config: TrackerConfig, detections: &DetectionSet) -> Result<RunOutput> {
    let last = detections.last_frame().unwrap_or(0);
    run_with(config, last, |frame| Ok(detections.frame(frame).to_vec()))
}

impl RunOutput {
    /// Final id of every merged id, following chains of merges.
    pub fn merge_map(&self) -> HashMap<TrackId, TrackId> {
        let direct: HashMap<TrackId, TrackId> = self
            .merges
            .iter()
            .map(|m| (m.absorbed, m.surviving))
            .collect();
        direct
            .keys()
            .map(|&id| {
                let mut end = id;
                while let Some(&next) = direct.get(&end) {
                    end = next;
                }
                (id, end)
            })
            .collect()
    }

    /// Batch output: merged ids are rewritten across the whole sequence.
    pub fn batch_records(&self, mode: EmitMode) -> Vec<LabeledBox> {
        let map = self.merge_map();
        let mut out = Vec::new();
        for fa in &self.frames {
            for e in &fa.entries {
                if mode == EmitMode::Confirmed && !self.confirmed.contains(&e.track_id) {
                    continue;
                }
                let id = map.get(&e.track_id).copied().unwrap_or(e.track_id);
                out.push(LabeledBox {
                    frame: fa.frame,
                    id: id.0,
                    bbox: e.bbox,
                    confidence: e.confidence,
                });
            }
        }
        out
    }

    /// Streaming output: each frame exactly as it was emitted. In confirmed
    /// mode provisional entries are left out.
    pub fn streaming_records(&self, mode: EmitMode) -> Vec<LabeledBox> {
        self.frames
            .iter()
            .flat_map(|fa| {
                fa.entries
                    .iter()
                    .filter(move |e| mode == EmitMode::Tentative || !e.provisional)
                    .map(move |e| LabeledBox {
                        frame: fa.frame,
                        id: e.track_id.0,
                        bbox: e.bbox,
                        confidence: e.confidence,
                    })
            })
            .collect()
    }

    pub fn mean_step_ms(&self) -> f64 {
        if self.step_ms.is_empty() {
            0.0
        } else {
            self.step_ms.iter().sum::<f64>() / self.step_ms.len() as f64
        }
    }
}
