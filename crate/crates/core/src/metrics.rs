//! Detection and identity metrics for MOT-style evaluation.
//!
//! Detection precision and recall come from a per-frame one-to-one matching
//! of boxes. Identity metrics (IDF1, IDP, IDR) use a single trajectory-level
//! matching between ground-truth identities and predicted identities that
//! maximizes the number of frames in which a pair agrees.
//!
//! A ratio whose denominator is zero is reported as 0, except when both the
//! ground truth and the output are empty, where every ratio is 1.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::assignment::{hungarian, iou, CostMatrix, INFEASIBLE};
use crate::error::{Error, Result};
use crate::types::{BoundingBox, FrameIndex, LabeledBox};

pub const DEFAULT_IOU_MIN: f64 = 0.5;

/// Labeled boxes grouped by frame, each frame sorted by identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledFrames {
    frames: BTreeMap<FrameIndex, Vec<(u32, BoundingBox)>>,
}

/// Ground truth must hold at most one box per identity per frame.
pub type GroundTruth = LabeledFrames;

impl LabeledFrames {
    /// Groups records without checking for repeated identities.
    pub fn from_records(records: &[LabeledBox]) -> Self {
        let mut frames: BTreeMap<FrameIndex, Vec<(u32, BoundingBox)>> = BTreeMap::new();
        for r in records {
            frames.entry(r.frame).or_default().push((r.id, r.bbox));
        }
        for boxes in frames.values_mut() {
            // stable, so duplicates keep file order
            boxes.sort_by_key(|b| b.0);
        }
        Self { frames }
    }

    /// Groups records and rejects a repeated identity within a frame.
    pub fn strict(records: &[LabeledBox]) -> Result<Self> {
        let set = Self::from_records(records);
        for (&frame, boxes) in &set.frames {
            if let Some(w) = boxes.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::DuplicateIdentity { frame, id: w[0].0 });
            }
        }
        Ok(set)
    }

    pub fn frame(&self, frame: FrameIndex) -> &[(u32, BoundingBox)] {
        self.frames.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn frame_indices(&self) -> impl Iterator<Item = FrameIndex> + '_ {
        self.frames.keys().copied()
    }

    pub fn box_count(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn identities(&self) -> BTreeSet<u32> {
        self.frames.values().flatten().map(|b| b.0).collect()
    }
}

/// One-to-one matching of ground-truth to predicted boxes in one frame.
/// Pairs below `iou_min` are never matched; among the remaining pairings the
/// largest matching with the highest total IOU wins. Returns (gt, pred)
/// index pairs ordered by gt index.
pub fn match_frame(gt: &[BoundingBox], pred: &[BoundingBox], iou_min: f64) -> Vec<(usize, usize)> {
    if gt.is_empty() || pred.is_empty() {
        return Vec::new();
    }
    let data = gt
        .iter()
        .flat_map(|g| {
            pred.iter().map(move |p| {
                let overlap = iou(g, p);
                if overlap >= iou_min {
                    1.0 - overlap
                } else {
                    INFEASIBLE
                }
            })
        })
        .collect();
    let costs = CostMatrix::new(gt.len(), pred.len(), data).expect("costs are in range");
    hungarian(&costs).matches
}

fn ratio(num: usize, den: usize, vacuous: bool) -> f64 {
    if den == 0 {
        if vacuous {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityScores {
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

fn all_frames(gt: &LabeledFrames, pred: &LabeledFrames) -> BTreeSet<FrameIndex> {
    gt.frame_indices().chain(pred.frame_indices()).collect()
}

/// Trajectory-level identity precision, recall and F1.
pub fn identity_metrics(gt: &GroundTruth, pred: &LabeledFrames, iou_min: f64) -> IdentityScores {
    let gt_ids: Vec<u32> = gt.identities().into_iter().collect();
    let pred_ids: Vec<u32> = pred.identities().into_iter().collect();
    let gt_index: HashMap<u32, usize> = gt_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let pred_index: HashMap<u32, usize> = pred_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();

    // frames in which each (gt id, pred id) pair overlaps enough
    let mut agree: HashMap<(usize, usize), usize> = HashMap::new();
    for frame in all_frames(gt, pred) {
        let p = pred.frame(frame);
        for (gid, gbox) in gt.frame(frame) {
            let mut seen = BTreeSet::new();
            for (pid, pbox) in p {
                // a repeated predicted id counts at most once per frame
                if iou(gbox, pbox) >= iou_min && seen.insert(*pid) {
                    *agree.entry((gt_index[gid], pred_index[pid])).or_default() += 1;
                }
            }
        }
    }

    let mut idtp = 0;
    if !agree.is_empty() {
        let max = agree.values().copied().max().unwrap_or(0);
        // complete matrix, so maximal cardinality is free and the cost
        // minimum is the overlap maximum
        let data = (0..gt_ids.len())
            .flat_map(|i| (0..pred_ids.len()).map(move |j| (i, j)))
            .map(|k| (max - agree.get(&k).copied().unwrap_or(0)) as f64)
            .collect();
        let costs =
            CostMatrix::new(gt_ids.len(), pred_ids.len(), data).expect("costs are in range");
        idtp = hungarian(&costs)
            .matches
            .iter()
            .map(|&(i, j)| agree.get(&(i, j)).copied().unwrap_or(0))
            .sum();
    }
    let gt_total = gt.box_count();
    let pred_total = pred.box_count();
    let vacuous = gt_total == 0 && pred_total == 0;
    let idp = ratio(idtp, pred_total, vacuous);
    let idr = ratio(idtp, gt_total, vacuous);
    IdentityScores {
        idf1: ratio(2 * idtp, gt_total + pred_total, vacuous),
        idp,
        idr,
        idtp,
        idfp: pred_total - idtp,
        idfn: gt_total - idtp,
    }
}

/// Identity switches and fragmentations, counted over the frames in which
/// each ground-truth identity is present.
pub fn event_metrics(gt: &GroundTruth, pred: &LabeledFrames, iou_min: f64) -> (usize, usize) {
    // per gt id: sequence of matched predicted ids over present frames
    let mut coverage: BTreeMap<u32, Vec<Option<u32>>> = BTreeMap::new();
    for frame in gt.frame_indices() {
        let g = gt.frame(frame);
        let p = pred.frame(frame);
        let gboxes: Vec<BoundingBox> = g.iter().map(|b| b.1).collect();
        let pboxes: Vec<BoundingBox> = p.iter().map(|b| b.1).collect();
        let mut matched = vec![None; g.len()];
        for (gi, pi) in match_frame(&gboxes, &pboxes, iou_min) {
            matched[gi] = Some(p[pi].0);
        }
        for (gi, (gid, _)) in g.iter().enumerate() {
            coverage.entry(*gid).or_default().push(matched[gi]);
        }
    }
    let mut switches = 0;
    let mut fragments = 0;
    for seq in coverage.values() {
        let mut last_id = None;
        let mut prev_matched = false;
        for m in seq {
            if let Some(id) = m {
                if last_id.is_some_and(|l| l != *id) {
                    switches += 1;
                }
                if last_id.is_some() && !prev_matched {
                    fragments += 1;
                }
                last_id = Some(*id);
            }
            prev_matched = m.is_some();
        }
    }
    (switches, fragments)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub dp: f64,
    pub dr: f64,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub ids: usize,
    pub fm: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

pub fn validate_iou_min(iou_min: f64) -> Result<()> {
    if iou_min > 0.0 && iou_min <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "iou_min must be in (0, 1], got {iou_min}"
        )))
    }
}

/// Full report from raw records. Ground truth must not repeat an identity
/// within a frame.
pub fn evaluate(gt: &[LabeledBox], pred: &[LabeledBox], iou_min: f64) -> Result<MetricsReport> {
    validate_iou_min(iou_min)?;
    let gt = GroundTruth::strict(gt)?;
    let pred = LabeledFrames::from_records(pred);
    Ok(evaluate_frames(&gt, &pred, iou_min))
}

pub fn evaluate_frames(gt: &GroundTruth, pred: &LabeledFrames, iou_min: f64) -> MetricsReport {
    let mut tp = 0;
    for frame in all_frames(gt, pred) {
        let g: Vec<BoundingBox> = gt.frame(frame).iter().map(|b| b.1).collect();
        let p: Vec<BoundingBox> = pred.frame(frame).iter().map(|b| b.1).collect();
        tp += match_frame(&g, &p, iou_min).len();
    }
    let gt_total = gt.box_count();
    let pred_total = pred.box_count();
    let vacuous = gt_total == 0 && pred_total == 0;
    let id = identity_metrics(gt, pred, iou_min);
    let (ids, fm) = event_metrics(gt, pred, iou_min);
    MetricsReport {
        dp: ratio(tp, pred_total, vacuous),
        dr: ratio(tp, gt_total, vacuous),
        idf1: id.idf1,
        idp: id.idp,
        idr: id.idr,
        ids,
        fm,
        tp,
        fp: pred_total - tp,
        fn_: gt_total - tp,
        idtp: id.idtp,
        idfp: id.idfp,
        idfn: id.idfn,
    }
}

enum Value {
    Ratio(f64),
    Count(usize),
}

impl MetricsReport {
    fn rows(&self) -> [(&'static str, Value); 13] {
        use Value::*;
        [
            ("IDF1", Ratio(self.idf1)),
            ("IDP", Ratio(self.idp)),
            ("IDR", Ratio(self.idr)),
            ("DP", Ratio(self.dp)),
            ("DR", Ratio(self.dr)),
            ("IDS", Count(self.ids)),
            ("FM", Count(self.fm)),
            ("TP", Count(self.tp)),
            ("FP", Count(self.fp)),
            ("FN", Count(self.fn_)),
            ("IDTP", Count(self.idtp)),
            ("IDFP", Count(self.idfp)),
            ("IDFN", Count(self.idfn)),
        ]
    }

    /// Aligned plain-text table; ratios are also shown as percentages.
    pub fn table(&self) -> String {
        let mut out = String::from("metric        value\n");
        for (name, value) in self.rows() {
            let _ = match value {
                Value::Ratio(v) => writeln!(out, "{name:<6} {:>12.4}  ({:.1}%)", v, v * 100.0),
                Value::Count(c) => writeln!(out, "{name:<6} {c:>12}"),
            };
        }
        out
    }

    /// One `NAME=value` line per metric. Ratios are printed at full precision.
    pub fn key_values(&self) -> String {
        let mut out = String::new();
        for (name, value) in self.rows() {
            let _ = match value {
                Value::Ratio(v) => writeln!(out, "{name}={v:?}"),
                Value::Count(c) => writeln!(out, "{name}={c}"),
            };
        }
        out
    }
}
