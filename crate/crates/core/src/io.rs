//! MOT16-style CSV ingestion and emission.
//!
//! Detection and ground-truth files use the ten-column layout
//! `frame,id,left,top,width,height,conf,x,y,z`. Appearance features travel in
//! a sidecar CSV with one row per detection row, in detection-file order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::appearance::FeatureVector;
use crate::error::{Error, Result};
use crate::types::{BoundingBox, Detection, FrameIndex, LabeledBox};

/// Detections grouped by frame, remembering the row order of the source file.
#[derive(Debug, Clone, Default)]
pub struct DetectionSet {
    pub by_frame: BTreeMap<FrameIndex, Vec<Detection>>,
    /// `row_order[i]` locates row `i` of the source file as (frame, index within frame).
    pub row_order: Vec<(FrameIndex, usize)>,
}

impl DetectionSet {
    pub fn len(&self) -> usize {
        self.row_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_order.is_empty()
    }

    pub fn last_frame(&self) -> Option<FrameIndex> {
        self.by_frame.keys().next_back().copied()
    }

    pub fn frame(&self, frame: FrameIndex) -> &[Detection] {
        self.by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Appends a detection as the next file row.
    pub fn push(&mut self, detection: Detection) {
        let frame = detection.frame;
        let slot = self.by_frame.entry(frame).or_default();
        self.row_order.push((frame, slot.len()));
        slot.push(detection);
    }

    /// Detections in source-file row order.
    pub fn rows(&self) -> impl Iterator<Item = &Detection> + '_ {
        self.row_order
            .iter()
            .map(move |&(frame, idx)| &self.by_frame[&frame][idx])
    }
}

struct MotRow {
    frame: FrameIndex,
    id: i64,
    bbox: BoundingBox,
    confidence: f64,
}

fn parse_row(path: &Path, line_no: usize, line: &str) -> Result<MotRow> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < 7 {
        return Err(Error::parse(
            path,
            line_no,
            format!(
                "expected at least 7 comma-separated fields, found {}",
                fields.len()
            ),
        ));
    }
    let num = |i: usize, name: &str| -> Result<f64> {
        fields[i]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::parse(path, line_no, format!("invalid {name} `{}`", fields[i])))
    };
    let frame = fields[0]
        .parse::<i64>()
        .map_err(|_| Error::parse(path, line_no, format!("invalid frame `{}`", fields[0])))?;
    if frame < 1 || frame > i64::from(u32::MAX) {
        return Err(Error::parse(
            path,
            line_no,
            format!("frame must be >= 1, got {frame}"),
        ));
    }
    let id = num(1, "id")?;
    let (left, top, width, height) = (
        num(2, "left")?,
        num(3, "top")?,
        num(4, "width")?,
        num(5, "height")?,
    );
    let confidence = num(6, "confidence")?;
    let bbox = BoundingBox::new(left, top, width, height)
        .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
    Ok(MotRow {
        frame: frame as FrameIndex,
        id: id as i64,
        bbox,
        // Detector scores outside [0, 1] are clamped rather than rejected.
        confidence: confidence.clamp(0.0, 1.0),
    })
}

fn read_rows(path: &Path) -> Result<Vec<(usize, MotRow)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_row(path, i + 1, l).map(|r| (i + 1, r)))
        .collect()
}

/// Reads a MOT detection file. The id column and the trailing columns are ignored.
pub fn load_detections(path: impl AsRef<Path>) -> Result<DetectionSet> {
    let mut set = DetectionSet::default();
    for (_, row) in read_rows(path.as_ref())? {
        set.push(Detection::new(row.frame, row.bbox, row.confidence));
    }
    Ok(set)
}

/// Attaches sidecar features to `detections`, matching rows in file order.
pub fn load_features(path: impl AsRef<Path>, mut detections: DetectionSet) -> Result<DetectionSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    if rows.len() != detections.len() {
        return Err(Error::FeatureCount {
            expected: detections.len(),
            found: rows.len(),
        });
    }
    let mut dim = None;
    for (row_idx, (line_no, line)) in rows.into_iter().enumerate() {
        let values = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {d} values, found {}", values.len()),
                ))
            }
            _ => {}
        }
        let feature = FeatureVector::normalized(values)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let (frame, idx) = detections.row_order[row_idx];
        detections
            .by_frame
            .get_mut(&frame)
            .expect("row_order is consistent")[idx]
            .feature = Some(feature);
    }
    Ok(detections)
}

/// Reads a file of identity-labelled boxes (ground truth or tracker output).
pub fn load_labeled(path: impl AsRef<Path>) -> Result<Vec<LabeledBox>> {
    let path = path.as_ref();
    read_rows(path)?
        .into_iter()
        .map(|(line_no, row)| {
            if row.id < 0 || row.id > i64::from(u32::MAX) {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("invalid identity {}", row.id),
                ));
            }
            Ok(LabeledBox {
                frame: row.frame,
                id: row.id as u32,
                bbox: row.bbox,
                confidence: row.confidence,
            })
        })
        .collect()
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Serializes labelled boxes as MOT lines sorted by frame, then id.
pub fn format_tracks(records: &[LabeledBox]) -> String {
    let mut sorted: Vec<&LabeledBox> = records.iter().collect();
    sorted.sort_by_key(|r| (r.frame, r.id));
    let mut out = String::with_capacity(sorted.len() * 48);
    for r in sorted {
        let b = &r.bbox;
        let _ = writeln!(
            out,
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1",
            r.frame, r.id, b.left, b.top, b.width, b.height, r.confidence
        );
    }
    out
}

pub fn write_tracks(path: impl AsRef<Path>, records: &[LabeledBox]) -> Result<()> {
    write_string(path.as_ref(), &format_tracks(records))
}

/// Writes detections (id column `-1`) in the order given.
pub fn write_detections<'a>(
    path: impl AsRef<Path>,
    detections: impl IntoIterator<Item = &'a Detection>,
) -> Result<()> {
    let mut out = String::new();
    for d in detections {
        let b = &d.bbox;
        let _ = writeln!(
            out,
            "{},-1,{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1",
            d.frame, b.left, b.top, b.width, b.height, d.confidence
        );
    }
    write_string(path.as_ref(), &out)
}

/// Formats one sidecar row with twelve decimals per component.
pub fn format_feature_row(feature: &FeatureVector) -> String {
    let mut row = String::with_capacity(feature.dim() * 16);
    for (i, v) in feature.values().iter().enumerate() {
        if i > 0 {
            row.push(',');
        }
        let _ = write!(row, "{v:.12}");
    }
    row
}

pub fn write_features<'a>(
    path: impl AsRef<Path>,
    features: impl IntoIterator<Item = &'a FeatureVector>,
) -> Result<()> {
    let mut out = String::new();
    for f in features {
        out.push_str(&format_feature_row(f));
        out.push('\n');
    }
    write_string(path.as_ref(), &out)
}
