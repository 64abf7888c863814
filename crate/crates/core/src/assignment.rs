//! Detection-to-track association: IOU, the greedy IOU fast path, gated cost
//! matrices and an exact Hungarian solver.

use crate::appearance::{FeatureVector, Gallery};
use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::kalman::{MotionState, NoiseModel};
use crate::types::{BoundingBox, Detection, TrackId};

/// Marker for a forbidden detection–track pairing.
pub const INFEASIBLE: f64 = f64::INFINITY;

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let w = a.right().min(b.right()) - a.left.max(b.left);
    let h = a.bottom().min(b.bottom()) - a.top.max(b.top);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    (inter / (a.area() + b.area() - inter)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FastPathResult {
    /// (current detection index, track id of the overlapping previous detection)
    pub assignments: Vec<(usize, TrackId)>,
    /// Current detections left for appearance matching, ascending.
    pub leftovers: Vec<usize>,
}

/// Greedy one-to-one matching in descending IOU order over all pairs with
/// IOU at least `threshold`. Equal IOUs resolve to the lower current index,
/// then the lower previous index.
pub fn iou_fast_path(
    current: &[BoundingBox],
    previous: &[(BoundingBox, TrackId)],
    threshold: f64,
) -> FastPathResult {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, c) in current.iter().enumerate() {
        for (k, (p, _)) in previous.iter().enumerate() {
            let v = iou(c, p);
            if v >= threshold {
                pairs.push((v, i, k));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut cur_used = vec![false; current.len()];
    let mut prev_used = vec![false; previous.len()];
    let mut assignments = Vec::new();
    for (_, i, k) in pairs {
        if !cur_used[i] && !prev_used[k] {
            cur_used[i] = true;
            prev_used[k] = true;
            assignments.push((i, previous[k].1));
        }
    }
    assignments.sort_by_key(|a| a.0);
    let leftovers = (0..current.len()).filter(|&i| !cur_used[i]).collect();
    FastPathResult {
        assignments,
        leftovers,
    }
}

/// Dense row-major matrix of non-negative costs; rows are detections and
/// columns are tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Config(format!(
                "cost matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data
            .iter()
            .find(|v| v.is_nan() || **v < 0.0 || (v.is_infinite() && **v != INFEASIBLE))
        {
            return Err(Error::Config(format!("invalid cost entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("ragged cost matrix".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn is_feasible(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_finite()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    /// (row, column) pairs, ascending by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl MatchResult {
    pub fn total_cost(&self, costs: &CostMatrix) -> f64 {
        self.matches.iter().map(|&(r, c)| costs.get(r, c)).sum()
    }
}

/// Minimum-cost one-to-one assignment.
///
/// Among all assignments the solver first maximizes the number of feasible
/// pairs and then minimizes their total cost. Infeasible entries are replaced
/// by a finite sentinel larger than any achievable sum of feasible costs and
/// any pair landing on the sentinel is reported as unmatched.
pub fn hungarian(costs: &CostMatrix) -> MatchResult {
    let (rows, cols) = (costs.rows, costs.cols);
    if rows == 0 || cols == 0 {
        return MatchResult {
            matches: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        };
    }
    let bound: f64 = (0..rows)
        .map(|r| {
            costs
                .row(r)
                .iter()
                .copied()
                .filter(|v| v.is_finite())
                .fold(0.0, f64::max)
        })
        .sum();
    let sentinel = 2.0 * bound + 1.0;

    // The solver below wants n <= m; transpose tall matrices.
    let transpose = rows > cols;
    let (n, m) = if transpose {
        (cols, rows)
    } else {
        (rows, cols)
    };
    let entry = |i: usize, j: usize| -> f64 {
        let v = if transpose {
            costs.get(j, i)
        } else {
            costs.get(i, j)
        };
        if v.is_finite() {
            v
        } else {
            sentinel
        }
    };

    // Shortest augmenting path with potentials; arrays are 1-based with
    // column 0 as the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = entry(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut matches = Vec::with_capacity(n);
    for (j, &i) in owner.iter().enumerate().skip(1) {
        if i == 0 {
            continue;
        }
        let (r, c) = if transpose {
            (j - 1, i - 1)
        } else {
            (i - 1, j - 1)
        };
        if costs.is_feasible(r, c) {
            matches.push((r, c));
        }
    }
    matches.sort_unstable();
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &matches {
        row_used[r] = true;
        col_used[c] = true;
    }
    MatchResult {
        matches,
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Inactive for at most `long_term_after` frames: strict appearance gate
    /// plus the location gate.
    ShortTerm,
    /// Longer absence: relaxed appearance gate, no location prediction.
    LongTerm,
}

#[derive(Debug, Clone)]
pub struct LocationPrediction {
    pub noise: NoiseModel,
    pub state: MotionState,
}

/// What the cost builder needs to know about one track.
#[derive(Debug, Clone)]
pub struct TrackCandidate<'a> {
    pub gallery: &'a Gallery,
    pub regime: Regime,
    pub prediction: Option<LocationPrediction>,
}

fn cost_row(
    feature: &FeatureVector,
    center: (f64, f64),
    tracks: &[TrackCandidate<'_>],
    config: &TrackerConfig,
) -> Result<Vec<f64>> {
    let mut appearance = Vec::with_capacity(tracks.len());
    let mut passes = Vec::with_capacity(tracks.len());
    let mut location = Vec::with_capacity(tracks.len());
    for t in tracks {
        let d = t.gallery.distance(feature)?;
        let gate = match t.regime {
            Regime::ShortTerm => config.appearance_gate_short,
            Regime::LongTerm => config.appearance_gate_long,
        };
        appearance.push(d);
        passes.push(d <= gate);
        location.push(match (&t.regime, &t.prediction) {
            (Regime::ShortTerm, Some(p)) => Some(p.noise.squared_mahalanobis(&p.state, center)?),
            _ => None,
        });
    }
    let tie_break = passes.iter().filter(|&&p| p).count() >= 2;
    Ok((0..tracks.len())
        .map(|j| {
            if !passes[j] {
                return INFEASIBLE;
            }
            match location[j] {
                Some(m) if m > config.location_gate => INFEASIBLE,
                Some(m) if tie_break => appearance[j] + m / config.location_gate,
                _ => appearance[j],
            }
        })
        .collect())
}

/// Gated appearance costs with the location tie-breaker applied to rows
/// where two or more tracks pass the appearance gate.
/// Rows are computed in parallel when the `parallel` feature is enabled.
pub fn build_cost_matrix(
    detections: &[&Detection],
    tracks: &[TrackCandidate<'_>],
    config: &TrackerConfig,
) -> Result<CostMatrix> {
    build_with(detections, tracks, config, true)
}

/// Same result as [`build_cost_matrix`], always on the calling thread.
pub fn build_cost_matrix_sequential(
    detections: &[&Detection],
    tracks: &[TrackCandidate<'_>],
    config: &TrackerConfig,
) -> Result<CostMatrix> {
    build_with(detections, tracks, config, false)
}

fn build_with(
    detections: &[&Detection],
    tracks: &[TrackCandidate<'_>],
    config: &TrackerConfig,
    parallel: bool,
) -> Result<CostMatrix> {
    let mut queries = Vec::with_capacity(detections.len());
    for (index, d) in detections.iter().enumerate() {
        let feature = d.feature.as_ref().ok_or(Error::MissingFeature {
            frame: d.frame,
            index,
        })?;
        queries.push((feature, d.bbox.center()));
    }
    let row = |(f, c): &(&FeatureVector, (f64, f64))| cost_row(f, *c, tracks, config);
    let rows: Vec<_> = if parallel {
        crate::parallel::map(&queries, row)
    } else {
        queries.iter().map(row).collect()
    };
    let mut data = Vec::with_capacity(detections.len() * tracks.len());
    for r in rows {
        data.extend(r?);
    }
    CostMatrix::new(detections.len(), tracks.len(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};

    fn bx(l: f64, t: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(l, t, w, h).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20.0, 20.0, 5.0, 5.0)), 0.0);
        assert!((iou(&a, &bx(5.0, 0.0, 10.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&a, &a.translated(10.0, 0.0)), 0.0);
    }

    #[test]
    fn fast_path_matches_identical_box() {
        let prev = [(bx(0.0, 0.0, 10.0, 20.0), TrackId(4))];
        let r = iou_fast_path(
            &[bx(100.0, 0.0, 10.0, 10.0), bx(0.0, 0.0, 10.0, 20.0)],
            &prev,
            0.75,
        );
        assert_eq!(r.assignments, vec![(1, TrackId(4))]);
        assert_eq!(r.leftovers, vec![0]);
    }

    #[test]
    fn fast_path_rejects_half_overlap() {
        let prev = [(bx(0.0, 0.0, 30.0, 10.0), TrackId(1))];
        // IOU = 20/40 = 0.5
        let r = iou_fast_path(&[bx(10.0, 0.0, 30.0, 10.0)], &prev, 0.75);
        assert!(r.assignments.is_empty());
        assert_eq!(r.leftovers, vec![0]);
    }

    #[test]
    fn fast_path_is_one_to_one() {
        let prev = [(bx(0.0, 0.0, 100.0, 10.0), TrackId(1))];
        // IOU 0.9 and 0.8 by horizontal shifts
        let s9 = 100.0 * (1.0 - 0.9) / (1.0 + 0.9);
        let s8 = 100.0 * (1.0 - 0.8) / (1.0 + 0.8);
        let cur = [bx(s8, 0.0, 100.0, 10.0), bx(s9, 0.0, 100.0, 10.0)];
        assert!((iou(&cur[1], &prev[0].0) - 0.9).abs() < 1e-12);
        let r = iou_fast_path(&cur, &prev, 0.75);
        assert_eq!(r.assignments, vec![(1, TrackId(1))]);
        assert_eq!(r.leftovers, vec![0]);
    }

    fn m(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn hungarian_examples() {
        let c = m(&[&[1.0, 2.0], &[2.0, 1.0]]);
        let r = hungarian(&c);
        assert_eq!(r.matches, vec![(0, 0), (1, 1)]);
        assert_eq!(r.total_cost(&c), 2.0);

        assert_eq!(hungarian(&m(&[&[5.0]])).matches, vec![(0, 0)]);

        let r = hungarian(&m(&[&[1.0, INFEASIBLE], &[INFEASIBLE, INFEASIBLE]]));
        assert_eq!(r.matches, vec![(0, 0)]);
        assert_eq!(r.unmatched_rows, vec![1]);
        assert_eq!(r.unmatched_cols, vec![1]);
    }

    #[test]
    fn hungarian_degenerate_shapes() {
        let empty = CostMatrix::new(0, 3, vec![]).unwrap();
        assert_eq!(hungarian(&empty).unmatched_cols, vec![0, 1, 2]);
        let all_inf = m(&[&[INFEASIBLE, INFEASIBLE]]);
        let r = hungarian(&all_inf);
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_rows, vec![0]);
        let tall = m(&[&[3.0], &[1.0], &[2.0]]);
        assert_eq!(hungarian(&tall).matches, vec![(1, 0)]);
    }

    #[test]
    fn cost_matrix_rejects_invalid_entries() {
        assert!(CostMatrix::new(1, 1, vec![-1.0]).is_err());
        assert!(CostMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(CostMatrix::new(1, 2, vec![1.0]).is_err());
    }

    // --- cost construction -------------------------------------------------

    fn basis(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    /// Unit vector at cosine distance `d` from e0.
    fn at_distance(d: f64) -> FeatureVector {
        let c = 1.0 - d;
        let mut v = basis(4, 0);
        v[0] = c;
        v[1] = (1.0 - c * c).sqrt();
        FeatureVector::normalized(v).unwrap()
    }

    fn gallery_e0() -> Gallery {
        let mut g = Gallery::new(10);
        g.push(1, FeatureVector::normalized(basis(4, 0)).unwrap());
        g
    }

    /// Prediction centred at (100, 100) with unit innovation covariance.
    fn unit_prediction() -> LocationPrediction {
        let noise = NoiseModel {
            process_position_std: 1.0,
            process_velocity_std: 1.0,
            measurement_std: 0.5f64.sqrt(),
        };
        LocationPrediction {
            noise,
            state: MotionState {
                mean: Vector4::new(100.0, 100.0, 0.0, 0.0),
                covariance: Matrix4::from_diagonal(&Vector4::new(0.5, 0.5, 1.0, 1.0)),
            },
        }
    }

    fn det_at(cx: f64, cy: f64, f: FeatureVector) -> Detection {
        Detection::new(
            1,
            BoundingBox::from_center(cx, cy, 10.0, 20.0).unwrap(),
            1.0,
        )
        .with_feature(f)
    }

    #[test]
    fn single_short_term_track_uses_pure_appearance() {
        let g = gallery_e0();
        let tracks = [TrackCandidate {
            gallery: &g,
            regime: Regime::ShortTerm,
            prediction: Some(unit_prediction()),
        }];
        // squared Mahalanobis = 2^2 = 4
        let d = det_at(102.0, 100.0, at_distance(5e-5));
        let c = build_cost_matrix(&[&d], &tracks, &TrackerConfig::default()).unwrap();
        assert!((c.get(0, 0) - 5e-5).abs() < 1e-12);
    }

    #[test]
    fn regime_selects_appearance_gate() {
        let g = gallery_e0();
        let d = det_at(100.0, 100.0, at_distance(2e-4));
        let cfg = TrackerConfig::default();
        let long = [TrackCandidate {
            gallery: &g,
            regime: Regime::LongTerm,
            prediction: None,
        }];
        let c = build_cost_matrix(&[&d], &long, &cfg).unwrap();
        assert!((c.get(0, 0) - 2e-4).abs() < 1e-12);
        let short = [TrackCandidate {
            gallery: &g,
            regime: Regime::ShortTerm,
            prediction: Some(unit_prediction()),
        }];
        let c = build_cost_matrix(&[&d], &short, &cfg).unwrap();
        assert_eq!(c.get(0, 0), INFEASIBLE);
    }

    #[test]
    fn location_gate_applies_only_to_short_term() {
        let g = gallery_e0();
        // squared Mahalanobis 36 > 25
        let d = det_at(106.0, 100.0, at_distance(1e-5));
        let cfg = TrackerConfig::default();
        let short = [TrackCandidate {
            gallery: &g,
            regime: Regime::ShortTerm,
            prediction: Some(unit_prediction()),
        }];
        assert_eq!(
            build_cost_matrix(&[&d], &short, &cfg).unwrap().get(0, 0),
            INFEASIBLE
        );
        let long = [TrackCandidate {
            gallery: &g,
            regime: Regime::LongTerm,
            prediction: None,
        }];
        assert!(build_cost_matrix(&[&d], &long, &cfg)
            .unwrap()
            .get(0, 0)
            .is_finite());
    }

    #[test]
    fn tie_break_adds_scaled_location() {
        let ga = gallery_e0();
        let gb = gallery_e0();
        let mut pa = unit_prediction();
        let mut pb = unit_prediction();
        // detection at (100, 100): A predicted 1 px away, B 4 px away
        pa.state.mean[0] = 101.0;
        pb.state.mean[0] = 104.0;
        let tracks = [
            TrackCandidate {
                gallery: &ga,
                regime: Regime::ShortTerm,
                prediction: Some(pa),
            },
            TrackCandidate {
                gallery: &gb,
                regime: Regime::ShortTerm,
                prediction: Some(pb),
            },
        ];
        // both at the same appearance distance here; offsets applied below
        let d = det_at(100.0, 100.0, at_distance(5e-5));
        let c = build_cost_matrix(&[&d], &tracks, &TrackerConfig::default()).unwrap();
        assert!((c.get(0, 0) - (5e-5 + 1.0 / 25.0)).abs() < 1e-12);
        assert!((c.get(0, 1) - (5e-5 + 16.0 / 25.0)).abs() < 1e-12);
        assert_eq!(hungarian(&c).matches, vec![(0, 0)]);
    }

    #[test]
    fn missing_feature_is_an_error() {
        let g = gallery_e0();
        let tracks = [TrackCandidate {
            gallery: &g,
            regime: Regime::LongTerm,
            prediction: None,
        }];
        let d = Detection::new(3, BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), 1.0);
        assert!(matches!(
            build_cost_matrix(&[&d], &tracks, &TrackerConfig::default()),
            Err(Error::MissingFeature { frame: 3, index: 0 })
        ));
    }

    #[test]
    fn sequential_and_parallel_rows_agree() {
        let ga = gallery_e0();
        let gb = gallery_e0();
        let mut pb = unit_prediction();
        pb.state.mean[1] = 103.0;
        let tracks = [
            TrackCandidate {
                gallery: &ga,
                regime: Regime::ShortTerm,
                prediction: Some(unit_prediction()),
            },
            TrackCandidate {
                gallery: &gb,
                regime: Regime::ShortTerm,
                prediction: Some(pb),
            },
            TrackCandidate {
                gallery: &ga,
                regime: Regime::LongTerm,
                prediction: None,
            },
        ];
        let dets: Vec<Detection> = (0..12)
            .map(|i| det_at(98.0 + f64::from(i), 100.0, at_distance(f64::from(i) * 3e-5)))
            .collect();
        let refs: Vec<&Detection> = dets.iter().collect();
        let cfg = TrackerConfig::default();
        let a = build_cost_matrix(&refs, &tracks, &cfg).unwrap();
        let b = build_cost_matrix_sequential(&refs, &tracks, &cfg).unwrap();
        for i in 0..a.rows() {
            assert_eq!(a.row(i), b.row(i));
        }
    }
}
