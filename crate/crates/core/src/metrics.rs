//! CLEAR-MOT evaluation: per-frame identity-persistent matching between
//! ground-truth targets and hypothesis tracks, the derived tracking metrics
//! (MOTA, MOTP, id switches, fragmentations, mostly-tracked/mostly-lost),
//! and the detection-level metrics (MODA, MODP, precision, recall) computed
//! from a fresh optimal matching per frame.
//!
//! Matching uses centroid Euclidean distance against a caller-chosen
//! threshold — the only geometry the tracker carries.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;

use crate::assign::min_cost_assignment;
use crate::geometry::{euclidean, Point2};

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    EmptyGroundTruth,
    BadThreshold(f64),
    NonFinitePoint { id: u32, frame: i64 },
    DuplicateEntry { id: u32, frame: i64 },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::EmptyGroundTruth => write!(f, "ground truth has no points"),
            EvalError::BadThreshold(t) => {
                write!(f, "match threshold must be finite and > 0, got {t}")
            }
            EvalError::NonFinitePoint { id, frame } => {
                write!(f, "non-finite point for id {id} at frame {frame}")
            }
            EvalError::DuplicateEntry { id, frame } => {
                write!(f, "duplicate point for id {id} at frame {frame}")
            }
        }
    }
}

impl std::error::Error for EvalError {}

/// Labeled trajectories in frame-indexed form: per frame, the (id, position)
/// pairs present. Each id appears at most once per frame; per-frame lists
/// are kept sorted by id so evaluation is independent of insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectorySet {
    by_frame: BTreeMap<i64, Vec<(u32, Point2)>>,
}

impl TrajectorySet {
    pub fn from_entries(
        entries: impl IntoIterator<Item = (u32, i64, Point2)>,
    ) -> Result<Self, EvalError> {
        let mut by_frame: BTreeMap<i64, Vec<(u32, Point2)>> = BTreeMap::new();
        for (id, frame, pos) in entries {
            if !pos.is_finite() {
                return Err(EvalError::NonFinitePoint { id, frame });
            }
            let slot = by_frame.entry(frame).or_default();
            if slot.iter().any(|(other, _)| *other == id) {
                return Err(EvalError::DuplicateEntry { id, frame });
            }
            slot.push((id, pos));
        }
        for slot in by_frame.values_mut() {
            slot.sort_by_key(|(id, _)| *id);
        }
        Ok(TrajectorySet { by_frame })
    }

    pub fn is_empty(&self) -> bool {
        self.by_frame.values().all(|v| v.is_empty())
    }

    pub fn total_points(&self) -> usize {
        self.by_frame.values().map(|v| v.len()).sum()
    }

    pub fn frames(&self) -> impl Iterator<Item = i64> + '_ {
        self.by_frame.keys().copied()
    }

    pub fn at_frame(&self, frame: i64) -> &[(u32, Point2)] {
        self.by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    fn ids(&self) -> BTreeSet<u32> {
        self.by_frame
            .values()
            .flat_map(|v| v.iter().map(|(id, _)| *id))
            .collect()
    }
}

/// One frame's matching outcome, kept for inspection and debugging.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLog {
    pub frame: i64,
    /// (ground-truth id, hypothesis id, distance)
    pub matches: Vec<(u32, u32, f64)>,
    pub unmatched_gt: Vec<u32>,
    pub unmatched_hyp: Vec<u32>,
}

/// The CLEAR-MOT tracking report plus detection-level scores for the same
/// hypothesis points.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// 1 − (FP + FN + IDS) / total ground-truth points; at most 1, can go
    /// negative when errors outnumber the ground truth.
    pub mota: f64,
    /// Mean distance over all matched pairs (0 when nothing matched).
    pub motp: f64,
    /// Percent of ground-truth targets matched on ≥ 80% of their lifespan.
    pub mostly_tracked_pct: f64,
    /// Percent matched on ≤ 20% of their lifespan.
    pub mostly_lost_pct: f64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub id_switches: u64,
    pub fragmentations: u64,
    /// Detection-level scores: ids ignored, fresh optimal matching per frame.
    pub moda: f64,
    pub modp: f64,
    pub precision: f64,
    pub recall: f64,
    pub gt_total: u64,
    pub matches_total: u64,
    pub frame_log: Vec<FrameLog>,
}

impl EvalReport {
    /// Plain-text metric table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "MOTA      {:>10.4}", self.mota);
        let _ = writeln!(s, "MOTP      {:>10.4}", self.motp);
        let _ = writeln!(s, "MT%       {:>10.1}", self.mostly_tracked_pct);
        let _ = writeln!(s, "ML%       {:>10.1}", self.mostly_lost_pct);
        let _ = writeln!(s, "FP        {:>10}", self.false_positives);
        let _ = writeln!(s, "FN        {:>10}", self.false_negatives);
        let _ = writeln!(s, "IDS       {:>10}", self.id_switches);
        let _ = writeln!(s, "Frag      {:>10}", self.fragmentations);
        let _ = writeln!(s, "MODA      {:>10.4}", self.moda);
        let _ = writeln!(s, "MODP      {:>10.4}", self.modp);
        let _ = writeln!(s, "Precision {:>10.4}", self.precision);
        let _ = writeln!(s, "Recall    {:>10.4}", self.recall);
        s
    }

    /// Machine-readable `key=value` lines, one metric per line.
    pub fn key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mota={:.6}", self.mota);
        let _ = writeln!(s, "motp={:.6}", self.motp);
        let _ = writeln!(s, "mt_pct={:.6}", self.mostly_tracked_pct);
        let _ = writeln!(s, "ml_pct={:.6}", self.mostly_lost_pct);
        let _ = writeln!(s, "fp={}", self.false_positives);
        let _ = writeln!(s, "fn={}", self.false_negatives);
        let _ = writeln!(s, "ids={}", self.id_switches);
        let _ = writeln!(s, "frag={}", self.fragmentations);
        let _ = writeln!(s, "moda={:.6}", self.moda);
        let _ = writeln!(s, "modp={:.6}", self.modp);
        let _ = writeln!(s, "precision={:.6}", self.precision);
        let _ = writeln!(s, "recall={:.6}", self.recall);
        s
    }
}

/// Detection-level report: per-frame optimal matching, no identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    /// 1 − (FP + FN) / total ground-truth points.
    pub moda: f64,
    /// Mean of 1 − dist/threshold over true positives, each clamped to
    /// [0, 1]; 0 when there are no true positives.
    pub modp: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

/// Unlabeled per-frame point clouds (raw detections).
pub type PointFrames = BTreeMap<i64, Vec<Point2>>;

fn check_threshold(threshold: f64) -> Result<(), EvalError> {
    if !threshold.is_finite() || threshold <= 0.0 {
        return Err(EvalError::BadThreshold(threshold));
    }
    Ok(())
}

/// Optimal one-to-one matching of one frame under the distance gate:
/// maximum cardinality, then minimum total distance. Returns index pairs.
fn match_frame(gt: &[Point2], hyp: &[Point2], threshold: f64) -> Vec<(usize, usize, f64)> {
    if gt.is_empty() || hyp.is_empty() {
        return vec![];
    }
    let cost: Vec<Vec<f64>> = gt
        .iter()
        .map(|g| {
            hyp.iter()
                .map(|h| {
                    let d = euclidean(*g, *h);
                    if d <= threshold {
                        d
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        })
        .collect();
    min_cost_assignment(&cost)
        .pairs
        .into_iter()
        .map(|(i, j)| (i, j, euclidean(gt[i], hyp[j])))
        .collect()
}

/// Evaluate hypothesis tracks against ground truth with the CLEAR-MOT
/// protocol: per frame, correspondences from earlier frames persist while
/// both ends stay within the threshold; the remainder is matched by
/// minimum-cost assignment. An id switch is counted when a ground-truth
/// target's matched hypothesis id differs from its last matched id, gaps
/// included.
pub fn evaluate_tracking(
    gt: &TrajectorySet,
    hyp: &TrajectorySet,
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    check_threshold(threshold)?;
    if gt.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }

    let frames: BTreeSet<i64> = gt.frames().chain(hyp.frames()).collect();

    // Carried correspondence gt id -> hyp id (pruned when either end is
    // rematched) and the last-ever matched hyp id per target (for IDS).
    let mut carried: HashMap<u32, u32> = HashMap::new();
    let mut last_id: HashMap<u32, u32> = HashMap::new();

    let mut false_positives = 0u64;
    let mut false_negatives = 0u64;
    let mut id_switches = 0u64;
    let mut dist_sum = 0.0;
    let mut matches_total = 0u64;
    // Per target: lifespan frame count, matched frame count, and the
    // matched-status timeline data needed for fragmentation counting.
    let mut lifespan: HashMap<u32, u64> = HashMap::new();
    let mut covered: HashMap<u32, u64> = HashMap::new();
    let mut ever_matched: HashMap<u32, bool> = HashMap::new();
    let mut in_gap: HashMap<u32, bool> = HashMap::new();
    let mut fragmentations = 0u64;
    let mut frame_log = Vec::with_capacity(frames.len());

    for &frame in &frames {
        let gt_now = gt.at_frame(frame);
        let hyp_now = hyp.at_frame(frame);
        let hyp_pos: HashMap<u32, Point2> = hyp_now.iter().copied().collect();

        let mut matched_pairs: Vec<(u32, u32, f64)> = vec![];
        let mut gt_taken: Vec<bool> = vec![false; gt_now.len()];
        let mut hyp_taken: BTreeSet<u32> = BTreeSet::new();

        // Phase 1: persist carried correspondences still valid here.
        for (gi, (gt_id, gt_p)) in gt_now.iter().enumerate() {
            if let Some(&h) = carried.get(gt_id) {
                if hyp_taken.contains(&h) {
                    continue;
                }
                if let Some(&hp) = hyp_pos.get(&h) {
                    let d = euclidean(*gt_p, hp);
                    if d <= threshold {
                        matched_pairs.push((*gt_id, h, d));
                        gt_taken[gi] = true;
                        hyp_taken.insert(h);
                    }
                }
            }
        }

        // Phase 2: minimum-cost assignment over the remainder.
        let free_gt: Vec<usize> = (0..gt_now.len()).filter(|&i| !gt_taken[i]).collect();
        let free_hyp: Vec<u32> = hyp_now
            .iter()
            .map(|(id, _)| *id)
            .filter(|id| !hyp_taken.contains(id))
            .collect();
        let gt_pts: Vec<Point2> = free_gt.iter().map(|&i| gt_now[i].1).collect();
        let hyp_pts: Vec<Point2> = free_hyp.iter().map(|id| hyp_pos[id]).collect();
        for (i, j, d) in match_frame(&gt_pts, &hyp_pts, threshold) {
            matched_pairs.push((gt_now[free_gt[i]].0, free_hyp[j], d));
        }
        matched_pairs.sort_by_key(|&(g, _, _)| g);

        // Book-keeping.
        let mut matched_gt: BTreeSet<u32> = BTreeSet::new();
        let mut matched_hyp: BTreeSet<u32> = BTreeSet::new();
        for &(g, h, d) in &matched_pairs {
            matched_gt.insert(g);
            matched_hyp.insert(h);
            dist_sum += d;
            matches_total += 1;
            if let Some(&prev) = last_id.get(&g) {
                if prev != h {
                    id_switches += 1;
                }
            }
            last_id.insert(g, h);
            // Re-point the carried maps, evicting any stale pair that
            // holds either end.
            carried.retain(|&cg, &mut ch| ch != h && cg != g);
            carried.insert(g, h);
        }

        false_positives += (hyp_now.len() - matched_hyp.len()) as u64;
        false_negatives += (gt_now.len() - matched_gt.len()) as u64;

        for (g, _) in gt_now {
            *lifespan.entry(*g).or_insert(0) += 1;
            let matched = matched_gt.contains(g);
            if matched {
                *covered.entry(*g).or_insert(0) += 1;
                if *in_gap.get(g).unwrap_or(&false) {
                    fragmentations += 1; // tracking resumed after a hole
                }
                ever_matched.insert(*g, true);
                in_gap.insert(*g, false);
            } else if *ever_matched.get(g).unwrap_or(&false) {
                in_gap.insert(*g, true);
            }
        }

        frame_log.push(FrameLog {
            frame,
            unmatched_gt: gt_now
                .iter()
                .map(|(id, _)| *id)
                .filter(|id| !matched_gt.contains(id))
                .collect(),
            unmatched_hyp: hyp_now
                .iter()
                .map(|(id, _)| *id)
                .filter(|id| !matched_hyp.contains(id))
                .collect(),
            matches: matched_pairs,
        });
    }

    let gt_total = gt.total_points() as u64;
    let targets = gt.ids();
    let n_targets = targets.len() as f64;
    let mut mostly_tracked = 0u64;
    let mut mostly_lost = 0u64;
    for id in &targets {
        let life = lifespan[id] as f64;
        let cov = *covered.get(id).unwrap_or(&0) as f64;
        let ratio = cov / life;
        if ratio >= 0.8 {
            mostly_tracked += 1;
        } else if ratio <= 0.2 {
            mostly_lost += 1;
        }
    }

    // Detection-level scores for the same points, ids stripped.
    let hyp_clouds: PointFrames = frames
        .iter()
        .map(|&f| (f, hyp.at_frame(f).iter().map(|(_, p)| *p).collect()))
        .collect();
    let det = evaluate_detection(gt, &hyp_clouds, threshold)?;

    Ok(EvalReport {
        mota: 1.0 - (false_positives + false_negatives + id_switches) as f64 / gt_total as f64,
        motp: if matches_total > 0 {
            dist_sum / matches_total as f64
        } else {
            0.0
        },
        mostly_tracked_pct: 100.0 * mostly_tracked as f64 / n_targets,
        mostly_lost_pct: 100.0 * mostly_lost as f64 / n_targets,
        false_positives,
        false_negatives,
        id_switches,
        fragmentations,
        moda: det.moda,
        modp: det.modp,
        precision: det.precision,
        recall: det.recall,
        gt_total,
        matches_total,
        frame_log,
    })
}

/// Evaluate unlabeled detections against ground truth: an independent
/// optimal matching per frame, no identity involved.
pub fn evaluate_detection(
    gt: &TrajectorySet,
    detections: &PointFrames,
    threshold: f64,
) -> Result<DetectionReport, EvalError> {
    check_threshold(threshold)?;
    if gt.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }

    let frames: BTreeSet<i64> = gt.frames().chain(detections.keys().copied()).collect();
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_count = 0u64;
    let mut modp_sum = 0.0;

    for &frame in &frames {
        let gt_pts: Vec<Point2> = gt.at_frame(frame).iter().map(|(_, p)| *p).collect();
        let mut det_pts: Vec<Point2> = detections.get(&frame).cloned().unwrap_or_default();
        // Canonical order keeps tie-breaking independent of file order.
        det_pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).expect("finite"));
        let pairs = match_frame(&gt_pts, &det_pts, threshold);
        tp += pairs.len() as u64;
        fp += (det_pts.len() - pairs.len()) as u64;
        fn_count += (gt_pts.len() - pairs.len()) as u64;
        for (_, _, d) in pairs {
            modp_sum += (1.0 - d / threshold).clamp(0.0, 1.0);
        }
    }

    let gt_total = gt.total_points() as u64;
    Ok(DetectionReport {
        moda: 1.0 - (fp + fn_count) as f64 / gt_total as f64,
        modp: if tp > 0 { modp_sum / tp as f64 } else { 0.0 },
        precision: if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        },
        recall: tp as f64 / gt_total as f64,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_count,
    })
}
