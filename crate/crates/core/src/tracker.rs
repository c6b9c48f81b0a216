//! The per-frame object-pool state machine. Each frame runs, in order:
//! associate (gate detections against short-horizon predictions and solve a
//! one-to-one assignment), spawn (new track per unmatched detection),
//! merge_pass (fuse track pairs whose long-horizon predictions agree both
//! spatially and contextually), terminate (archive stale tracks), and
//! refresh_predictions.
//!
//! Tracks carry two kinds of points: `Observed` (from detections) and
//! `Standin` (positions taken from the long-horizon prediction while the
//! track coasts unmatched). Stand-ins never feed prediction windows or
//! association; at export they are emitted only when a later observation
//! confirms the track survived the gap — an unconfirmed coast leaves no
//! trace in the output.
//!
//! All geometry inside the tracker lives in normalized [0,1]² coordinates;
//! detections are normalized on entry and exported positions denormalized
//! on the way out.

use std::collections::HashMap;
use std::fmt;

use crate::assign::{greedy_assignment, min_cost_assignment};
use crate::geometry::{
    context_dissimilarity, euclidean, spatial_dissimilarity, Bounds, GeometryError, Point2,
    PointSequence,
};
use crate::predictor::{
    build_snapshot, pad_window, predict, PredictionResult, PredictorConfig, PredictorError,
    PredictorModel,
};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum TrackError {
    BadConfig(String),
    OutOfOrderFrames { prev: i64, next: i64 },
    Predictor(PredictorError),
    Geometry(GeometryError),
}

impl fmt::Display for TrackError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrackError::BadConfig(msg) => write!(f, "bad tracker config: {msg}"),
            TrackError::OutOfOrderFrames { prev, next } => {
                write!(f, "detection frames out of order: {next} after {prev}")
            }
            TrackError::Predictor(e) => write!(f, "predictor: {e}"),
            TrackError::Geometry(e) => write!(f, "geometry: {e}"),
        }
    }
}

impl std::error::Error for TrackError {}

impl From<PredictorError> for TrackError {
    fn from(e: PredictorError) -> Self {
        TrackError::Predictor(e)
    }
}

impl From<GeometryError> for TrackError {
    fn from(e: GeometryError) -> Self {
        TrackError::Geometry(e)
    }
}

/// Which merge tests run after association. The four modes are the ablation
/// arms: plain association, each dissimilarity alone, and their conjunction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackerMode {
    /// Association only; tracks never merge.
    T1,
    /// Merge when the spatial dissimilarity is below its threshold.
    T2,
    /// Merge when the context dissimilarity is below its threshold.
    T3,
    /// Merge only when both dissimilarities are below their thresholds.
    T4,
}

impl TrackerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackerMode::T1 => "T1",
            TrackerMode::T2 => "T2",
            TrackerMode::T3 => "T3",
            TrackerMode::T4 => "T4",
        }
    }

    pub fn parse(s: &str) -> Option<TrackerMode> {
        match s {
            "T1" | "t1" => Some(TrackerMode::T1),
            "T2" | "t2" => Some(TrackerMode::T2),
            "T3" | "t3" => Some(TrackerMode::T3),
            "T4" | "t4" => Some(TrackerMode::T4),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Gating distance for association, normalized units.
    pub tau_assoc: f64,
    /// Spatial-dissimilarity merge threshold, normalized units.
    pub tau_sd: f64,
    /// Context-dissimilarity merge threshold (cosine scale, [0, 2]).
    pub tau_cd: f64,
    /// Frames without an update before a track is archived.
    pub termination_age: u32,
    pub mode: TrackerMode,
    /// Nearest-first matching instead of the optimal assignment.
    pub greedy_assignment: bool,
    pub predictor: PredictorConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            tau_assoc: 0.03,
            tau_sd: 0.03,
            tau_cd: 0.1,
            termination_age: 10,
            mode: TrackerMode::T4,
            greedy_assignment: false,
            predictor: PredictorConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        for (name, v) in [
            ("tau_assoc", self.tau_assoc),
            ("tau_sd", self.tau_sd),
            ("tau_cd", self.tau_cd),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(TrackError::BadConfig(format!("{name} must be > 0")));
            }
        }
        if self.termination_age == 0 {
            return Err(TrackError::BadConfig("termination_age must be >= 1".into()));
        }
        self.predictor.validate().map_err(TrackError::Predictor)
    }
}

/// Anything that can forecast a track's future from a fixed-length window of
/// its own normalized positions plus equally long neighbour windows. The
/// trained encoder–attention–decoder implements this; tests substitute
/// closed-form models to pin the lifecycle logic in isolation.
pub trait MotionModel {
    fn t_obs(&self) -> usize;
    fn t_pred(&self) -> usize;
    /// `window` has exactly `t_obs()` points ending at `window_end_frame`;
    /// the result's positions start at `window_end_frame + 1`.
    fn forecast(
        &self,
        window: &[Point2],
        window_end_frame: i64,
        neighbour_windows: &[Vec<Point2>],
    ) -> Result<PredictionResult, PredictorError>;
}

impl MotionModel for PredictorModel {
    fn t_obs(&self) -> usize {
        self.config.t_obs(self.horizon)
    }

    fn t_pred(&self) -> usize {
        self.config.t_pred(self.horizon)
    }

    fn forecast(
        &self,
        window: &[Point2],
        window_end_frame: i64,
        neighbour_windows: &[Vec<Point2>],
    ) -> Result<PredictionResult, PredictorError> {
        let t_obs = self.t_obs() as i64;
        let trajectory = PointSequence::from_start(window.to_vec(), window_end_frame - t_obs + 1)?;
        let snapshot = build_snapshot(&self.config, &self.params, window, neighbour_windows)?;
        predict(
            &self.config,
            &self.params,
            &trajectory,
            &snapshot,
            self.horizon,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    /// Backed by a detection.
    Observed,
    /// Taken from the long-horizon prediction while coasting.
    Standin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub frame: i64,
    pub pos: Point2,
    pub kind: PointKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Active,
    Terminated,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u32,
    pub birth_frame: i64,
    points: Vec<TrackPoint>, // sorted by frame, one per frame at most
    pub short_pred: Option<PredictionResult>,
    pub long_pred: Option<PredictionResult>,
    pub frames_since_update: u32,
    pub state: TrackState,
}

impl Track {
    fn new(id: u32, frame: i64, pos: Point2) -> Self {
        Track {
            id,
            birth_frame: frame,
            points: vec![TrackPoint {
                frame,
                pos,
                kind: PointKind::Observed,
            }],
            short_pred: None,
            long_pred: None,
            frames_since_update: 0,
            state: TrackState::Active,
        }
    }

    pub fn points(&self) -> &[TrackPoint] {
        &self.points
    }

    fn observed(&self) -> impl Iterator<Item = &TrackPoint> {
        self.points.iter().filter(|p| p.kind == PointKind::Observed)
    }

    pub fn last_observed(&self) -> &TrackPoint {
        self.observed().last().expect("every track starts observed")
    }

    /// The observed history as a time-stamped sequence (stand-ins excluded).
    pub fn observed_history(&self) -> PointSequence {
        let (points, frames): (Vec<Point2>, Vec<i64>) =
            self.observed().map(|p| (p.pos, p.frame)).unzip();
        PointSequence::new(points, frames).expect("observed history is valid by construction")
    }

    /// The last `t_obs` observed positions, left-padded by repetition when
    /// the track is younger than the window.
    fn window(&self, t_obs: usize) -> Vec<Point2> {
        let observed: Vec<Point2> = self.observed().map(|p| p.pos).collect();
        pad_window(&observed, t_obs)
    }

    /// Where association should expect this track at `frame`: the predicted
    /// step matching the frame offset since the last observation, capped at
    /// the prediction horizon.
    fn gate_center(&self, frame: i64) -> Option<Point2> {
        let pred = self.short_pred.as_ref()?;
        let offset = (frame - self.last_observed().frame).max(1) as usize;
        Some(pred.position_at_offset(offset))
    }

    fn point_index_at(&self, frame: i64) -> Option<usize> {
        self.points.iter().position(|p| p.frame == frame)
    }

    fn push_observed(&mut self, frame: i64, pos: Point2) {
        self.points.push(TrackPoint {
            frame,
            pos,
            kind: PointKind::Observed,
        });
        self.frames_since_update = 0;
    }

    fn push_standin(&mut self, frame: i64) {
        if let Some(pred) = &self.long_pred {
            let offset = (frame - self.last_observed().frame).max(1) as usize;
            self.points.push(TrackPoint {
                frame,
                pos: pred.position_at_offset(offset),
                kind: PointKind::Standin,
            });
        }
    }
}

/// Live tracks plus the archive of terminated ones; ids are never reused.
#[derive(Debug, Default)]
pub struct ObjectPool {
    pub live: Vec<Track>,
    pub archive: Vec<Track>,
    next_id: u32,
    pub current_frame: i64,
}

impl ObjectPool {
    pub fn new() -> Self {
        ObjectPool {
            live: vec![],
            archive: vec![],
            next_id: 1,
            current_frame: 0,
        }
    }

    fn fresh_id(&mut self) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn live_ids(&self) -> Vec<u32> {
        self.live.iter().map(|t| t.id).collect()
    }
}

/// What one frame did to the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepStats {
    pub frame: i64,
    pub matched: usize,
    pub spawned: usize,
    pub merged: usize,
    pub terminated: usize,
    pub live_after: usize,
}

/// Raw detections of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame: i64,
    pub detections: Vec<Point2>,
}

/// A finished track in raw (denormalized) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedTrack {
    pub id: u32,
    pub birth_frame: i64,
    pub points: Vec<(i64, Point2)>,
}

/// Everything the run produced, archive and still-live tracks together,
/// sorted by id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackSet {
    pub tracks: Vec<ExportedTrack>,
}

impl TrackSet {
    pub fn total_points(&self) -> usize {
        self.tracks.iter().map(|t| t.points.len()).sum()
    }
}

pub struct Tracker<S: MotionModel, L: MotionModel> {
    config: TrackerConfig,
    bounds: Bounds,
    short_model: S,
    long_model: L,
    pub pool: ObjectPool,
}

impl<S: MotionModel, L: MotionModel> Tracker<S, L> {
    pub fn new(
        config: TrackerConfig,
        bounds: Bounds,
        short_model: S,
        long_model: L,
    ) -> Result<Self, TrackError> {
        config.validate()?;
        let p = &config.predictor;
        if short_model.t_obs() != p.t_obs_short || short_model.t_pred() != p.t_pred_short {
            return Err(TrackError::BadConfig(format!(
                "short model windows ({}, {}) disagree with config ({}, {})",
                short_model.t_obs(),
                short_model.t_pred(),
                p.t_obs_short,
                p.t_pred_short
            )));
        }
        if long_model.t_obs() != p.t_obs_long || long_model.t_pred() != p.t_pred_long {
            return Err(TrackError::BadConfig(format!(
                "long model windows ({}, {}) disagree with config ({}, {})",
                long_model.t_obs(),
                long_model.t_pred(),
                p.t_obs_long,
                p.t_pred_long
            )));
        }
        Ok(Tracker {
            config,
            bounds,
            short_model,
            long_model,
            pool: ObjectPool::new(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Seed an empty pool from the first frame's detections (one track per
    /// detection, in detection order) and compute initial predictions.
    pub fn initialise(&mut self, frame: i64, detections: &[Point2]) -> Result<(), TrackError> {
        assert!(self.pool.live.is_empty() && self.pool.archive.is_empty());
        self.pool.current_frame = frame;
        let normalized: Vec<Point2> = detections
            .iter()
            .map(|d| self.bounds.normalize(*d))
            .collect();
        self.spawn_normalized(&normalized, frame);
        self.refresh_predictions()?;
        Ok(())
    }

    /// Gate detections (already normalized) against short-horizon
    /// predictions and solve the one-to-one assignment. Matched tracks get
    /// the detection appended; unmatched tracks coast, recording a stand-in
    /// from their long-horizon prediction. Returns the indices of unmatched
    /// detections.
    fn associate_normalized(&mut self, frame: i64, detections: &[Point2]) -> (usize, Vec<usize>) {
        let n_tracks = self.pool.live.len();
        let n_dets = detections.len();
        let cost: Vec<Vec<f64>> = self
            .pool
            .live
            .iter()
            .map(|track| {
                let center = track.gate_center(frame);
                detections
                    .iter()
                    .map(|d| match center {
                        Some(c) => {
                            let dist = euclidean(c, *d);
                            if dist <= self.config.tau_assoc {
                                dist
                            } else {
                                f64::INFINITY
                            }
                        }
                        None => f64::INFINITY,
                    })
                    .collect()
            })
            .collect();
        let assignment = if self.config.greedy_assignment {
            greedy_assignment(&cost)
        } else {
            min_cost_assignment(&cost)
        };

        let mut track_matched = vec![false; n_tracks];
        let mut det_matched = vec![false; n_dets];
        for &(ti, di) in &assignment.pairs {
            debug_assert!(cost[ti][di] <= self.config.tau_assoc);
            track_matched[ti] = true;
            det_matched[di] = true;
            self.pool.live[ti].push_observed(frame, detections[di]);
        }
        for (ti, track) in self.pool.live.iter_mut().enumerate() {
            if !track_matched[ti] {
                track.push_standin(frame);
                track.frames_since_update += 1;
            }
        }
        let unmatched: Vec<usize> = (0..n_dets).filter(|&d| !det_matched[d]).collect();
        (assignment.pairs.len(), unmatched)
    }

    fn spawn_normalized(&mut self, detections: &[Point2], frame: i64) -> usize {
        for d in detections {
            let id = self.pool.fresh_id();
            self.pool.live.push(Track::new(id, frame, *d));
        }
        detections.len()
    }

    /// Whether this pair's long-horizon agreement clears the mode's bar.
    fn merge_agrees(&self, a: &PredictionResult, b: &PredictionResult) -> bool {
        let sd_ok = || match spatial_dissimilarity(&a.positions, &b.positions) {
            Ok(sd) => sd < self.config.tau_sd,
            Err(_) => false,
        };
        let cd_ok = || match context_dissimilarity(&a.contexts, &b.contexts) {
            Ok(cd) => cd < self.config.tau_cd,
            Err(_) => false, // zero-norm contexts cannot vouch for a merge
        };
        match self.config.mode {
            TrackerMode::T1 => false,
            TrackerMode::T2 => sd_ok(),
            TrackerMode::T3 => cd_ok(),
            TrackerMode::T4 => sd_ok() && cd_ok(),
        }
    }

    /// Compare live pairs in ascending (birth_frame, id) order against a
    /// snapshot of the pool; when a pair agrees, the younger track is
    /// removed and its observed points fill the elder's missing frames
    /// (observed beats stand-in at collisions). Returns merges performed.
    pub fn merge_pass(&mut self) -> usize {
        if self.config.mode == TrackerMode::T1 {
            return 0;
        }
        let mut order: Vec<usize> = (0..self.pool.live.len()).collect();
        order.sort_by_key(|&i| (self.pool.live[i].birth_frame, self.pool.live[i].id));
        let mut removed = vec![false; self.pool.live.len()];
        let mut merges = 0;

        for oi in 0..order.len() {
            let i = order[oi];
            if removed[i] {
                continue;
            }
            for &j in order.iter().skip(oi + 1) {
                if removed[j] {
                    continue;
                }
                let (elder, younger) = (&self.pool.live[i], &self.pool.live[j]);
                let agrees = match (&elder.long_pred, &younger.long_pred) {
                    (Some(a), Some(b)) => self.merge_agrees(a, b),
                    _ => false, // a just-spawned track has no forecast yet
                };
                if agrees {
                    removed[j] = true;
                    merges += 1;
                    let young = self.pool.live[j].clone();
                    Self::fuse(&mut self.pool.live[i], &young, self.pool.current_frame);
                }
            }
        }

        let mut idx = 0;
        self.pool.live.retain(|_| {
            let keep = !removed[idx];
            idx += 1;
            keep
        });
        merges
    }

    /// Pour the younger track's observed points into the elder: fill frames
    /// the elder lacks, replace the elder's stand-ins, never overwrite the
    /// elder's own observations.
    fn fuse(elder: &mut Track, younger: &Track, current_frame: i64) {
        for p in younger.observed() {
            match elder.point_index_at(p.frame) {
                None => elder.points.push(*p),
                Some(k) if elder.points[k].kind == PointKind::Standin => {
                    elder.points[k] = *p;
                }
                Some(_) => {} // elder's own observation wins
            }
        }
        elder.points.sort_by_key(|p| p.frame);
        let last_obs = elder.last_observed().frame;
        elder.frames_since_update = (current_frame - last_obs).max(0) as u32;
    }

    /// Archive tracks that have coasted for `termination_age` frames.
    pub fn terminate(&mut self) -> usize {
        let age = self.config.termination_age;
        let mut terminated = 0;
        let mut kept = Vec::with_capacity(self.pool.live.len());
        for mut track in std::mem::take(&mut self.pool.live) {
            if track.frames_since_update >= age {
                track.state = TrackState::Terminated;
                self.pool.archive.push(track);
                terminated += 1;
            } else {
                kept.push(track);
            }
        }
        self.pool.live = kept;
        terminated
    }

    /// Other live tracks whose last observed position lies within the
    /// neighbour radius of this track's.
    fn neighbour_indices(&self, subject: usize) -> Vec<usize> {
        let radius = self.config.predictor.neighbour_radius;
        let anchor = self.pool.live[subject].last_observed().pos;
        (0..self.pool.live.len())
            .filter(|&j| j != subject)
            .filter(|&j| euclidean(anchor, self.pool.live[j].last_observed().pos) <= radius)
            .collect()
    }

    /// Recompute both forecasts for every live track from its current
    /// observed window and the current neighbourhood.
    pub fn refresh_predictions(&mut self) -> Result<(), TrackError> {
        let t_obs_short = self.short_model.t_obs();
        let t_obs_long = self.long_model.t_obs();
        let mut fresh: Vec<(PredictionResult, PredictionResult)> =
            Vec::with_capacity(self.pool.live.len());
        for i in 0..self.pool.live.len() {
            let track = &self.pool.live[i];
            let end_frame = track.last_observed().frame;
            let neighbours = self.neighbour_indices(i);
            let short_windows: Vec<Vec<Point2>> = neighbours
                .iter()
                .map(|&j| self.pool.live[j].window(t_obs_short))
                .collect();
            let long_windows: Vec<Vec<Point2>> = neighbours
                .iter()
                .map(|&j| self.pool.live[j].window(t_obs_long))
                .collect();
            let short =
                self.short_model
                    .forecast(&track.window(t_obs_short), end_frame, &short_windows)?;
            let long =
                self.long_model
                    .forecast(&track.window(t_obs_long), end_frame, &long_windows)?;
            fresh.push((short, long));
        }
        for (track, (short, long)) in self.pool.live.iter_mut().zip(fresh) {
            track.short_pred = Some(short);
            track.long_pred = Some(long);
        }
        Ok(())
    }

    /// One full frame: associate → spawn → merge → terminate → refresh.
    /// Detections arrive in raw coordinates.
    pub fn step(&mut self, frame: i64, detections: &[Point2]) -> Result<StepStats, TrackError> {
        if frame <= self.pool.current_frame {
            return Err(TrackError::OutOfOrderFrames {
                prev: self.pool.current_frame,
                next: frame,
            });
        }
        self.pool.current_frame = frame;
        let normalized: Vec<Point2> = detections
            .iter()
            .map(|d| self.bounds.normalize(*d))
            .collect();

        let live_before = self.pool.live.len();
        let (matched, unmatched) = self.associate_normalized(frame, &normalized);
        let unmatched_points: Vec<Point2> = unmatched.iter().map(|&i| normalized[i]).collect();
        let spawned = self.spawn_normalized(&unmatched_points, frame);
        let merged = self.merge_pass();
        let terminated = self.terminate();
        self.refresh_predictions()?;

        let live_after = self.pool.live.len();
        debug_assert_eq!(
            live_after as i64,
            live_before as i64 + spawned as i64 - merged as i64 - terminated as i64,
            "pool conservation violated at frame {frame}"
        );
        Ok(StepStats {
            frame,
            matched,
            spawned,
            merged,
            terminated,
            live_after,
        })
    }

    /// Export every track (archive then live, sorted by id) in raw
    /// coordinates. Observed points are always emitted; stand-ins only when
    /// a later observation confirmed the track outlived the gap.
    pub fn into_track_set(self) -> TrackSet {
        let bounds = self.bounds;
        let mut tracks: Vec<ExportedTrack> = self
            .pool
            .archive
            .into_iter()
            .chain(self.pool.live)
            .map(|t| {
                let last_observed = t.last_observed().frame;
                ExportedTrack {
                    id: t.id,
                    birth_frame: t.birth_frame,
                    points: t
                        .points
                        .iter()
                        .filter(|p| match p.kind {
                            PointKind::Observed => true,
                            PointKind::Standin => p.frame < last_observed,
                        })
                        .map(|p| (p.frame, bounds.denormalize(p.pos)))
                        .collect(),
                }
            })
            .collect();
        tracks.sort_by_key(|t| t.id);
        TrackSet { tracks }
    }
}

/// Drive a tracker over a detection stream. Frames must be strictly
/// increasing; gaps in the numbering are treated as frames with no
/// detections (tracks coast through them). Returns the exported tracks and
/// the per-frame statistics.
pub fn run<S: MotionModel, L: MotionModel>(
    frames: &[FrameDetections],
    bounds: Bounds,
    config: TrackerConfig,
    short_model: S,
    long_model: L,
) -> Result<(TrackSet, Vec<StepStats>), TrackError> {
    for w in frames.windows(2) {
        if w[1].frame <= w[0].frame {
            return Err(TrackError::OutOfOrderFrames {
                prev: w[0].frame,
                next: w[1].frame,
            });
        }
    }
    let mut tracker = Tracker::new(config, bounds, short_model, long_model)?;
    let mut stats = Vec::new();
    let Some(first) = frames.first() else {
        return Ok((TrackSet::default(), stats));
    };
    let by_frame: HashMap<i64, &FrameDetections> = frames.iter().map(|f| (f.frame, f)).collect();
    let last = frames.last().expect("non-empty").frame;

    tracker.initialise(first.frame, &first.detections)?;
    stats.push(StepStats {
        frame: first.frame,
        matched: 0,
        spawned: first.detections.len(),
        merged: 0,
        terminated: 0,
        live_after: tracker.pool.live.len(),
    });
    static EMPTY: Vec<Point2> = Vec::new();
    for frame in first.frame + 1..=last {
        let dets = by_frame
            .get(&frame)
            .map(|f| &f.detections)
            .unwrap_or(&EMPTY);
        stats.push(tracker.step(frame, dets)?);
    }
    Ok((tracker.into_track_set(), stats))
}

/// Scene bounds inferred from the detections themselves: the tight box
/// widened by 5% per side. Used when no bounds are configured.
pub fn infer_bounds(frames: &[FrameDetections]) -> Result<Bounds, GeometryError> {
    let all: Vec<Point2> = frames
        .iter()
        .flat_map(|f| f.detections.iter().copied())
        .collect();
    Bounds::enclosing(&all, 0.05)
}
