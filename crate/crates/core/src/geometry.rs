//! Planar points, timed point sequences, scene-bound normalization and the
//! two trajectory dissimilarities the tracker merges on: symmetric Hausdorff
//! distance over predicted point sets and cosine-based context dissimilarity.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    /// An operation that needs at least one point got none.
    EmptySequence,
    /// A coordinate was NaN or infinite.
    NonFinite,
    /// Sequence times must be strictly increasing.
    NonIncreasingTimes,
    /// Paired inputs disagree in length or dimension.
    LengthMismatch { left: usize, right: usize },
    /// Cosine dissimilarity is undefined for an all-zero vector.
    ZeroNorm,
    /// Bounds must span a positive area.
    DegenerateBounds,
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::EmptySequence => write!(f, "empty point sequence"),
            GeometryError::NonFinite => write!(f, "non-finite coordinate"),
            GeometryError::NonIncreasingTimes => {
                write!(f, "sequence times must be strictly increasing")
            }
            GeometryError::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            GeometryError::ZeroNorm => write!(f, "zero-norm vector in cosine dissimilarity"),
            GeometryError::DegenerateBounds => write!(f, "bounds must span a positive area"),
        }
    }
}

impl std::error::Error for GeometryError {}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

pub fn euclidean(a: Point2, b: Point2) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// A finite, time-stamped polyline: one point per frame, frames strictly
/// increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSequence {
    points: Vec<Point2>,
    frames: Vec<i64>,
}

impl PointSequence {
    pub fn new(points: Vec<Point2>, frames: Vec<i64>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptySequence);
        }
        if points.len() != frames.len() {
            return Err(GeometryError::LengthMismatch {
                left: points.len(),
                right: frames.len(),
            });
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if frames.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeometryError::NonIncreasingTimes);
        }
        Ok(PointSequence { points, frames })
    }

    /// Consecutive frames starting at `first_frame`.
    pub fn from_start(points: Vec<Point2>, first_frame: i64) -> Result<Self, GeometryError> {
        let frames = (first_frame..first_frame + points.len() as i64).collect();
        PointSequence::new(points, frames)
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn frames(&self) -> &[i64] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    pub fn last_point(&self) -> Point2 {
        *self.points.last().expect("sequence is non-empty")
    }

    pub fn last_frame(&self) -> i64 {
        *self.frames.last().expect("sequence is non-empty")
    }
}

/// Largest distance from any point of `a` to its nearest point of `b`.
pub fn directed_hausdorff(a: &[Point2], b: &[Point2]) -> Result<f64, GeometryError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::EmptySequence);
    }
    let mut worst = 0.0_f64;
    for p in a {
        let mut nearest = f64::INFINITY;
        for q in b {
            let d = euclidean(*p, *q);
            if d < nearest {
                nearest = d;
            }
        }
        if nearest > worst {
            worst = nearest;
        }
    }
    Ok(worst)
}

/// Symmetric Hausdorff distance between two point sets; timestamps are
/// ignored, only geometry matters. This is the tracker's spatial
/// dissimilarity (SD) between two predicted trajectories.
pub fn spatial_dissimilarity(a: &PointSequence, b: &PointSequence) -> Result<f64, GeometryError> {
    let ab = directed_hausdorff(a.points(), b.points())?;
    let ba = directed_hausdorff(b.points(), a.points())?;
    Ok(ab.max(ba))
}

/// One minus cosine similarity between two vector sequences, compared as the
/// time-flattened concatenation of their elements. Range [0, 2]; this is the
/// tracker's context dissimilarity (CD).
pub fn context_dissimilarity(u: &[Vec<f64>], v: &[Vec<f64>]) -> Result<f64, GeometryError> {
    if u.is_empty() || v.is_empty() {
        return Err(GeometryError::EmptySequence);
    }
    if u.len() != v.len() {
        return Err(GeometryError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        if a.len() != b.len() {
            return Err(GeometryError::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        for (x, y) in a.iter().zip(b) {
            if !x.is_finite() || !y.is_finite() {
                return Err(GeometryError::NonFinite);
            }
            dot += x * y;
            nu += x * x;
            nv += y * y;
        }
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(GeometryError::ZeroNorm);
    }
    let cos = dot / (nu.sqrt() * nv.sqrt());
    // Clamp away f64 rounding so the result stays in [0, 2] exactly.
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Axis-aligned scene bounds mapping raw coordinates to the unit square.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let b = Bounds {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if x_max <= x_min || y_max <= y_min {
            return Err(GeometryError::DegenerateBounds);
        }
        Ok(b)
    }

    /// Tight bounds of the given points, widened by `margin` (a fraction of
    /// each span) on every side. Degenerate spans get a unit fallback so the
    /// result always has positive area.
    pub fn enclosing(points: &[Point2], margin: f64) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptySequence);
        }
        let mut x_min = f64::INFINITY;
        let mut y_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for p in points {
            if !p.is_finite() {
                return Err(GeometryError::NonFinite);
            }
            x_min = x_min.min(p.x);
            y_min = y_min.min(p.y);
            x_max = x_max.max(p.x);
            y_max = y_max.max(p.y);
        }
        let dx = if x_max > x_min { x_max - x_min } else { 1.0 };
        let dy = if y_max > y_min { y_max - y_min } else { 1.0 };
        Bounds::new(
            x_min - margin * dx,
            y_min - margin * dy,
            x_max + margin * dx,
            y_max + margin * dy,
        )
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn normalize(&self, p: Point2) -> Point2 {
        Point2::new(
            (p.x - self.x_min) / self.width(),
            (p.y - self.y_min) / self.height(),
        )
    }

    pub fn denormalize(&self, p: Point2) -> Point2 {
        Point2::new(
            self.x_min + p.x * self.width(),
            self.y_min + p.y * self.height(),
        )
    }
}
