//! Prediction-driven multi-object tracking.
//!
//! The pipeline: a recurrent encoder–decoder with soft self-attention and
//! inverse-distance neighbour attention forecasts each tracked object's
//! trajectory; an object pool gates detections against short-horizon
//! forecasts, merges duplicate tracks whose long-horizon forecasts agree in
//! space and context, and retires stale tracks. CLEAR-MOT metrics, a
//! social-force scene generator and MOTChallenge file I/O round it out.

pub mod assign;
pub mod geometry;
pub mod metrics;
pub mod motio;
pub mod nn;
pub mod predictor;
pub mod simulator;
pub mod tracker;
