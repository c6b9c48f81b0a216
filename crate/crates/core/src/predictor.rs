//! Trajectory prediction: a recurrent encoder over a track's recent
//! normalized positions, soft attention over its own encoded history,
//! inverse-distance ("hardwired") attention over neighbouring tracks'
//! encoded histories, a tanh-merged context, and a recurrent decoder with a
//! linear 2-D output head. Short- and long-horizon models share the
//! architecture and differ only in window lengths.
//!
//! Inference runs on plain buffers; training records the same graph on the
//! reverse-mode tape ([`crate::nn::tape`]) — a parity test pins the two
//! paths together.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{euclidean, GeometryError, Point2, PointSequence};
use crate::nn::tape::{ffn_score_node, lstm_step, NodeId, Tape};
use crate::nn::{cell_step, ffn_score, softmax, Adam, FfnParams, LstmParams, Tensor1, Tensor2};

#[derive(Debug)]
pub enum PredictorError {
    Geometry(GeometryError),
    WrongWindowLength { expected: usize, got: usize },
    WrongFutureLength { expected: usize, got: usize },
    DimensionMismatch { expected: usize, got: usize },
    EmptyDataset,
    BadConfig(String),
    BadCheckpoint(String),
    Io(std::io::Error),
}

impl fmt::Display for PredictorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorError::Geometry(e) => write!(f, "geometry: {e}"),
            PredictorError::WrongWindowLength { expected, got } => {
                write!(f, "history window must have length {expected}, got {got}")
            }
            PredictorError::WrongFutureLength { expected, got } => {
                write!(f, "future window must have length {expected}, got {got}")
            }
            PredictorError::DimensionMismatch { expected, got } => {
                write!(
                    f,
                    "vector dimension mismatch: expected {expected}, got {got}"
                )
            }
            PredictorError::EmptyDataset => write!(f, "training dataset is empty"),
            PredictorError::BadConfig(msg) => write!(f, "bad predictor config: {msg}"),
            PredictorError::BadCheckpoint(msg) => write!(f, "bad checkpoint: {msg}"),
            PredictorError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for PredictorError {}

impl From<GeometryError> for PredictorError {
    fn from(e: GeometryError) -> Self {
        PredictorError::Geometry(e)
    }
}

impl From<std::io::Error> for PredictorError {
    fn from(e: std::io::Error) -> Self {
        PredictorError::Io(e)
    }
}

/// Which prediction role a window serves: the short horizon gates
/// detections, the long horizon drives merging and gap fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Short,
    Long,
}

impl Horizon {
    pub fn as_str(self) -> &'static str {
        match self {
            Horizon::Short => "short",
            Horizon::Long => "long",
        }
    }

    pub fn parse(s: &str) -> Option<Horizon> {
        match s {
            "short" => Some(Horizon::Short),
            "long" => Some(Horizon::Long),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    /// Recurrent state width. 32 keeps desk-scale training fast; 300 is
    /// selectable for full-scale experiments.
    pub hidden_dim: usize,
    pub t_obs_short: usize,
    pub t_pred_short: usize,
    pub t_obs_long: usize,
    pub t_pred_long: usize,
    /// Radius (normalized units) within which another track counts as a
    /// neighbour.
    pub neighbour_radius: f64,
    /// Floor applied to neighbour distances before taking reciprocals.
    pub eps_dist: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            hidden_dim: 32,
            t_obs_short: 3,
            t_pred_short: 2,
            t_obs_long: 10,
            t_pred_long: 10,
            neighbour_radius: 0.2,
            eps_dist: 1e-3,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        if self.hidden_dim == 0 {
            return Err(PredictorError::BadConfig("hidden_dim must be >= 1".into()));
        }
        for (name, v) in [
            ("t_obs_short", self.t_obs_short),
            ("t_pred_short", self.t_pred_short),
            ("t_obs_long", self.t_obs_long),
            ("t_pred_long", self.t_pred_long),
        ] {
            if v == 0 {
                return Err(PredictorError::BadConfig(format!("{name} must be >= 1")));
            }
        }
        if !self.neighbour_radius.is_finite() || self.neighbour_radius <= 0.0 {
            return Err(PredictorError::BadConfig(
                "neighbour_radius must be finite and > 0".into(),
            ));
        }
        if !self.eps_dist.is_finite() || self.eps_dist <= 0.0 {
            return Err(PredictorError::BadConfig(
                "eps_dist must be finite and > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn t_obs(&self, horizon: Horizon) -> usize {
        match horizon {
            Horizon::Short => self.t_obs_short,
            Horizon::Long => self.t_obs_long,
        }
    }

    pub fn t_pred(&self, horizon: Horizon) -> usize {
        match horizon {
            Horizon::Short => self.t_pred_short,
            Horizon::Long => self.t_pred_long,
        }
    }
}

/// All learnable parameters of one predictor model. The decoder consumes
/// `[previous position; merged context]`, hence input width 2 + 2H.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    pub encoder: LstmParams, // input dim 2
    pub scorer: FfnParams,   // input dim 2H (decoder hidden + encoder hidden)
    pub decoder: LstmParams, // input dim 2 + 2H
    pub head_w: Tensor2,     // 2 x H
    pub head_b: Tensor1,     // 2
}

impl PredictorParams {
    pub fn zeros(hidden: usize) -> Self {
        PredictorParams {
            encoder: LstmParams::zeros(hidden, 2),
            scorer: FfnParams::zeros(hidden, 2 * hidden),
            decoder: LstmParams::zeros(hidden, 2 + 2 * hidden),
            head_w: Tensor2::zeros(2, hidden),
            head_b: Tensor1::zeros(2),
        }
    }

    /// Seeded uniform fan-in initialization of every block.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PredictorParams {
            encoder: LstmParams::init(hidden, 2, &mut rng),
            scorer: FfnParams::init(hidden, 2 * hidden, &mut rng),
            decoder: LstmParams::init(hidden, 2 + 2 * hidden, &mut rng),
            head_w: Tensor2::from_data(
                2,
                hidden,
                crate::nn::init_uniform(&mut rng, hidden, 2 * hidden),
            ),
            head_b: Tensor1::from_vec(crate::nn::init_uniform(&mut rng, hidden, 2)),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.hidden_dim()
    }

    /// Named views over every block in the fixed serialization order. The
    /// same order backs flattening, gradient extraction and checkpoints.
    pub fn blocks(&self) -> Vec<(&'static str, usize, usize, &[f64])> {
        let h = self.hidden_dim();
        vec![
            ("encoder.w_input", 4 * h, 2, self.encoder.w_input.data()),
            ("encoder.w_hidden", 4 * h, h, self.encoder.w_hidden.data()),
            ("encoder.bias", 4 * h, 1, &self.encoder.bias.data),
            ("scorer.w1", h, 2 * h, self.scorer.w1.data()),
            ("scorer.b1", h, 1, &self.scorer.b1.data),
            ("scorer.w2", 1, h, self.scorer.w2.data()),
            ("scorer.b2", 1, 1, &self.scorer.b2.data),
            (
                "decoder.w_input",
                4 * h,
                2 + 2 * h,
                self.decoder.w_input.data(),
            ),
            ("decoder.w_hidden", 4 * h, h, self.decoder.w_hidden.data()),
            ("decoder.bias", 4 * h, 1, &self.decoder.bias.data),
            ("head.w", 2, h, self.head_w.data()),
            ("head.b", 2, 1, &self.head_b.data),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.encoder.w_input.data_mut(),
            self.encoder.w_hidden.data_mut(),
            &mut self.encoder.bias.data,
            self.scorer.w1.data_mut(),
            &mut self.scorer.b1.data,
            self.scorer.w2.data_mut(),
            &mut self.scorer.b2.data,
            self.decoder.w_input.data_mut(),
            self.decoder.w_hidden.data_mut(),
            &mut self.decoder.bias.data,
            self.head_w.data_mut(),
            &mut self.head_b.data,
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks()
            .into_iter()
            .flat_map(|(_, _, _, d)| d.iter().copied())
            .collect()
    }

    pub fn unflatten_from(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for block in self.blocks_mut() {
            block.copy_from_slice(&flat[offset..offset + block.len()]);
            offset += block.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, _, _, d)| d.len()).sum()
    }
}

/// Per-step encoder hidden states of one track's window.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedHistory {
    pub hiddens: Vec<Vec<f64>>,
}

impl EncodedHistory {
    pub fn len(&self) -> usize {
        self.hiddens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hiddens.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.hiddens.last().expect("encoded history is non-empty")
    }
}

/// One neighbour as the hardwired attention sees it: encoded window plus the
/// per-step distances to the subject (already floored at `eps_dist`).
#[derive(Debug, Clone)]
pub struct NeighbourData {
    pub encoded: EncodedHistory,
    pub distances: Vec<f64>,
}

/// Every neighbour of one subject, aligned to the subject's window.
#[derive(Debug, Clone, Default)]
pub struct NeighbourhoodSnapshot {
    pub neighbours: Vec<NeighbourData>,
}

impl NeighbourhoodSnapshot {
    pub fn empty() -> Self {
        NeighbourhoodSnapshot { neighbours: vec![] }
    }
}

/// Predicted future positions plus the merged context vector of every decode
/// step (the tracker's merge test compares these sequences).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub positions: PointSequence,
    pub contexts: Vec<Vec<f64>>,
}

impl PredictionResult {
    /// Predicted position `offset` frames past the window end (1-based),
    /// clamped to the horizon: queries past the last step return the last
    /// predicted position.
    pub fn position_at_offset(&self, offset: usize) -> Point2 {
        let pts = self.positions.points();
        let idx = offset.max(1).min(pts.len());
        pts[idx - 1]
    }
}

/// Left-pad a window shorter than `t_obs` by repeating its earliest point;
/// keep the most recent `t_obs` points otherwise.
pub fn pad_window(points: &[Point2], t_obs: usize) -> Vec<Point2> {
    assert!(!points.is_empty(), "cannot pad an empty window");
    if points.len() >= t_obs {
        return points[points.len() - t_obs..].to_vec();
    }
    let mut out = vec![points[0]; t_obs - points.len()];
    out.extend_from_slice(points);
    out
}

fn encode_states(params: &PredictorParams, window: &[Point2]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let h_dim = params.hidden_dim();
    let mut h = vec![0.0; h_dim];
    let mut c = vec![0.0; h_dim];
    let mut hiddens = Vec::with_capacity(window.len());
    for p in window {
        let (h2, c2) = cell_step(&params.encoder, &[p.x, p.y], &h, &c);
        h = h2;
        c = c2;
        hiddens.push(h.clone());
    }
    (hiddens, c)
}

/// Run the encoder over a full window (zero initial state, one hidden state
/// per input step).
pub fn encode(
    config: &PredictorConfig,
    params: &PredictorParams,
    horizon: Horizon,
    trajectory: &PointSequence,
) -> Result<EncodedHistory, PredictorError> {
    let t_obs = config.t_obs(horizon);
    if trajectory.len() != t_obs {
        return Err(PredictorError::WrongWindowLength {
            expected: t_obs,
            got: trajectory.len(),
        });
    }
    let (hiddens, _) = encode_states(params, trajectory.points());
    Ok(EncodedHistory { hiddens })
}

/// Score every encoded step against the decoder hidden, softmax the scores,
/// and blend the hidden states. Returns (context, weights).
pub fn soft_attention(
    params: &PredictorParams,
    encoded: &EncodedHistory,
    decoder_hidden: &Tensor1,
) -> (Tensor1, Tensor1) {
    let scores: Vec<f64> = encoded
        .hiddens
        .iter()
        .map(|h| ffn_score(&params.scorer, &decoder_hidden.data, h))
        .collect();
    let weights = softmax(&scores);
    let dim = params.hidden_dim();
    let mut context = vec![0.0; dim];
    for (w, h) in weights.iter().zip(&encoded.hiddens) {
        for (o, x) in context.iter_mut().zip(h) {
            *o += w * x;
        }
    }
    (Tensor1::from_vec(context), Tensor1::from_vec(weights))
}

/// Inverse-distance sum over every neighbour's encoded steps; the zero
/// vector when there are no neighbours. Loop-invariant across decode steps.
pub fn hardwired_attention(snapshot: &NeighbourhoodSnapshot, hidden_dim: usize) -> Tensor1 {
    let mut context = vec![0.0; hidden_dim];
    for n in &snapshot.neighbours {
        for (h, d) in n.encoded.hiddens.iter().zip(&n.distances) {
            let w = 1.0 / d;
            for (o, x) in context.iter_mut().zip(h) {
                *o += w * x;
            }
        }
    }
    Tensor1::from_vec(context)
}

/// tanh of the concatenated soft and hardwired contexts; dim doubles.
pub fn merge_context(c_soft: &Tensor1, c_hard: &Tensor1) -> Result<Tensor1, PredictorError> {
    if c_soft.len() != c_hard.len() {
        return Err(PredictorError::DimensionMismatch {
            expected: c_soft.len(),
            got: c_hard.len(),
        });
    }
    let merged: Vec<f64> = c_soft
        .data
        .iter()
        .chain(&c_hard.data)
        .map(|x| x.tanh())
        .collect();
    Ok(Tensor1::from_vec(merged))
}

/// Build the hardwired-attention view of a subject's neighbourhood: encode
/// each neighbour window and record per-step distances to the subject,
/// floored at `eps_dist`. Windows must already be aligned to the subject's.
pub fn build_snapshot(
    config: &PredictorConfig,
    params: &PredictorParams,
    subject_window: &[Point2],
    neighbour_windows: &[Vec<Point2>],
) -> Result<NeighbourhoodSnapshot, PredictorError> {
    let mut neighbours = Vec::with_capacity(neighbour_windows.len());
    for w in neighbour_windows {
        if w.len() != subject_window.len() {
            return Err(PredictorError::WrongWindowLength {
                expected: subject_window.len(),
                got: w.len(),
            });
        }
        let (hiddens, _) = encode_states(params, w);
        let distances = subject_window
            .iter()
            .zip(w)
            .map(|(a, b)| euclidean(*a, *b).max(config.eps_dist))
            .collect();
        neighbours.push(NeighbourData {
            encoded: EncodedHistory { hiddens },
            distances,
        });
    }
    Ok(NeighbourhoodSnapshot { neighbours })
}

/// Decode a future trajectory. The decoder starts from the final encoder
/// state; each step re-attends over the encoded history with the current
/// decoder hidden, merges in the fixed hardwired context, consumes
/// `[previous position; merged context]` and emits a position through the
/// linear head. The recursion is seeded with the last observed position.
pub fn predict(
    config: &PredictorConfig,
    params: &PredictorParams,
    trajectory: &PointSequence,
    neighbours: &NeighbourhoodSnapshot,
    horizon: Horizon,
) -> Result<PredictionResult, PredictorError> {
    let t_obs = config.t_obs(horizon);
    let t_pred = config.t_pred(horizon);
    if trajectory.len() != t_obs {
        return Err(PredictorError::WrongWindowLength {
            expected: t_obs,
            got: trajectory.len(),
        });
    }
    let h_dim = params.hidden_dim();
    let (hiddens, final_c) = encode_states(params, trajectory.points());
    let encoded = EncodedHistory { hiddens };
    let c_hard = hardwired_attention(neighbours, h_dim);

    let mut dec_h = Tensor1::from_vec(encoded.last().to_vec());
    let mut dec_c = final_c;
    let mut prev = trajectory.last_point();
    let mut positions = Vec::with_capacity(t_pred);
    let mut contexts = Vec::with_capacity(t_pred);
    for _ in 0..t_pred {
        let (c_soft, _) = soft_attention(params, &encoded, &dec_h);
        let c_star = merge_context(&c_soft, &c_hard)?;
        let mut input = vec![prev.x, prev.y];
        input.extend_from_slice(&c_star.data);
        let (h2, c2) = cell_step(&params.decoder, &input, &dec_h.data, &dec_c);
        dec_h = Tensor1::from_vec(h2);
        dec_c = c2;
        let out = params.head_w.matvec(&dec_h.data);
        let q = Point2::new(
            out[0] + params.head_b.data[0],
            out[1] + params.head_b.data[1],
        );
        positions.push(q);
        contexts.push(c_star.data.clone());
        prev = q;
    }
    let positions = PointSequence::from_start(positions, trajectory.last_frame() + 1)?;
    Ok(PredictionResult {
        positions,
        contexts,
    })
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One supervised example: an observed window, zero or more aligned
/// neighbour windows, and the true future continuation.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub window: Vec<Point2>,
    pub neighbours: Vec<Vec<Point2>>,
    pub future: Vec<Point2>,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Start from these parameters (fine-tuning) instead of a fresh init.
    pub init: Option<PredictorParams>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lr: 1e-4,
            epochs: 100,
            batch_size: 32,
            seed: 1,
            init: None,
        }
    }
}

/// Parameter-block leaves of one tape, in serialization order.
struct ParamLeaves {
    ids: Vec<NodeId>,
    hidden: usize,
}

fn param_leaves(tape: &mut Tape, params: &PredictorParams) -> ParamLeaves {
    let ids = params
        .blocks()
        .into_iter()
        .map(|(_, rows, cols, data)| tape.leaf_matrix(rows, cols, data.to_vec()))
        .collect();
    ParamLeaves {
        ids,
        hidden: params.hidden_dim(),
    }
}

impl ParamLeaves {
    fn enc(&self) -> (NodeId, NodeId, NodeId) {
        (self.ids[0], self.ids[1], self.ids[2])
    }
    fn scorer(&self) -> (NodeId, NodeId, NodeId, NodeId) {
        (self.ids[3], self.ids[4], self.ids[5], self.ids[6])
    }
    fn dec(&self) -> (NodeId, NodeId, NodeId) {
        (self.ids[7], self.ids[8], self.ids[9])
    }
    fn head(&self) -> (NodeId, NodeId) {
        (self.ids[10], self.ids[11])
    }
}

fn encode_on_tape(
    tape: &mut Tape,
    leaves: &ParamLeaves,
    window: &[Point2],
) -> (Vec<NodeId>, NodeId) {
    let (w_in, w_h, b) = leaves.enc();
    let h0 = tape.leaf(vec![0.0; leaves.hidden]);
    let c0 = tape.leaf(vec![0.0; leaves.hidden]);
    let mut h = h0;
    let mut c = c0;
    let mut hiddens = Vec::with_capacity(window.len());
    for p in window {
        let x = tape.leaf(vec![p.x, p.y]);
        let (h2, c2) = lstm_step(tape, w_in, w_h, b, x, h, c, leaves.hidden);
        h = h2;
        c = c2;
        hiddens.push(h);
    }
    (hiddens, c)
}

/// The full prediction graph for one sample, recorded on `tape`. Returns the
/// predicted-position nodes; with `future` given, also the mean-squared-error
/// node for the sample.
fn sample_graph(
    tape: &mut Tape,
    leaves: &ParamLeaves,
    config: &PredictorConfig,
    sample: &TrainSample,
    t_pred: usize,
) -> (Vec<NodeId>, Option<NodeId>) {
    let hidden = leaves.hidden;
    let (enc_hiddens, enc_c) = encode_on_tape(tape, leaves, &sample.window);

    // Hardwired context: constant inverse-distance weights over neighbour
    // encodings; gradients still flow into the shared encoder.
    let c_hard = if sample.neighbours.is_empty() {
        tape.leaf(vec![0.0; hidden])
    } else {
        let mut coeffs = Vec::new();
        let mut items = Vec::new();
        for nb in &sample.neighbours {
            let (nb_hiddens, _) = encode_on_tape(tape, leaves, nb);
            for (j, h) in nb_hiddens.into_iter().enumerate() {
                let d = euclidean(sample.window[j], nb[j]).max(config.eps_dist);
                coeffs.push(1.0 / d);
                items.push(h);
            }
        }
        tape.lin_comb(coeffs, items)
    };

    let (w1, b1, w2, b2) = leaves.scorer();
    let (dw_in, dw_h, db) = leaves.dec();
    let (head_w, head_b) = leaves.head();

    let mut dec_h = *enc_hiddens.last().expect("window is non-empty");
    let mut dec_c = enc_c;
    let last = *sample.window.last().expect("window is non-empty");
    let mut prev = tape.leaf(vec![last.x, last.y]);
    let mut outputs = Vec::with_capacity(t_pred);
    let mut step_losses = Vec::with_capacity(t_pred);
    for t in 0..t_pred {
        let scores: Vec<NodeId> = enc_hiddens
            .iter()
            .map(|h| ffn_score_node(tape, w1, b1, w2, b2, dec_h, *h))
            .collect();
        let stacked = tape.stack(scores);
        let alpha = tape.softmax_node(stacked);
        let c_soft = tape.weighted_sum(alpha, enc_hiddens.clone());
        let cat = tape.concat(c_soft, c_hard);
        let c_star = tape.tanh_node(cat);
        let x = tape.concat(prev, c_star);
        let (h2, c2) = lstm_step(tape, dw_in, dw_h, db, x, dec_h, dec_c, hidden);
        dec_h = h2;
        dec_c = c2;
        let proj = tape.matvec(head_w, dec_h);
        let q = tape.add(proj, head_b);
        outputs.push(q);
        prev = q;
        if t < sample.future.len() {
            let target = [sample.future[t].x, sample.future[t].y];
            let diff = tape.sub_const(q, &target);
            step_losses.push(tape.sum_squares(diff));
        }
    }
    let loss = if step_losses.is_empty() {
        None
    } else {
        let total = tape.add_many(step_losses);
        Some(tape.scale(total, 1.0 / (2.0 * t_pred as f64)))
    };
    (outputs, loss)
}

fn validate_dataset(
    config: &PredictorConfig,
    horizon: Horizon,
    dataset: &[TrainSample],
) -> Result<(), PredictorError> {
    if dataset.is_empty() {
        return Err(PredictorError::EmptyDataset);
    }
    let t_obs = config.t_obs(horizon);
    let t_pred = config.t_pred(horizon);
    for s in dataset {
        if s.window.len() != t_obs {
            return Err(PredictorError::WrongWindowLength {
                expected: t_obs,
                got: s.window.len(),
            });
        }
        if s.future.len() != t_pred {
            return Err(PredictorError::WrongFutureLength {
                expected: t_pred,
                got: s.future.len(),
            });
        }
        for nb in &s.neighbours {
            if nb.len() != t_obs {
                return Err(PredictorError::WrongWindowLength {
                    expected: t_obs,
                    got: nb.len(),
                });
            }
        }
    }
    Ok(())
}

/// Mini-batch Adam on the mean-squared position error. Deterministic given
/// the seed: init, shuffles and accumulation order are all fixed.
pub fn train(
    config: &PredictorConfig,
    horizon: Horizon,
    dataset: &[TrainSample],
    opts: &TrainOptions,
) -> Result<(PredictorParams, Vec<f64>), PredictorError> {
    config.validate()?;
    validate_dataset(config, horizon, dataset)?;
    let t_pred = config.t_pred(horizon);

    let mut params = match &opts.init {
        Some(p) => p.clone(),
        None => PredictorParams::init(config.hidden_dim, opts.seed),
    };
    if params.hidden_dim() != config.hidden_dim {
        return Err(PredictorError::BadConfig(format!(
            "initial parameters have hidden_dim {}, config says {}",
            params.hidden_dim(),
            config.hidden_dim
        )));
    }
    let mut flat = params.flatten();
    let mut adam = Adam::new(opts.lr, flat.len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5DEECE66D);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut curve = Vec::with_capacity(opts.epochs);

    for _epoch in 0..opts.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let mut tape = Tape::new();
            let leaves = param_leaves(&mut tape, &params);
            let per_sample: Vec<NodeId> = chunk
                .iter()
                .map(|&i| {
                    let (_, loss) = sample_graph(&mut tape, &leaves, config, &dataset[i], t_pred);
                    loss.expect("training samples carry futures")
                })
                .collect();
            let total = tape.add_many(per_sample);
            let batch_loss = tape.scale(total, 1.0 / chunk.len() as f64);
            epoch_loss += tape.scalar(batch_loss) * chunk.len() as f64;
            let grads = tape.backward(batch_loss);
            let mut flat_grad = Vec::with_capacity(flat.len());
            for id in &leaves.ids {
                flat_grad.extend_from_slice(grads.of(*id));
            }
            adam.step(&mut flat, &flat_grad);
            params.unflatten_from(&flat);
        }
        curve.push(epoch_loss / dataset.len() as f64);
    }
    Ok((params, curve))
}

/// Mean training loss over `dataset` and its gradient with respect to the
/// flattened parameters — exactly the quantity `train` descends on one
/// batch. Exposed for gradient verification and diagnostics.
pub fn batch_loss_and_gradient(
    config: &PredictorConfig,
    horizon: Horizon,
    dataset: &[TrainSample],
    params: &PredictorParams,
) -> Result<(f64, Vec<f64>), PredictorError> {
    config.validate()?;
    validate_dataset(config, horizon, dataset)?;
    let t_pred = config.t_pred(horizon);
    let mut tape = Tape::new();
    let leaves = param_leaves(&mut tape, params);
    let per_sample: Vec<NodeId> = dataset
        .iter()
        .map(|s| {
            let (_, loss) = sample_graph(&mut tape, &leaves, config, s, t_pred);
            loss.expect("validated samples carry futures")
        })
        .collect();
    let total = tape.add_many(per_sample);
    let mean = tape.scale(total, 1.0 / dataset.len() as f64);
    let value = tape.scalar(mean);
    let grads = tape.backward(mean);
    let mut flat = Vec::with_capacity(params.param_count());
    for id in &leaves.ids {
        flat.extend_from_slice(grads.of(*id));
    }
    Ok((value, flat))
}

/// Mean displacement error of `predict` over a labelled dataset — the skill
/// measure used to compare against constant-position/velocity baselines.
pub fn mean_displacement_error(
    config: &PredictorConfig,
    params: &PredictorParams,
    horizon: Horizon,
    dataset: &[TrainSample],
) -> Result<f64, PredictorError> {
    validate_dataset(config, horizon, dataset)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for s in dataset {
        let trajectory = PointSequence::from_start(s.window.clone(), 1)?;
        let snapshot = build_snapshot(config, params, &s.window, &s.neighbours)?;
        let pred = predict(config, params, &trajectory, &snapshot, horizon)?;
        for (p, t) in pred.positions.points().iter().zip(&s.future) {
            total += euclidean(*p, *t);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointBlock {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Self-describing on-disk form: version, role, hyperparameters, and every
/// parameter block as a name -> shape -> values entry.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    horizon: Horizon,
    config: PredictorConfig,
    blocks: Vec<CheckpointBlock>,
}

/// A trained predictor bound to its hyperparameters and role.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub config: PredictorConfig,
    pub horizon: Horizon,
    pub params: PredictorParams,
}

impl PredictorModel {
    pub fn predict(
        &self,
        trajectory: &PointSequence,
        neighbours: &NeighbourhoodSnapshot,
    ) -> Result<PredictionResult, PredictorError> {
        predict(
            &self.config,
            &self.params,
            trajectory,
            neighbours,
            self.horizon,
        )
    }

    pub fn t_obs(&self) -> usize {
        self.config.t_obs(self.horizon)
    }

    pub fn t_pred(&self) -> usize {
        self.config.t_pred(self.horizon)
    }

    pub fn save(&self, path: &Path) -> Result<(), PredictorError> {
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            horizon: self.horizon,
            config: self.config,
            blocks: self
                .params
                .blocks()
                .into_iter()
                .map(|(name, rows, cols, data)| CheckpointBlock {
                    name: name.to_string(),
                    rows,
                    cols,
                    data: data.to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_string(&file)
            .map_err(|e| PredictorError::BadCheckpoint(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PredictorError> {
        let text = std::fs::read_to_string(path)?;
        let file: CheckpointFile = serde_json::from_str(&text)
            .map_err(|e| PredictorError::BadCheckpoint(format!("{}: {e}", path.display())))?;
        if file.version != CHECKPOINT_VERSION {
            return Err(PredictorError::BadCheckpoint(format!(
                "unsupported checkpoint version {}",
                file.version
            )));
        }
        file.config.validate()?;
        let mut params = PredictorParams::zeros(file.config.hidden_dim);
        let expected = params.blocks();
        if file.blocks.len() != expected.len() {
            return Err(PredictorError::BadCheckpoint(format!(
                "expected {} parameter blocks, found {}",
                expected.len(),
                file.blocks.len()
            )));
        }
        for (blk, (name, rows, cols, _)) in file.blocks.iter().zip(&expected) {
            if blk.name != *name || blk.rows != *rows || blk.cols != *cols {
                return Err(PredictorError::BadCheckpoint(format!(
                    "block {} has shape {}x{}, expected {} as {}x{}",
                    blk.name, blk.rows, blk.cols, name, rows, cols
                )));
            }
            if blk.data.len() != rows * cols {
                return Err(PredictorError::BadCheckpoint(format!(
                    "block {} carries {} values for a {}x{} shape",
                    blk.name,
                    blk.data.len(),
                    rows,
                    cols
                )));
            }
            if blk.data.iter().any(|v| !v.is_finite()) {
                return Err(PredictorError::BadCheckpoint(format!(
                    "block {} contains non-finite values",
                    blk.name
                )));
            }
        }
        let flat: Vec<f64> = file
            .blocks
            .iter()
            .flat_map(|b| b.data.iter().copied())
            .collect();
        params.unflatten_from(&flat);
        Ok(PredictorModel {
            config: file.config,
            horizon: file.horizon,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn straight_window(t_obs: usize, start: Point2, step: Point2) -> Vec<Point2> {
        (0..t_obs)
            .map(|i| Point2::new(start.x + i as f64 * step.x, start.y + i as f64 * step.y))
            .collect()
    }

    fn small_config() -> PredictorConfig {
        PredictorConfig {
            hidden_dim: 4,
            t_obs_short: 3,
            t_pred_short: 2,
            t_obs_long: 5,
            t_pred_long: 4,
            ..Default::default()
        }
    }

    #[test]
    fn pad_window_repeats_earliest() {
        let pts = vec![Point2::new(1.0, 2.0), Point2::new(3.0, 4.0)];
        let padded = pad_window(&pts, 4);
        assert_eq!(padded.len(), 4);
        assert_eq!(padded[0], pts[0]);
        assert_eq!(padded[1], pts[0]);
        assert_eq!(padded[2], pts[0]);
        assert_eq!(padded[3], pts[1]);
        // longer than t_obs: keep the tail
        let many = straight_window(6, Point2::new(0.0, 0.0), Point2::new(1.0, 0.0));
        let cut = pad_window(&many, 3);
        assert_eq!(cut, many[3..].to_vec());
    }

    #[test]
    fn encode_zero_params_gives_zero_hiddens() {
        let cfg = small_config();
        let params = PredictorParams::zeros(cfg.hidden_dim);
        let traj = PointSequence::from_start(
            straight_window(5, Point2::new(0.1, 0.1), Point2::new(0.01, 0.0)),
            1,
        )
        .unwrap();
        let enc = encode(&cfg, &params, Horizon::Long, &traj).unwrap();
        assert_eq!(enc.len(), 5);
        assert!(enc.hiddens.iter().all(|h| h.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn encode_rejects_wrong_length() {
        let cfg = small_config();
        let params = PredictorParams::zeros(cfg.hidden_dim);
        let traj = PointSequence::from_start(
            straight_window(4, Point2::new(0.1, 0.1), Point2::new(0.01, 0.0)),
            1,
        )
        .unwrap();
        match encode(&cfg, &params, Horizon::Long, &traj) {
            Err(PredictorError::WrongWindowLength {
                expected: 5,
                got: 4,
            }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn encode_constant_trajectory_settles() {
        // Constant input: consecutive hidden-state differences shrink
        // monotonically past the first step for this seeded model.
        let cfg = PredictorConfig {
            hidden_dim: 8,
            t_obs_long: 12,
            ..small_config()
        };
        let params = PredictorParams::init(cfg.hidden_dim, 42);
        let traj = PointSequence::from_start(vec![Point2::new(0.4, 0.6); 12], 1).unwrap();
        let enc = encode(&cfg, &params, Horizon::Long, &traj).unwrap();
        let diffs: Vec<f64> = enc
            .hiddens
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        for k in 1..diffs.len() {
            assert!(
                diffs[k] <= diffs[k - 1] + 1e-12,
                "diff grew at step {k}: {diffs:?}"
            );
        }
    }

    #[test]
    fn encode_is_reproducible() {
        let cfg = small_config();
        let params = PredictorParams::init(cfg.hidden_dim, 7);
        let traj = PointSequence::from_start(
            straight_window(5, Point2::new(0.2, 0.3), Point2::new(0.02, 0.01)),
            1,
        )
        .unwrap();
        let a = encode(&cfg, &params, Horizon::Long, &traj).unwrap();
        let b = encode(&cfg, &params, Horizon::Long, &traj).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn soft_attention_uniform_for_zero_scorer() {
        let cfg = small_config();
        let mut params = PredictorParams::init(cfg.hidden_dim, 3);
        params.scorer = FfnParams::zeros(cfg.hidden_dim, 2 * cfg.hidden_dim);
        let traj = PointSequence::from_start(
            straight_window(5, Point2::new(0.1, 0.9), Point2::new(0.03, -0.02)),
            1,
        )
        .unwrap();
        let enc = encode(&cfg, &params, Horizon::Long, &traj).unwrap();
        let query = Tensor1::from_vec(vec![0.1; cfg.hidden_dim]);
        let (context, weights) = soft_attention(&params, &enc, &query);
        for w in &weights.data {
            assert!((w - 0.2).abs() < 1e-12);
        }
        // context must equal the plain mean of hidden states
        for k in 0..cfg.hidden_dim {
            let mean: f64 = enc.hiddens.iter().map(|h| h[k]).sum::<f64>() / 5.0;
            assert!((context.data[k] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_attention_weights_sum_to_one() {
        let cfg = small_config();
        let params = PredictorParams::init(cfg.hidden_dim, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let pts: Vec<Point2> = (0..5)
                .map(|_| Point2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
                .collect();
            let traj = PointSequence::from_start(pts, 1).unwrap();
            let enc = encode(&cfg, &params, Horizon::Long, &traj).unwrap();
            let query = Tensor1::from_vec(
                (0..cfg.hidden_dim)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            );
            let (context, weights) = soft_attention(&params, &enc, &query);
            let sum: f64 = weights.data.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(weights.data.iter().all(|&w| w > 0.0));
            // independent recomputation of the weighted sum
            for k in 0..cfg.hidden_dim {
                let explicit: f64 = weights
                    .data
                    .iter()
                    .zip(&enc.hiddens)
                    .map(|(w, h)| w * h[k])
                    .sum();
                assert!((context.data[k] - explicit).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hardwired_empty_is_zero_vector() {
        let c = hardwired_attention(&NeighbourhoodSnapshot::empty(), 6);
        assert_eq!(c.data, vec![0.0; 6]);
    }

    #[test]
    fn hardwired_constant_distance_closed_form() {
        // One neighbour at constant distance 2 with constant hidden v:
        // context = (T_obs / 2) * v.
        let v = vec![0.5, -0.25, 1.0];
        let snapshot = NeighbourhoodSnapshot {
            neighbours: vec![NeighbourData {
                encoded: EncodedHistory {
                    hiddens: vec![v.clone(); 5],
                },
                distances: vec![2.0; 5],
            }],
        };
        let c = hardwired_attention(&snapshot, 3);
        for (got, want) in c.data.iter().zip(&v) {
            assert!((got - want * 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn hardwired_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let dim = 4;
            let steps = 6;
            let n = rng.gen_range(1..=3);
            let neighbours: Vec<NeighbourData> = (0..n)
                .map(|_| NeighbourData {
                    encoded: EncodedHistory {
                        hiddens: (0..steps)
                            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                            .collect(),
                    },
                    distances: (0..steps).map(|_| rng.gen_range(0.01..3.0)).collect(),
                })
                .collect();
            let snapshot = NeighbourhoodSnapshot {
                neighbours: neighbours.clone(),
            };
            let got = hardwired_attention(&snapshot, dim);
            let mut want = vec![0.0; dim];
            for nb in &neighbours {
                for j in 0..steps {
                    for (w, h) in want.iter_mut().zip(&nb.encoded.hiddens[j]) {
                        *w += h / nb.distances[j];
                    }
                }
            }
            for (g, w) in got.data.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hardwired_additive_over_disjoint_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mk = |rng: &mut ChaCha8Rng, n: usize| -> Vec<NeighbourData> {
            (0..n)
                .map(|_| NeighbourData {
                    encoded: EncodedHistory {
                        hiddens: (0..4)
                            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                            .collect(),
                    },
                    distances: (0..4).map(|_| rng.gen_range(0.1..2.0)).collect(),
                })
                .collect()
        };
        let s1 = mk(&mut rng, 2);
        let s2 = mk(&mut rng, 3);
        let mut joined = s1.clone();
        joined.extend(s2.clone());
        let c_joined = hardwired_attention(&NeighbourhoodSnapshot { neighbours: joined }, 3);
        let c1 = hardwired_attention(&NeighbourhoodSnapshot { neighbours: s1 }, 3);
        let c2 = hardwired_attention(&NeighbourhoodSnapshot { neighbours: s2 }, 3);
        for k in 0..3 {
            assert!((c_joined.data[k] - (c1.data[k] + c2.data[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn hardwired_doubling_distances_halves_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let neighbours: Vec<NeighbourData> = (0..3)
            .map(|_| NeighbourData {
                encoded: EncodedHistory {
                    hiddens: (0..5)
                        .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .collect(),
                },
                distances: (0..5).map(|_| rng.gen_range(0.5..2.0)).collect(),
            })
            .collect();
        let doubled: Vec<NeighbourData> = neighbours
            .iter()
            .map(|n| NeighbourData {
                encoded: n.encoded.clone(),
                distances: n.distances.iter().map(|d| d * 2.0).collect(),
            })
            .collect();
        let c1 = hardwired_attention(&NeighbourhoodSnapshot { neighbours }, 4);
        let c2 = hardwired_attention(
            &NeighbourhoodSnapshot {
                neighbours: doubled,
            },
            4,
        );
        for k in 0..4 {
            // bitwise: halving commutes with every rounding step involved
            assert_eq!(c2.data[k], c1.data[k] / 2.0);
        }
    }

    #[test]
    fn merge_context_zero_and_closed_form() {
        let zero = merge_context(&Tensor1::zeros(3), &Tensor1::zeros(3)).unwrap();
        assert_eq!(zero.data, vec![0.0; 6]);

        let half_ln3 = 3.0_f64.ln() / 2.0;
        let merged =
            merge_context(&Tensor1::from_vec(vec![half_ln3; 3]), &Tensor1::zeros(3)).unwrap();
        for v in &merged.data[..3] {
            assert!((v - 0.5).abs() < 1e-12);
        }
        assert_eq!(&merged.data[3..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn merge_context_bounded_and_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..100 {
            let a = Tensor1::from_vec((0..5).map(|_| rng.gen_range(-20.0..20.0)).collect());
            let b = Tensor1::from_vec((0..5).map(|_| rng.gen_range(-20.0..20.0)).collect());
            let m = merge_context(&a, &b).unwrap();
            assert_eq!(m.len(), 10);
            // tanh saturates to exactly 1.0 in f64 for |x| > ~19
            assert!(m.data.iter().all(|v| v.abs() <= 1.0));
        }
        assert!(merge_context(&Tensor1::zeros(3), &Tensor1::zeros(4)).is_err());
    }

    #[test]
    fn predict_zero_params_outputs_head_bias() {
        let cfg = small_config();
        let mut params = PredictorParams::zeros(cfg.hidden_dim);
        params.head_b = Tensor1::from_vec(vec![0.25, -0.5]);
        let traj = PointSequence::from_start(
            straight_window(5, Point2::new(0.3, 0.3), Point2::new(0.01, 0.01)),
            10,
        )
        .unwrap();
        let out = predict(
            &cfg,
            &params,
            &traj,
            &NeighbourhoodSnapshot::empty(),
            Horizon::Long,
        )
        .unwrap();
        assert_eq!(out.positions.len(), 4);
        assert_eq!(out.positions.frames(), &[15, 16, 17, 18]);
        for p in out.positions.points() {
            assert_eq!((p.x, p.y), (0.25, -0.5));
        }
        assert_eq!(out.contexts.len(), 4);
        assert!(out.contexts.iter().all(|c| c.len() == 2 * cfg.hidden_dim));
    }

    #[test]
    fn predict_deterministic_and_lengths() {
        let cfg = small_config();
        let params = PredictorParams::init(cfg.hidden_dim, 55);
        let window = straight_window(5, Point2::new(0.2, 0.2), Point2::new(0.015, 0.01));
        let traj = PointSequence::from_start(window.clone(), 1).unwrap();
        let nb = vec![straight_window(
            5,
            Point2::new(0.25, 0.2),
            Point2::new(0.015, 0.01),
        )];
        let snap = build_snapshot(&cfg, &params, &window, &nb).unwrap();
        let a = predict(&cfg, &params, &traj, &snap, Horizon::Long).unwrap();
        let b = predict(&cfg, &params, &traj, &snap, Horizon::Long).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.positions.len(), cfg.t_pred_long);
        assert_eq!(a.contexts.len(), cfg.t_pred_long);
    }

    #[test]
    fn snapshot_distances_clamped() {
        let cfg = small_config();
        let params = PredictorParams::init(cfg.hidden_dim, 1);
        let window = vec![Point2::new(0.5, 0.5); 5];
        let snap = build_snapshot(&cfg, &params, &window, std::slice::from_ref(&window)).unwrap();
        assert!(snap.neighbours[0]
            .distances
            .iter()
            .all(|&d| d == cfg.eps_dist));
    }

    #[test]
    fn tape_forward_matches_plain_predict() {
        let cfg = small_config();
        let params = PredictorParams::init(cfg.hidden_dim, 99);
        let window = straight_window(5, Point2::new(0.1, 0.5), Point2::new(0.02, -0.01));
        let neighbours = vec![
            straight_window(5, Point2::new(0.15, 0.5), Point2::new(0.02, -0.01)),
            straight_window(5, Point2::new(0.1, 0.42), Point2::new(0.01, 0.02)),
        ];
        let traj = PointSequence::from_start(window.clone(), 1).unwrap();
        let snap = build_snapshot(&cfg, &params, &window, &neighbours).unwrap();
        let plain = predict(&cfg, &params, &traj, &snap, Horizon::Long).unwrap();

        let sample = TrainSample {
            window,
            neighbours,
            future: vec![],
        };
        let mut tape = Tape::new();
        let leaves = param_leaves(&mut tape, &params);
        let (outputs, loss) = sample_graph(&mut tape, &leaves, &cfg, &sample, cfg.t_pred_long);
        assert!(loss.is_none());
        assert_eq!(outputs.len(), plain.positions.len());
        for (node, p) in outputs.iter().zip(plain.positions.points()) {
            let v = tape.value(*node);
            assert!((v[0] - p.x).abs() < 1e-12, "{} vs {}", v[0], p.x);
            assert!((v[1] - p.y).abs() < 1e-12);
        }
    }

    #[test]
    fn full_graph_gradients_match_finite_differences() {
        // Small-dim gradient check through encoder, both attentions, merge
        // and decoder; the acceptance suite runs the 100-draw version.
        let cfg = PredictorConfig {
            hidden_dim: 3,
            t_obs_short: 3,
            t_pred_short: 2,
            t_obs_long: 4,
            t_pred_long: 3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for draw in 0..3 {
            let params = PredictorParams::init(cfg.hidden_dim, 1000 + draw);
            let sample = TrainSample {
                window: (0..4)
                    .map(|_| Point2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
                    .collect(),
                neighbours: vec![(0..4)
                    .map(|_| Point2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
                    .collect()],
                future: (0..3)
                    .map(|_| Point2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
                    .collect(),
            };
            let loss_of = |flat: &[f64]| -> f64 {
                let mut p = PredictorParams::zeros(cfg.hidden_dim);
                p.unflatten_from(flat);
                let mut tape = Tape::new();
                let leaves = param_leaves(&mut tape, &p);
                let (_, loss) = sample_graph(&mut tape, &leaves, &cfg, &sample, cfg.t_pred_long);
                tape.scalar(loss.unwrap())
            };
            let flat = params.flatten();
            let mut tape = Tape::new();
            let leaves = param_leaves(&mut tape, &params);
            let (_, loss) = sample_graph(&mut tape, &leaves, &cfg, &sample, cfg.t_pred_long);
            let grads = tape.backward(loss.unwrap());
            let mut analytic = Vec::with_capacity(flat.len());
            for id in &leaves.ids {
                analytic.extend_from_slice(grads.of(*id));
            }
            let h = 1e-5;
            for k in 0..flat.len() {
                let mut plus = flat.clone();
                plus[k] += h;
                let mut minus = flat.clone();
                minus[k] -= h;
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let rel =
                    (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-5);
                assert!(
                    rel < 1e-4,
                    "draw {draw} param {k}: analytic {} numeric {numeric}",
                    analytic[k]
                );
            }
        }
    }

    #[test]
    fn batch_loss_and_gradient_is_mean_of_per_sample() {
        let cfg = PredictorConfig {
            hidden_dim: 3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut draw = |n: usize| -> Vec<Point2> {
            (0..n)
                .map(|_| Point2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
                .collect()
        };
        let samples = [
            TrainSample {
                window: draw(3),
                neighbours: vec![draw(3)],
                future: draw(2),
            },
            TrainSample {
                window: draw(3),
                neighbours: vec![],
                future: draw(2),
            },
        ];
        let params = PredictorParams::init(3, 11);
        let (batch_loss, batch_grad) =
            batch_loss_and_gradient(&cfg, Horizon::Short, &samples, &params).unwrap();
        let singles: Vec<(f64, Vec<f64>)> = samples
            .iter()
            .map(|s| {
                batch_loss_and_gradient(&cfg, Horizon::Short, std::slice::from_ref(s), &params)
                    .unwrap()
            })
            .collect();
        let mean_loss = (singles[0].0 + singles[1].0) / 2.0;
        assert!((batch_loss - mean_loss).abs() < 1e-12);
        assert_eq!(batch_grad.len(), params.param_count());
        for (k, g) in batch_grad.iter().enumerate() {
            let mean = (singles[0].1[k] + singles[1].1[k]) / 2.0;
            assert!((g - mean).abs() < 1e-12, "param {k}: {g} vs {mean}");
        }

        let empty: [TrainSample; 0] = [];
        assert!(batch_loss_and_gradient(&cfg, Horizon::Short, &empty, &params).is_err());
    }

    #[test]
    fn train_rejects_empty_and_bad_shapes() {
        let cfg = small_config();
        let opts = TrainOptions {
            epochs: 1,
            ..Default::default()
        };
        match train(&cfg, Horizon::Short, &[], &opts) {
            Err(PredictorError::EmptyDataset) => {}
            other => panic!("unexpected: {other:?}"),
        }
        let bad = TrainSample {
            window: straight_window(2, Point2::new(0.0, 0.0), Point2::new(0.1, 0.0)),
            neighbours: vec![],
            future: straight_window(2, Point2::new(0.3, 0.0), Point2::new(0.1, 0.0)),
        };
        assert!(train(&cfg, Horizon::Short, &[bad], &opts).is_err());
    }

    #[test]
    fn train_zero_lr_keeps_params_and_flat_curve() {
        let cfg = small_config();
        let sample = TrainSample {
            window: straight_window(3, Point2::new(0.1, 0.1), Point2::new(0.05, 0.0)),
            neighbours: vec![],
            future: straight_window(2, Point2::new(0.25, 0.1), Point2::new(0.05, 0.0)),
        };
        let opts = TrainOptions {
            lr: 0.0,
            epochs: 4,
            seed: 5,
            ..Default::default()
        };
        let (params, curve) = train(&cfg, Horizon::Short, &[sample], &opts).unwrap();
        assert_eq!(params, PredictorParams::init(cfg.hidden_dim, 5));
        assert!(curve.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn train_is_bitwise_deterministic() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let dataset: Vec<TrainSample> = (0..8)
            .map(|_| {
                let start = Point2::new(rng.gen_range(0.1..0.5), rng.gen_range(0.1..0.5));
                let step = Point2::new(rng.gen_range(-0.02..0.05), rng.gen_range(-0.02..0.05));
                let full = straight_window(5, start, step);
                TrainSample {
                    window: full[..3].to_vec(),
                    neighbours: vec![],
                    future: full[3..].to_vec(),
                }
            })
            .collect();
        let opts = TrainOptions {
            lr: 1e-3,
            epochs: 3,
            batch_size: 4,
            seed: 9,
            init: None,
        };
        let (p1, c1) = train(&cfg, Horizon::Short, &dataset, &opts).unwrap();
        let (p2, c2) = train(&cfg, Horizon::Short, &dataset, &opts).unwrap();
        assert_eq!(p1.flatten(), p2.flatten());
        assert_eq!(c1, c2);
    }

    #[test]
    fn train_memorizes_single_sample() {
        let cfg = PredictorConfig {
            hidden_dim: 8,
            ..small_config()
        };
        let sample = TrainSample {
            window: straight_window(3, Point2::new(0.2, 0.4), Point2::new(0.03, 0.01)),
            neighbours: vec![],
            future: straight_window(2, Point2::new(0.29, 0.43), Point2::new(0.03, 0.01)),
        };
        let opts = TrainOptions {
            lr: 5e-3,
            epochs: 300,
            batch_size: 1,
            seed: 2,
            init: None,
        };
        let (_, curve) = train(&cfg, Horizon::Short, &[sample], &opts).unwrap();
        let last = *curve.last().unwrap();
        assert!(last < 1e-3, "final loss {last}");
        assert!(last < curve[0]);
    }

    #[test]
    fn train_constant_trajectories_converge() {
        // A dataset of identical constant trajectories drives the loss
        // below 1e-3 well inside 200 epochs at hidden_dim 8.
        let cfg = PredictorConfig {
            hidden_dim: 8,
            ..small_config()
        };
        let sample = TrainSample {
            window: vec![Point2::new(0.5, 0.5); 3],
            neighbours: vec![],
            future: vec![Point2::new(0.5, 0.5); 2],
        };
        let dataset = vec![sample; 16];
        let opts = TrainOptions {
            lr: 5e-3,
            epochs: 200,
            batch_size: 16,
            seed: 3,
            init: None,
        };
        let (_, curve) = train(&cfg, Horizon::Short, &dataset, &opts).unwrap();
        assert!(
            *curve.last().unwrap() < 1e-3,
            "curve tail {:?}",
            &curve[195..]
        );
    }

    #[test]
    fn fine_tune_entry_continues_from_given_params() {
        let cfg = small_config();
        let sample = TrainSample {
            window: straight_window(3, Point2::new(0.1, 0.2), Point2::new(0.04, 0.0)),
            neighbours: vec![],
            future: straight_window(2, Point2::new(0.22, 0.2), Point2::new(0.04, 0.0)),
        };
        let opts = TrainOptions {
            lr: 1e-3,
            epochs: 2,
            batch_size: 1,
            seed: 11,
            init: None,
        };
        let (first, _) = train(&cfg, Horizon::Short, std::slice::from_ref(&sample), &opts).unwrap();
        let tuned_opts = TrainOptions {
            lr: 0.0,
            epochs: 1,
            init: Some(first.clone()),
            ..opts
        };
        let (second, _) = train(&cfg, Horizon::Short, &[sample], &tuned_opts).unwrap();
        assert_eq!(first.flatten(), second.flatten());
    }

    #[test]
    fn trained_model_beats_constant_position_on_straight_lines() {
        let cfg = PredictorConfig {
            hidden_dim: 8,
            ..small_config()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let mk = |rng: &mut ChaCha8Rng| -> TrainSample {
            let start = Point2::new(rng.gen_range(0.1..0.6), rng.gen_range(0.1..0.6));
            let step = Point2::new(rng.gen_range(0.01..0.04), rng.gen_range(-0.02..0.02));
            let full = straight_window(5, start, step);
            TrainSample {
                window: full[..3].to_vec(),
                neighbours: vec![],
                future: full[3..].to_vec(),
            }
        };
        let train_set: Vec<TrainSample> = (0..64).map(|_| mk(&mut rng)).collect();
        let test_set: Vec<TrainSample> = (0..32).map(|_| mk(&mut rng)).collect();
        let opts = TrainOptions {
            lr: 2e-3,
            epochs: 150,
            batch_size: 16,
            seed: 4,
            init: None,
        };
        let (params, _) = train(&cfg, Horizon::Short, &train_set, &opts).unwrap();
        let model_ade = mean_displacement_error(&cfg, &params, Horizon::Short, &test_set).unwrap();
        // constant-position baseline: repeat the last observed point
        let mut cp_total = 0.0;
        let mut count = 0;
        for s in &test_set {
            let last = *s.window.last().unwrap();
            for t in &s.future {
                cp_total += euclidean(last, *t);
                count += 1;
            }
        }
        let cp_ade = cp_total / count as f64;
        assert!(
            model_ade < cp_ade,
            "model {model_ade} vs constant-position {cp_ade}"
        );
    }

    #[test]
    fn checkpoint_roundtrip_preserves_everything() {
        let cfg = small_config();
        let model = PredictorModel {
            config: cfg,
            horizon: Horizon::Long,
            params: PredictorParams::init(cfg.hidden_dim, 13),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = PredictorModel::load(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let cfg = small_config();
        let model = PredictorModel {
            config: cfg,
            horizon: Horizon::Short,
            params: PredictorParams::init(cfg.hidden_dim, 13),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replace("\"version\":1", "\"version\":9");
        std::fs::write(&path, tampered).unwrap();
        assert!(matches!(
            PredictorModel::load(&path),
            Err(PredictorError::BadCheckpoint(_))
        ));
        std::fs::write(&path, "{not json").unwrap();
        assert!(PredictorModel::load(&path).is_err());
        assert!(PredictorModel::load(Path::new("/nonexistent/m.json")).is_err());
    }
}
