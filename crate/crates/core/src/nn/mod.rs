//! Dense tensors, a gated recurrent cell, a two-layer scalar scorer, Adam,
//! and seeded initialization — the numeric substrate for the trajectory
//! predictor. Reverse-mode differentiation lives in [`tape`].

pub mod tape;

use rand::Rng;

/// 1-D real buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor1 {
    pub data: Vec<f64>,
}

impl Tensor1 {
    pub fn zeros(n: usize) -> Self {
        Tensor1 { data: vec![0.0; n] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor1 { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Row-major 2-D real buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "shape/buffer length mismatch");
        Tensor2 { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged rows");
        Tensor2 {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// y = M x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        let mut y = vec![0.0; self.rows];
        for (r, out) in y.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *out = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        y
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically safe softmax (max-shifted). Weights are strictly positive and
/// sum to 1 up to rounding.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    assert!(!scores.is_empty(), "softmax of empty slice");
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Parameters of one gated recurrent (LSTM) cell. Gate blocks are stacked
/// along rows in the fixed order input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_input: Tensor2,  // 4H x input_dim
    pub w_hidden: Tensor2, // 4H x H
    pub bias: Tensor1,     // 4H
}

impl LstmParams {
    pub fn zeros(hidden: usize, input_dim: usize) -> Self {
        LstmParams {
            w_input: Tensor2::zeros(4 * hidden, input_dim),
            w_hidden: Tensor2::zeros(4 * hidden, hidden),
            bias: Tensor1::zeros(4 * hidden),
        }
    }

    pub fn init<R: Rng>(hidden: usize, input_dim: usize, rng: &mut R) -> Self {
        LstmParams {
            w_input: Tensor2::from_data(
                4 * hidden,
                input_dim,
                init_uniform(rng, input_dim, 4 * hidden * input_dim),
            ),
            w_hidden: Tensor2::from_data(
                4 * hidden,
                hidden,
                init_uniform(rng, hidden, 4 * hidden * hidden),
            ),
            bias: Tensor1::from_vec(init_uniform(rng, input_dim, 4 * hidden)),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.cols()
    }
}

/// One step of the gated recurrence: sigmoid input/forget/output gates, tanh
/// candidate, tanh-squashed cell output.
pub fn cell_step(p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hd = p.hidden_dim();
    assert_eq!(h.len(), hd);
    assert_eq!(c.len(), hd);
    let zx = p.w_input.matvec(x);
    let zh = p.w_hidden.matvec(h);
    let mut h_new = vec![0.0; hd];
    let mut c_new = vec![0.0; hd];
    for k in 0..hd {
        let z = |g: usize| zx[g * hd + k] + zh[g * hd + k] + p.bias.data[g * hd + k];
        let i = sigmoid(z(0));
        let f = sigmoid(z(1));
        let o = sigmoid(z(2));
        let g = z(3).tanh();
        c_new[k] = f * c[k] + i * g;
        h_new[k] = o * c_new[k].tanh();
    }
    (h_new, c_new)
}

/// Two-layer feed-forward scorer: tanh hidden layer, scalar linear output.
/// Scores pairs of vectors (query, key) by their concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    pub w1: Tensor2, // F x (len(a)+len(b))
    pub b1: Tensor1, // F
    pub w2: Tensor2, // 1 x F
    pub b2: Tensor1, // 1
}

impl FfnParams {
    pub fn zeros(hidden: usize, input_dim: usize) -> Self {
        FfnParams {
            w1: Tensor2::zeros(hidden, input_dim),
            b1: Tensor1::zeros(hidden),
            w2: Tensor2::zeros(1, hidden),
            b2: Tensor1::zeros(1),
        }
    }

    pub fn init<R: Rng>(hidden: usize, input_dim: usize, rng: &mut R) -> Self {
        FfnParams {
            w1: Tensor2::from_data(
                hidden,
                input_dim,
                init_uniform(rng, input_dim, hidden * input_dim),
            ),
            b1: Tensor1::from_vec(init_uniform(rng, input_dim, hidden)),
            w2: Tensor2::from_data(1, hidden, init_uniform(rng, hidden, hidden)),
            b2: Tensor1::from_vec(init_uniform(rng, hidden, 1)),
        }
    }
}

pub fn ffn_score(p: &FfnParams, a: &[f64], b: &[f64]) -> f64 {
    let joined: Vec<f64> = a.iter().chain(b).copied().collect();
    let hidden: Vec<f64> =
        p.w1.matvec(&joined)
            .iter()
            .zip(&p.b1.data)
            .map(|(z, bias)| (z + bias).tanh())
            .collect();
    p.w2.matvec(&hidden)[0] + p.b2.data[0]
}

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded by the caller's
/// RNG so whole-model initialization is reproducible.
pub fn init_uniform<R: Rng>(rng: &mut R, fan_in: usize, count: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..count).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, len: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let mh = self.m[k] / bc1;
            let vh = self.v[k] / bc2;
            params[k] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}
