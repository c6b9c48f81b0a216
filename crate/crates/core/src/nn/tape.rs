//! Reverse-mode differentiation over a recorded computation graph.
//!
//! Every operation appends a node holding its eagerly-computed value and the
//! ids of its inputs; [`Tape::backward`] then walks the node list in reverse,
//! accumulating gradients. Parents always precede children, so the record
//! order is already a topological order. The op set is exactly what the
//! encoder/attention/decoder graphs need — this is not a general-purpose
//! autodiff.

use super::{sigmoid, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// y = M x, where M is a (rows x cols) matrix node and x a vector node.
    MatVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(NodeId, NodeId),
    /// Contiguous sub-vector (src, start, len).
    Slice(NodeId, usize),
    /// Scalars stacked into one vector.
    Stack(Vec<NodeId>),
    Softmax(NodeId),
    /// y = sum_j w[j] * items[j], w a vector node, items vector nodes.
    WeightedSum(NodeId, Vec<NodeId>),
    /// y = sum_j coeff[j] * items[j] with constant coefficients.
    LinComb(Vec<f64>, Vec<NodeId>),
    /// y = a - constant.
    SubConst(NodeId),
    /// Scalar sum of squared components.
    SumSquares(NodeId),
    AddMany(Vec<NodeId>),
    Scale(NodeId, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> NodeId {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A vector input or parameter block.
    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        let n = value.len();
        self.push(value, n, 1, Op::Leaf)
    }

    /// A matrix parameter block (row-major).
    pub fn leaf_matrix(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> NodeId {
        self.push(value, rows, cols, Op::Leaf)
    }

    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> NodeId {
        let (rows, cols) = (self.nodes[m.0].rows, self.nodes[m.0].cols);
        assert_eq!(
            cols,
            self.nodes[x.0].value.len(),
            "matvec dimension mismatch"
        );
        let mut y = vec![0.0; rows];
        let mdata = &self.nodes[m.0].value;
        let xdata = &self.nodes[x.0].value;
        for (r, out) in y.iter_mut().enumerate() {
            *out = mdata[r * cols..(r + 1) * cols]
                .iter()
                .zip(xdata)
                .map(|(a, b)| a * b)
                .sum();
        }
        self.push(y, rows, 1, Op::MatVec(m, x))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        let n = v.len();
        self.push(v, n, 1, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        let n = v.len();
        self.push(v, n, 1, Op::Mul(a, b))
    }

    pub fn sigmoid_node(&mut self, a: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[a.0].value.iter().map(|&x| sigmoid(x)).collect();
        let n = v.len();
        self.push(v, n, 1, Op::Sigmoid(a))
    }

    pub fn tanh_node(&mut self, a: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x.tanh()).collect();
        let n = v.len();
        self.push(v, n, 1, Op::Tanh(a))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.nodes[a.0].value.clone();
        v.extend_from_slice(&self.nodes[b.0].value);
        let n = v.len();
        self.push(v, n, 1, Op::Concat(a, b))
    }

    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.nodes[a.0].value[start..start + len].to_vec();
        self.push(v, len, 1, Op::Slice(a, start))
    }

    pub fn stack(&mut self, scalars: Vec<NodeId>) -> NodeId {
        let v: Vec<f64> = scalars.iter().map(|s| self.scalar(*s)).collect();
        let n = v.len();
        self.push(v, n, 1, Op::Stack(scalars))
    }

    pub fn softmax_node(&mut self, a: NodeId) -> NodeId {
        let v = softmax(&self.nodes[a.0].value);
        let n = v.len();
        self.push(v, n, 1, Op::Softmax(a))
    }

    pub fn weighted_sum(&mut self, weights: NodeId, items: Vec<NodeId>) -> NodeId {
        assert_eq!(self.nodes[weights.0].value.len(), items.len());
        let dim = self.nodes[items[0].0].value.len();
        let mut v = vec![0.0; dim];
        for (j, item) in items.iter().enumerate() {
            let w = self.nodes[weights.0].value[j];
            for (o, x) in v.iter_mut().zip(&self.nodes[item.0].value) {
                *o += w * x;
            }
        }
        self.push(v, dim, 1, Op::WeightedSum(weights, items))
    }

    pub fn lin_comb(&mut self, coeffs: Vec<f64>, items: Vec<NodeId>) -> NodeId {
        assert_eq!(coeffs.len(), items.len());
        assert!(!items.is_empty());
        let dim = self.nodes[items[0].0].value.len();
        let mut v = vec![0.0; dim];
        for (c, item) in coeffs.iter().zip(&items) {
            for (o, x) in v.iter_mut().zip(&self.nodes[item.0].value) {
                *o += c * x;
            }
        }
        self.push(v, dim, 1, Op::LinComb(coeffs, items))
    }

    pub fn sub_const(&mut self, a: NodeId, c: &[f64]) -> NodeId {
        let v: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(c)
            .map(|(x, y)| x - y)
            .collect();
        assert_eq!(v.len(), c.len());
        let n = v.len();
        self.push(v, n, 1, Op::SubConst(a))
    }

    pub fn sum_squares(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0].value.iter().map(|x| x * x).sum();
        self.push(vec![s], 1, 1, Op::SumSquares(a))
    }

    pub fn add_many(&mut self, items: Vec<NodeId>) -> NodeId {
        assert!(!items.is_empty());
        let dim = self.nodes[items[0].0].value.len();
        let mut v = vec![0.0; dim];
        for item in &items {
            for (o, x) in v.iter_mut().zip(&self.nodes[item.0].value) {
                *o += x;
            }
        }
        self.push(v, dim, 1, Op::AddMany(items))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let v: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x * k).collect();
        let n = v.len();
        self.push(v, n, 1, Op::Scale(a, k))
    }

    /// Gradient of the scalar `loss` node with respect to every node on the
    /// tape, indexed by node id. Reverse accumulation over the record order.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(
            self.nodes[loss.0].value.len(),
            1,
            "backward needs a scalar loss"
        );
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        grads[loss.0][0] = 1.0;

        for idx in (0..=loss.0).rev() {
            let g = std::mem::take(&mut grads[idx]);
            if g.iter().all(|&x| x == 0.0) {
                grads[idx] = g;
                continue;
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatVec(m, x) => {
                    let (rows, cols) = (self.nodes[m.0].rows, self.nodes[m.0].cols);
                    let mdata = &self.nodes[m.0].value;
                    let xdata = &self.nodes[x.0].value;
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let gm = &mut grads[m.0];
                        for c in 0..cols {
                            gm[r * cols + c] += gr * xdata[c];
                        }
                        let gx = &mut grads[x.0];
                        for c in 0..cols {
                            gx[c] += gr * mdata[r * cols + c];
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (ga, gg) in grads[a.0].iter_mut().zip(&g) {
                        *ga += gg;
                    }
                    for (gb, gg) in grads[b.0].iter_mut().zip(&g) {
                        *gb += gg;
                    }
                }
                Op::Mul(a, b) => {
                    let bv = self.nodes[b.0].value.clone();
                    for ((ga, gg), bx) in grads[a.0].iter_mut().zip(&g).zip(&bv) {
                        *ga += gg * bx;
                    }
                    let av = &self.nodes[a.0].value;
                    for ((gb, gg), ax) in grads[b.0].iter_mut().zip(&g).zip(av) {
                        *gb += gg * ax;
                    }
                }
                Op::Sigmoid(a) => {
                    for ((ga, gg), y) in grads[a.0].iter_mut().zip(&g).zip(&node.value) {
                        *ga += gg * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    for ((ga, gg), y) in grads[a.0].iter_mut().zip(&g).zip(&node.value) {
                        *ga += gg * (1.0 - y * y);
                    }
                }
                Op::Concat(a, b) => {
                    let na = self.nodes[a.0].value.len();
                    for (ga, gg) in grads[a.0].iter_mut().zip(&g[..na]) {
                        *ga += gg;
                    }
                    for (gb, gg) in grads[b.0].iter_mut().zip(&g[na..]) {
                        *gb += gg;
                    }
                }
                Op::Slice(a, start) => {
                    for (k, gg) in g.iter().enumerate() {
                        grads[a.0][start + k] += gg;
                    }
                }
                Op::Stack(parts) => {
                    for (part, gg) in parts.iter().zip(&g) {
                        grads[part.0][0] += gg;
                    }
                }
                Op::Softmax(a) => {
                    // dx_i = y_i * (g_i - sum_j g_j y_j)
                    let dot: f64 = g.iter().zip(&node.value).map(|(gg, y)| gg * y).sum();
                    for ((ga, gg), y) in grads[a.0].iter_mut().zip(&g).zip(&node.value) {
                        *ga += y * (gg - dot);
                    }
                }
                Op::WeightedSum(w, items) => {
                    let wv = self.nodes[w.0].value.clone();
                    for (j, item) in items.iter().enumerate() {
                        let dot: f64 = g
                            .iter()
                            .zip(&self.nodes[item.0].value)
                            .map(|(gg, x)| gg * x)
                            .sum();
                        grads[w.0][j] += dot;
                        let wj = wv[j];
                        for (gi, gg) in grads[item.0].iter_mut().zip(&g) {
                            *gi += wj * gg;
                        }
                    }
                }
                Op::LinComb(coeffs, items) => {
                    for (c, item) in coeffs.iter().zip(items) {
                        for (gi, gg) in grads[item.0].iter_mut().zip(&g) {
                            *gi += c * gg;
                        }
                    }
                }
                Op::SubConst(a) => {
                    for (ga, gg) in grads[a.0].iter_mut().zip(&g) {
                        *ga += gg;
                    }
                }
                Op::SumSquares(a) => {
                    let g0 = g[0];
                    let av = &self.nodes[a.0].value;
                    for (ga, x) in grads[a.0].iter_mut().zip(av) {
                        *ga += 2.0 * x * g0;
                    }
                }
                Op::AddMany(items) => {
                    for item in items {
                        for (gi, gg) in grads[item.0].iter_mut().zip(&g) {
                            *gi += gg;
                        }
                    }
                }
                Op::Scale(a, k) => {
                    for (ga, gg) in grads[a.0].iter_mut().zip(&g) {
                        *ga += k * gg;
                    }
                }
            }
            grads[idx] = g;
        }
        Gradients { grads }
    }
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn of(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }
}

/// One recurrent cell step recorded on the tape. `w_in`, `w_h` are matrix
/// leaves (4H x input, 4H x H), `b` a 4H vector; returns (h', c'). Mirrors
/// [`super::cell_step`] exactly (gate order i, f, o, g).
#[allow(clippy::too_many_arguments)]
pub fn lstm_step(
    tape: &mut Tape,
    w_in: NodeId,
    w_h: NodeId,
    b: NodeId,
    x: NodeId,
    h: NodeId,
    c: NodeId,
    hidden: usize,
) -> (NodeId, NodeId) {
    let zx = tape.matvec(w_in, x);
    let zh = tape.matvec(w_h, h);
    let z0 = tape.add(zx, zh);
    let z = tape.add(z0, b);
    let zi = tape.slice(z, 0, hidden);
    let zf = tape.slice(z, hidden, hidden);
    let zo = tape.slice(z, 2 * hidden, hidden);
    let zg = tape.slice(z, 3 * hidden, hidden);
    let i = tape.sigmoid_node(zi);
    let f = tape.sigmoid_node(zf);
    let o = tape.sigmoid_node(zo);
    let g = tape.tanh_node(zg);
    let fc = tape.mul(f, c);
    let ig = tape.mul(i, g);
    let c_new = tape.add(fc, ig);
    let tc = tape.tanh_node(c_new);
    let h_new = tape.mul(o, tc);
    (h_new, c_new)
}

/// The pair scorer recorded on the tape; returns a 1-dim node. Mirrors
/// [`super::ffn_score`].
pub fn ffn_score_node(
    tape: &mut Tape,
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
    a: NodeId,
    b: NodeId,
) -> NodeId {
    let joined = tape.concat(a, b);
    let z1 = tape.matvec(w1, joined);
    let z1b = tape.add(z1, b1);
    let hidden = tape.tanh_node(z1b);
    let z2 = tape.matvec(w2, hidden);
    tape.add(z2, b2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{cell_step, ffn_score, FfnParams, LstmParams};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Central-difference gradient check of `build` (which must rebuild the
    /// same graph from the given leaf values and return the scalar loss).
    fn check_grads(build: impl Fn(&mut Tape, &[Vec<f64>]) -> NodeId, inputs: &[Vec<f64>]) {
        let mut tape = Tape::new();
        let loss = build(&mut tape, inputs);
        let grads = tape.backward(loss);
        // Leaves are created first, in input order, by convention of `build`.
        let h = 1e-5;
        for (li, input) in inputs.iter().enumerate() {
            let analytic = grads.of(NodeId(li)).to_vec();
            for k in 0..input.len() {
                let mut plus = inputs.to_vec();
                plus[li][k] += h;
                let mut minus = inputs.to_vec();
                minus[li][k] -= h;
                let mut tp = Tape::new();
                let lp = build(&mut tp, &plus);
                let mut tm = Tape::new();
                let lm = build(&mut tm, &minus);
                let numeric = (tp.scalar(lp) - tm.scalar(lm)) / (2.0 * h);
                let denom = analytic[k].abs().max(numeric.abs()).max(1e-5);
                let rel = (analytic[k] - numeric).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "leaf {li}[{k}]: analytic {} vs numeric {numeric}",
                    analytic[k]
                );
            }
        }
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn forward_matches_plain_cell_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let hidden = rng.gen_range(1..=5);
            let input = rng.gen_range(1..=4);
            let p = LstmParams::init(hidden, input, &mut rng);
            let x = rand_vec(&mut rng, input);
            let h = rand_vec(&mut rng, hidden);
            let c = rand_vec(&mut rng, hidden);
            let (ph, pc) = cell_step(&p, &x, &h, &c);

            let mut tape = Tape::new();
            let w_in = tape.leaf_matrix(4 * hidden, input, p.w_input.data().to_vec());
            let w_h = tape.leaf_matrix(4 * hidden, hidden, p.w_hidden.data().to_vec());
            let b = tape.leaf(p.bias.data.clone());
            let xn = tape.leaf(x);
            let hn = tape.leaf(h);
            let cn = tape.leaf(c);
            let (h2, c2) = lstm_step(&mut tape, w_in, w_h, b, xn, hn, cn, hidden);
            for (a, b) in tape.value(h2).iter().zip(&ph) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in tape.value(c2).iter().zip(&pc) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_matches_plain_ffn() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..50 {
            let f = rng.gen_range(1..=5);
            let da = rng.gen_range(1..=4);
            let db = rng.gen_range(1..=4);
            let p = FfnParams::init(f, da + db, &mut rng);
            let a = rand_vec(&mut rng, da);
            let b = rand_vec(&mut rng, db);
            let plain = ffn_score(&p, &a, &b);

            let mut tape = Tape::new();
            let w1 = tape.leaf_matrix(f, da + db, p.w1.data().to_vec());
            let b1 = tape.leaf(p.b1.data.clone());
            let w2 = tape.leaf_matrix(1, f, p.w2.data().to_vec());
            let b2 = tape.leaf(p.b2.data.clone());
            let an = tape.leaf(a);
            let bn = tape.leaf(b);
            let s = ffn_score_node(&mut tape, w1, b1, w2, b2, an, bn);
            assert!((tape.scalar(s) - plain).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_matvec_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let m = rand_vec(&mut rng, 6); // 2x3
        let x = rand_vec(&mut rng, 3);
        check_grads(
            |tape, ins| {
                let m = tape.leaf_matrix(2, 3, ins[0].clone());
                let x = tape.leaf(ins[1].clone());
                let y = tape.matvec(m, x);
                let t = tape.tanh_node(y);
                tape.sum_squares(t)
            },
            &[m, x],
        );
    }

    #[test]
    fn grad_softmax_weighted_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let scores = rand_vec(&mut rng, 4);
        let i1 = rand_vec(&mut rng, 3);
        let i2 = rand_vec(&mut rng, 3);
        let i3 = rand_vec(&mut rng, 3);
        let i4 = rand_vec(&mut rng, 3);
        check_grads(
            |tape, ins| {
                let s = tape.leaf(ins[0].clone());
                let items: Vec<NodeId> = ins[1..].iter().map(|v| tape.leaf(v.clone())).collect();
                let w = tape.softmax_node(s);
                let c = tape.weighted_sum(w, items);
                tape.sum_squares(c)
            },
            &[scores, i1, i2, i3, i4],
        );
    }

    #[test]
    fn grad_full_lstm_step() {
        let hidden = 3;
        let input = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let w_in = rand_vec(&mut rng, 4 * hidden * input);
        let w_h = rand_vec(&mut rng, 4 * hidden * hidden);
        let b = rand_vec(&mut rng, 4 * hidden);
        let x = rand_vec(&mut rng, input);
        let h = rand_vec(&mut rng, hidden);
        let c = rand_vec(&mut rng, hidden);
        check_grads(
            |tape, ins| {
                let w_in = tape.leaf_matrix(4 * hidden, input, ins[0].clone());
                let w_h = tape.leaf_matrix(4 * hidden, hidden, ins[1].clone());
                let b = tape.leaf(ins[2].clone());
                let x = tape.leaf(ins[3].clone());
                let h = tape.leaf(ins[4].clone());
                let c = tape.leaf(ins[5].clone());
                let (h2, c2) = lstm_step(tape, w_in, w_h, b, x, h, c, hidden);
                let both = tape.concat(h2, c2);
                tape.sum_squares(both)
            },
            &[w_in, w_h, b, x, h, c],
        );
    }

    #[test]
    fn grad_misc_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let a = rand_vec(&mut rng, 4);
        let b = rand_vec(&mut rng, 4);
        let target = rand_vec(&mut rng, 8);
        check_grads(
            move |tape, ins| {
                let a = tape.leaf(ins[0].clone());
                let b = tape.leaf(ins[1].clone());
                let m = tape.mul(a, b);
                let s = tape.sigmoid_node(m);
                let cat = tape.concat(s, a);
                let d = tape.sub_const(cat, &target);
                let lc = tape.lin_comb(vec![0.5, -1.5], vec![d, d]);
                let sq = tape.sum_squares(lc);
                tape.scale(sq, 0.25)
            },
            &[a, b],
        );
    }

    #[test]
    fn grad_stack_and_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let v = rand_vec(&mut rng, 6);
        check_grads(
            |tape, ins| {
                let v = tape.leaf(ins[0].clone());
                let lo = tape.slice(v, 0, 3);
                let hi = tape.slice(v, 3, 3);
                let d = tape.mul(lo, hi);
                let s0 = tape.slice(d, 0, 1);
                let s1 = tape.slice(d, 1, 1);
                let s2 = tape.slice(d, 2, 1);
                let stacked = tape.stack(vec![s0, s1, s2]);
                let sm = tape.softmax_node(stacked);
                let many = tape.add_many(vec![sm, d]);
                tape.sum_squares(many)
            },
            &[v],
        );
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let v = tape.leaf(vec![1.0, 2.0]);
        let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| tape.backward(v)));
        assert!(r.is_err());
    }
}
