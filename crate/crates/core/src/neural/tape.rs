//! Minimal reverse-mode automatic differentiation over 2-D tensors.
//!
//! A `Tape` records the forward graph; `backward` walks it in reverse and
//! accumulates gradients into every node. All values are `f64` matrices
//! (row vectors are 1 x n).

use ndarray::{s, Array2, Axis};

/// Index of a node on the tape.
pub type NodeId = usize;

#[derive(Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    /// matrix + broadcast 1 x n row
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    SliceCols(NodeId, usize, usize),
    TakeRows(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    GatherRows(NodeId, Vec<usize>),
    /// Unfold rows into sliding windows of `m` rows, flattened per window.
    Im2Col(NodeId, usize),
    MaxOverTime(NodeId),
    /// Cross-entropy of a 1 x k logit row against a class index.
    SoftmaxCrossEntropy(NodeId, usize),
}

struct Node {
    value: Array2<f64>,
    grad: Array2<f64>,
    op: Op,
    /// Cached softmax probabilities for the cross-entropy node.
    probs: Option<Array2<f64>>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.push_with(value, op, None)
    }

    fn push_with(&mut self, value: Array2<f64>, op: Op, probs: Option<Array2<f64>>) -> NodeId {
        let grad = Array2::zeros(value.raw_dim());
        self.nodes.push(Node {
            value,
            grad,
            op,
            probs,
        });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id].value
    }

    pub fn grad(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id].grad
    }

    /// Softmax probabilities cached by `softmax_cross_entropy`.
    pub fn probabilities(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.nodes[id].probs.as_ref()
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value + &self.nodes[b].value;
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        debug_assert_eq!(self.nodes[row].value.nrows(), 1);
        let v = &self.nodes[a].value + &self.nodes[row].value.row(0);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value * &self.nodes[b].value;
        self.push(v, Op::Mul(a, b))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.dot(&self.nodes[b].value);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = &self.nodes[a].value * factor;
        self.push(v, Op::Scale(a, factor))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn slice_cols(&mut self, a: NodeId, from: usize, to: usize) -> NodeId {
        let v = self.nodes[a].value.slice(s![.., from..to]).to_owned();
        self.push(v, Op::SliceCols(a, from, to))
    }

    pub fn take_rows(&mut self, a: NodeId, from: usize, to: usize) -> NodeId {
        let v = self.nodes[a].value.slice(s![from..to, ..]).to_owned();
        self.push(v, Op::TakeRows(a, from, to))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|&p| self.nodes[p].value.view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat_cols shape mismatch");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Gather rows of `a` by index; duplicate indices accumulate gradient.
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> NodeId {
        let src = &self.nodes[a].value;
        let mut v = Array2::zeros((indices.len(), src.ncols()));
        for (i, &idx) in indices.iter().enumerate() {
            v.row_mut(i).assign(&src.row(idx));
        }
        self.push(v, Op::GatherRows(a, indices.to_vec()))
    }

    /// Sliding windows of `m` rows flattened per window:
    /// an L x d input becomes (L - m + 1) x (m * d).
    pub fn im2col(&mut self, a: NodeId, m: usize) -> NodeId {
        let src = &self.nodes[a].value;
        let (rows, d) = (src.nrows(), src.ncols());
        assert!(rows >= m, "im2col: input has {rows} rows, kernel needs {m}");
        let out_rows = rows - m + 1;
        let mut v = Array2::zeros((out_rows, m * d));
        for t in 0..out_rows {
            for k in 0..m {
                v.slice_mut(s![t, k * d..(k + 1) * d])
                    .assign(&src.row(t + k));
            }
        }
        self.push(v, Op::Im2Col(a, m))
    }

    /// Column-wise maximum of a T x F map, producing a 1 x F row.
    pub fn max_over_time(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a].value;
        let mut v = Array2::zeros((1, src.ncols()));
        for (f, col) in src.columns().into_iter().enumerate() {
            v[[0, f]] = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        self.push(v, Op::MaxOverTime(a))
    }

    /// Numerically stabilized softmax cross-entropy of 1 x k logits.
    /// Returns a 1 x 1 loss node; probabilities are cached on the node.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: usize) -> NodeId {
        let row = &self.nodes[logits].value;
        debug_assert_eq!(row.nrows(), 1);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps = row.mapv(|x| (x - max).exp());
        let total: f64 = exps.iter().sum();
        let probs = exps / total;
        let loss = -probs[[0, target]].max(1e-300).ln();
        let v = Array2::from_elem((1, 1), loss);
        self.push_with(v, Op::SoftmaxCrossEntropy(logits, target), Some(probs))
    }

    /// Reverse pass from `root` (must be 1 x 1) with seed gradient `seed`.
    pub fn backward(&mut self, root: NodeId, seed: f64) {
        assert_eq!(self.nodes[root].value.len(), 1, "backward root must be scalar");
        self.nodes[root].grad[[0, 0]] += seed;
        for id in (0..=root).rev() {
            // Take the node's gradient; ops below only touch earlier nodes.
            let grad = self.nodes[id].grad.clone();
            if grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.nodes[a].grad += &grad;
                    self.nodes[b].grad += &grad;
                }
                Op::AddRow(a, row) => {
                    self.nodes[a].grad += &grad;
                    let summed = grad.sum_axis(Axis(0));
                    self.nodes[row].grad.row_mut(0).scaled_add(1.0, &summed);
                }
                Op::Mul(a, b) => {
                    let ga = &grad * &self.nodes[b].value;
                    let gb = &grad * &self.nodes[a].value;
                    self.nodes[a].grad += &ga;
                    self.nodes[b].grad += &gb;
                }
                Op::MatMul(a, b) => {
                    let ga = grad.dot(&self.nodes[b].value.t());
                    let gb = self.nodes[a].value.t().dot(&grad);
                    self.nodes[a].grad += &ga;
                    self.nodes[b].grad += &gb;
                }
                Op::Scale(a, factor) => {
                    self.nodes[a].grad.scaled_add(factor, &grad);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[id].value;
                    let ga = &grad * &(y * &(1.0 - y));
                    self.nodes[a].grad += &ga;
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[id].value;
                    let ga = &grad * &(1.0 - y * y);
                    self.nodes[a].grad += &ga;
                }
                Op::Relu(a) => {
                    let mask = self.nodes[a].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    let ga = &grad * &mask;
                    self.nodes[a].grad += &ga;
                }
                Op::SliceCols(a, from, to) => {
                    self.nodes[a]
                        .grad
                        .slice_mut(s![.., from..to])
                        .scaled_add(1.0, &grad);
                }
                Op::TakeRows(a, from, to) => {
                    self.nodes[a]
                        .grad
                        .slice_mut(s![from..to, ..])
                        .scaled_add(1.0, &grad);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.nodes[p].value.ncols();
                        let gp = grad.slice(s![.., offset..offset + w]).to_owned();
                        self.nodes[p].grad += &gp;
                        offset += w;
                    }
                }
                Op::GatherRows(a, indices) => {
                    for (i, idx) in indices.into_iter().enumerate() {
                        let row = grad.row(i).to_owned();
                        self.nodes[a].grad.row_mut(idx).scaled_add(1.0, &row);
                    }
                }
                Op::Im2Col(a, m) => {
                    let d = self.nodes[a].value.ncols();
                    for t in 0..grad.nrows() {
                        for k in 0..m {
                            let gw = grad.slice(s![t, k * d..(k + 1) * d]).to_owned();
                            self.nodes[a].grad.row_mut(t + k).scaled_add(1.0, &gw);
                        }
                    }
                }
                Op::MaxOverTime(a) => {
                    let src = self.nodes[a].value.clone();
                    for f in 0..src.ncols() {
                        let mut best = 0;
                        for t in 1..src.nrows() {
                            if src[[t, f]] > src[[best, f]] {
                                best = t;
                            }
                        }
                        self.nodes[a].grad[[best, f]] += grad[[0, f]];
                    }
                }
                Op::SoftmaxCrossEntropy(logits, target) => {
                    let mut gl = self.nodes[id].probs.clone().expect("probs cached");
                    gl[[0, target]] -= 1.0;
                    self.nodes[logits].grad.scaled_add(grad[[0, 0]], &gl);
                }
            }
        }
    }
}
