//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] owns every intermediate value of a forward pass. Operations
//! append a node and return a [`Var`] handle; [`Tape::backward`] walks the
//! nodes in reverse insertion order (which is a topological order) and
//! accumulates gradients for every node that depends on a trainable leaf.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Matrix, SparseRows, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul {
        x: Arc<SparseRows>,
        w: Var,
    },
    Add(Var, Var),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    SliceRows {
        input: Var,
        start: usize,
    },
    LeakyRelu(Var, f64),
    Relu(Var),
    SegmentSoftmax {
        input: Var,
        segments: Arc<[usize]>,
    },
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
    Mean(Vec<Var>),
    ScalarMul(Var, f64),
    RowGather {
        input: Var,
        index: Arc<[usize]>,
    },
    EdgeAggregate {
        values: Var,
        weights: Var,
        src: Arc<[usize]>,
        dst: Arc<[usize]>,
    },
    Sum(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        /// Per-row weight already divided by the total weight.
        row_weights: Vec<f64>,
        probs: Matrix,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    requires_grad: bool,
    op: Op,
}

/// Recorded forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Leaf gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of leaf `var`, or `None` when the loss does not depend on it
    /// (or `var` is an intermediate value).
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, materializing zeros for disconnected values.
    pub fn get_or_zeros(&self, var: Var) -> Matrix {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> (usize, usize) {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, rg, Op::MatMul(a, b)))
    }

    /// Product of a constant sparse matrix and `w`.
    pub fn sparse_matmul(&mut self, x: Arc<SparseRows>, w: Var) -> Result<Var, TensorError> {
        let value = x.matmul(self.value(w))?;
        let rg = self.rg(&[w]);
        Ok(self.push(value, rg, Op::SparseMatMul { x, w }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                left: (ra, ca),
                right: (rb, cb),
            });
        }
        let mut value = Matrix::zeros(ra, ca + cb);
        for r in 0..ra {
            let row = value.row_mut(r);
            row[..ca].copy_from_slice(self.nodes[a.0].value.row(r));
            row[ca..].copy_from_slice(self.nodes[b.0].value.row(r));
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, rg, Op::ConcatCols(a, b)))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ca != cb {
            return Err(TensorError::ShapeMismatch {
                op: "concat_rows",
                left: (ra, ca),
                right: (rb, cb),
            });
        }
        let mut data = Vec::with_capacity((ra + rb) * ca);
        data.extend_from_slice(self.value(a).as_slice());
        data.extend_from_slice(self.value(b).as_slice());
        let value = Matrix::from_vec(ra + rb, ca, data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, rg, Op::ConcatRows(a, b)))
    }

    /// Rows `start..end` of `input`.
    pub fn slice_rows(&mut self, input: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let (r, c) = self.shape(input);
        if start > end || end > r {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_rows",
                index: end,
                len: r,
            });
        }
        let src = self.value(input).as_slice()[start * c..end * c].to_vec();
        let value = Matrix::from_vec(end - start, c, src)?;
        let rg = self.rg(&[input]);
        Ok(self.push(value, rg, Op::SliceRows { input, start }))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        let value = self
            .value(input)
            .map(|v| if v >= 0.0 { v } else { slope * v });
        let rg = self.rg(&[input]);
        self.push(value, rg, Op::LeakyRelu(input, slope))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let value = self.value(input).map(|v| v.max(0.0));
        let rg = self.rg(&[input]);
        self.push(value, rg, Op::Relu(input))
    }

    /// Softmax computed independently within each segment, per column.
    ///
    /// `segments[i]` is the segment of row `i`; rows of one segment need not
    /// be contiguous. Every segment in `0..num_segments` must be non-empty.
    pub fn segment_softmax(
        &mut self,
        scores: Var,
        segments: Arc<[usize]>,
        num_segments: usize,
    ) -> Result<Var, TensorError> {
        let value = segment_softmax_values(self.value(scores), &segments, num_segments)?;
        let rg = self.rg(&[scores]);
        Ok(self.push(
            value,
            rg,
            Op::SegmentSoftmax {
                input: scores,
                segments,
            },
        ))
    }

    /// Inverted dropout: each entry is zeroed with probability `p` and
    /// survivors are scaled by `1 / (1 - p)`. Deterministic in `seed`.
    pub fn dropout(&mut self, input: Var, p: f64, seed: u64) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidArgument(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if p == 0.0 {
            return Ok(input);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep_scale = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(input).len())
            .map(|_| {
                if rng.random::<f64>() < p {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let src = self.value(input);
        let data = src.as_slice().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Matrix::from_vec(src.rows(), src.cols(), data)?;
        let rg = self.rg(&[input]);
        Ok(self.push(value, rg, Op::Dropout { input, mask }))
    }

    /// Elementwise mean of same-shape values.
    pub fn mean_over(&mut self, inputs: &[Var]) -> Result<Var, TensorError> {
        let first = *inputs
            .first()
            .ok_or_else(|| TensorError::InvalidArgument("mean_over of empty list".into()))?;
        let mut acc = self.value(first).clone();
        for &v in &inputs[1..] {
            self.value(first).check_same("mean_over", self.value(v))?;
            acc.add_assign(self.value(v));
        }
        let value = acc.scale(1.0 / inputs.len() as f64);
        let rg = self.rg(inputs);
        Ok(self.push(value, rg, Op::Mean(inputs.to_vec())))
    }

    pub fn scalar_mul(&mut self, input: Var, s: f64) -> Var {
        let value = self.value(input).scale(s);
        let rg = self.rg(&[input]);
        self.push(value, rg, Op::ScalarMul(input, s))
    }

    /// Rows of `input` selected by `index` (repeats allowed).
    pub fn row_gather(&mut self, input: Var, index: Arc<[usize]>) -> Result<Var, TensorError> {
        let src = self.value(input);
        let c = src.cols();
        let mut data = Vec::with_capacity(index.len() * c);
        if let Some(&bad) = index.iter().find(|&&i| i >= src.rows()) {
            return Err(TensorError::IndexOutOfRange {
                op: "row_gather",
                index: bad,
                len: src.rows(),
            });
        }
        if c == 1 {
            let flat = src.as_slice();
            data.extend(index.iter().map(|&i| flat[i]));
        } else {
            for &i in index.iter() {
                data.extend_from_slice(src.row(i));
            }
        }
        let value = Matrix::from_vec(index.len(), c, data)?;
        let rg = self.rg(&[input]);
        Ok(self.push(value, rg, Op::RowGather { input, index }))
    }

    /// Edge-parallel weighted message passing:
    /// `out[dst[e]] += weights[e] * values[src[e]]` over all edges `e`.
    ///
    /// `values` is `n_src x d`, `weights` is `E x 1`, the result is
    /// `num_out x d`.
    pub fn edge_aggregate(
        &mut self,
        values: Var,
        weights: Var,
        src: Arc<[usize]>,
        dst: Arc<[usize]>,
        num_out: usize,
    ) -> Result<Var, TensorError> {
        let vals = self.value(values);
        let w = self.value(weights);
        if w.shape() != (src.len(), 1) || src.len() != dst.len() {
            return Err(TensorError::ShapeMismatch {
                op: "edge_aggregate",
                left: w.shape(),
                right: (src.len(), dst.len()),
            });
        }
        let d = vals.cols();
        let mut out = Matrix::zeros(num_out, d);
        for e in 0..src.len() {
            let (s, t) = (src[e], dst[e]);
            if s >= vals.rows() || t >= num_out {
                return Err(TensorError::IndexOutOfRange {
                    op: "edge_aggregate",
                    index: s.max(t),
                    len: vals.rows().min(num_out),
                });
            }
            let a = w.as_slice()[e];
            let (srow, orow) = (vals.row(s), out.row_mut(t));
            for (o, v) in orow.iter_mut().zip(srow) {
                *o += a * v;
            }
        }
        let rg = self.rg(&[values, weights]);
        Ok(self.push(
            out,
            rg,
            Op::EdgeAggregate {
                values,
                weights,
                src,
                dst,
            },
        ))
    }

    /// Sum of all entries, as a 1x1 value.
    pub fn sum(&mut self, input: Var) -> Var {
        let value = Matrix::scalar(self.value(input).sum());
        let rg = self.rg(&[input]);
        self.push(value, rg, Op::Sum(input))
    }

    /// Mean softmax cross-entropy of `logits` (n x o) against class indices.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        self.weighted_cross_entropy(logits, labels, None)
    }

    /// Cross-entropy where each row is weighted by `class_weights[label]`;
    /// the result is normalized by the total weight.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        class_weights: Option<&[f64]>,
    ) -> Result<Var, TensorError> {
        let lg = self.value(logits);
        let (n, o) = lg.shape();
        if n != labels.len() || n == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                left: lg.shape(),
                right: (labels.len(), 1),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= o) {
            return Err(TensorError::IndexOutOfRange {
                op: "cross_entropy",
                index: bad,
                len: o,
            });
        }
        let raw: Vec<f64> = labels
            .iter()
            .map(|&l| class_weights.map_or(1.0, |w| w[l]))
            .collect();
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(TensorError::InvalidArgument(
                "cross_entropy weights sum to zero".into(),
            ));
        }
        let row_weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let probs = lg.softmax_rows();
        let mut loss = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            let row = lg.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += row_weights[i] * (lse - row[l]);
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Matrix::scalar(loss),
            rg,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                row_weights,
                probs,
            },
        ))
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Non-differentiable points of `relu` and `leaky_relu` use the right
    /// derivative.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let root = &self.nodes[loss.0];
        if root.value.shape() != (1, 1) {
            return Err(TensorError::NotScalar(root.value.shape()));
        }
        if !root.requires_grad {
            return Err(TensorError::DisconnectedLoss);
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }

        let mut full = grads;
        full.resize(self.nodes.len(), None);
        Ok(Gradients {
            grads: full,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut acc = |v: Var, delta: Matrix| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.matmul_nt(self.value(*b)).expect("matmul grad"));
                }
                if self.wants(*b) {
                    acc(*b, self.value(*a).matmul_tn(g).expect("matmul grad"));
                }
            }
            Op::SparseMatMul { x, w } => {
                if self.wants(*w) {
                    acc(*w, x.matmul_tn(g).expect("sparse matmul grad"));
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.clone());
                }
                if self.wants(*b) {
                    acc(*b, g.clone());
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                if self.wants(*a) {
                    acc(*a, Matrix::from_fn(g.rows(), ca, |r, c| g.get(r, c)));
                }
                if self.wants(*b) {
                    acc(*b, Matrix::from_fn(g.rows(), cb, |r, c| g.get(r, ca + c)));
                }
            }
            Op::ConcatRows(a, b) => {
                let (ra, c) = self.value(*a).shape();
                let rb = self.value(*b).rows();
                let data = g.as_slice();
                if self.wants(*a) {
                    acc(*a, Matrix::from_vec(ra, c, data[..ra * c].to_vec()).unwrap());
                }
                if self.wants(*b) {
                    acc(*b, Matrix::from_vec(rb, c, data[ra * c..].to_vec()).unwrap());
                }
            }
            Op::SliceRows { input, start } => {
                if self.wants(*input) {
                    let (r, c) = self.value(*input).shape();
                    let mut full = Matrix::zeros(r, c);
                    full.as_mut_slice()[start * c..start * c + g.len()].copy_from_slice(g.as_slice());
                    acc(*input, full);
                }
            }
            Op::LeakyRelu(input, slope) => {
                if self.wants(*input) {
                    let x = self.value(*input);
                    let data = x
                        .as_slice()
                        .iter()
                        .zip(g.as_slice())
                        .map(|(&xv, &gv)| if xv >= 0.0 { gv } else { slope * gv })
                        .collect();
                    acc(*input, Matrix::from_vec(x.rows(), x.cols(), data).unwrap());
                }
            }
            Op::Relu(input) => {
                if self.wants(*input) {
                    let x = self.value(*input);
                    let data = x
                        .as_slice()
                        .iter()
                        .zip(g.as_slice())
                        .map(|(&xv, &gv)| if xv >= 0.0 { gv } else { 0.0 })
                        .collect();
                    acc(*input, Matrix::from_vec(x.rows(), x.cols(), data).unwrap());
                }
            }
            Op::SegmentSoftmax { input, segments } => {
                if self.wants(*input) {
                    let y = &node.value;
                    let (n, c) = y.shape();
                    let num_segments = segments.iter().copied().max().map_or(0, |m| m + 1);
                    let (yv, gv) = (y.as_slice(), g.as_slice());
                    let mut dot = vec![0.0; num_segments * c];
                    for (i, &s) in segments.iter().enumerate() {
                        for k in 0..c {
                            dot[s * c + k] += yv[i * c + k] * gv[i * c + k];
                        }
                    }
                    let mut data = vec![0.0; n * c];
                    for (i, &s) in segments.iter().enumerate() {
                        for k in 0..c {
                            let j = i * c + k;
                            data[j] = yv[j] * (gv[j] - dot[s * c + k]);
                        }
                    }
                    let grad = Matrix::from_vec(n, c, data).expect("segment softmax grad");
                    acc(*input, grad);
                }
            }
            Op::Dropout { input, mask } => {
                if self.wants(*input) {
                    let data = g.as_slice().iter().zip(mask).map(|(a, m)| a * m).collect();
                    acc(*input, Matrix::from_vec(g.rows(), g.cols(), data).unwrap());
                }
            }
            Op::Mean(inputs) => {
                let share = g.scale(1.0 / inputs.len() as f64);
                for &v in inputs {
                    if self.wants(v) {
                        acc(v, share.clone());
                    }
                }
            }
            Op::ScalarMul(input, s) => {
                if self.wants(*input) {
                    acc(*input, g.scale(*s));
                }
            }
            Op::RowGather { input, index } => {
                if self.wants(*input) {
                    let (r, c) = self.value(*input).shape();
                    let mut full = Matrix::zeros(r, c);
                    for (k, &i) in index.iter().enumerate() {
                        for (o, v) in full.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                    acc(*input, full);
                }
            }
            Op::EdgeAggregate {
                values,
                weights,
                src,
                dst,
            } => {
                let vals = self.value(*values);
                let w = self.value(*weights);
                if self.wants(*weights) {
                    let data = (0..src.len())
                        .map(|e| {
                            g.row(dst[e])
                                .iter()
                                .zip(vals.row(src[e]))
                                .map(|(a, b)| a * b)
                                .sum()
                        })
                        .collect();
                    acc(*weights, Matrix::from_vec(src.len(), 1, data).unwrap());
                }
                if self.wants(*values) {
                    let mut full = Matrix::zeros(vals.rows(), vals.cols());
                    for e in 0..src.len() {
                        let a = w.as_slice()[e];
                        for (o, v) in full.row_mut(src[e]).iter_mut().zip(g.row(dst[e])) {
                            *o += a * v;
                        }
                    }
                    acc(*values, full);
                }
            }
            Op::Sum(input) => {
                if self.wants(*input) {
                    let (r, c) = self.value(*input).shape();
                    acc(*input, Matrix::filled(r, c, g.as_slice()[0]));
                }
            }
            Op::CrossEntropy {
                logits,
                labels,
                row_weights,
                probs,
            } => {
                if self.wants(*logits) {
                    let scale = g.as_slice()[0];
                    let mut grad = probs.clone();
                    for (i, &l) in labels.iter().enumerate() {
                        let row = grad.row_mut(i);
                        row[l] -= 1.0;
                        for v in row.iter_mut() {
                            *v *= row_weights[i] * scale;
                        }
                    }
                    acc(*logits, grad);
                }
            }
        }
    }
}

/// Forward segment softmax on plain matrices.
pub fn segment_softmax_values(
    scores: &Matrix,
    segments: &[usize],
    num_segments: usize,
) -> Result<Matrix, TensorError> {
    let (n, c) = scores.shape();
    if segments.len() != n {
        return Err(TensorError::ShapeMismatch {
            op: "segment_softmax",
            left: scores.shape(),
            right: (segments.len(), 1),
        });
    }
    let mut max = vec![f64::NEG_INFINITY; num_segments * c];
    let mut count = vec![0usize; num_segments];
    let x = scores.as_slice();
    for (i, &s) in segments.iter().enumerate() {
        if s >= num_segments {
            return Err(TensorError::IndexOutOfRange {
                op: "segment_softmax",
                index: s,
                len: num_segments,
            });
        }
        count[s] += 1;
        for k in 0..c {
            let m = &mut max[s * c + k];
            *m = m.max(x[i * c + k]);
        }
    }
    if let Some(empty) = count.iter().position(|&n| n == 0) {
        return Err(TensorError::EmptySegment(empty));
    }
    let mut data = vec![0.0; n * c];
    let mut total = vec![0.0; num_segments * c];
    for (i, &s) in segments.iter().enumerate() {
        for k in 0..c {
            let e = (x[i * c + k] - max[s * c + k]).exp();
            data[i * c + k] = e;
            total[s * c + k] += e;
        }
    }
    for (i, &s) in segments.iter().enumerate() {
        for k in 0..c {
            data[i * c + k] /= total[s * c + k];
        }
    }
    let out = Matrix::from_vec(n, c, data)?;
    Ok(out)
}
