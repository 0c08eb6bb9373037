//! Reverse-mode differentiation tape.
//!
//! Forward operations append nodes to an append-only tape; node inputs always
//! precede the node, so a single reverse sweep over the tape implements the
//! chain rule. `backward` may be called once per graph and populates a
//! gradient buffer (same shape as the node value) for every node reachable
//! from the root.
//!
//! Shape checks happen before any arithmetic: an op on non-conformable
//! operands is rejected with both shapes in the error.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in one specific [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Scale { a: NodeId, c: f64 },
    Mul { a: NodeId, b: NodeId },
    MatMul { a: NodeId, b: NodeId },
    Relu { a: NodeId },
    Softplus { a: NodeId },
    Clamp01 { a: NodeId },
    Reshape { a: NodeId },
    ConcatRows { a: NodeId, b: NodeId },
    SliceRows { a: NodeId, start: usize, end: usize },
    MeanReduce { a: NodeId },
    SumReduce { a: NodeId },
    MseLoss { pred: NodeId, target: NodeId },
    SoftmaxCrossEntropy { logits: NodeId, labels: Vec<usize> },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// How `add`/`sub` operands line up: identical shapes, or a rank-1 bias
/// row broadcast over the rows of a rank-2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Align {
    Same,
    BiasRight, // a: [m,n], b: [n]
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

/// `a[m,k] * b[k,n]`, accumulating along rows for cache locality.
fn matmul_values(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn softmax_rows(logits: &Tensor) -> Vec<f64> {
    let (m, c) = (logits.rows(), logits.cols());
    let mut probs = vec![0.0; m * c];
    for i in 0..m {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..c {
            let e = (row[j] - max).exp();
            probs[i * c + j] = e;
            sum += e;
        }
        for j in 0..c {
            probs[i * c + j] /= sum;
        }
    }
    probs
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value });
        self.grads.push(None);
        id
    }

    /// Register a tensor as a leaf node. Inputs, constants, and trainable
    /// parameters are all leaves; what distinguishes a parameter is that the
    /// caller reads its gradient back after `backward`.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient buffer of `id` after `backward`; `None` if the node is not
    /// reachable from the root.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    /// Gradient of `id` as a tensor, zeros when unreachable from the root.
    pub fn grad_tensor(&self, id: NodeId) -> Tensor {
        let shape = self.nodes[id.0].value.shape().to_vec();
        match &self.grads[id.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape matches value"),
            None => Tensor::zeros(shape),
        }
    }

    fn align(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Align> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa == sb {
            return Ok(Align::Same);
        }
        if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            return Ok(Align::BiasRight);
        }
        Err(Error::Shape {
            op,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        })
    }

    fn elementwise(
        &mut self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(NodeId, NodeId) -> Op,
    ) -> Result<NodeId> {
        let align = self.align(op, a, b)?;
        let ta = self.value(a);
        let tb = self.value(b);
        let values = match align {
            Align::Same => ta
                .values()
                .iter()
                .zip(tb.values())
                .map(|(&x, &y)| f(x, y))
                .collect(),
            Align::BiasRight => {
                let n = tb.numel();
                ta.values()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, tb.values()[i % n]))
                    .collect()
            }
        };
        let shape = ta.shape().to_vec();
        let value = Tensor::new(shape, values)?;
        Ok(self.push(make(a, b), value))
    }

    /// Elementwise sum; also accepts a rank-1 bias broadcast over matrix rows.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("add", a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("sub", a, b, |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    /// Multiply every element by the constant `c` (c is not a graph node).
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let value = Tensor::new(
            self.value(a).shape().to_vec(),
            self.value(a).values().iter().map(|&x| x * c).collect(),
        )?;
        Ok(self.push(Op::Scale { a, c }, value))
    }

    /// Elementwise product. Operand shapes must be identical.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa != sb {
            return Err(Error::Shape {
                op: "mul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        self.elementwise("mul", a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let values = matmul_values(self.value(a).values(), self.value(b).values(), m, k, n);
        let value = Tensor::new(vec![m, n], values)?;
        Ok(self.push(Op::MatMul { a, b }, value))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let value = Tensor::new(
            self.value(a).shape().to_vec(),
            self.value(a).values().iter().map(|&x| x.max(0.0)).collect(),
        )?;
        Ok(self.push(Op::Relu { a }, value))
    }

    /// Numerically stable `ln(1 + e^x)`; output is strictly positive.
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        let value = Tensor::new(
            self.value(a).shape().to_vec(),
            self.value(a)
                .values()
                .iter()
                .map(|&x| x.max(0.0) + (-x.abs()).exp().ln_1p())
                .collect(),
        )?;
        Ok(self.push(Op::Softplus { a }, value))
    }

    /// Clip to `[0,1]`; gradient is zero outside the clipped range.
    pub fn clamp01(&mut self, a: NodeId) -> Result<NodeId> {
        let value = Tensor::new(
            self.value(a).shape().to_vec(),
            self.value(a)
                .values()
                .iter()
                .map(|&x| x.clamp(0.0, 1.0))
                .collect(),
        )?;
        Ok(self.push(Op::Clamp01 { a }, value))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).numel() || shape.contains(&0) {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.value(a).shape().to_vec(),
                rhs: shape,
            });
        }
        let value = Tensor::new(shape, self.value(a).values().to_vec())?;
        Ok(self.push(Op::Reshape { a }, value))
    }

    /// Stack two rank-2 tensors with equal column counts, `a` on top.
    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::Shape {
                op: "concat_rows",
                lhs: sa,
                rhs: sb,
            });
        }
        let mut values = self.value(a).values().to_vec();
        values.extend_from_slice(self.value(b).values());
        let value = Tensor::new(vec![sa[0] + sb[0], sa[1]], values)?;
        Ok(self.push(Op::ConcatRows { a, b }, value))
    }

    /// Rows `start..end` of a rank-2 tensor.
    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let sa = self.value(a).shape().to_vec();
        if sa.len() != 2 || start >= end || end > sa[0] {
            return Err(Error::Shape {
                op: "slice_rows",
                lhs: sa,
                rhs: vec![start, end],
            });
        }
        let c = sa[1];
        let values = self.value(a).values()[start * c..end * c].to_vec();
        let value = Tensor::new(vec![end - start, c], values)?;
        Ok(self.push(Op::SliceRows { a, start, end }, value))
    }

    /// Mean over all elements, as a scalar node.
    pub fn mean_reduce(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a);
        let mean = t.values().iter().sum::<f64>() / t.numel() as f64;
        Ok(self.push(Op::MeanReduce { a }, Tensor::scalar(mean)))
    }

    /// Sum over all elements, as a scalar node.
    pub fn sum_reduce(&mut self, a: NodeId) -> Result<NodeId> {
        let sum = self.value(a).values().iter().sum::<f64>();
        Ok(self.push(Op::SumReduce { a }, Tensor::scalar(sum)))
    }

    /// Mean over all elements of the squared difference.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let sp = self.value(pred).shape();
        let st = self.value(target).shape();
        if sp != st {
            return Err(Error::Shape {
                op: "mse_loss",
                lhs: sp.to_vec(),
                rhs: st.to_vec(),
            });
        }
        let n = self.value(pred).numel() as f64;
        let sum: f64 = self
            .value(pred)
            .values()
            .iter()
            .zip(self.value(target).values())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(Op::MseLoss { pred, target }, Tensor::scalar(sum / n)))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`, stabilized by
    /// max-subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let t = self.value(logits);
        if t.shape().len() != 2 || t.rows() != labels.len() || labels.is_empty() {
            return Err(Error::Shape {
                op: "softmax_cross_entropy",
                lhs: t.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let c = t.cols();
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::usage(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let row = t.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let logsum = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            total -= row[label] - max - logsum;
        }
        let mean = total / labels.len() as f64;
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
            Tensor::scalar(mean),
        ))
    }

    fn accumulate(&mut self, id: NodeId, delta: &[f64]) {
        let slot = &mut self.grads[id.0];
        match slot {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Reverse sweep from a scalar root. May be called once per graph;
    /// a second call is rejected rather than silently accumulating.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.backward_done {
            return Err(Error::usage(
                "backward already ran on this graph; build a fresh graph per backward pass",
            ));
        }
        if !self.value(root).is_scalar() {
            return Err(Error::usage(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        self.backward_done = true;
        self.grads[root.0] = Some(vec![1.0]);

        for i in (0..self.nodes.len()).rev() {
            let grad = match self.grads[i].clone() {
                Some(g) => g,
                None => continue, // not reachable from root
            };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add { a, b } => {
                    self.accumulate(a, &grad);
                    match self.align("add", a, b).expect("checked at forward") {
                        Align::Same => self.accumulate(b, &grad),
                        Align::BiasRight => {
                            let n = self.value(b).numel();
                            let mut db = vec![0.0; n];
                            for (j, g) in grad.iter().enumerate() {
                                db[j % n] += g;
                            }
                            self.accumulate(b, &db);
                        }
                    }
                }
                Op::Sub { a, b } => {
                    self.accumulate(a, &grad);
                    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                    match self.align("sub", a, b).expect("checked at forward") {
                        Align::Same => self.accumulate(b, &neg),
                        Align::BiasRight => {
                            let n = self.value(b).numel();
                            let mut db = vec![0.0; n];
                            for (j, g) in neg.iter().enumerate() {
                                db[j % n] += g;
                            }
                            self.accumulate(b, &db);
                        }
                    }
                }
                Op::Scale { a, c } => {
                    let da: Vec<f64> = grad.iter().map(|g| g * c).collect();
                    self.accumulate(a, &da);
                }
                Op::Mul { a, b } => {
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(self.value(b).values())
                        .map(|(g, &y)| g * y)
                        .collect();
                    let db: Vec<f64> = grad
                        .iter()
                        .zip(self.value(a).values())
                        .map(|(g, &x)| g * x)
                        .collect();
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::MatMul { a, b } => {
                    let (m, k) = (self.value(a).rows(), self.value(a).cols());
                    let n = self.value(b).cols();
                    // dA = G * B^T
                    let bv = self.value(b).values();
                    let mut bt = vec![0.0; n * k];
                    for p in 0..k {
                        for j in 0..n {
                            bt[j * k + p] = bv[p * n + j];
                        }
                    }
                    let da = matmul_values(&grad, &bt, m, n, k);
                    // dB = A^T * G
                    let av = self.value(a).values();
                    let mut at = vec![0.0; k * m];
                    for i2 in 0..m {
                        for p in 0..k {
                            at[p * m + i2] = av[i2 * k + p];
                        }
                    }
                    let db = matmul_values(&at, &grad, k, m, n);
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Relu { a } => {
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(self.value(a).values())
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect();
                    self.accumulate(a, &da);
                }
                Op::Softplus { a } => {
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(self.value(a).values())
                        .map(|(g, &x)| g / (1.0 + (-x).exp()))
                        .collect();
                    self.accumulate(a, &da);
                }
                Op::Clamp01 { a } => {
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(self.value(a).values())
                        .map(|(g, &x)| if (0.0..=1.0).contains(&x) { *g } else { 0.0 })
                        .collect();
                    self.accumulate(a, &da);
                }
                Op::Reshape { a } => self.accumulate(a, &grad),
                Op::ConcatRows { a, b } => {
                    let na = self.value(a).numel();
                    self.accumulate(a, &grad[..na]);
                    self.accumulate(b, &grad[na..]);
                }
                Op::SliceRows { a, start, end } => {
                    let c = self.value(a).cols();
                    let mut da = vec![0.0; self.value(a).numel()];
                    da[start * c..end * c].copy_from_slice(&grad);
                    self.accumulate(a, &da);
                }
                Op::MeanReduce { a } => {
                    let n = self.value(a).numel() as f64;
                    let da = vec![grad[0] / n; self.value(a).numel()];
                    self.accumulate(a, &da);
                }
                Op::SumReduce { a } => {
                    let da = vec![grad[0]; self.value(a).numel()];
                    self.accumulate(a, &da);
                }
                Op::MseLoss { pred, target } => {
                    let n = self.value(pred).numel() as f64;
                    let dp: Vec<f64> = self
                        .value(pred)
                        .values()
                        .iter()
                        .zip(self.value(target).values())
                        .map(|(&p, &t)| grad[0] * 2.0 * (p - t) / n)
                        .collect();
                    let dt: Vec<f64> = dp.iter().map(|d| -d).collect();
                    self.accumulate(pred, &dp);
                    self.accumulate(target, &dt);
                }
                Op::SoftmaxCrossEntropy { logits, labels } => {
                    let batch = labels.len() as f64;
                    let c = self.value(logits).cols();
                    let mut dl = softmax_rows(self.value(logits));
                    for (i, &label) in labels.iter().enumerate() {
                        dl[i * c + label] -= 1.0;
                    }
                    for d in dl.iter_mut() {
                        *d *= grad[0] / batch;
                    }
                    self.accumulate(logits, &dl);
                }
            }
        }
        Ok(())
    }
}
