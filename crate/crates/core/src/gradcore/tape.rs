use super::matrix::{dot, l2_norm, Matrix};
use crate::error::{Error, Result};
use crate::loss::fused;

/// Rows whose Euclidean norm falls below this are rejected by
/// [`Tape::row_l2_normalize`].
pub const EPSILON_NORM: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Parameter,
    MatMul(NodeId, NodeId),
    /// a · bᵀ
    MatMulT(NodeId, NodeId),
    RowL2Normalize {
        input: NodeId,
        norms: Vec<f64>,
    },
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Tanh(NodeId),
    GatherRows {
        table: NodeId,
        indices: Vec<usize>,
    },
    MeanPoolRows {
        input: NodeId,
        segments: Vec<usize>,
    },
    ScaleByExp {
        x: NodeId,
        s: NodeId,
        factor: f64,
    },
    Sum(NodeId),
    SumSquares(NodeId),
    WeightedSum {
        x: NodeId,
        weights: Matrix,
    },
    TemperedBce {
        logits: NodeId,
        scale: NodeId,
        targets: Matrix,
        pos_weights: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

/// Define-by-run recording of a forward computation. Nodes are appended
/// in evaluation order, so every node's inputs precede it.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    parameters: Vec<NodeId>,
}

/// Gradients of a scalar loss with respect to each parameter node, in
/// registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    entries: Vec<(NodeId, Matrix)>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.entries
            .iter()
            .find_map(|(n, g)| (*n == id).then_some(g))
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Matrix)> {
        self.entries.iter().map(|(n, g)| (*n, g))
    }

    pub fn into_matrices(self) -> Vec<Matrix> {
        self.entries.into_iter().map(|(_, g)| g).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
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

    pub fn parameters(&self) -> &[NodeId] {
        &self.parameters
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Matrix, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Constant, value, &[])
    }

    /// Registers a trainable leaf.
    pub fn parameter(&mut self, value: Matrix) -> NodeId {
        self.nodes.push(Node {
            op: Op::Parameter,
            value,
            requires_grad: true,
        });
        let id = NodeId(self.nodes.len() - 1);
        self.parameters.push(id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value, &[a, b]))
    }

    /// `a · bᵀ`; used for pairwise row similarities.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(Op::MatMulT(a, b), value, &[a, b]))
    }

    pub fn row_l2_normalize(&mut self, a: NodeId) -> Result<NodeId> {
        let input = self.value(a);
        let mut value = input.clone();
        let mut norms = Vec::with_capacity(input.rows());
        for i in 0..input.rows() {
            let norm = l2_norm(input.row(i));
            if !(norm >= EPSILON_NORM) {
                return Err(Error::DegenerateRow { row: i, norm });
            }
            value.row_mut(i).iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        Ok(self.push(Op::RowL2Normalize { input: a, norms }, value, &[a]))
    }

    /// `x · w + b`, with the single-row `b` broadcast over rows.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (wv, bv) = (self.value(w), self.value(b));
        if bv.rows() != 1 || bv.cols() != wv.cols() {
            return Err(Error::Dimension(format!(
                "bias {}x{} for weight {}x{}",
                bv.rows(),
                bv.cols(),
                wv.rows(),
                wv.cols()
            )));
        }
        let mut value = self.value(x).matmul(wv)?;
        let bias = bv.row(0).to_vec();
        for i in 0..value.rows() {
            for (v, b) in value.row_mut(i).iter_mut().zip(&bias) {
                *v += b;
            }
        }
        Ok(self.push(Op::Affine { x, w, b }, value, &[x, w, b]))
    }

    pub fn tanh_act(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), value, &[x])
    }

    pub fn gather_rows(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        if let Some(&index) = indices.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::Index {
                index,
                len: t.rows(),
            });
        }
        let value = t.select_rows(indices);
        Ok(self.push(
            Op::GatherRows {
                table,
                indices: indices.to_vec(),
            },
            value,
            &[table],
        ))
    }

    /// One output row per segment: the mean of that segment's consecutive rows.
    pub fn mean_pool_rows(&mut self, x: NodeId, segment_lengths: &[usize]) -> Result<NodeId> {
        let input = self.value(x);
        if let Some(k) = segment_lengths.iter().position(|&n| n == 0) {
            return Err(Error::EmptySegment(k));
        }
        let total: usize = segment_lengths.iter().sum();
        if total != input.rows() {
            return Err(Error::Dimension(format!(
                "segments cover {total} rows, input has {}",
                input.rows()
            )));
        }
        let mut value = Matrix::zeros(segment_lengths.len(), input.cols());
        let mut start = 0;
        for (k, &len) in segment_lengths.iter().enumerate() {
            let out = value.row_mut(k);
            for r in start..start + len {
                for (o, v) in out.iter_mut().zip(input.row(r)) {
                    *o += v;
                }
            }
            out.iter_mut().for_each(|o| *o /= len as f64);
            start += len;
        }
        Ok(self.push(
            Op::MeanPoolRows {
                input: x,
                segments: segment_lengths.to_vec(),
            },
            value,
            &[x],
        ))
    }

    /// `x · exp(s)` for a 1×1 node `s`.
    pub fn scale_by_exp(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let factor = self.value(s).item()?.exp();
        let value = self.value(x).scale(factor);
        Ok(self.push(Op::ScaleByExp { x, s, factor }, value, &[x, s]))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Matrix::scalar(self.value(x).sum());
        self.push(Op::Sum(x), value, &[x])
    }

    pub fn sum_squares(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).as_slice();
        let value = Matrix::scalar(dot(v, v));
        self.push(Op::SumSquares(x), value, &[x])
    }

    /// `Σ weights ⊙ x`; projects any node onto a scalar.
    pub fn weighted_sum(&mut self, x: NodeId, weights: Matrix) -> Result<NodeId> {
        let v = self.value(x);
        if v.shape() != weights.shape() {
            return Err(Error::Dimension(format!(
                "weights {:?} for node {:?}",
                weights.shape(),
                v.shape()
            )));
        }
        let value = Matrix::scalar(dot(v.as_slice(), weights.as_slice()));
        Ok(self.push(Op::WeightedSum { x, weights }, value, &[x]))
    }

    /// Mean positive-weighted BCE of `sigmoid(logits · exp(scale))`,
    /// fused into one numerically stable node.
    pub fn tempered_bce(
        &mut self,
        logits: NodeId,
        scale: NodeId,
        targets: &Matrix,
        pos_weights: &[f64],
    ) -> Result<NodeId> {
        let x = self.value(logits);
        if x.shape() != targets.shape() || pos_weights.len() != x.cols() {
            return Err(Error::Dimension(format!(
                "logits {:?}, targets {:?}, {} positive weights",
                x.shape(),
                targets.shape(),
                pos_weights.len()
            )));
        }
        let factor = self.value(scale).item()?.exp();
        let loss = fused::mean_loss(x, targets, pos_weights, factor)?;
        Ok(self.push(
            Op::TemperedBce {
                logits,
                scale,
                targets: targets.clone(),
                pos_weights: pos_weights.to_vec(),
            },
            Matrix::scalar(loss),
            &[logits, scale],
        ))
    }

    /// Reverse sweep from a 1×1 `loss` node. Every registered parameter
    /// receives a gradient; parameters the loss does not depend on get zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            let (r, c) = self.value(loss).shape();
            return Err(Error::Shape(format!("loss must be 1x1, found {r}x{c}")));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let entries = self
            .parameters
            .iter()
            .map(|&p| {
                let g = grads
                    .get_mut(p.0)
                    .and_then(Option::take)
                    .unwrap_or_else(|| {
                        let (r, c) = self.value(p).shape();
                        Matrix::zeros(r, c)
                    });
                (p, g)
            })
            .collect();
        Ok(Gradients { entries })
    }

    fn propagate(
        &self,
        op: &Op,
        out: &Matrix,
        g: &Matrix,
        grads: &mut [Option<Matrix>],
    ) -> Result<()> {
        let mut acc = |id: NodeId, delta: Matrix| {
            if !self.nodes[id.0].requires_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let needs = |id: NodeId| self.nodes[id.0].requires_grad;

        match op {
            Op::Constant | Op::Parameter => {}
            Op::MatMul(a, b) => {
                if needs(*a) {
                    acc(*a, g.matmul_t(self.value(*b))?);
                }
                if needs(*b) {
                    acc(*b, self.value(*a).t_matmul(g)?);
                }
            }
            Op::MatMulT(a, b) => {
                // out = a·bᵀ: da = g·b, db = gᵀ·a
                if needs(*a) {
                    acc(*a, g.matmul(self.value(*b))?);
                }
                if needs(*b) {
                    acc(*b, g.t_matmul(self.value(*a))?);
                }
            }
            Op::RowL2Normalize { input, norms } => {
                let mut d = Matrix::zeros(out.rows(), out.cols());
                for (i, &norm) in norms.iter().enumerate() {
                    let u = out.row(i);
                    let gi = g.row(i);
                    let ug = dot(u, gi);
                    for ((dv, &uv), &gv) in d.row_mut(i).iter_mut().zip(u).zip(gi) {
                        *dv = (gv - uv * ug) / norm;
                    }
                }
                acc(*input, d);
            }
            Op::Affine { x, w, b } => {
                if needs(*x) {
                    acc(*x, g.matmul_t(self.value(*w))?);
                }
                if needs(*w) {
                    acc(*w, self.value(*x).t_matmul(g)?);
                }
                if needs(*b) {
                    let mut db = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, v) in db.row_mut(0).iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    acc(*b, db);
                }
            }
            Op::Tanh(x) => {
                let d = Matrix::from_vec(
                    g.rows(),
                    g.cols(),
                    g.as_slice()
                        .iter()
                        .zip(out.as_slice())
                        .map(|(gv, t)| gv * (1.0 - t * t))
                        .collect(),
                )?;
                acc(*x, d);
            }
            Op::GatherRows { table, indices } => {
                let t = self.value(*table);
                let mut d = Matrix::zeros(t.rows(), t.cols());
                for (k, &r) in indices.iter().enumerate() {
                    for (dv, gv) in d.row_mut(r).iter_mut().zip(g.row(k)) {
                        *dv += gv;
                    }
                }
                acc(*table, d);
            }
            Op::MeanPoolRows { input, segments } => {
                let mut d = Matrix::zeros(self.value(*input).rows(), g.cols());
                let mut start = 0;
                for (k, &len) in segments.iter().enumerate() {
                    let inv = 1.0 / len as f64;
                    for r in start..start + len {
                        for (dv, gv) in d.row_mut(r).iter_mut().zip(g.row(k)) {
                            *dv = gv * inv;
                        }
                    }
                    start += len;
                }
                acc(*input, d);
            }
            Op::ScaleByExp { x, s, factor } => {
                if needs(*x) {
                    acc(*x, g.scale(*factor));
                }
                if needs(*s) {
                    let ds = dot(g.as_slice(), out.as_slice());
                    acc(*s, Matrix::scalar(ds));
                }
            }
            Op::Sum(x) => {
                let (r, c) = self.value(*x).shape();
                acc(*x, Matrix::filled(r, c, g.item()?));
            }
            Op::SumSquares(x) => {
                acc(*x, self.value(*x).scale(2.0 * g.item()?));
            }
            Op::WeightedSum { x, weights } => {
                acc(*x, weights.scale(g.item()?));
            }
            Op::TemperedBce {
                logits,
                scale,
                targets,
                pos_weights,
            } => {
                let upstream = g.item()?;
                let x = self.value(*logits);
                let factor = self.value(*scale).item()?.exp();
                let (dx, ds) = fused::mean_loss_grads(x, targets, pos_weights, factor);
                if needs(*logits) {
                    acc(*logits, dx.scale(upstream));
                }
                if needs(*scale) {
                    acc(*scale, Matrix::scalar(ds * upstream));
                }
            }
        }
        Ok(())
    }
}
