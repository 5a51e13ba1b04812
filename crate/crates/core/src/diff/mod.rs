//! Tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records operations in topological (recording) order, computes
//! forward values eagerly, and replays the list once in reverse on
//! [`Tape::backward`]. Scalars are 1×1 matrices. The op set covers exactly
//! what the model forward passes and the attack loss need; every backward
//! rule is validated against central finite differences in the test suite.

mod kernels;
pub mod operator;

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sparse::SharedCsr;

pub use operator::{OperatorFamily, PerturbedOpSpec, RowMask};

/// Dense product with the same zero-skipping kernel the tape uses.
pub fn dense_matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    kernels::matmul_nn(a, b)
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// Fixed sparse LHS; backward produces gradients only for the RHS.
    SpmmConst { lhs: SharedCsr, rhs: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// `(r×c) + (1×c)` row-vector broadcast.
    AddRowVec(NodeId, NodeId),
    /// `(r×c) + (r×1)` column-vector broadcast.
    AddColVec(NodeId, NodeId),
    RowSum(NodeId),
    RowNormalize { x: NodeId, row_sums: Vec<f64> },
    Transpose(NodeId),
    Relu(NodeId),
    /// Multiplication by a pre-sampled dropout mask.
    DropoutMask { x: NodeId, mask: Arc<Array2<f64>> },
    LogSoftmax(NodeId),
    /// Mean negative log-likelihood of `labels` at `rows`, over log-probs.
    NllRows {
        logp: NodeId,
        rows: Arc<Vec<usize>>,
        labels: Arc<Vec<usize>>,
    },
    /// Margin `z_label − max_{c≠label} z_c` at one row of a logit matrix.
    MarginRow {
        logits: NodeId,
        row: usize,
        label: usize,
        runner_up: usize,
    },
    /// Fused propagation operator over a perturbed adjacency.
    PerturbedOperator {
        p: NodeId,
        state: operator::OperatorState,
    },
}

struct NodeData {
    op: Op,
    value: Array2<f64>,
    adjoint: Option<Array2<f64>>,
    needs_grad: bool,
}

/// Reverse-mode tape. One tape per forward pass; not shared across threads.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<NodeData>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.dim()
    }

    /// Gradient of the last `backward` loss w.r.t. `id`, if it received one.
    pub fn grad(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.nodes[id.0].adjoint.as_ref()
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    fn push(&mut self, op: Op, value: Array2<f64>, needs_grad: bool) -> NodeId {
        self.nodes.push(NodeData {
            op,
            value,
            adjoint: None,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(Error::shape(format!("matmul: {ar}x{ac} * {br}x{bc}")));
        }
        let value = kernels::matmul_nn(self.value(a), self.value(b));
        let needs = self.needs(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), value, needs))
    }

    pub fn spmm(&mut self, lhs: &SharedCsr, rhs: NodeId) -> Result<NodeId> {
        let value = lhs.mat.matmul_dense(self.value(rhs))?;
        let needs = self.needs(&[rhs]);
        Ok(self.push(
            Op::SpmmConst {
                lhs: lhs.clone(),
                rhs,
            },
            value,
            needs,
        ))
    }

    fn elementwise(&mut self, a: NodeId, b: NodeId, name: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{name}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "add")?;
        let value = self.value(a) + self.value(b);
        let needs = self.needs(&[a, b]);
        Ok(self.push(Op::Add(a, b), value, needs))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "sub")?;
        let value = self.value(a) - self.value(b);
        let needs = self.needs(&[a, b]);
        Ok(self.push(Op::Sub(a, b), value, needs))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "mul")?;
        let value = self.value(a) * self.value(b);
        let needs = self.needs(&[a, b]);
        Ok(self.push(Op::Mul(a, b), value, needs))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a) * c;
        let needs = self.needs(&[a]);
        self.push(Op::Scale(a, c), value, needs)
    }

    pub fn add_row_vec(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (_, ac) = self.shape(a);
        if self.shape(v) != (1, ac) {
            return Err(Error::shape(format!(
                "add_row_vec: {:?} + {:?}",
                self.shape(a),
                self.shape(v)
            )));
        }
        let mut value = self.value(a).clone();
        let vv = self.value(v).row(0).to_owned();
        for mut row in value.rows_mut() {
            for (o, &b) in row.iter_mut().zip(vv.iter()) {
                *o += b;
            }
        }
        let needs = self.needs(&[a, v]);
        Ok(self.push(Op::AddRowVec(a, v), value, needs))
    }

    pub fn add_col_vec(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (ar, _) = self.shape(a);
        if self.shape(v) != (ar, 1) {
            return Err(Error::shape(format!(
                "add_col_vec: {:?} + {:?}",
                self.shape(a),
                self.shape(v)
            )));
        }
        let mut value = self.value(a).clone();
        let vv = self.value(v).column(0).to_owned();
        for (mut row, &b) in value.rows_mut().into_iter().zip(vv.iter()) {
            for o in row.iter_mut() {
                *o += b;
            }
        }
        let needs = self.needs(&[a, v]);
        Ok(self.push(Op::AddColVec(a, v), value, needs))
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let (r, _) = self.shape(a);
        let mut value = Array2::<f64>::zeros((r, 1));
        for (i, row) in self.value(a).rows().into_iter().enumerate() {
            value[[i, 0]] = row.iter().sum();
        }
        let needs = self.needs(&[a]);
        self.push(Op::RowSum(a), value, needs)
    }

    /// `y_ij = x_ij / Σ_j x_ij`; every row sum must be strictly positive.
    pub fn row_normalize(&mut self, a: NodeId) -> Result<NodeId> {
        let x = self.value(a);
        let mut row_sums = Vec::with_capacity(x.nrows());
        for (i, row) in x.rows().into_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                return Err(Error::numerical(format!(
                    "row_normalize: nonpositive sum {s} at row {i}"
                )));
            }
            row_sums.push(s);
        }
        let mut value = x.clone();
        for (mut row, &s) in value.rows_mut().into_iter().zip(&row_sums) {
            row.mapv_inplace(|v| v / s);
        }
        let needs = self.needs(&[a]);
        Ok(self.push(Op::RowNormalize { x: a, row_sums }, value, needs))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).t().as_standard_layout().to_owned();
        let needs = self.needs(&[a]);
        self.push(Op::Transpose(a), value, needs)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(|v| v.max(0.0));
        let needs = self.needs(&[a]);
        self.push(Op::Relu(a), value, needs)
    }

    pub fn dropout(&mut self, a: NodeId, mask: Arc<Array2<f64>>) -> Result<NodeId> {
        if self.shape(a) != mask.dim() {
            return Err(Error::shape("dropout mask shape mismatch".to_string()));
        }
        let value = self.value(a) * &*mask;
        let needs = self.needs(&[a]);
        Ok(self.push(Op::DropoutMask { x: a, mask }, value, needs))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut value = x.clone();
        for mut row in value.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        let needs = self.needs(&[a]);
        self.push(Op::LogSoftmax(a), value, needs)
    }

    /// Mean cross-entropy at the given rows, taking log-probabilities.
    pub fn nll_rows(
        &mut self,
        logp: NodeId,
        rows: Arc<Vec<usize>>,
        labels: Arc<Vec<usize>>,
    ) -> Result<NodeId> {
        let (r, c) = self.shape(logp);
        if rows.is_empty() {
            return Err(Error::config("nll_rows: empty row set"));
        }
        if rows.len() != labels.len() {
            return Err(Error::shape("nll_rows: rows/labels length mismatch"));
        }
        let x = self.value(logp);
        let mut acc = 0.0;
        for (&i, &y) in rows.iter().zip(labels.iter()) {
            if i >= r || y >= c {
                return Err(Error::shape(format!("nll_rows: ({i}, {y}) out of range")));
            }
            acc -= x[[i, y]];
        }
        let value = Array2::from_elem((1, 1), acc / rows.len() as f64);
        let needs = self.needs(&[logp]);
        Ok(self.push(Op::NllRows { logp, rows, labels }, value, needs))
    }

    /// Margin `z_label − max_{c≠label} z_c` at `row`. Ties in the runner-up
    /// argmax break toward the smallest class index.
    pub fn margin_row(&mut self, logits: NodeId, row: usize, label: usize) -> Result<NodeId> {
        let (r, c) = self.shape(logits);
        if row >= r || label >= c || c < 2 {
            return Err(Error::shape(format!(
                "margin_row: row {row}, label {label} on {r}x{c}"
            )));
        }
        let z = self.value(logits);
        let mut runner_up = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for j in 0..c {
            if j != label && z[[row, j]] > best {
                best = z[[row, j]];
                runner_up = j;
            }
        }
        let value = Array2::from_elem((1, 1), z[[row, label]] - best);
        let needs = self.needs(&[logits]);
        Ok(self.push(
            Op::MarginRow {
                logits,
                row,
                label,
                runner_up,
            },
            value,
            needs,
        ))
    }

    /// Fused perturbed propagation operator; see [`operator`].
    pub fn perturbed_operator(&mut self, p: NodeId, spec: PerturbedOpSpec) -> Result<NodeId> {
        let (value, norm) = operator::forward(&spec, self.value(p))?;
        let needs = self.needs(&[p]);
        Ok(self.push(
            Op::PerturbedOperator {
                p,
                state: operator::OperatorState { spec, norm },
            },
            value,
            needs,
        ))
    }

    /// Clear adjoints so another backward pass can run.
    pub fn reset_adjoints(&mut self) {
        for node in &mut self.nodes {
            node.adjoint = None;
        }
        self.backward_done = false;
    }

    /// Reverse sweep from a scalar loss. Populates adjoints for every node
    /// on a gradient path; a second call without [`Tape::reset_adjoints`]
    /// is an error.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.backward_done {
            return Err(Error::config(
                "backward already ran on this tape; call reset_adjoints first",
            ));
        }
        if self.shape(loss) != (1, 1) {
            return Err(Error::shape(format!(
                "backward requires a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;
        self.nodes[loss.0].adjoint = Some(Array2::from_elem((1, 1), 1.0));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad || self.nodes[id].adjoint.is_none() {
                continue;
            }
            // Inputs strictly precede `id`, so split off the tail node.
            let (before, rest) = self.nodes.split_at_mut(id);
            let node = &rest[0];
            let g = node.adjoint.as_ref().unwrap();
            let mut sink = AdjointSink { nodes: before };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if sink.wants(*a) {
                        let delta = kernels::matmul_nt(g, sink.value(*b));
                        sink.accumulate(*a, &delta);
                    }
                    if sink.wants(*b) {
                        let delta = kernels::matmul_tn(sink.value(*a), g);
                        sink.accumulate(*b, &delta);
                    }
                }
                Op::SpmmConst { lhs, rhs } => {
                    if sink.wants(*rhs) {
                        let delta = lhs.t.matmul_dense(g)?;
                        sink.accumulate(*rhs, &delta);
                    }
                }
                Op::Add(a, b) => {
                    if sink.wants(*a) {
                        sink.accumulate(*a, g);
                    }
                    if sink.wants(*b) {
                        sink.accumulate(*b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if sink.wants(*a) {
                        sink.accumulate(*a, g);
                    }
                    if sink.wants(*b) {
                        let delta = g * -1.0;
                        sink.accumulate(*b, &delta);
                    }
                }
                Op::Mul(a, b) => {
                    if sink.wants(*a) {
                        let delta = g * sink.value(*b);
                        sink.accumulate(*a, &delta);
                    }
                    if sink.wants(*b) {
                        let delta = g * sink.value(*a);
                        sink.accumulate(*b, &delta);
                    }
                }
                Op::Scale(a, c) => {
                    if sink.wants(*a) {
                        let delta = g * *c;
                        sink.accumulate(*a, &delta);
                    }
                }
                Op::AddRowVec(a, v) => {
                    if sink.wants(*a) {
                        sink.accumulate(*a, g);
                    }
                    if sink.wants(*v) {
                        let mut delta = Array2::<f64>::zeros((1, g.ncols()));
                        for row in g.rows() {
                            for (o, &x) in delta.row_mut(0).iter_mut().zip(row.iter()) {
                                *o += x;
                            }
                        }
                        sink.accumulate(*v, &delta);
                    }
                }
                Op::AddColVec(a, v) => {
                    if sink.wants(*a) {
                        sink.accumulate(*a, g);
                    }
                    if sink.wants(*v) {
                        let mut delta = Array2::<f64>::zeros((g.nrows(), 1));
                        for (i, row) in g.rows().into_iter().enumerate() {
                            delta[[i, 0]] = row.iter().sum();
                        }
                        sink.accumulate(*v, &delta);
                    }
                }
                Op::RowSum(a) => {
                    if sink.wants(*a) {
                        let (r, c) = sink.value(*a).dim();
                        let mut delta = Array2::<f64>::zeros((r, c));
                        for (i, mut row) in delta.rows_mut().into_iter().enumerate() {
                            row.fill(g[[i, 0]]);
                        }
                        sink.accumulate(*a, &delta);
                    }
                }
                Op::RowNormalize { x, row_sums } => {
                    if sink.wants(*x) {
                        let y = &node.value;
                        let mut delta = Array2::<f64>::zeros(y.dim());
                        for i in 0..y.nrows() {
                            let c: f64 = (0..y.ncols()).map(|j| g[[i, j]] * y[[i, j]]).sum();
                            for j in 0..y.ncols() {
                                delta[[i, j]] = (g[[i, j]] - c) / row_sums[i];
                            }
                        }
                        sink.accumulate(*x, &delta);
                    }
                }
                Op::Transpose(a) => {
                    if sink.wants(*a) {
                        let delta = g.t().as_standard_layout().to_owned();
                        sink.accumulate(*a, &delta);
                    }
                }
                Op::Relu(a) => {
                    if sink.wants(*a) {
                        // Subgradient 0 at exactly 0.
                        let mut delta = g.clone();
                        delta.zip_mut_with(sink.value(*a), |d, &x| {
                            if x <= 0.0 {
                                *d = 0.0;
                            }
                        });
                        sink.accumulate(*a, &delta);
                    }
                }
                Op::DropoutMask { x, mask } => {
                    if sink.wants(*x) {
                        let delta = g * &**mask;
                        sink.accumulate(*x, &delta);
                    }
                }
                Op::LogSoftmax(a) => {
                    if sink.wants(*a) {
                        let y = &node.value;
                        let mut delta = g.clone();
                        for (mut drow, yrow) in
                            delta.rows_mut().into_iter().zip(y.rows())
                        {
                            let gsum: f64 = drow.iter().sum();
                            for (d, &yv) in drow.iter_mut().zip(yrow.iter()) {
                                *d -= yv.exp() * gsum;
                            }
                        }
                        sink.accumulate(*a, &delta);
                    }
                }
                Op::NllRows { logp, rows, labels } => {
                    if sink.wants(*logp) {
                        let scale = g[[0, 0]] / rows.len() as f64;
                        let mut delta = Array2::<f64>::zeros(sink.value(*logp).dim());
                        for (&i, &y) in rows.iter().zip(labels.iter()) {
                            delta[[i, y]] -= scale;
                        }
                        sink.accumulate(*logp, &delta);
                    }
                }
                Op::MarginRow {
                    logits,
                    row,
                    label,
                    runner_up,
                } => {
                    if sink.wants(*logits) {
                        let mut delta = Array2::<f64>::zeros(sink.value(*logits).dim());
                        delta[[*row, *label]] = g[[0, 0]];
                        delta[[*row, *runner_up]] = -g[[0, 0]];
                        sink.accumulate(*logits, &delta);
                    }
                }
                Op::PerturbedOperator { p, state } => {
                    if sink.wants(*p) {
                        let mut delta = Array2::<f64>::zeros(sink.value(*p).dim());
                        operator::backward(state, &node.value, g, sink.value(*p), &mut delta);
                        sink.accumulate(*p, &delta);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mutable view of the nodes preceding the one being differentiated.
struct AdjointSink<'a> {
    nodes: &'a mut [NodeData],
}

impl AdjointSink<'_> {
    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    fn accumulate(&mut self, id: NodeId, delta: &Array2<f64>) {
        let node = &mut self.nodes[id.0];
        match &mut node.adjoint {
            Some(a) => *a += delta,
            None => node.adjoint = Some(delta.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matmul_shape_algebra() {
        let mut tape = Tape::new();
        let a = tape.leaf(Array2::zeros((2, 3)));
        let b = tape.leaf(Array2::zeros((3, 1)));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.shape(c), (2, 1));
        assert!(tape.matmul(b, a).is_err());
    }

    #[test]
    fn sum_of_leaf_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(array![[1.0, 2.0], [3.0, 4.0]]);
        let rs = tape.row_sum(x);
        let ones = tape.constant(Array2::from_elem((1, 2), 1.0));
        let loss = tape.matmul(ones, rs).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &Array2::from_elem((2, 2), 1.0));
    }

    #[test]
    fn zero_scaled_loss_gives_zero_grad() {
        let mut tape = Tape::new();
        let x = tape.leaf(array![[2.0]]);
        let loss = tape.scale(x, 0.0);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &array![[0.0]]);
    }

    #[test]
    fn relu_subgradient_zero_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(array![[0.0, -1.0, 2.0]]);
        let y = tape.relu(x);
        let ones = tape.constant(Array2::from_elem((3, 1), 1.0));
        let loss = tape.matmul(y, ones).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &array![[0.0, 0.0, 1.0]]);
    }

    #[test]
    fn backward_requires_scalar_and_reset() {
        let mut tape = Tape::new();
        let x = tape.leaf(array![[1.0, 2.0]]);
        assert!(tape.backward(x).is_err());

        let mut tape = Tape::new();
        let x = tape.leaf(array![[1.0]]);
        let y = tape.scale(x, 2.0);
        tape.backward(y).unwrap();
        assert!(tape.backward(y).is_err());
        tape.reset_adjoints();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &array![[2.0]]);
    }

    #[test]
    fn row_normalize_rejects_nonpositive_rows() {
        let mut tape = Tape::new();
        let x = tape.leaf(array![[1.0, 1.0], [0.0, 0.0]]);
        let err = tape.row_normalize(x).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        // grad of (2f + 3g) == 2 grad f + 3 grad g on the shared leaf.
        let build = |wa: f64, wb: f64| -> Array2<f64> {
            let mut tape = Tape::new();
            let x = tape.leaf(array![[1.0, -2.0], [0.5, 3.0]]);
            let xx = tape.mul(x, x).unwrap();
            let rs = tape.row_sum(xx);
            let ones = tape.constant(Array2::from_elem((1, 2), 1.0));
            let f = tape.matmul(ones, rs).unwrap();
            let sm = tape.log_softmax(x);
            let g = tape.margin_row(sm, 0, 0).unwrap();
            let fa = tape.scale(f, wa);
            let gb = tape.scale(g, wb);
            let loss = tape.add(fa, gb).unwrap();
            tape.backward(loss).unwrap();
            tape.grad(x).unwrap().clone()
        };
        let g_f = build(1.0, 0.0);
        let g_g = build(0.0, 1.0);
        let g_mix = build(2.0, 3.0);
        let expect = &g_f * 2.0 + &g_g * 3.0;
        for (a, b) in g_mix.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
