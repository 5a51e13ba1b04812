//! Propagation operators for directed message passing.
//!
//! Four operator kinds parameterize the backbones:
//!
//! - `SymNorm`: the renormalized symmetric operator
//!   `D̂^{-1/2}(A_sym + I)D̂^{-1/2}` over the symmetrized graph.
//! - `RWout`: row-normalized `A + I`, aggregating along out-links.
//! - `RWin`: row-normalized `Aᵀ + I`, aggregating along in-links.
//! - `BBRW`: row-normalized `βA + (1−β)Aᵀ + I`, the biased bidirectional
//!   walk whose trust weight `β ∈ [0, 1]` interpolates between the two
//!   (`β = 1` is `RWout`, `β = 0` is `RWin`).
//!
//! Self-loops are added before normalization by default; they keep every
//! row sum strictly positive. Training uses the sparse form built here;
//! attacks record the dense differentiable form through
//! [`build_differentiable_operator`], which produces bit-identical entries
//! at `P = 0`.

use std::sync::Arc;

use ndarray::Array2;

use crate::diff::{NodeId, OperatorFamily, PerturbedOpSpec, RowMask, Tape};
use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::sparse::{Csr, SharedCsr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OperatorKind {
    SymNorm,
    RWout,
    RWin,
    Bbrw,
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperatorKind::SymNorm => write!(f, "sym"),
            OperatorKind::RWout => write!(f, "rwout"),
            OperatorKind::RWin => write!(f, "rwin"),
            OperatorKind::Bbrw => write!(f, "bbrw"),
        }
    }
}

/// Which aggregation operator a model uses.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PropagationSpec {
    pub kind: OperatorKind,
    /// Trust weight on out-links; meaningful only for `Bbrw`.
    pub beta: f64,
    pub add_self_loops: bool,
}

impl PropagationSpec {
    pub fn new(kind: OperatorKind, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::config(format!("beta must be in [0, 1], got {beta}")));
        }
        Ok(PropagationSpec {
            kind,
            beta,
            add_self_loops: true,
        })
    }

    pub fn sym() -> Self {
        PropagationSpec::new(OperatorKind::SymNorm, 0.0).unwrap()
    }

    pub fn rw_out() -> Self {
        PropagationSpec::new(OperatorKind::RWout, 1.0).unwrap()
    }

    pub fn rw_in() -> Self {
        PropagationSpec::new(OperatorKind::RWin, 0.0).unwrap()
    }

    pub fn bbrw(beta: f64) -> Result<Self> {
        PropagationSpec::new(OperatorKind::Bbrw, beta)
    }

    /// Effective out-link weight of the random-walk family.
    fn effective_beta(&self) -> f64 {
        match self.kind {
            OperatorKind::RWout => 1.0,
            OperatorKind::RWin => 0.0,
            _ => self.beta,
        }
    }
}

const EMPTY: &[usize] = &[];

/// Build the sparse propagation matrix for a fixed graph.
pub fn build_operator(g: &DirectedGraph, spec: &PropagationSpec) -> Result<Csr> {
    let n = g.num_nodes();
    match spec.kind {
        OperatorKind::SymNorm => {
            let sym = g.symmetrize();
            let inv_sqrt: Vec<f64> = (0..n)
                .map(|i| 1.0 / ((sym.d_out(i) + 1) as f64).sqrt())
                .collect();
            let mut triplets = Vec::with_capacity(sym.num_edges() + n);
            for i in 0..n {
                triplets.push((i, i, inv_sqrt[i] * inv_sqrt[i]));
                for &j in sym.out_neighbors(i) {
                    triplets.push((i, j, inv_sqrt[i] * inv_sqrt[j]));
                }
            }
            Csr::from_triplets(n, n, triplets)
        }
        OperatorKind::RWout => rw_rows(g, spec, |g, i| (g.out_neighbors(i), EMPTY)),
        OperatorKind::RWin => rw_rows(g, spec, |g, i| (EMPTY, g.in_neighbors(i))),
        OperatorKind::Bbrw => {
            rw_rows(g, spec, |g, i| (g.out_neighbors(i), g.in_neighbors(i)))
        }
    }
}

/// Shared row builder for the random-walk family. Row `i` merges forward
/// neighbors (weight `β`), reverse neighbors (weight `1−β`), and the
/// optional self-loop, then divides by the row total. Entries are emitted
/// in ascending column order so summation order matches the dense path.
fn rw_rows(
    g: &DirectedGraph,
    spec: &PropagationSpec,
    neighbors: impl Fn(&DirectedGraph, usize) -> (&[usize], &[usize]),
) -> Result<Csr> {
    let n = g.num_nodes();
    let beta = spec.effective_beta();
    let self_loop = if spec.add_self_loops { 1.0 } else { 0.0 };
    let mut triplets = Vec::new();
    for i in 0..n {
        let (fwd, rev) = neighbors(g, i);
        let mut row: Vec<(usize, f64, f64)> = Vec::with_capacity(fwd.len() + rev.len() + 1);
        // Merge the two sorted neighbor lists into (col, fwd01, rev01).
        let (mut a, mut b) = (0usize, 0usize);
        while a < fwd.len() || b < rev.len() {
            let ca = fwd.get(a).copied().unwrap_or(usize::MAX);
            let cb = rev.get(b).copied().unwrap_or(usize::MAX);
            if ca < cb {
                row.push((ca, 1.0, 0.0));
                a += 1;
            } else if cb < ca {
                row.push((cb, 0.0, 1.0));
                b += 1;
            } else {
                row.push((ca, 1.0, 1.0));
                a += 1;
                b += 1;
            }
        }
        // Row sum in ascending column order, self-loop at the diagonal.
        let mut sum = 0.0;
        let mut values = Vec::with_capacity(row.len() + 1);
        let mut emitted_diag = false;
        let emit = |col: usize, v: f64, sum: &mut f64, values: &mut Vec<(usize, f64)>| {
            *sum += v;
            values.push((col, v));
        };
        for &(col, f, r) in &row {
            if self_loop > 0.0 && !emitted_diag && col >= i {
                // Neighbor lists never hold the diagonal.
                debug_assert_ne!(col, i);
                if col > i {
                    emit(i, self_loop, &mut sum, &mut values);
                    emitted_diag = true;
                }
            }
            let v = beta * f + (1.0 - beta) * r;
            emit(col, v, &mut sum, &mut values);
        }
        if self_loop > 0.0 && !emitted_diag {
            emit(i, self_loop, &mut sum, &mut values);
        }
        if sum <= 0.0 {
            return Err(Error::numerical(format!(
                "row {i} has no mass; enable self-loops or check isolated nodes"
            )));
        }
        for (col, v) in values {
            triplets.push((i, col, v / sum));
        }
    }
    Csr::from_triplets(n, n, triplets)
}

/// Sparse operator plus its transpose, ready for repeated propagation.
pub fn build_shared_operator(g: &DirectedGraph, spec: &PropagationSpec) -> Result<SharedCsr> {
    Ok(SharedCsr::new(build_operator(g, spec)?))
}

/// Reusable context for recording the differentiable perturbed operator:
/// the densified adjacency is built once per attack and shared across PGD
/// iterations.
#[derive(Debug, Clone)]
pub struct DiffOperatorBuilder {
    adj: Arc<Array2<f64>>,
    spec: PropagationSpec,
    mask: Option<RowMask>,
}

impl DiffOperatorBuilder {
    pub fn new(g: &DirectedGraph, spec: PropagationSpec, mask: Option<RowMask>) -> Result<Self> {
        if let Some(m) = &mask {
            if m.row >= g.num_nodes() || m.masked.len() != g.num_nodes() {
                return Err(Error::shape("mask does not match graph size".to_string()));
            }
        }
        if !(0.0..=1.0).contains(&spec.beta) {
            return Err(Error::config(format!("beta {} outside [0, 1]", spec.beta)));
        }
        Ok(DiffOperatorBuilder {
            adj: Arc::new(g.to_dense()),
            spec,
            mask,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.nrows()
    }

    fn family(&self) -> OperatorFamily {
        match self.spec.kind {
            OperatorKind::SymNorm => OperatorFamily::Symmetric,
            _ => OperatorFamily::RandomWalk {
                beta: self.spec.effective_beta(),
                self_loops: self.spec.add_self_loops,
            },
        }
    }

    /// Record the operator for perturbation node `p` (an n×n matrix of
    /// flip variables in `[0, 1]`; masked and diagonal entries are treated
    /// as zero).
    pub fn record(&self, tape: &mut Tape, p: NodeId) -> Result<NodeId> {
        if tape.shape(p) != (self.num_nodes(), self.num_nodes()) {
            return Err(Error::shape(format!(
                "perturbation shape {:?} does not match graph n={}",
                tape.shape(p),
                self.num_nodes()
            )));
        }
        tape.perturbed_operator(
            p,
            PerturbedOpSpec {
                adj: self.adj.clone(),
                family: self.family(),
                mask: self.mask.clone(),
            },
        )
    }
}

/// Record the differentiable operator `Ã_spec(P)` on `tape`.
pub fn build_differentiable_operator(
    tape: &mut Tape,
    g: &DirectedGraph,
    spec: &PropagationSpec,
    mask: Option<RowMask>,
    p: NodeId,
) -> Result<NodeId> {
    DiffOperatorBuilder::new(g, *spec, mask)?.record(tape, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_rows_close(csr: &Csr, expected: &[&[f64]]) {
        let dense = csr.to_dense();
        for (i, row) in expected.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                assert!(
                    (dense[[i, j]] - e).abs() < 1e-15,
                    "entry ({i}, {j}): {} vs {e}",
                    dense[[i, j]]
                );
            }
        }
    }

    #[test]
    fn bbrw_beta_one_single_edge() {
        // β = 1 on {(0,1)} reduces to RWout with a self-loop.
        let g = DirectedGraph::new(2, &[(0, 1)]).unwrap();
        let op = build_operator(&g, &PropagationSpec::bbrw(1.0).unwrap()).unwrap();
        assert_rows_close(&op, &[&[0.5, 0.5], &[0.0, 1.0]]);
    }

    #[test]
    fn bbrw_beta_point_seven_hand_computed() {
        // A_β = 0.7A + 0.3Aᵀ + I on {(0,1)}:
        // row 0 = [1/1.7, 0.7/1.7], row 1 = [0.3/1.3, 1/1.3].
        let g = DirectedGraph::new(2, &[(0, 1)]).unwrap();
        let op = build_operator(&g, &PropagationSpec::bbrw(0.7).unwrap()).unwrap();
        assert_rows_close(
            &op,
            &[&[1.0 / 1.7, 0.7 / 1.7], &[0.3 / 1.3, 1.0 / 1.3]],
        );
    }

    #[test]
    fn bbrw_beta_zero_equals_rw_in() {
        let g = DirectedGraph::new(4, &[(0, 1), (1, 2), (3, 1), (2, 0)]).unwrap();
        let bbrw = build_operator(&g, &PropagationSpec::bbrw(0.0).unwrap()).unwrap();
        let rwin = build_operator(&g, &PropagationSpec::rw_in()).unwrap();
        assert_eq!(bbrw.to_dense(), rwin.to_dense());
    }

    #[test]
    fn sym_norm_is_symmetric() {
        let g = DirectedGraph::new(3, &[(0, 1), (2, 1)]).unwrap();
        let op = build_operator(&g, &PropagationSpec::sym()).unwrap().to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(op[[i, j]], op[[j, i]]);
            }
        }
    }

    #[test]
    fn rows_are_stochastic() {
        let g = DirectedGraph::new(5, &[(0, 1), (1, 2), (3, 1), (2, 0), (4, 0)]).unwrap();
        for spec in [
            PropagationSpec::rw_out(),
            PropagationSpec::rw_in(),
            PropagationSpec::bbrw(0.3).unwrap(),
        ] {
            let op = build_operator(&g, &spec).unwrap();
            for i in 0..5 {
                assert!((op.row_sum(i) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn self_loops_off_requires_positive_degree() {
        let g = DirectedGraph::new(2, &[(0, 1)]).unwrap();
        let mut spec = PropagationSpec::rw_out();
        spec.add_self_loops = false;
        // Node 1 has no out-links.
        assert!(build_operator(&g, &spec).is_err());
    }

    #[test]
    fn invalid_beta_rejected() {
        assert!(PropagationSpec::bbrw(1.5).is_err());
        assert!(PropagationSpec::bbrw(-0.1).is_err());
    }

    #[test]
    fn zero_perturbation_matches_sparse_operator() {
        let g = DirectedGraph::new(4, &[(0, 1), (1, 2), (3, 1), (2, 0)]).unwrap();
        for spec in [
            PropagationSpec::sym(),
            PropagationSpec::rw_out(),
            PropagationSpec::rw_in(),
            PropagationSpec::bbrw(0.7).unwrap(),
        ] {
            let sparse = build_operator(&g, &spec).unwrap().to_dense();
            let mut tape = Tape::new();
            let p = tape.leaf(Array2::zeros((4, 4)));
            let node = build_differentiable_operator(&mut tape, &g, &spec, None, p).unwrap();
            assert_eq!(tape.value(node), &sparse, "kind {:?}", spec.kind);
        }
    }

    #[test]
    fn single_added_edge_fully_present() {
        // P_{0,1} = 1 on an empty 2-node graph, RWout: row 0 = [1/2, 1/2].
        let g = DirectedGraph::new(2, &[]).unwrap();
        let mut tape = Tape::new();
        let mut p = Array2::zeros((2, 2));
        p[[0, 1]] = 1.0;
        let p = tape.leaf(p);
        let node =
            build_differentiable_operator(&mut tape, &g, &PropagationSpec::rw_out(), None, p)
                .unwrap();
        let v = tape.value(node);
        assert_eq!(v[[0, 0]], 0.5);
        assert_eq!(v[[0, 1]], 0.5);
        assert_eq!(v[[1, 1]], 1.0);
    }
}
