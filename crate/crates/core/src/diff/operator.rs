//! Fused differentiable propagation operator over a perturbed adjacency.
//!
//! The attacked adjacency is `Ã(P) = A + (11ᵀ − 2A) ⊙ (P ⊙ M)`: a flip
//! variable `P_ij ∈ [0, 1]` interpolates edge `(i, j)` between its clean
//! state and its toggled state, and the mask `M` pins restricted entries to
//! zero. From `Ã(P)` the operator is built in one fused tape op so that a
//! full attack iteration touches only O(1) dense n×n buffers:
//!
//! - random-walk family: row-normalize `β Ã + (1−β) Ãᵀ + s·I`
//!   (β = 1 follows out-links, β = 0 in-links),
//! - symmetric family: `D^{-1/2} (S + I) D^{-1/2}` with the probabilistic-OR
//!   symmetrization `S = Ã + Ãᵀ − Ã ⊙ Ãᵀ`, which equals binary
//!   symmetrization at the corners of the `P` box.
//!
//! Gradients flow to `P` through both the numerator and the degree
//! normalization. Backward rules are hand-derived and checked against
//! central finite differences in the test suite.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::par;

/// Entries `(row, j)` with `masked[j]` set are excluded from the
/// perturbation: forward treats them as zero and no gradient reaches them.
#[derive(Debug, Clone)]
pub struct RowMask {
    pub row: usize,
    pub masked: Arc<Vec<bool>>,
}

/// Normalization family for [`PerturbedOpSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorFamily {
    /// Row-normalized `β Ã + (1−β) Ãᵀ (+ I)`.
    RandomWalk { beta: f64, self_loops: bool },
    /// Symmetrically normalized `S + I` with OR-symmetrization.
    Symmetric,
}

/// Everything the fused op needs besides the perturbation values.
#[derive(Debug, Clone)]
pub struct PerturbedOpSpec {
    /// Clean binary adjacency, dense 0/1, zero diagonal.
    pub adj: Arc<Array2<f64>>,
    pub family: OperatorFamily,
    pub mask: Option<RowMask>,
}

impl PerturbedOpSpec {
    fn n(&self) -> usize {
        self.adj.nrows()
    }

    #[inline]
    fn masked(&self, i: usize, j: usize) -> bool {
        if i == j {
            return true;
        }
        match &self.mask {
            Some(m) => i == m.row && m.masked[j],
            None => false,
        }
    }

    /// `Ã_ij` for the given perturbation buffer.
    #[inline]
    fn entry(&self, p: &[f64], n: usize, i: usize, j: usize) -> f64 {
        let a = self.adj[[i, j]];
        if self.masked(i, j) {
            a
        } else {
            a + (1.0 - 2.0 * a) * p[i * n + j]
        }
    }
}

/// Per-node state the backward pass needs: the row sums (random walk) or
/// degree vector (symmetric).
#[derive(Debug, Clone)]
pub struct OperatorState {
    pub spec: PerturbedOpSpec,
    pub norm: Vec<f64>,
}

/// Forward pass. Returns the operator matrix and the normalization vector.
pub fn forward(spec: &PerturbedOpSpec, p: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let n = spec.n();
    if p.dim() != (n, n) {
        return Err(Error::shape(format!(
            "perturbation is {:?}, adjacency is {n}x{n}",
            p.dim()
        )));
    }
    let p_s = p.as_slice().expect("standard layout");
    let mut out = Array2::<f64>::zeros((n, n));
    match spec.family {
        OperatorFamily::RandomWalk { beta, self_loops } => {
            let s = if self_loops { 1.0 } else { 0.0 };
            let mut norm = vec![0.0f64; n];
            {
                let norm_slots: Vec<_> = norm.iter_mut().collect();
                let out_s = out.as_slice_mut().unwrap();
                // Rows are independent: fill B row i and its sum together.
                par::for_each_row_with(out_s, n, norm_slots, |i, row, r_i| {
                    let mut sum = 0.0;
                    for (j, o) in row.iter_mut().enumerate() {
                        let mut v = beta * spec.entry(p_s, n, i, j)
                            + (1.0 - beta) * spec.entry(p_s, n, j, i);
                        if i == j {
                            v += s;
                        }
                        *o = v;
                        sum += v;
                    }
                    *r_i = sum;
                });
            }
            if let Some(i) = norm.iter().position(|&r| r <= 0.0) {
                return Err(Error::numerical(format!(
                    "nonpositive row sum {} at row {i} in perturbed operator",
                    norm[i]
                )));
            }
            {
                let out_s = out.as_slice_mut().unwrap();
                let norm_ref = &norm;
                // Per-entry division matches the sparse builder bit-for-bit.
                par::for_each_row(out_s, n, |i, row| {
                    let r = norm_ref[i];
                    for o in row.iter_mut() {
                        *o /= r;
                    }
                });
            }
            Ok((out, norm))
        }
        OperatorFamily::Symmetric => {
            let mut deg = vec![0.0f64; n];
            {
                let deg_slots: Vec<_> = deg.iter_mut().collect();
                let out_s = out.as_slice_mut().unwrap();
                par::for_each_row_with(out_s, n, deg_slots, |i, row, d_i| {
                    let mut sum = 0.0;
                    for (j, o) in row.iter_mut().enumerate() {
                        let v = if i == j {
                            1.0
                        } else {
                            let f = spec.entry(p_s, n, i, j);
                            let r = spec.entry(p_s, n, j, i);
                            f + r - f * r
                        };
                        *o = v;
                        sum += v;
                    }
                    *d_i = sum;
                });
            }
            // Diagonal self-loop keeps every degree >= 1.
            let inv_sqrt: Vec<f64> = deg.iter().map(|&d| 1.0 / d.sqrt()).collect();
            {
                let out_s = out.as_slice_mut().unwrap();
                let inv_ref = &inv_sqrt;
                par::for_each_row(out_s, n, |i, row| {
                    let li = inv_ref[i];
                    for (j, o) in row.iter_mut().enumerate() {
                        *o *= li * inv_ref[j];
                    }
                });
            }
            Ok((out, deg))
        }
    }
}

/// Backward pass: accumulate `∂loss/∂P` into `grad_p` given the adjoint `g`
/// of the operator output and the forward `value`.
pub fn backward(
    state: &OperatorState,
    value: &Array2<f64>,
    g: &Array2<f64>,
    p: &Array2<f64>,
    grad_p: &mut Array2<f64>,
) {
    let spec = &state.spec;
    let n = spec.n();
    let g_s = g.as_slice().expect("standard layout");
    let o_s = value.as_slice().expect("standard layout");
    let p_s = p.as_slice().expect("standard layout");
    match spec.family {
        OperatorFamily::RandomWalk { beta, .. } => {
            let r = &state.norm;
            // c_i = Σ_k G_ik O_ik (row-normalization coupling term).
            let c: Vec<f64> = par::map_indexed(n, |i| {
                let gr = &g_s[i * n..(i + 1) * n];
                let or = &o_s[i * n..(i + 1) * n];
                let mut acc = 0.0;
                for (&gv, &ov) in gr.iter().zip(or) {
                    if gv != 0.0 {
                        acc += gv * ov;
                    }
                }
                acc
            });
            let c_ref = &c;
            // dB_ij = (G_ij − c_i)/r_i; dÃ_ij = β dB_ij + (1−β) dB_ji;
            // dP_ij = (1 − 2A_ij) M_ij dÃ_ij.
            par::for_each_row(grad_p.as_slice_mut().unwrap(), n, |i, row| {
                for (j, out) in row.iter_mut().enumerate() {
                    if spec.masked(i, j) {
                        continue;
                    }
                    let d_fwd = (g_s[i * n + j] - c_ref[i]) / r[i];
                    let d_rev = (g_s[j * n + i] - c_ref[j]) / r[j];
                    let d_a = beta * d_fwd + (1.0 - beta) * d_rev;
                    *out += (1.0 - 2.0 * spec.adj[[i, j]]) * d_a;
                }
            });
        }
        OperatorFamily::Symmetric => {
            let d = &state.norm;
            let inv_sqrt: Vec<f64> = d.iter().map(|&x| 1.0 / x.sqrt()).collect();
            // Row and column couplings of G with O.
            let c_row: Vec<f64> = par::map_indexed(n, |i| {
                let gr = &g_s[i * n..(i + 1) * n];
                let or = &o_s[i * n..(i + 1) * n];
                let mut acc = 0.0;
                for (&gv, &ov) in gr.iter().zip(or) {
                    if gv != 0.0 {
                        acc += gv * ov;
                    }
                }
                acc
            });
            let mut c_col = vec![0.0f64; n];
            for i in 0..n {
                let gr = &g_s[i * n..(i + 1) * n];
                let or = &o_s[i * n..(i + 1) * n];
                for (j, (&gv, &ov)) in gr.iter().zip(or).enumerate() {
                    if gv != 0.0 {
                        c_col[j] += gv * ov;
                    }
                }
            }
            // dd_i = −(c_row_i + c_col_i)/(2 d_i);
            // dB_ij = G_ij/√(d_i d_j) + dd_i;
            // dÃ_ij = (dB_ij + dB_ji)(1 − Ã_ji).
            let dd: Vec<f64> = (0..n)
                .map(|i| -(c_row[i] + c_col[i]) / (2.0 * d[i]))
                .collect();
            let dd_ref = &dd;
            let inv_ref = &inv_sqrt;
            par::for_each_row(grad_p.as_slice_mut().unwrap(), n, |i, row| {
                for (j, out) in row.iter_mut().enumerate() {
                    if spec.masked(i, j) {
                        continue;
                    }
                    let db_ij = g_s[i * n + j] * inv_ref[i] * inv_ref[j] + dd_ref[i];
                    let db_ji = g_s[j * n + i] * inv_ref[j] * inv_ref[i] + dd_ref[j];
                    let rev = spec.entry(p_s, n, j, i);
                    let d_a = (db_ij + db_ji) * (1.0 - rev);
                    *out += (1.0 - 2.0 * spec.adj[[i, j]]) * d_a;
                }
            });
        }
    }
}
