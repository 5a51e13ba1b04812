//! Dense matrix kernels with zero-skipping inner loops.
//!
//! Perturbed adjacency matrices are dense buffers that are numerically
//! almost all zeros, so every kernel skips exact-zero multiplicands. With
//! finite inputs this is bit-identical to the plain triple loop (adding a
//! `0.0 * x` term never changes an accumulator that started at `+0.0`), and
//! summation order within an output row is fixed, so the row-parallel and
//! sequential paths agree bit-for-bit.

use ndarray::Array2;

use crate::par;

fn rows(m: &Array2<f64>) -> &[f64] {
    m.as_slice().expect("standard layout")
}

/// `a * b`.
pub fn matmul_nn(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let (_, c) = b.dim();
    debug_assert_eq!(b.nrows(), k);
    let a_s = rows(a);
    let b_s = rows(b);
    let mut out = Array2::<f64>::zeros((n, c));
    par::for_each_row(out.as_slice_mut().unwrap(), c.max(1), |i, row| {
        let ar = &a_s[i * k..(i + 1) * k];
        for (kk, &av) in ar.iter().enumerate() {
            if av != 0.0 {
                let br = &b_s[kk * c..(kk + 1) * c];
                for (o, &bv) in row.iter_mut().zip(br) {
                    *o += av * bv;
                }
            }
        }
    });
    out
}

/// `a * b^T`.
pub fn matmul_nt(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let (m, _) = b.dim();
    debug_assert_eq!(b.ncols(), k);
    let a_s = rows(a);
    let b_s = rows(b);
    let mut out = Array2::<f64>::zeros((n, m));
    par::for_each_row(out.as_slice_mut().unwrap(), m.max(1), |i, row| {
        let ar = &a_s[i * k..(i + 1) * k];
        if ar.iter().all(|&v| v == 0.0) {
            return;
        }
        for (j, o) in row.iter_mut().enumerate() {
            let br = &b_s[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in ar.iter().zip(br) {
                if av != 0.0 {
                    acc += av * bv;
                }
            }
            *o = acc;
        }
    });
    out
}

/// `a^T * b`, sequential scatter in ascending row order.
pub fn matmul_tn(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let (_, c) = b.dim();
    debug_assert_eq!(b.nrows(), n);
    let a_s = rows(a);
    let b_s = rows(b);
    let mut out = Array2::<f64>::zeros((k, c));
    let out_s = out.as_slice_mut().unwrap();
    for i in 0..n {
        let br = &b_s[i * c..(i + 1) * c];
        if br.iter().all(|&v| v == 0.0) {
            continue;
        }
        let ar = &a_s[i * k..(i + 1) * k];
        for (kk, &av) in ar.iter().enumerate() {
            if av != 0.0 {
                let orow = &mut out_s[kk * c..(kk + 1) * c];
                for (o, &bv) in orow.iter_mut().zip(br) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn naive(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let (n, k) = a.dim();
        let c = b.ncols();
        let mut out = Array2::zeros((n, c));
        for i in 0..n {
            for j in 0..c {
                for kk in 0..k {
                    out[[i, j]] += a[[i, kk]] * b[[kk, j]];
                }
            }
        }
        out
    }

    #[test]
    fn kernels_agree_with_naive() {
        let a = array![[1.0, 0.0, -2.0], [0.0, 0.0, 0.0], [0.5, 3.0, 0.0]];
        let b = array![[2.0, 1.0], [0.0, -1.0], [4.0, 0.0]];
        assert_eq!(matmul_nn(&a, &b), naive(&a, &b));
        let bt = b.t().as_standard_layout().to_owned();
        assert_eq!(matmul_nt(&a, &bt), naive(&a, &b));
        let at = a.t().as_standard_layout().to_owned();
        assert_eq!(matmul_tn(&at, &b), naive(&a, &b));
    }
}
