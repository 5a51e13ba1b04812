//! Shared helpers for the integration and acceptance suites.

#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drlab_core::graph::{DataSplit, DirectedGraph, Labels, NodeFeatures};

/// Seeded random digraph with edge probability `p` (no self-loops, no
/// duplicates by construction).
pub fn random_digraph(n: usize, p: f64, seed: u64) -> DirectedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    DirectedGraph::new(n, &edges).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

/// Central finite differences of a scalar function, step
/// `h = base · max(1, |x|)` per entry.
pub fn finite_diff<F>(f: F, x: &Array2<f64>, base: f64) -> Array2<f64>
where
    F: Fn(&Array2<f64>) -> f64,
{
    let mut grad = Array2::<f64>::zeros(x.dim());
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = probe[[r, c]];
        let h = base * orig.abs().max(1.0);
        probe[[r, c]] = orig + h;
        let up = f(&probe);
        probe[[r, c]] = orig - h;
        let down = f(&probe);
        probe[[r, c]] = orig;
        grad[[r, c]] = (up - down) / (2.0 * h);
    }
    grad
}

/// Worst relative error between two gradients.
pub fn max_rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let denom = x.abs().max(y.abs()).max(1.0);
        worst = worst.max((x - y).abs() / denom);
    }
    worst
}

/// A small classification dataset over a random digraph: features carry a
/// noisy class signal so models have something to learn.
pub fn synthetic_task(
    n: usize,
    classes: usize,
    edge_p: f64,
    seed: u64,
) -> (DirectedGraph, NodeFeatures, Labels) {
    let g = random_digraph(n, edge_p, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let dim = classes * 3;
    let mut x = Array2::<f64>::zeros((n, dim));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = rng.random_range(0..classes);
        y.push(c);
        for d in 0..dim {
            let signal = if d / 3 == c { 0.8 } else { 0.1 };
            if rng.random::<f64>() < signal {
                x[[i, d]] = 1.0;
            }
        }
    }
    (
        g,
        NodeFeatures::new(x).unwrap(),
        Labels::new(y, classes).unwrap(),
    )
}

/// An even split for small synthetic tasks.
pub fn even_split(n: usize, seed: u64) -> DataSplit {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (n / 3).max(1);
    let n_val = (n / 6).max(1);
    DataSplit {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
        seed,
    }
}
