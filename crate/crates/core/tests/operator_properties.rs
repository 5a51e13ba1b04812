//! Operator property suite over random digraphs: row-stochasticity, the
//! beta endpoint reductions, beta-invariance on symmetric graphs, and
//! symmetry of the renormalized operator.

mod common;

use common::random_digraph;
use drlab_core::graph::DirectedGraph;
use drlab_core::propagation::{build_operator, PropagationSpec};
use proptest::prelude::*;

const NUM_GRAPHS: usize = 120;

fn graphs() -> impl Iterator<Item = (usize, DirectedGraph)> {
    (0..NUM_GRAPHS).map(|s| {
        let n = 2 + (s % 49);
        let p = 0.05 + 0.3 * ((s * 7 % 10) as f64 / 10.0);
        (s, random_digraph(n, p, s as u64))
    })
}

#[test]
fn random_walk_rows_sum_to_one() {
    for (s, g) in graphs() {
        let beta = (s % 11) as f64 / 10.0;
        for spec in [
            PropagationSpec::rw_out(),
            PropagationSpec::rw_in(),
            PropagationSpec::bbrw(beta).unwrap(),
        ] {
            let op = build_operator(&g, &spec).unwrap();
            for i in 0..g.num_nodes() {
                let err = (op.row_sum(i) - 1.0).abs();
                assert!(
                    err <= 1e-12,
                    "graph {s} kind {:?} row {i}: row-sum error {err}",
                    spec.kind
                );
            }
        }
    }
}

#[test]
fn bbrw_endpoints_reduce_to_directed_walks() {
    for (s, g) in graphs() {
        let out = build_operator(&g, &PropagationSpec::rw_out()).unwrap();
        let one = build_operator(&g, &PropagationSpec::bbrw(1.0).unwrap()).unwrap();
        assert_eq!(
            out.to_dense(),
            one.to_dense(),
            "graph {s}: beta=1 differs from rw_out"
        );
        let inn = build_operator(&g, &PropagationSpec::rw_in()).unwrap();
        let zero = build_operator(&g, &PropagationSpec::bbrw(0.0).unwrap()).unwrap();
        assert_eq!(
            inn.to_dense(),
            zero.to_dense(),
            "graph {s}: beta=0 differs from rw_in"
        );
    }
}

#[test]
fn symmetric_graphs_are_beta_invariant() {
    for (s, g) in graphs() {
        let sym = g.symmetrize();
        let reference = build_operator(&sym, &PropagationSpec::bbrw(0.5).unwrap())
            .unwrap()
            .to_dense();
        for k in [0.0, 0.2, 0.7, 1.0] {
            let op = build_operator(&sym, &PropagationSpec::bbrw(k).unwrap())
                .unwrap()
                .to_dense();
            let mut worst = 0.0f64;
            for (a, b) in op.iter().zip(reference.iter()) {
                worst = worst.max((a - b).abs());
            }
            assert!(
                worst <= 1e-12,
                "graph {s}: beta={k} deviates by {worst} on a symmetric graph"
            );
        }
    }
}

#[test]
fn sym_norm_operator_is_symmetric() {
    for (s, g) in graphs() {
        let op = build_operator(&g, &PropagationSpec::sym()).unwrap().to_dense();
        for i in 0..g.num_nodes() {
            for j in 0..g.num_nodes() {
                assert!(
                    (op[[i, j]] - op[[j, i]]).abs() <= 1e-15,
                    "graph {s}: asymmetry at ({i}, {j})"
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Flipping the same set twice restores the graph, degrees included.
    #[test]
    fn flips_are_involutive(seed in 0u64..1000, n in 3usize..20, k in 1usize..8) {
        let g = random_digraph(n, 0.2, seed);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed ^ 0xf11b);
        let mut flips = Vec::new();
        for _ in 0..k {
            let i = rand::Rng::random_range(&mut rng, 0..n);
            let j = rand::Rng::random_range(&mut rng, 0..n);
            if i != j && !flips.contains(&(i, j)) {
                flips.push((i, j));
            }
        }
        let twice = g.apply_flips(&flips).unwrap().apply_flips(&flips).unwrap();
        prop_assert_eq!(&g, &twice);
    }

    /// Symmetrize is idempotent and self-transpose.
    #[test]
    fn symmetrize_idempotent(seed in 0u64..1000, n in 2usize..20) {
        let g = random_digraph(n, 0.25, seed);
        let s = g.symmetrize();
        prop_assert_eq!(&s, &s.symmetrize());
        prop_assert_eq!(&s, &s.transpose());
    }

    /// Transpose swaps the degree vectors.
    #[test]
    fn transpose_swaps_degrees(seed in 0u64..1000, n in 2usize..20) {
        let g = random_digraph(n, 0.25, seed);
        let t = g.transpose();
        prop_assert_eq!(&t.transpose(), &g);
        for i in 0..n {
            prop_assert_eq!(g.d_out(i), t.d_in(i));
            prop_assert_eq!(g.d_in(i), t.d_out(i));
        }
    }
}
