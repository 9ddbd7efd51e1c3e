#![allow(clippy::needless_range_loop)]

use std::collections::BTreeSet;

use get_core::encoder::{ggnn_forward, GgnnParams, NodeFeatures};
use get_core::numcore::{ParamStore, Tape, Tensor2};
use get_core::readout::Attention;
use get_core::textgraph::{build_graph, normalize, TokenSeq};
use proptest::prelude::*;

/// Edge set by direct enumeration over windows.
fn window_edges(tokens: &[usize], w: usize) -> (Vec<usize>, BTreeSet<(usize, usize)>) {
    let mut nodes: Vec<usize> = Vec::new();
    for &t in tokens {
        if !nodes.contains(&t) {
            nodes.push(t);
        }
    }
    let node = |t: usize| nodes.iter().position(|&x| x == t).unwrap();
    let l = tokens.len();
    let mut edges = BTreeSet::new();
    for s in 0..l {
        let e = (s + w).min(l);
        let c = s + (e - s - 1) / 2;
        for p in s..e {
            let (a, b) = (node(tokens[c]), node(tokens[p]));
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
    }
    (nodes, edges)
}

fn adjacency() -> impl Strategy<Value = Tensor2> {
    (1usize..16).prop_flat_map(|n| {
        proptest::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
            let mut a = Tensor2::zeros(n, n);
            for i in 0..n {
                for j in i + 1..n {
                    if bits[i * n + j] {
                        a.set(i, j, 1.0);
                        a.set(j, i, 1.0);
                    }
                }
            }
            a
        })
    })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor2> {
    proptest::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |d| Tensor2::from_vec(rows, cols, d).unwrap())
}

proptest! {
    #[test]
    fn graph_matches_window_enumeration(
        tokens in proptest::collection::vec(0usize..12, 0..40),
        w in 2usize..6,
    ) {
        let g = build_graph(&TokenSeq::new(tokens.clone()), w).unwrap();
        let (nodes, edges) = window_edges(&tokens, w);
        prop_assert_eq!(&g.node_vocab, &nodes);
        prop_assert_eq!(g.edges(), edges.into_iter().collect::<Vec<_>>());
        for i in 0..g.n() {
            prop_assert_eq!(g.adj_raw.get(i, i), 0.0);
            for j in 0..g.n() {
                prop_assert_eq!(g.adj_raw.get(i, j), g.adj_raw.get(j, i));
            }
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric_and_bounded(a in adjacency()) {
        let n = a.rows();
        let out = normalize(&a);
        for i in 0..n {
            let deg = 1.0 + a.row(i).iter().sum::<f64>();
            prop_assert!((out.get(i, i) - 1.0 / deg).abs() <= 1e-15);
            for j in 0..n {
                let v = out.get(i, j);
                prop_assert_eq!(v.to_bits(), out.get(j, i).to_bits());
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v == 0.0, i != j && a.get(i, j) == 0.0);
            }
        }
    }

    #[test]
    fn ggnn_is_permutation_equivariant(
        a in adjacency(),
        seed in any::<u64>(),
        rot in 0usize..16,
    ) {
        let n = a.rows();
        let d = 4;
        let h = Tensor2::from_vec(
            n,
            d,
            (0..n * d).map(|i| ((i as f64 + 1.0) * 0.37).sin()).collect(),
        )
        .unwrap();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let mut pa = Tensor2::zeros(n, n);
        let mut ph = Tensor2::zeros(n, d);
        for i in 0..n {
            for j in 0..n {
                pa.set(i, j, a.get(perm[i], perm[j]));
            }
            ph.row_mut(i).copy_from_slice(h.row(perm[i]));
        }
        let mut store = ParamStore::new();
        let p = GgnnParams::register(&mut store, "g", d, seed);
        let run = |adj: &Tensor2, x: &Tensor2| {
            let mut tape = Tape::new(&store);
            let adj = tape.constant(normalize(adj));
            let x = tape.constant(x.clone());
            let out = ggnn_forward(&mut tape, adj, &NodeFeatures::all_live(x, n), &p).unwrap();
            tape.value(out.h).clone()
        };
        let base = run(&a, &h);
        let permuted = run(&pa, &ph);
        for i in 0..n {
            for c in 0..d {
                prop_assert!((permuted.get(i, c) - base.get(perm[i], c)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(x in (1usize..5, 1usize..12).prop_flat_map(|(r, c)| matrix(r, c))) {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let scaled = x.map(|v| v * 50.0);
        let node = tape.constant(scaled);
        let s = tape.row_softmax(node, None).unwrap();
        for r in 0..x.rows() {
            let total: f64 = tape.value(s).row(r).iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn attention_ignores_a_constant_logit_shift(
        keys in (1usize..8).prop_flat_map(|n| matrix(n, 3)),
        query in matrix(1, 2),
        shift in -30.0f64..30.0,
        seed in any::<u64>(),
    ) {
        let n = keys.rows();
        let mut store = ParamStore::new();
        let attn = Attention::register(&mut store, "a", 2, 3, 2, 4, seed);
        let mask: Vec<bool> = (0..n).map(|i| i % 3 != 1 || n == 1).collect();
        let run = |offset: f64| {
            let mut tape = Tape::new(&store);
            let k = tape.constant(keys.clone());
            let q = tape.constant(query.clone());
            attn.attend_with_offset(&mut tape, k, &mask, q, offset).unwrap().weights
        };
        let base = run(0.0);
        let shifted = run(shift);
        for (hb, hs) in base.iter().zip(&shifted) {
            prop_assert!((hb.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (i, (b, s)) in hb.iter().zip(hs).enumerate() {
                prop_assert!((b - s).abs() <= 1e-12);
                if !mask[i] {
                    prop_assert_eq!(*b, 0.0);
                }
            }
        }
    }
}
