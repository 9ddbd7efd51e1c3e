//! Redundancy-driven structure refinement for evidence graphs.
//!
//! A dedicated one-wide gated layer scores every live node from the
//! projected features `H W_s`; the `k = floor(r * live)` highest-scoring
//! nodes are discarded by zeroing their adjacency rows and columns. No
//! re-normalisation follows the masking. One encoder layer followed by one
//! refinement step forms an evidence-miner layer; a stack of those ends
//! with a plain encoder layer over the refined graph.

use crate::encoder::{ggnn_forward, GgnnParams, NodeFeatures};
use crate::error::{Error, Result};
use crate::numcore::{NodeId, ParamId, ParamStore, Tape, Tensor2};

#[derive(Clone, Debug)]
pub struct RefineParams {
    /// d×1 projection into score space.
    pub w_s: ParamId,
    /// Gated layer over one-wide features; disjoint from the encoders.
    pub score: GgnnParams,
}

impl RefineParams {
    pub fn register(store: &mut ParamStore, prefix: &str, dim: usize, seed: u64) -> Self {
        let w_s = store.insert_glorot(&format!("{prefix}.w_s"), dim, 1, seed);
        let score = GgnnParams::register(store, &format!("{prefix}.ggnn"), 1, seed);
        Self { w_s, score }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.w_s];
        v.extend(self.score.ids());
        v
    }
}

/// Per-node redundancy scores as an N×1 tape node.
pub fn redundancy_scores(
    tape: &mut Tape<'_>,
    adj: NodeId,
    h: &NodeFeatures,
    p: &RefineParams,
) -> Result<NodeId> {
    let w_s = tape.param(p.w_s);
    let projected = tape.matmul(h.h, w_s)?;
    let x = NodeFeatures {
        h: projected,
        mask: h.mask.clone(),
    };
    Ok(ggnn_forward(tape, adj, &x, &p.score)?.h)
}

/// Number of nodes to drop: `floor(rate * live)`, with a guard against
/// products like `0.29 * 100` landing just under an integer.
pub fn discard_count(live: usize, rate: f64) -> usize {
    (rate * live as f64 + 1e-9).floor() as usize
}

/// Indices of the `discard_count` highest scores among live nodes, ties
/// broken towards the lower index. Returned in selection order.
pub fn select_discard(scores: &[f64], mask: &[bool], rate: f64) -> Vec<usize> {
    let mut live: Vec<usize> = (0..scores.len()).filter(|&i| mask[i]).collect();
    let k = discard_count(live.len(), rate);
    live.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    live.truncate(k);
    live
}

/// Zeroes the rows and columns named in `idx`; everything else is copied.
pub fn mask_nodes(adj: &Tensor2, idx: &[usize]) -> Tensor2 {
    let mut out = adj.clone();
    for &i in idx {
        out.row_mut(i).fill(0.0);
        for r in 0..out.rows() {
            out.set(r, i, 0.0);
        }
    }
    out
}

/// Refinement knobs shared by every layer of a stack.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineOptions {
    pub discard_rate: f64,
    /// Multiply retained features by `sigmoid(score)`, giving the scorer a
    /// gradient path.
    pub score_gating: bool,
}

#[derive(Clone, Debug)]
pub struct EsmLayer {
    pub encoder: GgnnParams,
    /// `None` removes refinement, leaving a bare encoder layer.
    pub refine: Option<RefineParams>,
}

#[derive(Clone, Debug)]
pub struct EsmOutput {
    pub adj: Tensor2,
    pub feats: NodeFeatures,
    pub scores: Vec<f64>,
    pub discarded: Vec<usize>,
}

pub fn esm_layer(
    tape: &mut Tape<'_>,
    adj: &Tensor2,
    h: &NodeFeatures,
    layer: &EsmLayer,
    opts: RefineOptions,
) -> Result<EsmOutput> {
    let adj_node = tape.constant(adj.clone());
    let encoded = ggnn_forward(tape, adj_node, h, &layer.encoder)?;
    let Some(refine) = &layer.refine else {
        return Ok(EsmOutput {
            adj: adj.clone(),
            feats: encoded,
            scores: Vec::new(),
            discarded: Vec::new(),
        });
    };
    let live = encoded.live_count();
    let k = discard_count(live, opts.discard_rate);
    if k >= live {
        return Err(Error::Model(format!(
            "discard rate leaves no nodes ({k} of {live} live nodes)"
        )));
    }
    let score_node = redundancy_scores(tape, adj_node, &encoded, refine)?;
    let scores: Vec<f64> = tape.value(score_node).data().to_vec();
    let discarded = select_discard(&scores, &encoded.mask, opts.discard_rate);
    let mut mask = encoded.mask.clone();
    for &i in &discarded {
        mask[i] = false;
    }
    let mut feats = encoded.h;
    if opts.score_gating {
        let gate = tape.sigmoid(score_node);
        feats = tape.mul_col(feats, gate)?;
    }
    let feats = tape.mask_rows(feats, &mask)?;
    Ok(EsmOutput {
        adj: mask_nodes(adj, &discarded),
        feats: NodeFeatures { h: feats, mask },
        scores,
        discarded,
    })
}

#[derive(Clone, Debug)]
pub struct EvidenceStack {
    pub layers: Vec<EsmLayer>,
    pub final_encoder: GgnnParams,
}

impl EvidenceStack {
    /// `esm_layers` miner layers plus the closing encoder. With
    /// `refine == false` the miner layers are plain encoder layers.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        esm_layers: usize,
        refine: bool,
        seed: u64,
    ) -> Self {
        let layers = (0..esm_layers)
            .map(|t| EsmLayer {
                encoder: GgnnParams::register(store, &format!("{prefix}.esm{t}.enc"), dim, seed),
                refine: refine
                    .then(|| RefineParams::register(store, &format!("{prefix}.esm{t}.score"), dim, seed)),
            })
            .collect();
        let final_encoder = GgnnParams::register(store, &format!("{prefix}.final"), dim, seed);
        Self {
            layers,
            final_encoder,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvidenceEncoding {
    pub feats: NodeFeatures,
    pub adj: Tensor2,
    /// One entry per miner layer.
    pub layers: Vec<EsmOutput>,
}

pub fn encode_evidence(
    tape: &mut Tape<'_>,
    adj0: &Tensor2,
    h0: NodeFeatures,
    stack: &EvidenceStack,
    opts: RefineOptions,
) -> Result<EvidenceEncoding> {
    let mut adj = adj0.clone();
    let mut feats = h0;
    let mut trace = Vec::with_capacity(stack.layers.len());
    for layer in &stack.layers {
        let out = esm_layer(tape, &adj, &feats, layer, opts)?;
        adj = out.adj.clone();
        feats = out.feats.clone();
        trace.push(out);
    }
    let adj_node = tape.constant(adj.clone());
    let feats = ggnn_forward(tape, adj_node, &feats, &stack.final_encoder)?;
    Ok(EvidenceEncoding {
        feats,
        adj,
        layers: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textgraph::normalize;

    fn zero_all(store: &mut ParamStore, ids: &[ParamId]) {
        for &id in ids {
            store.get_mut(id).data_mut().fill(0.0);
        }
    }

    #[test]
    fn select_discard_examples() {
        assert!(select_discard(&[0.9, 0.1, 0.5], &[true; 3], 0.0).is_empty());
        assert_eq!(select_discard(&[0.9, 0.1, 0.5], &[true; 3], 0.4), vec![0]);
        assert_eq!(select_discard(&[0.7, 0.7, 0.1], &[true; 3], 0.34), vec![0]);
        // masked nodes never get picked, even with the top score
        assert_eq!(select_discard(&[5.0, 0.2, 0.3], &[false, true, true], 0.5), vec![2]);
    }

    #[test]
    fn discard_count_floor() {
        assert_eq!(discard_count(100, 0.4), 40);
        assert_eq!(discard_count(60, 0.4), 24);
        assert_eq!(discard_count(100, 0.29), 29);
        assert_eq!(discard_count(3, 0.34), 1);
        assert_eq!(discard_count(10, 0.0), 0);
    }

    #[test]
    fn mask_nodes_examples() {
        let a = normalize(&Tensor2::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]));
        assert_eq!(mask_nodes(&a, &[]), a);
        let m = mask_nodes(&a, &[1]);
        assert_eq!(m.get(0, 0), a.get(0, 0));
        assert_eq!((m.get(0, 1), m.get(1, 0), m.get(1, 1)), (0.0, 0.0, 0.0));
        assert_eq!(mask_nodes(&m, &[1]), m);
    }

    #[test]
    fn zero_params_give_zero_scores() {
        let mut store = ParamStore::new();
        let p = RefineParams::register(&mut store, "s", 3, 1);
        zero_all(&mut store, &p.ids());
        let mut tape = Tape::new(&store);
        let adj = tape.constant(Tensor2::identity(2));
        let h = tape.leaf(Tensor2::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]));
        let s = redundancy_scores(&mut tape, adj, &NodeFeatures::all_live(h, 2), &p).unwrap();
        assert!(tape.value(s).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_node_score_is_half_the_feature_sum() {
        let mut store = ParamStore::new();
        let p = RefineParams::register(&mut store, "s", 3, 1);
        zero_all(&mut store, &p.ids());
        store.get_mut(p.w_s).data_mut().fill(1.0);
        let mut tape = Tape::new(&store);
        let adj = tape.constant(normalize(&Tensor2::zeros(1, 1)));
        let h = tape.leaf(Tensor2::from_rows(&[vec![0.25, -1.0, 2.5]]));
        let s = redundancy_scores(&mut tape, adj, &NodeFeatures::all_live(h, 1), &p).unwrap();
        assert!((tape.value(s).get(0, 0) - 0.5 * 1.75).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_layer_is_a_bare_encoder() {
        let mut store = ParamStore::new();
        let stack = EvidenceStack::register(&mut store, "e", 2, 1, true, 3);
        let adj = normalize(&Tensor2::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ]));
        let h = Tensor2::from_rows(&[vec![0.1, 0.2], vec![0.3, -0.4], vec![-0.5, 0.6]]);
        let mut tape = Tape::new(&store);
        let x = tape.leaf(h.clone());
        let opts = RefineOptions {
            discard_rate: 0.0,
            score_gating: false,
        };
        let out = esm_layer(&mut tape, &adj, &NodeFeatures::all_live(x, 3), &stack.layers[0], opts).unwrap();
        assert_eq!(out.adj, adj);
        assert!(out.discarded.is_empty());
        let a = tape.constant(adj.clone());
        let bare = ggnn_forward(&mut tape, a, &NodeFeatures::all_live(x, 3), &stack.layers[0].encoder).unwrap();
        assert_eq!(tape.value(out.feats.h), tape.value(bare.h));
    }

    #[test]
    fn exhausting_rate_is_an_error() {
        let mut store = ParamStore::new();
        let stack = EvidenceStack::register(&mut store, "e", 2, 1, true, 3);
        let mut tape = Tape::new(&store);
        let x = tape.leaf(Tensor2::filled(2, 2, 0.1));
        let opts = RefineOptions {
            discard_rate: 1.0,
            score_gating: false,
        };
        let err = esm_layer(
            &mut tape,
            &Tensor2::identity(2),
            &NodeFeatures::all_live(x, 2),
            &stack.layers[0],
            opts,
        )
        .unwrap_err();
        assert!(err.to_string().contains("discard rate leaves no nodes"));
    }

    #[test]
    fn ten_node_evidence_ends_with_four_zero_rows() {
        let mut store = ParamStore::new();
        let stack = EvidenceStack::register(&mut store, "e", 3, 1, true, 4);
        let mut raw = Tensor2::zeros(10, 10);
        for i in 0..9 {
            raw.set(i, i + 1, 1.0);
            raw.set(i + 1, i, 1.0);
        }
        let adj = normalize(&raw);
        let h = Tensor2::from_vec(10, 3, (0..30).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect()).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.leaf(h);
        let opts = RefineOptions {
            discard_rate: 0.4,
            score_gating: false,
        };
        let enc = encode_evidence(&mut tape, &adj, NodeFeatures::all_live(x, 10), &stack, opts).unwrap();
        let out = tape.value(enc.feats.h);
        let zero_rows = (0..10).filter(|&r| out.row(r).iter().all(|&v| v == 0.0)).count();
        assert_eq!(zero_rows, 4);
        assert_eq!(enc.feats.live_count(), 6);
    }
}
