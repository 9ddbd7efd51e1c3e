//! Full claim-verification network: graphs in, P(true) out.

use crate::config::HyperParams;
use crate::corpus::{ClaimInstance, Label};
use crate::encoder::{encode_claim, GgnnParams, NodeFeatures};
use crate::error::{Error, Result};
use crate::numcore::{NodeId, ParamId, ParamStore, Tape, Tensor2};
use crate::readout::{
    claim_pool, classify, document_attention, fuse_side_info, word_attention, Attention,
    ClassifierParams, SideInfo,
};
use crate::refiner::{encode_evidence, EvidenceStack, RefineOptions};
use crate::textgraph::{build_graph, TextGraph};

/// A claim with its graphs built once, ready for repeated forward passes.
#[derive(Clone, Debug)]
pub struct Example {
    pub claim_id: String,
    pub label: Option<Label>,
    pub speaker: usize,
    pub claim: TextGraph,
    /// `(graph, publisher index)` per evidence.
    pub evidences: Vec<(TextGraph, usize)>,
}

impl Example {
    pub fn prepare(inst: &ClaimInstance, window: usize) -> Result<Self> {
        let claim = build_graph(&inst.claim, window)?;
        if claim.n() == 0 {
            return Err(Error::Data(format!("claim {} has no tokens", inst.claim_id)));
        }
        let mut evidences = Vec::with_capacity(inst.evidences.len());
        for (seq, publisher) in &inst.evidences {
            let g = build_graph(seq, window)?;
            if g.n() > 0 {
                evidences.push((g, *publisher));
            }
        }
        if evidences.is_empty() {
            return Err(Error::Data(format!("claim {} has no evidences", inst.claim_id)));
        }
        Ok(Self {
            claim_id: inst.claim_id.clone(),
            label: inst.label,
            speaker: inst.speaker,
            claim,
            evidences,
        })
    }

    pub fn label_u8(&self) -> Result<u8> {
        self.label
            .map(Label::as_u8)
            .ok_or_else(|| Error::Data(format!("claim {} is unlabeled", self.claim_id)))
    }
}

#[derive(Clone, Debug)]
pub enum EvidencePath {
    /// Word vectors go straight to the readout.
    Raw,
    Stack(EvidenceStack),
}

/// Table sizes that fix the embedding shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableSizes {
    pub words: usize,
    pub speakers: usize,
    pub publishers: usize,
}

#[derive(Clone, Debug)]
pub struct GetModel {
    pub dim: usize,
    pub word_emb: ParamId,
    pub side: SideInfo,
    pub claim_layers: Vec<GgnnParams>,
    pub evidence: EvidencePath,
    pub refine: RefineOptions,
    pub word_attn: Attention,
    pub doc_attn: Attention,
    pub classifier: ClassifierParams,
}

/// Everything a forward pass exposes besides the loss.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub probs: NodeId,
    pub p_true: f64,
    /// Per document-level head, one weight per evidence.
    pub doc_weights: Vec<Vec<f64>>,
    /// Per evidence, per word-level head, one weight per node.
    pub word_weights: Vec<Vec<Vec<f64>>>,
    /// Final live-node mask per evidence.
    pub keep_masks: Vec<Vec<bool>>,
}

impl GetModel {
    /// Registers every parameter. `word_vectors` must be `words × dim`.
    pub fn build(
        hp: &HyperParams,
        sizes: TableSizes,
        word_vectors: Tensor2,
        store: &mut ParamStore,
    ) -> Result<Self> {
        hp.validate()?;
        let d = hp.dim;
        let b = hp.side_dim;
        let seed = hp.seed;
        if word_vectors.shape() != (sizes.words, d) {
            return Err(Error::shape("word vectors", word_vectors.shape(), (sizes.words, d)));
        }
        let word_emb = store.insert("word_emb", word_vectors);
        store.set_trainable(word_emb, !hp.freeze_words);
        let side = SideInfo::register(store, sizes.speakers, sizes.publishers, b, seed);
        let (claim_layers, evidence) = if hp.encoder {
            let claim_layers = (0..hp.claim_layers)
                .map(|l| GgnnParams::register(store, &format!("claim_enc{l}"), d, seed))
                .collect();
            let stack = EvidenceStack::register(store, "evidence", d, hp.esm_layers, hp.ssr, seed);
            (claim_layers, EvidencePath::Stack(stack))
        } else {
            (Vec::new(), EvidencePath::Raw)
        };
        let word_attn = Attention::register(store, "word_attn", hp.word_heads, d, d, d, seed);
        let doc_kv = word_attn.out_dim() + b;
        let doc_attn = Attention::register(store, "doc_attn", hp.doc_heads, doc_kv, d + b, d, seed);
        let cls_in = d + b + doc_attn.out_dim();
        let hidden = (hp.mlp_hidden > 0).then_some(hp.mlp_hidden);
        let classifier = ClassifierParams::register(store, cls_in, hidden, seed);
        Ok(Self {
            dim: d,
            word_emb,
            side,
            claim_layers,
            evidence,
            refine: RefineOptions {
                discard_rate: hp.discard_rate,
                score_gating: hp.score_gating,
            },
            word_attn,
            doc_attn,
            classifier,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, ex: &Example) -> Result<Prediction> {
        let claim_h0 = tape.gather(self.word_emb, &ex.claim.node_vocab)?;
        let claim_adj = tape.constant(ex.claim.adj_norm.clone());
        let claim = encode_claim(
            tape,
            claim_adj,
            NodeFeatures::all_live(claim_h0, ex.claim.n()),
            &self.claim_layers,
        )?;
        let claim_vec = claim_pool(tape, &claim)?;

        let mut rows = Vec::with_capacity(ex.evidences.len());
        let mut word_weights = Vec::with_capacity(ex.evidences.len());
        let mut keep_masks = Vec::with_capacity(ex.evidences.len());
        for (graph, publisher) in &ex.evidences {
            let h0 = tape.gather(self.word_emb, &graph.node_vocab)?;
            let h0 = NodeFeatures::all_live(h0, graph.n());
            let feats = match &self.evidence {
                EvidencePath::Raw => h0,
                EvidencePath::Stack(stack) => {
                    encode_evidence(tape, &graph.adj_norm, h0, stack, self.refine)?.feats
                }
            };
            let attended = word_attention(tape, &feats, claim_vec, &self.word_attn)?;
            rows.push(fuse_side_info(tape, attended.out, self.side.publishers, *publisher)?);
            word_weights.push(attended.weights);
            keep_masks.push(feats.mask);
        }
        let evidence_rows = tape.concat_rows(&rows)?;
        let claim_full = fuse_side_info(tape, claim_vec, self.side.speakers, ex.speaker)?;
        let doc = document_attention(tape, evidence_rows, claim_full, &self.doc_attn)?;
        let joint = tape.concat_cols(claim_full, doc.out)?;
        let probs = classify(tape, joint, &self.classifier)?;
        let p_true = tape.value(probs).get(0, 1);
        Ok(Prediction {
            probs,
            p_true,
            doc_weights: doc.weights,
            word_weights,
            keep_masks,
        })
    }

    /// Cross-entropy of one labelled example.
    pub fn loss(&self, tape: &mut Tape<'_>, ex: &Example) -> Result<(NodeId, Prediction)> {
        let label = ex.label_u8()?;
        let pred = self.forward(tape, ex)?;
        let loss = tape.bce(pred.probs, label)?;
        Ok((loss, pred))
    }
}
