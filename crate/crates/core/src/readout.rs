//! Claim-aware attentive readout and the veracity classifier.
//!
//! Each attention head scores row `j` of a key matrix with
//! `tanh([K_j ; q] W_c) W_p`, normalises the scores with a softmax over the
//! live rows and returns the weighted sum of keys. Heads are concatenated.

use crate::encoder::NodeFeatures;
use crate::error::{Error, Result};
use crate::numcore::{NodeId, ParamId, ParamStore, Tape};

#[derive(Clone, Debug)]
pub struct AttnHead {
    /// (kv_dim + q_dim) × inner
    pub w_c: ParamId,
    /// inner × 1
    pub w_p: ParamId,
}

#[derive(Clone, Debug)]
pub struct Attention {
    pub heads: Vec<AttnHead>,
    pub kv_dim: usize,
    pub q_dim: usize,
    pub inner: usize,
}

#[derive(Clone, Debug)]
pub struct Attended {
    /// 1 × (heads · kv_dim)
    pub out: NodeId,
    /// Per head, one weight per key row; masked rows hold exactly zero.
    pub weights: Vec<Vec<f64>>,
}

impl Attention {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        heads: usize,
        kv_dim: usize,
        q_dim: usize,
        inner: usize,
        seed: u64,
    ) -> Self {
        let heads = (0..heads)
            .map(|h| AttnHead {
                w_c: store.insert_glorot(&format!("{prefix}.h{h}.w_c"), kv_dim + q_dim, inner, seed),
                w_p: store.insert_glorot(&format!("{prefix}.h{h}.w_p"), inner, 1, seed),
            })
            .collect();
        Self {
            heads,
            kv_dim,
            q_dim,
            inner,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.heads.len() * self.kv_dim
    }

    pub fn attend(
        &self,
        tape: &mut Tape<'_>,
        keys: NodeId,
        mask: &[bool],
        query: NodeId,
    ) -> Result<Attended> {
        self.attend_with_offset(tape, keys, mask, query, 0.0)
    }

    /// As [`Attention::attend`] with a constant added to every logit.
    #[doc(hidden)]
    pub fn attend_with_offset(
        &self,
        tape: &mut Tape<'_>,
        keys: NodeId,
        mask: &[bool],
        query: NodeId,
        logit_offset: f64,
    ) -> Result<Attended> {
        let (n, kv) = tape.shape(keys);
        if kv != self.kv_dim || tape.shape(query) != (1, self.q_dim) {
            return Err(Error::shape("attention inputs", (n, kv), tape.shape(query)));
        }
        let q_rep = tape.repeat_rows(query, n)?;
        let cat = tape.concat_cols(keys, q_rep)?;
        let mut out: Option<NodeId> = None;
        let mut weights = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let w_c = tape.param(head.w_c);
            let w_p = tape.param(head.w_p);
            let proj = tape.matmul(cat, w_c)?;
            let p = tape.tanh(proj);
            let logits = tape.matmul(p, w_p)?;
            let mut row = tape.transpose(logits);
            if logit_offset != 0.0 {
                row = tape.shift(row, logit_offset);
            }
            let alpha = tape.row_softmax(row, Some(mask))?;
            weights.push(tape.value(alpha).data().to_vec());
            let pooled = tape.matmul(alpha, keys)?;
            out = Some(match out {
                None => pooled,
                Some(prev) => tape.concat_cols(prev, pooled)?,
            });
        }
        let out = out.ok_or_else(|| Error::Model("attention with zero heads".into()))?;
        Ok(Attended { out, weights })
    }
}

/// Mean of the live claim node rows.
pub fn claim_pool(tape: &mut Tape<'_>, claim: &NodeFeatures) -> Result<NodeId> {
    if claim.live_count() == 0 {
        return Err(Error::Model("empty claim".into()));
    }
    tape.mean_rows(claim.h, &claim.mask)
}

/// Word-level readout of one evidence, queried by the pooled claim.
pub fn word_attention(
    tape: &mut Tape<'_>,
    evidence: &NodeFeatures,
    claim_vec: NodeId,
    attn: &Attention,
) -> Result<Attended> {
    if evidence.live_count() == 0 {
        return Err(Error::Model("evidence fully discarded".into()));
    }
    attn.attend(tape, evidence.h, &evidence.mask, claim_vec)
}

/// Document-level readout over stacked evidence vectors.
pub fn document_attention(
    tape: &mut Tape<'_>,
    evidence_rows: NodeId,
    claim_vec: NodeId,
    attn: &Attention,
) -> Result<Attended> {
    let n = tape.shape(evidence_rows).0;
    if n == 0 {
        return Err(Error::Model("claim has zero evidences".into()));
    }
    attn.attend(tape, evidence_rows, &vec![true; n], claim_vec)
}

/// Speaker and publisher embedding tables; row 0 is UNK.
#[derive(Clone, Debug)]
pub struct SideInfo {
    pub speakers: ParamId,
    pub publishers: ParamId,
    pub dim: usize,
}

impl SideInfo {
    pub fn register(
        store: &mut ParamStore,
        n_speakers: usize,
        n_publishers: usize,
        dim: usize,
        seed: u64,
    ) -> Self {
        let bound = crate::corpus::OOV_INIT_BOUND;
        Self {
            speakers: store.insert_uniform("speaker_emb", n_speakers.max(1), dim, bound, seed),
            publishers: store.insert_uniform("publisher_emb", n_publishers.max(1), dim, bound, seed),
            dim,
        }
    }
}

fn clamp_row(tape: &Tape<'_>, table: ParamId, idx: usize) -> usize {
    if idx < tape.store().get(table).rows() {
        idx
    } else {
        crate::corpus::SideVocab::UNK
    }
}

/// `[h ; table[idx]]`, falling back to the UNK row for out-of-range ids.
pub fn fuse_side_info(tape: &mut Tape<'_>, h: NodeId, table: ParamId, idx: usize) -> Result<NodeId> {
    let idx = clamp_row(tape, table, idx);
    let side = tape.gather(table, &[idx])?;
    tape.concat_cols(h, side)
}

#[derive(Clone, Debug)]
pub struct ClassifierParams {
    /// Optional tanh hidden layer `(weight, bias)`.
    pub hidden: Option<(ParamId, ParamId)>,
    pub w_f: ParamId,
    pub b_f: ParamId,
}

impl ClassifierParams {
    pub fn register(store: &mut ParamStore, in_dim: usize, hidden: Option<usize>, seed: u64) -> Self {
        let (hidden, out_in) = match hidden {
            Some(h) => (
                Some((
                    store.insert_glorot("cls.hidden.w", in_dim, h, seed),
                    store.insert_zeros("cls.hidden.b", 1, h),
                )),
                h,
            ),
            None => (None, in_dim),
        };
        Self {
            hidden,
            w_f: store.insert_glorot("cls.out.w", out_in, 2, seed),
            b_f: store.insert_zeros("cls.out.b", 1, 2),
        }
    }
}

/// Two-class probabilities (1×2); column 1 is P(true).
pub fn classify(tape: &mut Tape<'_>, h: NodeId, p: &ClassifierParams) -> Result<NodeId> {
    let mut x = h;
    if let Some((w, b)) = p.hidden {
        let w = tape.param(w);
        let b = tape.param(b);
        let hw = tape.matmul(x, w)?;
        let pre = tape.add_row(hw, b)?;
        x = tape.tanh(pre);
    }
    let w = tape.param(p.w_f);
    let b = tape.param(p.b_f);
    let xw = tape.matmul(x, w)?;
    let logits = tape.add_row(xw, b)?;
    tape.row_softmax(logits, None)
}
